// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>

#include <gtest/gtest.h>

#include "fplab/errors.hpp"
#include "fplab/lora.hpp"
#include "fplab/model.hpp"
#include "fplab/rng.hpp"
#include "fplab/train.hpp"
#include "golden/goldens.hpp"

using namespace fplab;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_seq_len = 24;
  return c;
}

std::vector<TokenSeq> toy_data() {
  return {encode_sample("ab", "ba"), encode_sample("cd", "dc"), encode_sample("ef", "fe"),
          encode_sample("gh", "hg"), encode_sample("ij", "ji")};
}

}  // namespace

TEST(Schedule, MatchesOracleValues) {
  TrainConfig c;
  c.base_lr = 1e-3;
  for (std::size_t i = 0; i < golden::kLrSteps.size(); ++i) {
    EXPECT_NEAR(lr_at(golden::kLrSteps[i], 100, c), golden::kLrValues[i], 1e-15) << golden::kLrSteps[i];
  }
}

TEST(Schedule, EndpointsForManyLengths) {
  TrainConfig c;
  c.base_lr = 3e-4;
  for (long total = 1; total <= 500; ++total) {
    const long warm = static_cast<long>(warmup_steps(total, c));
    EXPECT_EQ(warm, static_cast<long>(std::ceil(0.1 * static_cast<double>(total))));
    EXPECT_NEAR(lr_at(0, total, c), warm == 0 ? c.base_lr : 0.0, 1e-12);
    if (warm < total) EXPECT_NEAR(lr_at(warm, total, c), c.base_lr, 1e-12);
    EXPECT_NEAR(lr_at(total, total, c), 0.0, 1e-12);
    for (long s = 1; s < warm; ++s) EXPECT_GT(lr_at(s, total, c), lr_at(s - 1, total, c));
    for (long s = warm + 1; s <= total; ++s) EXPECT_LE(lr_at(s, total, c), lr_at(s - 1, total, c));
  }
  EXPECT_THROW(lr_at(11, 10, c), ArgumentError);
  EXPECT_THROW(lr_at(0, 0, c), ArgumentError);
}

TEST(Adam, ScalarTrajectoryMatchesOracle) {
  TensorMap<double> p;
  p.emplace("w", BasicTensor<double>({1}, {1.0}));
  AdamState<double> st;
  const double grads[] = {0.5, -0.3, 0.2};
  for (int i = 0; i < 3; ++i) {
    TensorMap<double> g;
    g.emplace("w", BasicTensor<double>({1}, {grads[i]}));
    adam_step(p, g, st, 0.1);
    EXPECT_NEAR(p.at("w")[0], golden::kAdamTrajectory[i], 1e-10) << i;
  }
  EXPECT_EQ(st.step, 3);
}

TEST(Adam, RejectsMismatchedGradients) {
  TensorMap<double> p;
  p.emplace("w", BasicTensor<double>({2}));
  AdamState<double> st;
  TensorMap<double> g;
  g.emplace("w", BasicTensor<double>({3}));
  EXPECT_THROW(adam_step(p, g, st, 0.1), ShapeError);
  TensorMap<double> h;
  h.emplace("v", BasicTensor<double>({2}));
  EXPECT_THROW(adam_step(p, h, st, 0.1), ArgumentError);
}

TEST(Train, DeterministicAndLossDrops) {
  const auto cfg = tiny();
  SeededRng rng(1);
  const auto m = init_model(cfg, rng);
  TrainConfig t;
  t.base_lr = 1e-2;
  t.epochs = 15;
  t.batch_size = 2;
  t.seed = 9;
  const auto data = toy_data();
  const auto a = train(m, cfg, t, data);
  const auto b = train(m, cfg, t, data);
  EXPECT_EQ(a.ckpt, b.ckpt);
  ASSERT_EQ(a.history.size(), 15u * 3u);
  EXPECT_LT(a.history.back().loss, 0.5 * a.history.front().loss);
  EXPECT_EQ(a.history.front().lr, 0.0);
  EXPECT_EQ(a.trained_parameters, [&] {
    std::size_t n = 0;
    for (const auto& [k, v] : m.tensors) n += v.numel();
    return n;
  }());
  t.seed = 10;
  EXPECT_NE(train(m, cfg, t, data).ckpt.tensors, a.ckpt.tensors);
}

TEST(Train, AdapterOnlyNeverTouchesBase) {
  const auto cfg = tiny();
  SeededRng rng(2);
  const auto m = init_model(cfg, rng);
  LoraConfig lc;
  lc.rank = 2;
  lc.alpha = 4;
  SeededRng arng(3);
  const auto ad = init_adapter(m, lc, arng);
  TrainConfig t;
  t.base_lr = 1e-2;
  t.epochs = 5;
  t.batch_size = 2;
  t.selector = ParamSelector::AdapterOnly;
  const auto r = train(m, cfg, t, toy_data(), ad.factors, ad.scale);
  EXPECT_EQ(r.ckpt.tensors, m.tensors);
  EXPECT_NE(r.factors, ad.factors);
  EXPECT_EQ(r.trained_parameters, ad.parameter_count());
}

TEST(Train, RejectsBadInputs) {
  const auto cfg = tiny();
  SeededRng rng(2);
  const auto m = init_model(cfg, rng);
  TrainConfig t;
  EXPECT_THROW(train(m, cfg, t, std::span<const TokenSeq>{}), DegenerateError);
  t.selector = ParamSelector::AdapterOnly;
  EXPECT_THROW(train(m, cfg, t, toy_data()), ArgumentError);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(bad.validate(), ArgumentError);
}

TEST(Train, DivergenceIsReported) {
  const auto cfg = tiny();
  SeededRng rng(2);
  auto m = init_model(cfg, rng);
  m.tensors.at("lm_head").data()[0] = std::numeric_limits<float>::infinity();
  TrainConfig t;
  t.epochs = 1;
  EXPECT_THROW(train(m, cfg, t, toy_data()), DivergenceError);
}

TEST(Train, LossCsvHeader) {
  const std::vector<LossRecord> h{{0, 0, 0.0, 1.5}, {1, 0, 1e-3, 1.25}};
  EXPECT_EQ(loss_csv(h), "step,epoch,lr,loss\n0,0,0,1.5\n1,0,0.001,1.25\n");
}
