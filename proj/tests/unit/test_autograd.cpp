// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "fplab/model.hpp"
#include "fplab/rng.hpp"
#include "fplab/train.hpp"

using namespace fplab;

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-5;

ModelConfig one_layer() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 16;
  return c;
}

TensorMap<double> random_params(const ModelConfig& cfg, SeededRng& rng) {
  TensorMap<double> p;
  for (const auto& [name, shape] : parameter_schema(cfg)) {
    BasicTensor<double> t(shape);
    for (auto& x : t.data()) x = name.ends_with("_norm") ? 1.0 + 0.3 * rng.normal() : 0.4 * rng.normal();
    p.emplace(name, std::move(t));
  }
  return p;
}

std::vector<TokenSeq> batch() {
  return {encode_sample("ab", "cde"), encode_sample("xyz", "w"), encode_sample("q", "rs")};
}

double loss_of(const TensorMap<double>& params, const LowRankOverlay<double>& ov, const ModelConfig& cfg) {
  // Loss only; the selector does not change the value.
  const auto b = batch();
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& s : b) {
    const auto li = loss_inputs(s, cfg);
    Tape<double> tape(false);
    auto logits = build_logits(tape, params, ov, cfg, li.inputs, false, false, nullptr);
    total += tape.value(tape.cross_entropy_sum(logits, li.targets, li.mask))[0];
    count += li.count;
  }
  return total / static_cast<double>(count);
}

// Coordinates whose gradient is below kFloor are compared absolutely: the
// central difference carries ~1e-10 of cancellation noise there.
constexpr double kFloor = 1e-6;

// Returns true when the coordinate took part in the relative check.
bool check_coord(double analytic, double fd, const std::string& where) {
  const double den = std::max(std::abs(analytic), std::abs(fd));
  if (den < kFloor) {
    EXPECT_LE(std::abs(analytic - fd), 1e-9) << where;
    return false;
  }
  EXPECT_LE(std::abs(analytic - fd) / den, kRelTol) << where << " analytic " << analytic << " fd " << fd;
  return true;
}

struct Coord {
  std::string name;
  std::size_t index;
};

std::vector<Coord> sample_coords(const TensorMap<double>& m, SeededRng& rng, std::size_t per_tensor) {
  std::vector<Coord> out;
  for (const auto& [name, t] : m) {
    for (std::size_t k = 0; k < per_tensor; ++k) out.push_back({name, rng.uniform_int(t.numel())});
  }
  return out;
}

}  // namespace

TEST(Autograd, FullModelGradientsMatchFiniteDifferences) {
  const auto cfg = one_layer();
  SeededRng rng(2026);
  auto params = random_params(cfg, rng);
  const auto res = backward_pass(params, LowRankOverlay<double>{}, cfg, batch(), ParamSelector::All);
  EXPECT_NEAR(res.loss, loss_of(params, {}, cfg), 1e-12);

  // Embedding rows of unused tokens have zero gradient; sample the used rows
  // of the tables so the check is not dominated by trivial zeros.
  auto coords = sample_coords(params, rng, 5);
  for (int tok : std::initializer_list<int>{'a', 'c', 'x', 'q', token::kBos, token::kSep}) {
    coords.push_back({"tok_embed", static_cast<std::size_t>(tok) * 8 + rng.uniform_int(8)});
  }
  for (int tok : std::initializer_list<int>{'d', 'e', 'w', token::kEos}) {
    coords.push_back({"lm_head", static_cast<std::size_t>(tok) * 8 + rng.uniform_int(8)});
  }
  ASSERT_GE(coords.size(), 50u);
  std::size_t nonzero = 0;
  for (const auto& c : coords) {
    double& x = params.at(c.name).data()[c.index];
    const double keep = x;
    x = keep + kStep;
    const double up = loss_of(params, {}, cfg);
    x = keep - kStep;
    const double down = loss_of(params, {}, cfg);
    x = keep;
    const double fd = (up - down) / (2 * kStep);
    nonzero += check_coord(res.grads.at(c.name)[c.index], fd, c.name + "[" + std::to_string(c.index) + "]");
  }
  EXPECT_GE(nonzero, 50u);
}

TEST(Autograd, AdapterFactorGradientsMatchFiniteDifferences) {
  const auto cfg = one_layer();
  SeededRng rng(7);
  const auto params = random_params(cfg, rng);
  TensorMap<double> factors;
  for (const auto& target : projection_names(cfg)) {
    const auto& w = params.at(target);
    BasicTensor<double> a({w.shape()[0], 2}), b({w.shape()[1], 2});
    for (auto& x : a.data()) x = 0.3 * rng.normal();
    for (auto& x : b.data()) x = 0.3 * rng.normal();
    factors.emplace(lora_a_name(target), std::move(a));
    factors.emplace(lora_b_name(target), std::move(b));
  }
  const LowRankOverlay<double> ov{&factors, 1.5};
  const auto res = backward_pass(params, ov, cfg, batch(), ParamSelector::AdapterOnly);
  EXPECT_EQ(res.grads.size(), factors.size());

  auto coords = sample_coords(factors, rng, 8);
  std::size_t checked = 0;
  for (const auto& c : coords) {
    double& x = factors.at(c.name).data()[c.index];
    const double keep = x;
    x = keep + kStep;
    const double up = loss_of(params, ov, cfg);
    x = keep - kStep;
    const double down = loss_of(params, ov, cfg);
    x = keep;
    const double fd = (up - down) / (2 * kStep);
    checked += check_coord(res.grads.at(c.name)[c.index], fd, c.name + "[" + std::to_string(c.index) + "]");
  }
  EXPECT_GE(checked, 50u);
}

TEST(Autograd, TapeOpsAgainstClosedForms) {
  const auto xv = BasicTensor<double>::from_rows({{1.0, -2.0}, {0.5, 3.0}});
  const auto wv = BasicTensor<double>::from_rows({{2.0, 0.0}, {1.0, 1.0}, {0.0, -1.0}});
  Tape<double> tape;
  auto x = tape.leaf(xv, true);
  auto w = tape.leaf(wv, true);
  auto y = tape.linear(x, w);  // x * w^T, [2 x 3]
  EXPECT_EQ(tape.value(y), BasicTensor<double>::from_rows({{2.0, -1.0, 2.0}, {1.0, 3.5, -3.0}}));
  const std::vector<int> targets{0, 1};
  const std::vector<std::uint8_t> mask{1, 0};
  auto loss = tape.cross_entropy_sum(y, targets, mask);
  tape.backward(loss);
  // Only row 0 contributes: d/dy0 = softmax(y0) - onehot(0).
  const double z = std::exp(2.0) * 2 + std::exp(-1.0);
  const auto gy0 = std::vector<double>{std::exp(2.0) / z - 1.0, std::exp(-1.0) / z, std::exp(2.0) / z};
  // dL/dx0 = gy0 * w
  const auto gx = tape.grad(x);
  EXPECT_NEAR(gx(0, 0), gy0[0] * 2.0 + gy0[1] * 1.0, 1e-12);
  EXPECT_NEAR(gx(0, 1), gy0[1] * 1.0 - gy0[2], 1e-12);
  EXPECT_EQ(gx(1, 0), 0.0);
  EXPECT_EQ(gx(1, 1), 0.0);
}

TEST(Autograd, NoGradTapeRecordsNoGradients) {
  const auto xv = BasicTensor<double>::from_rows({{1.0, 2.0}});
  Tape<double> tape(false);
  auto x = tape.leaf(xv, true);
  auto y = tape.scale(x, 3.0);
  EXPECT_EQ(tape.value(y)[1], 6.0);
  EXPECT_FALSE(tape.has_grad(x));
}
