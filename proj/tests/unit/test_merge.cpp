// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <functional>
#include <span>

#include <gtest/gtest.h>

#include "fplab/errors.hpp"
#include "fplab/merge.hpp"
#include "fplab/model.hpp"
#include "fplab/rng.hpp"
#include "golden/goldens.hpp"
#include "support/ties_reference.hpp"

using namespace fplab;

namespace {

TaskVector single(std::vector<float> v) {
  TaskVector tv;
  const std::size_t n = v.size();
  tv.deltas.emplace("v", Tensor({n}, std::move(v)));
  return tv;
}

void expect_ties_equal(const std::vector<std::vector<float>>& vs, const std::vector<double>& w, double d) {
  std::vector<TaskVector> tvs;
  for (const auto& v : vs) tvs.push_back(single(v));
  const auto got = ties_combine(tvs, w, d).deltas.at("v");
  const auto want = testing_support::ties_reference(vs, w, d);
  for (std::size_t i = 0; i < want.size(); ++i) {
    ASSERT_EQ(got[i], want[i]) << "index " << i << " density " << d;
  }
}

ModelConfig small() {
  ModelConfig c;
  c.d_model = 8;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 16;
  c.max_seq_len = 16;
  return c;
}

Checkpoint perturbed(const Checkpoint& base, std::uint64_t seed, double std) {
  Checkpoint out = base;
  SeededRng rng(seed);
  for (auto& [n, t] : out.tensors)
    for (auto& x : t.data()) x += static_cast<float>(std * rng.normal());
  return out;
}

}  // namespace

TEST(Dare, MatchesFrozenDraws) {
  const auto tv = single({golden::kDareInput.begin(), golden::kDareInput.end()});
  SeededRng rng(7);
  const auto out = dare_transform(tv, 0.5, rng).deltas.at("v");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], golden::kDareSeed7P05[i]) << i;
}

TEST(Dare, ZeroDropIsIdentity) {
  SeededRng rng(1);
  const auto tv = single({1.5f, -2.0f, 0.0f, 3.25f});
  EXPECT_EQ(dare_transform(tv, 0.0, rng).deltas, tv.deltas);
}

TEST(Dare, DropAtLeastOneRejected) {
  SeededRng rng(1);
  const auto tv = single({1.0f});
  EXPECT_THROW(dare_transform(tv, 1.0, rng), ArgumentError);
  EXPECT_THROW(dare_transform(tv, 1.5, rng), ArgumentError);
  EXPECT_THROW(dare_transform(tv, -0.1, rng), ArgumentError);
}

TEST(Dare, UnbiasedOverSeeds) {
  const std::vector<float> v{0.5f, -1.0f, 2.0f, -0.25f, 3.0f, 0.0f, 1e-3f, -7.5f};
  const auto tv = single(v);
  for (double p : {0.1, 0.5, 0.9}) {
    std::vector<double> sum(v.size(), 0.0), sq(v.size(), 0.0);
    constexpr int kSeeds = 1000;
    for (int s = 0; s < kSeeds; ++s) {
      SeededRng rng(derive_seed(12345, static_cast<std::uint64_t>(s)));
      const auto out = dare_transform(tv, p, rng).deltas.at("v");
      for (std::size_t i = 0; i < v.size(); ++i) {
        sum[i] += out[i];
        sq[i] += static_cast<double>(out[i]) * out[i];
      }
    }
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double mean = sum[i] / kSeeds;
      const double var = sq[i] / kSeeds - mean * mean;
      const double se = std::sqrt(std::max(var, 0.0) / kSeeds);
      EXPECT_LE(std::abs(mean - v[i]), 3.0 * se + 1e-7) << "p=" << p << " i=" << i;
    }
  }
}

TEST(Ties, FrozenExample) {
  const std::vector<TaskVector> tvs{single({1.0f, -2.0f, 0.1f, 0.0f}), single({-1.5f, -0.5f, 0.2f, 0.3f})};
  const std::vector<double> w{0.5, 0.5};
  const auto out = ties_combine(tvs, w, 0.5).deltas.at("v");
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(out[i], static_cast<float>(golden::kTiesExample[i])) << i;
}

// All m-tuples of length-n vectors over `alphabet`.
void for_each_tuple(std::span<const float> alphabet, std::size_t m, std::size_t n,
                    const std::function<void(const std::vector<std::vector<float>>&)>& f) {
  std::size_t combos = 1;
  for (std::size_t i = 0; i < m * n; ++i) combos *= alphabet.size();
  std::vector<std::vector<float>> vs(m, std::vector<float>(n));
  for (std::size_t code = 0; code < combos; ++code) {
    std::size_t c = code;
    for (auto& v : vs)
      for (auto& x : v) {
        x = alphabet[c % alphabet.size()];
        c /= alphabet.size();
      }
    f(vs);
  }
}

// Small alphabets make all-tie magnitudes and zero weighted sign sums common.
TEST(Ties, ExhaustiveAgainstBruteForce) {
  const float five[] = {-2.0f, -1.0f, 0.0f, 1.0f, 2.0f};
  const float three[] = {-1.0f, 0.0f, 1.0f};
  const std::vector<std::vector<double>> pair_weights{{0.5, 0.5}, {0.3, 0.7}, {1.0, 0.0}};
  const double densities[] = {0.2, 0.5, 0.75, 1.0};
  auto run = [&](std::span<const float> alphabet, std::size_t m, std::size_t n,
                 const std::vector<std::vector<double>>& weights) {
    for_each_tuple(alphabet, m, n, [&](const std::vector<std::vector<float>>& vs) {
      for (const auto& w : weights)
        for (double d : densities) expect_ties_equal(vs, w, d);
    });
  };
  for (std::size_t n = 1; n <= 8; ++n) run(three, 1, n, {{1.0}});
  for (std::size_t n = 1; n <= 3; ++n) run(five, 2, n, pair_weights);
  run(three, 2, 4, pair_weights);
  run(three, 3, 2, {{1.0 / 3, 1.0 / 3, 1.0 / 3}, {0.2, 0.3, 0.5}});
  if (HasFatalFailure()) return;
  SeededRng rng(99);
  for (int trial = 0; trial < 3000; ++trial) {
    const std::size_t n = 5 + rng.uniform_int(4);
    const std::size_t m = 2 + rng.uniform_int(2);
    std::vector<std::vector<float>> vs(m, std::vector<float>(n));
    for (auto& v : vs)
      for (auto& x : v) x = static_cast<float>(static_cast<int>(rng.uniform_int(7)) - 3) * 0.5f;
    std::vector<double> w(m);
    for (auto& x : w) x = 0.1 + rng.uniform();
    expect_ties_equal(vs, w, 0.1 + 0.9 * rng.uniform());
    if (HasFatalFailure()) return;
  }
}

TEST(Ties, AllTiedMagnitudesKeepLowestIndices) {
  const std::vector<TaskVector> tvs{single({1.0f, -1.0f, 1.0f, -1.0f})};
  const std::vector<double> w{1.0};
  const auto out = ties_combine(tvs, w, 0.5).deltas.at("v");
  EXPECT_EQ(out, Tensor({4}, {1.0f, -1.0f, 0.0f, 0.0f}));
}

TEST(Ties, ZeroSignSumElectsPositive) {
  const std::vector<TaskVector> tvs{single({2.0f}), single({-2.0f})};
  const std::vector<double> w{0.5, 0.5};
  EXPECT_EQ(ties_combine(tvs, w, 1.0).deltas.at("v")[0], 2.0f);
}

TEST(Ties, RejectsBadArguments) {
  const std::vector<TaskVector> tvs{single({1.0f}), single({1.0f, 2.0f})};
  const std::vector<double> w{0.5, 0.5};
  EXPECT_THROW(ties_combine(tvs, w, 0.5), ShapeError);
  const std::vector<TaskVector> ok{single({1.0f}), single({2.0f})};
  EXPECT_THROW(ties_combine(ok, w, 0.0), ArgumentError);
  const std::vector<double> one{1.0};
  EXPECT_THROW(ties_combine(ok, one, 0.5), ArgumentError);
}

TEST(Merge, TaskEndpointsReconstructExperts) {
  const auto cfg = small();
  SeededRng rng(1);
  const auto base = init_model(cfg, rng);
  const auto e1 = perturbed(base, 2, 0.05), e2 = perturbed(base, 3, 0.05);
  MergeSpec s;
  s.method = MergeMethod::Task;
  s.alpha1 = 1.0;
  const auto m1 = merge(e1, e2, base, s);
  s.alpha1 = 0.0;
  const auto m0 = merge(e1, e2, base, s);
  for (const auto& [name, t] : base.tensors) {
    for (std::size_t i = 0; i < t.numel(); ++i) {
      ASSERT_NEAR(m1.at(name)[i], e1.at(name)[i], 1e-6);
      ASSERT_NEAR(m0.at(name)[i], e2.at(name)[i], 1e-6);
    }
  }
  EXPECT_EQ(m1.arch_id(), base.arch_id());
}

TEST(Merge, TaskMergeIsAffineInAlpha) {
  const auto cfg = small();
  SeededRng rng(4);
  const auto base = init_model(cfg, rng);
  const auto e1 = perturbed(base, 5, 0.1), e2 = perturbed(base, 6, 0.1);
  MergeSpec s;
  for (double a : {0.1, 0.3, 0.5, 0.9}) {
    s.alpha1 = a;
    const auto m = merge(e1, e2, base, s);
    for (const auto& [name, t] : base.tensors) {
      for (std::size_t i = 0; i < t.numel(); ++i) {
        const double want = a * e1.at(name)[i] + (1 - a) * e2.at(name)[i];
        ASSERT_NEAR(m.at(name)[i], want, 1e-6) << name;
      }
    }
  }
}

TEST(Merge, DareVariantsAreSeedDeterministic) {
  const auto cfg = small();
  SeededRng rng(7);
  const auto base = init_model(cfg, rng);
  const auto e1 = perturbed(base, 8, 0.1), e2 = perturbed(base, 9, 0.1);
  for (auto method : {MergeMethod::DareTask, MergeMethod::DareTies, MergeMethod::Ties}) {
    MergeSpec s;
    s.method = method;
    s.seed = 3;
    const auto a = merge(e1, e2, base, s), b = merge(e1, e2, base, s);
    EXPECT_EQ(a.tensors, b.tensors) << to_string(method);
    EXPECT_EQ(a.arch_id(), base.arch_id());
  }
}

TEST(Merge, RejectsNonHomologousExperts) {
  const auto cfg = small();
  auto other = cfg;
  other.d_ff = 24;
  SeededRng rng(7);
  const auto base = init_model(cfg, rng);
  const auto alien = init_model(other, rng);
  EXPECT_THROW(merge(base, alien, base, MergeSpec{}), HomologyError);
  MergeSpec bad;
  bad.alpha1 = 1.5;
  EXPECT_THROW(merge(base, base, base, bad), ArgumentError);
  EXPECT_THROW(parse_merge_method("average"), ArgumentError);
}
