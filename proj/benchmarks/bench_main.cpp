// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "fplab/lora.hpp"
#include "fplab/model.hpp"
#include "fplab/rng.hpp"
#include "fplab/train.hpp"

using namespace fplab;

namespace {

Tensor random_tensor(Shape shape, SeededRng& rng) {
  Tensor t(std::move(shape));
  for (auto& x : t.data()) x = static_cast<float>(rng.normal());
  return t;
}

void BM_MatmulNT(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul_nt(a, b));
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_MatmulNT)->Arg(64)->Arg(128)->Arg(256);

void BM_Forward(benchmark::State& state) {
  const ModelConfig cfg;
  SeededRng rng(2);
  const auto m = init_model(cfg, rng);
  const auto seq = encode_prompt(std::string(static_cast<std::size_t>(state.range(0)), 'a'));
  for (auto _ : state) benchmark::DoNotOptimize(forward(m, cfg, seq));
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(64)->Arg(120);

void BM_AttachedForward(benchmark::State& state) {
  const ModelConfig cfg;
  SeededRng rng(3);
  const auto m = init_model(cfg, rng);
  LoraConfig lc;
  const auto ad = init_adapter(m, lc, rng);
  const auto seq = encode_prompt(std::string(64, 'a'));
  for (auto _ : state) benchmark::DoNotOptimize(attached_forward(m, ad, cfg, seq));
}
BENCHMARK(BM_AttachedForward);

void BM_Backward(benchmark::State& state) {
  const ModelConfig cfg;
  SeededRng rng(4);
  const auto m = init_model(cfg, rng);
  const std::vector<TokenSeq> batch(static_cast<std::size_t>(state.range(0)),
                                    encode_sample("the quick brown fox", "jumps over"));
  const bool adapter = state.range(1) != 0;
  LoraConfig lc;
  const auto ad = init_adapter(m, lc, rng);
  for (auto _ : state) {
    if (adapter) {
      benchmark::DoNotOptimize(backward_pass(m.tensors, ad.overlay(), cfg, batch, ParamSelector::AdapterOnly));
    } else {
      benchmark::DoNotOptimize(backward_pass(m.tensors, LowRankOverlay<float>{}, cfg, batch, ParamSelector::All));
    }
  }
}
BENCHMARK(BM_Backward)->Args({4, 0})->Args({4, 1});

}  // namespace

BENCHMARK_MAIN();
