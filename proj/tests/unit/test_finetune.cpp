// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "fplab/errors.hpp"
#include "fplab/finetune_attack.hpp"
#include "fplab/model.hpp"
#include "fplab/rng.hpp"

using namespace fplab;

namespace {

ModelConfig tiny() {
  ModelConfig c;
  c.d_model = 16;
  c.n_layers = 1;
  c.n_heads = 2;
  c.d_ff = 32;
  c.max_seq_len = 96;
  return c;
}

}  // namespace

TEST(Finetune, DatasetCatalogue) {
  ASSERT_EQ(benign_datasets().size(), 6u);
  for (const auto& d : benign_datasets()) {
    EXPECT_TRUE(is_known_benign_style(d.style)) << d.id;
    const auto s = benign_samples(d, 1);
    EXPECT_EQ(s.size(), d.size);
    EXPECT_EQ(s, benign_samples(d, 1));
  }
  EXPECT_THROW(find_benign_dataset("Reddit-1k"), ArgumentError);
}

TEST(Finetune, ZeroEpochsIsIdentity) {
  const auto cfg = tiny();
  SeededRng rng(1);
  const auto m = init_model(cfg, rng);
  FinetuneSpec s;
  s.epochs = 0;
  EXPECT_EQ(finetune_attack(m, cfg, s), m);
  s.epochs = -1;
  EXPECT_THROW(finetune_attack(m, cfg, s), ArgumentError);
  s.epochs = 1;
  s.dataset = "nope";
  EXPECT_THROW(finetune_attack(m, cfg, s), ArgumentError);
}

TEST(Finetune, DeterministicAndChangesWeights) {
  const auto cfg = tiny();
  SeededRng rng(2);
  const auto m = init_model(cfg, rng);
  FinetuneSpec s;
  s.dataset = "Dolly-3k";
  s.epochs = 1;
  s.seed = 5;
  s.lora.rank = 2;
  s.lora.alpha = 4;
  const auto a = finetune_attack(m, cfg, s);
  EXPECT_EQ(a.tensors, finetune_attack(m, cfg, s).tensors);
  EXPECT_NE(a.tensors, m.tensors);
  EXPECT_EQ(a.arch_id(), m.arch_id());
  s.adapter = false;
  const auto full = finetune_attack(m, cfg, s);
  EXPECT_NE(full.tensors, a.tensors);
}
