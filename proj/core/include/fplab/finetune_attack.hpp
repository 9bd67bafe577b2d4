// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fplab/checkpoint.hpp"
#include "fplab/corpus.hpp"
#include "fplab/lora.hpp"
#include "fplab/model.hpp"
#include "fplab/train.hpp"

namespace fplab {

// Toy stand-ins for the benign instruction corpora of the attack matrix.
struct BenignDataset {
  std::string id;     // e.g. "Alpaca-10k"
  std::string style;  // alpaca | dolly | sharegpt
  std::size_t size = 0;
};

// Alpaca-10k, Alpaca-3k, ShareGPT-6k, ShareGPT-3k, Dolly-10k, Dolly-3k.
const std::vector<BenignDataset>& benign_datasets();
const BenignDataset& find_benign_dataset(std::string_view id);
std::vector<Sample> benign_samples(const BenignDataset& ds, std::uint64_t seed);

struct FinetuneSpec {
  std::string dataset = "Alpaca-10k";
  int epochs = 2;
  bool adapter = true;
  TrainConfig train;
  LoraConfig lora;
  std::uint64_t seed = 0;

  void validate() const;
  std::string echo() const;
};

// Fine-tunes a fresh adapter (or every parameter) on the benign corpus and
// fuses it. epochs == 0 returns the input unchanged.
Checkpoint finetune_attack(const Checkpoint& ckpt, const ModelConfig& cfg, const FinetuneSpec& spec);

}  // namespace fplab
