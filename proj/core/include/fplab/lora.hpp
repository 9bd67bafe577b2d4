// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fplab/checkpoint.hpp"
#include "fplab/model.hpp"
#include "fplab/rng.hpp"

namespace fplab {

struct LoraConfig {
  int rank = 8;
  double alpha = 16.0;
  // Name suffixes of the targeted matrices. Empty means every 2-D projection
  // (attn.wq/wk/wv/wo, mlp.w_up/w_down) in every layer; embeddings and the LM
  // head are never selected by default.
  std::vector<std::string> targets;
  double init_std = 0.02;
  std::uint64_t seed = 0;

  double scale() const { return alpha / static_cast<double>(rank); }
  void validate() const;
};

// Low-rank pairs per targeted matrix. factors holds "<W>.lora_A" [out x r]
// and "<W>.lora_B" [in x r]; the effective update is scale * A * B^T.
struct LoraAdapter {
  TensorMap<float> factors;
  double scale = 1.0;
  std::string source_arch_id;
  Schema source_schema;
  Metadata lineage;

  std::vector<std::string> targets() const;
  int rank() const;
  std::size_t parameter_count() const;
  LowRankOverlay<float> overlay() const { return {&factors, static_cast<float>(scale)}; }
};

LoraAdapter init_adapter(const Checkpoint& ckpt, const LoraConfig& lcfg, SeededRng& rng);

// scale * A * B^T for one target.
Tensor low_rank_delta(const LoraAdapter& adapter, const std::string& target);

// Forward pass with each targeted W acting as W + s*A*B^T, without fusing.
Tensor attached_forward(const Checkpoint& ckpt, const LoraAdapter& adapter, const ModelConfig& cfg,
                        const TokenSeq& seq);

// ckpt[W] + s*A*B^T for every target; other tensors copied.
Checkpoint fuse(const Checkpoint& ckpt, const LoraAdapter& adapter);

// Fuses an adapter trained elsewhere into a homologous downstream checkpoint.
Checkpoint transfer(const LoraAdapter& adapter, const Checkpoint& downstream);

// ckpt + sum_k s_k*A_k*B_k^T.
Checkpoint stack(const Checkpoint& ckpt, std::span<const LoraAdapter> adapters);

// Multiplies every A factor by k, so the update scales by k.
LoraAdapter scaled(const LoraAdapter& adapter, double k);

// Adapter container: a checkpoint with "<W>.lora_A"/"<W>.lora_B" tensors and
// scale, source arch_id and source schema in metadata.
Checkpoint adapter_to_checkpoint(const LoraAdapter& adapter);
LoraAdapter adapter_from_checkpoint(const Checkpoint& ckpt);

}  // namespace fplab
