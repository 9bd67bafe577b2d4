// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/lora.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "fplab/errors.hpp"

namespace fplab {

namespace {

constexpr std::string_view kScaleKey = "lora_scale";
constexpr std::string_view kRankKey = "lora_rank";
constexpr std::string_view kSourceSchemaKey = "source_schema";

const std::vector<std::string> kDefaultTargets = {"attn.wq", "attn.wk", "attn.wv",
                                                  "attn.wo", "mlp.w_up", "mlp.w_down"};

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool is_reserved(const std::string& key) {
  return key == kScaleKey || key == kRankKey || key == kSourceSchemaKey || key == kArchIdKey;
}

void require_adapter_homology(const LoraAdapter& adapter, const Checkpoint& ckpt,
                              std::string_view context) {
  const std::string target_id = arch_id_of(ckpt.tensors);
  if (adapter.source_arch_id == target_id) return;
  std::string detail = first_schema_divergence(adapter.source_schema, schema_of(ckpt.tensors));
  if (detail.empty()) detail = "schemas agree but arch_id differs";
  throw HomologyError(std::string(context) + ": adapter trained on arch " + adapter.source_arch_id +
                      ", target is " + target_id + " (" + detail + ")");
}

void add_delta(Checkpoint& out, const LoraAdapter& adapter) {
  for (const auto& target : adapter.targets()) {
    auto it = out.tensors.find(target);
    if (it == out.tensors.end()) throw ShapeError("adapter target '" + target + "' missing from checkpoint");
    const Tensor delta = low_rank_delta(adapter, target);
    if (delta.shape() != it->second.shape()) {
      throw ShapeError("adapter target '" + target + "': update " + shape_str(delta.shape()) +
                       " does not match weight " + shape_str(it->second.shape()));
    }
    axpy(it->second, delta, 1.0f);
  }
}

}  // namespace

void LoraConfig::validate() const {
  if (rank < 1) throw ArgumentError("lora config: rank must be >= 1");
  if (!(alpha > 0.0)) throw ArgumentError("lora config: alpha must be > 0 so the scale is positive");
  if (!(init_std >= 0.0)) throw ArgumentError("lora config: init_std must be >= 0");
}

std::vector<std::string> LoraAdapter::targets() const {
  std::vector<std::string> out;
  for (const auto& [name, t] : factors) {
    if (name.ends_with(".lora_A")) out.push_back(name.substr(0, name.size() - 7));
  }
  return out;
}

int LoraAdapter::rank() const {
  for (const auto& [name, t] : factors)
    if (name.ends_with(".lora_A")) return static_cast<int>(t.cols());
  return 0;
}

std::size_t LoraAdapter::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : factors) n += t.numel();
  return n;
}

LoraAdapter init_adapter(const Checkpoint& ckpt, const LoraConfig& lcfg, SeededRng& rng) {
  lcfg.validate();
  const auto& suffixes = lcfg.targets.empty() ? kDefaultTargets : lcfg.targets;
  LoraAdapter ad;
  ad.scale = lcfg.scale();
  ad.source_arch_id = arch_id_of(ckpt.tensors);
  ad.source_schema = schema_of(ckpt.tensors);
  const auto r = static_cast<std::size_t>(lcfg.rank);
  for (const auto& [name, w] : ckpt.tensors) {
    const bool selected = std::any_of(suffixes.begin(), suffixes.end(),
                                      [&](const std::string& s) { return name.ends_with(s); });
    if (!selected || w.rank() != 2) continue;
    if (r > std::min(w.rows(), w.cols())) {
      throw ArgumentError("lora rank " + std::to_string(r) + " exceeds min dimension of '" + name +
                          "' " + shape_str(w.shape()));
    }
    ad.factors.emplace(lora_a_name(name),
                       gaussian_fill({w.rows(), r}, rng, static_cast<float>(lcfg.init_std)));
    ad.factors.emplace(lora_b_name(name), Tensor({w.cols(), r}));
  }
  if (ad.factors.empty()) throw ArgumentError("lora target selector matches no 2-D tensors");
  ad.lineage["lora_init_seed"] = std::to_string(rng.seed());
  return ad;
}

Tensor low_rank_delta(const LoraAdapter& adapter, const std::string& target) {
  const Tensor& a = adapter.factors.at(lora_a_name(target));
  const Tensor& b = adapter.factors.at(lora_b_name(target));
  if (a.cols() != b.cols()) {
    throw ShapeError("adapter target '" + target + "': A " + shape_str(a.shape()) + " and B " +
                     shape_str(b.shape()) + " disagree on rank");
  }
  Tensor delta = matmul_nt(a, b);
  for (float& x : delta.data()) x *= static_cast<float>(adapter.scale);
  return delta;
}

Tensor attached_forward(const Checkpoint& ckpt, const LoraAdapter& adapter, const ModelConfig& cfg,
                        const TokenSeq& seq) {
  require_adapter_homology(adapter, ckpt, "attached_forward");
  check_architecture(ckpt, cfg);
  return forward_logits(ckpt.tensors, cfg, seq.tokens, adapter.overlay());
}

Checkpoint fuse(const Checkpoint& ckpt, const LoraAdapter& adapter) {
  require_adapter_homology(adapter, ckpt, "fuse");
  Checkpoint out = ckpt;
  add_delta(out, adapter);
  append_lineage(out.metadata, "fuse(rank=" + std::to_string(adapter.rank()) +
                                   ", scale=" + format_double(adapter.scale) + ")");
  return out;
}

Checkpoint transfer(const LoraAdapter& adapter, const Checkpoint& downstream) {
  require_adapter_homology(adapter, downstream, "transfer");
  Checkpoint out = downstream;
  add_delta(out, adapter);
  append_lineage(out.metadata, "transfer(from=" + adapter.source_arch_id + ")");
  return out;
}

Checkpoint stack(const Checkpoint& ckpt, std::span<const LoraAdapter> adapters) {
  for (const auto& ad : adapters) require_adapter_homology(ad, ckpt, "stack");
  Checkpoint out = ckpt;
  for (const auto& ad : adapters) add_delta(out, ad);
  append_lineage(out.metadata, "stack(n=" + std::to_string(adapters.size()) + ")");
  return out;
}

LoraAdapter scaled(const LoraAdapter& adapter, double k) {
  LoraAdapter out = adapter;
  for (auto& [name, t] : out.factors) {
    if (name.ends_with(".lora_A"))
      for (float& x : t.data()) x = static_cast<float>(x * k);
  }
  return out;
}

Checkpoint adapter_to_checkpoint(const LoraAdapter& adapter) {
  Checkpoint c;
  c.tensors = adapter.factors;
  c.metadata = adapter.lineage;
  c.metadata[std::string(kScaleKey)] = format_double(adapter.scale);
  c.metadata[std::string(kRankKey)] = std::to_string(adapter.rank());
  c.metadata[std::string(kSourceSchemaKey)] = schema_to_string(adapter.source_schema);
  c.metadata[std::string(kArchIdKey)] = adapter.source_arch_id;
  return c;
}

LoraAdapter adapter_from_checkpoint(const Checkpoint& ckpt) {
  LoraAdapter ad;
  const auto need = [&](std::string_view key) -> const std::string& {
    auto it = ckpt.metadata.find(std::string(key));
    if (it == ckpt.metadata.end()) {
      throw FormatError("adapter file lacks metadata '" + std::string(key) + "'");
    }
    return it->second;
  };
  ad.scale = std::stod(need(kScaleKey));
  ad.source_arch_id = need(kArchIdKey);
  ad.source_schema = schema_from_string(need(kSourceSchemaKey));
  ad.factors = ckpt.tensors;
  for (const auto& [k, v] : ckpt.metadata)
    if (!is_reserved(k)) ad.lineage[k] = v;
  std::set<std::string> seen;
  for (const auto& [name, t] : ad.factors) {
    if (!name.ends_with(".lora_A") && !name.ends_with(".lora_B")) {
      throw FormatError("adapter tensor '" + name + "' is neither a lora_A nor a lora_B factor");
    }
    if (t.rank() != 2) throw FormatError("adapter tensor '" + name + "' is not 2-D");
  }
  for (const auto& target : ad.targets()) {
    if (!ad.factors.count(lora_b_name(target))) {
      throw FormatError("adapter target '" + target + "' has lora_A but no lora_B");
    }
  }
  return ad;
}

}  // namespace fplab
