// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fplab/tensor.hpp"

namespace fplab {

using Metadata = std::map<std::string, std::string>;

// Ordered (name, shape) list; the architecture identity of a checkpoint.
using Schema = std::vector<std::pair<std::string, Shape>>;

inline constexpr std::string_view kArchIdKey = "arch_id";
inline constexpr std::string_view kLineageKey = "lineage";

// Named tensors plus string metadata. Names iterate lexicographically, which
// is also the on-disk order.
struct Checkpoint {
  TensorMap<float> tensors;
  Metadata metadata;

  bool contains(const std::string& name) const { return tensors.count(name) != 0; }
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  // Stored arch_id, or the computed one when the metadata lacks it.
  std::string arch_id() const;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

Schema schema_of(const TensorMap<float>& tensors);
std::string schema_to_string(const Schema& schema);
Schema schema_from_string(std::string_view text);

// Hex digest over the ordered (name, shape) list.
std::string arch_id_of(const Schema& schema);
std::string arch_id_of(const TensorMap<float>& tensors);

// Sets metadata["arch_id"] from the current tensor schema.
void stamp_arch_id(Checkpoint& ckpt);
void append_lineage(Metadata& metadata, std::string_view entry);

// Human-readable description of the first entry where two schemas diverge,
// or an empty string when they are identical.
std::string first_schema_divergence(const Schema& expected, const Schema& actual);

// Throws HomologyError naming the first divergent tensor.
void require_homologous(const Checkpoint& a, const Checkpoint& b, std::string_view context);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes, std::string_view source);

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

// SHA-256 of the canonical serialized bytes.
std::string content_hash(const Checkpoint& ckpt);

struct TaskVector {
  TensorMap<float> deltas;
  std::string expert_id;
  std::string base_id;
  // Names skipped because they exist in only one of the two checkpoints.
  std::vector<std::string> warnings;
};

// deltas[n] = expert[n] - base[n] over the shared names.
TaskVector task_vector(const Checkpoint& expert, const Checkpoint& base);

// out[n] = base[n] + weight * tv[n]; other tensors are copied verbatim.
Checkpoint apply_delta(const Checkpoint& base, const TaskVector& tv, double weight);

}  // namespace fplab
