// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fplab/checkpoint.hpp"
#include "fplab/model.hpp"

namespace fplab {

enum class PruneStrategy { Random, L1, L2, Taylor };
enum class GroupKind { MlpChannel, AttentionHead };

std::string to_string(PruneStrategy s);
std::string to_string(GroupKind g);
PruneStrategy parse_strategy(std::string_view text);
GroupKind parse_group_kind(std::string_view text);

// Random 0.20, L1 0.05, L2 0.05, Taylor 0.20.
double default_prune_ratio(PruneStrategy s);

struct PruneSpec {
  PruneStrategy strategy = PruneStrategy::L1;
  double ratio = 0.05;
  GroupKind granularity = GroupKind::MlpChannel;
  std::vector<TokenSeq> calibration;  // required for Taylor
  std::uint64_t seed = 0;

  void validate() const;
  std::string echo() const;
};

// A contiguous run of rows or columns of one 2-D tensor.
struct Slice {
  enum class Axis { Row, Col };
  std::string tensor;
  Axis axis = Axis::Row;
  std::size_t begin = 0;
  std::size_t end = 0;
};

struct Group {
  std::string id;
  int layer = 0;
  std::vector<Slice> slices;
};

struct GroupIndex {
  GroupKind kind = GroupKind::MlpChannel;
  std::vector<Group> groups;

  // MLP channel c of layer l owns row c of w_up and column c of w_down.
  // Attention head h owns its rows of wq/wk/wv and its columns of wo.
  static GroupIndex build(const ModelConfig& cfg, GroupKind kind);
  int n_layers() const;
};

// Visits every element of a slice as (flat index into the tensor).
template <typename F>
void for_each_element(const Slice& s, const Shape& shape, F&& f) {
  const std::size_t rows = shape[0], cols = shape[1];
  if (s.axis == Slice::Axis::Row) {
    for (std::size_t r = s.begin; r < s.end; ++r)
      for (std::size_t c = 0; c < cols; ++c) f(r * cols + c);
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = s.begin; c < s.end; ++c) f(r * cols + c);
  }
}

// One score per group, aligned with groups.groups.
std::vector<double> importance_scores(const Checkpoint& ckpt, const ModelConfig& cfg,
                                      const PruneSpec& spec, const GroupIndex& groups);

// Indices of the floor(ratio * #groups) lowest-scoring groups, ascending by
// (score, group index).
std::vector<std::size_t> lowest_groups(const std::vector<double>& scores, double ratio);

struct PruneResult {
  Checkpoint ckpt;
  std::vector<std::size_t> pruned;
};

PruneResult prune_detailed(const Checkpoint& ckpt, const ModelConfig& cfg, const PruneSpec& spec);
Checkpoint prune(const Checkpoint& ckpt, const ModelConfig& cfg, const PruneSpec& spec);

}  // namespace fplab
