// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

#include "fplab/checkpoint.hpp"
#include "fplab/rng.hpp"

namespace fplab {

enum class MergeMethod { Task, DareTask, Ties, DareTies };

std::string to_string(MergeMethod m);
MergeMethod parse_merge_method(std::string_view text);

struct MergeSpec {
  MergeMethod method = MergeMethod::Task;
  double alpha1 = 0.5;  // alpha2 = 1 - alpha1
  double drop_p = 0.5;
  double density = 0.2;
  std::uint64_t seed = 0;
  std::string base_id;  // informational; echoed in reports

  double alpha2() const { return 1.0 - alpha1; }
  // alpha1 is accepted on the closed interval [0, 1] so the endpoints can be
  // exercised; sweeps use the open interval.
  void validate() const;
  std::string echo() const;
};

// Drops each element with probability p (uniform() < p), rescales the
// survivors by 1/(1-p). Elements are visited in tensor-name order, then flat
// index order, one uniform draw each.
TaskVector dare_transform(const TaskVector& tv, double p, SeededRng& rng);

// Trim / elect / disjoint-merge. Trim keeps the ceil(d*len) largest |v| per
// tensor (ties: lower flat index). A zero weighted sign sum elects +. Only
// nonzero trimmed values with the elected sign contribute; the output is
// their weighted mean, or 0 when none agree.
TaskVector ties_combine(std::span<const TaskVector> tvs, std::span<const double> weights, double density);

Checkpoint merge(const Checkpoint& expert1, const Checkpoint& expert2, const Checkpoint& base,
                 const MergeSpec& spec);

}  // namespace fplab
