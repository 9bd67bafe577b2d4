// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/merge.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <vector>

#include "fplab/errors.hpp"

namespace fplab {

std::string to_string(MergeMethod m) {
  switch (m) {
    case MergeMethod::Task: return "task";
    case MergeMethod::DareTask: return "dare-task";
    case MergeMethod::Ties: return "ties";
    case MergeMethod::DareTies: return "dare-ties";
  }
  return "?";
}

MergeMethod parse_merge_method(std::string_view text) {
  if (text == "task") return MergeMethod::Task;
  if (text == "dare-task") return MergeMethod::DareTask;
  if (text == "ties") return MergeMethod::Ties;
  if (text == "dare-ties") return MergeMethod::DareTies;
  throw ArgumentError("unknown merge method '" + std::string(text) + "' (expected task|dare-task|ties|dare-ties)");
}

void MergeSpec::validate() const {
  if (!(alpha1 >= 0.0 && alpha1 <= 1.0)) throw ArgumentError("merge: alpha1 must be in [0, 1]");
  if (!(drop_p >= 0.0 && drop_p < 1.0)) throw ArgumentError("merge: DARE drop probability must be in [0, 1)");
  if (!(density > 0.0 && density <= 1.0)) throw ArgumentError("merge: TIES density must be in (0, 1]");
}

std::string MergeSpec::echo() const {
  std::ostringstream os;
  os << "method=" << to_string(method) << ";alpha1=" << alpha1 << ";alpha2=" << alpha2() << ";p=" << drop_p
     << ";density=" << density << ";seed=" << seed;
  if (!base_id.empty()) os << ";base=" << base_id;
  return os.str();
}

TaskVector dare_transform(const TaskVector& tv, double p, SeededRng& rng) {
  if (!(p >= 0.0 && p < 1.0)) {
    throw ArgumentError("dare_transform: drop probability must be in [0, 1), got " + std::to_string(p));
  }
  TaskVector out = tv;
  if (p == 0.0) return out;
  const double keep_scale = 1.0 / (1.0 - p);
  for (auto& [name, t] : out.deltas) {
    for (float& x : t.data()) {
      x = rng.uniform() < p ? 0.0f : static_cast<float>(static_cast<double>(x) * keep_scale);
    }
  }
  return out;
}

namespace {

// Mask of the ceil(d*n) entries with the largest |v|; ties go to the lower
// index.
std::vector<bool> trim_mask(std::span<const float> v, double density) {
  const std::size_t n = v.size();
  const auto keep = std::min<std::size_t>(n, static_cast<std::size_t>(std::ceil(density * static_cast<double>(n))));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(v[a]) > std::abs(v[b]); });
  std::vector<bool> mask(n, false);
  for (std::size_t i = 0; i < keep; ++i) mask[order[i]] = true;
  return mask;
}

}  // namespace

TaskVector ties_combine(std::span<const TaskVector> tvs, std::span<const double> weights, double density) {
  if (tvs.empty()) throw ArgumentError("ties_combine: no task vectors");
  if (weights.size() != tvs.size()) throw ArgumentError("ties_combine: one weight per task vector required");
  if (!(density > 0.0 && density <= 1.0)) throw ArgumentError("ties_combine: density must be in (0, 1]");
  double wsum = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ArgumentError("ties_combine: weights must be >= 0");
    wsum += w;
  }
  if (!(wsum > 0.0)) throw ArgumentError("ties_combine: weights must sum to a positive value");
  for (const auto& tv : tvs) {
    if (tv.deltas.size() != tvs[0].deltas.size()) throw ShapeError("ties_combine: task vectors have different keys");
    for (const auto& [name, t] : tvs[0].deltas) {
      auto it = tv.deltas.find(name);
      if (it == tv.deltas.end()) throw ShapeError("ties_combine: tensor '" + name + "' missing from a task vector");
      if (it->second.shape() != t.shape()) {
        throw ShapeError("ties_combine: tensor '" + name + "' has shapes " + shape_str(t.shape()) + " and " +
                         shape_str(it->second.shape()));
      }
    }
  }

  TaskVector out;
  out.expert_id = "ties";
  out.base_id = tvs[0].base_id;
  const std::size_t m = tvs.size();
  for (const auto& [name, t0] : tvs[0].deltas) {
    std::vector<std::span<const float>> vals;
    std::vector<std::vector<bool>> masks;
    for (const auto& tv : tvs) {
      vals.push_back(tv.deltas.at(name).data());
      masks.push_back(trim_mask(vals.back(), density));
    }
    Tensor merged(t0.shape());
    auto md = merged.data();
    for (std::size_t k = 0; k < md.size(); ++k) {
      double sign_sum = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (masks[i][k]) sign_sum += weights[i] * static_cast<double>(vals[i][k]);
      }
      const bool positive = sign_sum >= 0.0;
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        if (!masks[i][k]) continue;
        const float v = vals[i][k];
        if (v == 0.0f || (v > 0.0f) != positive) continue;
        num += weights[i] * static_cast<double>(v);
        den += weights[i];
      }
      md[k] = den > 0.0 ? static_cast<float>(num / den) : 0.0f;
    }
    out.deltas.emplace(name, std::move(merged));
  }
  return out;
}

Checkpoint merge(const Checkpoint& expert1, const Checkpoint& expert2, const Checkpoint& base,
                 const MergeSpec& spec) {
  spec.validate();
  require_homologous(base, expert1, "merge(expert1)");
  require_homologous(base, expert2, "merge(expert2)");
  const double a1 = spec.alpha1, a2 = spec.alpha2();

  Checkpoint out = base;
  if (spec.method == MergeMethod::Task) {
    // Element-wise in double so the alpha endpoints reproduce an expert
    // exactly.
    for (auto& [name, t] : out.tensors) {
      const auto e1 = expert1.at(name).data();
      const auto e2 = expert2.at(name).data();
      auto od = t.data();
      for (std::size_t k = 0; k < od.size(); ++k) {
        const double b = od[k];
        od[k] = static_cast<float>(b + a1 * (static_cast<double>(e1[k]) - b) + a2 * (static_cast<double>(e2[k]) - b));
      }
    }
  } else {
    TaskVector t1 = task_vector(expert1, base);
    TaskVector t2 = task_vector(expert2, base);
    if (spec.method == MergeMethod::DareTask || spec.method == MergeMethod::DareTies) {
      SeededRng r1(derive_seed(spec.seed, "dare-1"));
      SeededRng r2(derive_seed(spec.seed, "dare-2"));
      t1 = dare_transform(t1, spec.drop_p, r1);
      t2 = dare_transform(t2, spec.drop_p, r2);
    }
    if (spec.method == MergeMethod::DareTask) {
      out = apply_delta(apply_delta(base, t1, a1), t2, a2);
    } else {
      const TaskVector tvs[] = {t1, t2};
      const double ws[] = {a1, a2};
      out = apply_delta(base, ties_combine(tvs, ws, spec.density), 1.0);
    }
  }
  for (const auto& [name, t] : out.tensors) {
    if (!all_finite(t)) throw DivergenceError("merge: non-finite value in '" + name + "'");
  }
  append_lineage(out.metadata, "merge(" + spec.echo() + ")");
  return out;
}

}  // namespace fplab
