// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/prune.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numeric>
#include <sstream>

#include "fplab/errors.hpp"
#include "fplab/rng.hpp"
#include "fplab/train.hpp"

namespace fplab {

std::string to_string(PruneStrategy s) {
  switch (s) {
    case PruneStrategy::Random: return "random";
    case PruneStrategy::L1: return "l1";
    case PruneStrategy::L2: return "l2";
    case PruneStrategy::Taylor: return "taylor";
  }
  return "?";
}

std::string to_string(GroupKind g) {
  return g == GroupKind::MlpChannel ? "mlp-channel" : "attention-head";
}

PruneStrategy parse_strategy(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
  if (t == "random") return PruneStrategy::Random;
  if (t == "l1") return PruneStrategy::L1;
  if (t == "l2") return PruneStrategy::L2;
  if (t == "taylor") return PruneStrategy::Taylor;
  throw ArgumentError("unknown prune strategy '" + std::string(text) + "' (expected random|l1|l2|taylor)");
}

GroupKind parse_group_kind(std::string_view text) {
  if (text == "mlp-channel") return GroupKind::MlpChannel;
  if (text == "attention-head") return GroupKind::AttentionHead;
  throw ArgumentError("unknown group granularity '" + std::string(text) +
                      "' (expected mlp-channel|attention-head)");
}

double default_prune_ratio(PruneStrategy s) {
  return (s == PruneStrategy::L1 || s == PruneStrategy::L2) ? 0.05 : 0.20;
}

void PruneSpec::validate() const {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ArgumentError("prune: ratio must be in [0, 1)");
  if (strategy == PruneStrategy::Taylor && calibration.empty()) {
    throw ArgumentError("prune: Taylor importance needs a calibration batch");
  }
}

std::string PruneSpec::echo() const {
  std::ostringstream os;
  os << "strategy=" << to_string(strategy) << ";ratio=" << ratio << ";groups=" << to_string(granularity)
     << ";seed=" << seed << ";calibration=" << calibration.size();
  return os.str();
}

GroupIndex GroupIndex::build(const ModelConfig& cfg, GroupKind kind) {
  cfg.validate();
  GroupIndex gi;
  gi.kind = kind;
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    if (kind == GroupKind::MlpChannel) {
      for (int c = 0; c < cfg.d_ff; ++c) {
        const auto uc = static_cast<std::size_t>(c);
        gi.groups.push_back({p + "mlp.channel." + std::to_string(c), l,
                             {{p + "mlp.w_up", Slice::Axis::Row, uc, uc + 1},
                              {p + "mlp.w_down", Slice::Axis::Col, uc, uc + 1}}});
      }
    } else {
      const auto dh = static_cast<std::size_t>(cfg.d_model / cfg.n_heads);
      for (int h = 0; h < cfg.n_heads; ++h) {
        const std::size_t b = static_cast<std::size_t>(h) * dh, e = b + dh;
        gi.groups.push_back({p + "attn.head." + std::to_string(h), l,
                             {{p + "attn.wq", Slice::Axis::Row, b, e},
                              {p + "attn.wk", Slice::Axis::Row, b, e},
                              {p + "attn.wv", Slice::Axis::Row, b, e},
                              {p + "attn.wo", Slice::Axis::Col, b, e}}});
      }
    }
  }
  return gi;
}

int GroupIndex::n_layers() const {
  int n = 0;
  for (const auto& g : groups) n = std::max(n, g.layer + 1);
  return n;
}

std::vector<double> importance_scores(const Checkpoint& ckpt, const ModelConfig& cfg,
                                      const PruneSpec& spec, const GroupIndex& groups) {
  spec.validate();
  check_architecture(ckpt, cfg);
  std::vector<double> scores(groups.groups.size(), 0.0);
  if (spec.strategy == PruneStrategy::Random) {
    SeededRng rng(derive_seed(spec.seed, "prune-random"));
    for (double& s : scores) s = rng.uniform();
    return scores;
  }
  TensorMap<float> grads;
  if (spec.strategy == PruneStrategy::Taylor) {
    grads = backward(ckpt, cfg, spec.calibration, ParamSelector::All).grads;
  }
  for (std::size_t i = 0; i < groups.groups.size(); ++i) {
    double acc = 0.0;
    for (const auto& sl : groups.groups[i].slices) {
      const Tensor& w = ckpt.at(sl.tensor);
      const auto wd = w.data();
      if (spec.strategy == PruneStrategy::Taylor) {
        const auto gd = grads.at(sl.tensor).data();
        for_each_element(sl, w.shape(), [&](std::size_t k) {
          acc += std::abs(static_cast<double>(gd[k]) * static_cast<double>(wd[k]));
        });
      } else if (spec.strategy == PruneStrategy::L1) {
        for_each_element(sl, w.shape(), [&](std::size_t k) { acc += std::abs(static_cast<double>(wd[k])); });
      } else {
        for_each_element(sl, w.shape(), [&](std::size_t k) {
          acc += static_cast<double>(wd[k]) * static_cast<double>(wd[k]);
        });
      }
    }
    scores[i] = spec.strategy == PruneStrategy::L2 ? std::sqrt(acc) : acc;
  }
  return scores;
}

std::vector<std::size_t> lowest_groups(const std::vector<double>& scores, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ArgumentError("prune: ratio must be in [0, 1)");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  order.resize(static_cast<std::size_t>(std::floor(ratio * static_cast<double>(scores.size()))));
  return order;
}

PruneResult prune_detailed(const Checkpoint& ckpt, const ModelConfig& cfg, const PruneSpec& spec) {
  const GroupIndex groups = GroupIndex::build(cfg, spec.granularity);
  const auto scores = importance_scores(ckpt, cfg, spec, groups);
  PruneResult r;
  r.pruned = lowest_groups(scores, spec.ratio);

  std::vector<std::size_t> alive(static_cast<std::size_t>(groups.n_layers()), 0);
  for (const auto& g : groups.groups) ++alive[static_cast<std::size_t>(g.layer)];
  for (std::size_t i : r.pruned) {
    const auto& g = groups.groups[i];
    if (--alive[static_cast<std::size_t>(g.layer)] == 0) {
      throw ArgumentError("prune: ratio " + std::to_string(spec.ratio) + " would remove every " +
                          to_string(spec.granularity) + " group of layer " + std::to_string(g.layer));
    }
  }

  r.ckpt = ckpt;
  for (std::size_t i : r.pruned) {
    for (const auto& sl : groups.groups[i].slices) {
      Tensor& w = r.ckpt.tensors.at(sl.tensor);
      auto wd = w.data();
      for_each_element(sl, w.shape(), [&](std::size_t k) { wd[k] = 0.0f; });
    }
  }
  if (!r.pruned.empty()) {
    append_lineage(r.ckpt.metadata, "prune(" + spec.echo() + ", groups=" + std::to_string(r.pruned.size()) + ")");
  }
  return r;
}

Checkpoint prune(const Checkpoint& ckpt, const ModelConfig& cfg, const PruneSpec& spec) {
  return prune_detailed(ckpt, cfg, spec).ckpt;
}

}  // namespace fplab
