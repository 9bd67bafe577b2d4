// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "fplab/errors.hpp"
#include "fplab/pipeline.hpp"

namespace fplab {

namespace {

class Reader {
 public:
  Reader(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {}

  // Every key present in the map must be one of `allowed`.
  void only(std::initializer_list<std::string_view> allowed) const {
    if (!node_.IsMap()) throw ConfigError(where() + ": expected a mapping");
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
        std::string list;
        for (auto a : allowed) list += (list.empty() ? "" : ", ") + std::string(a);
        throw ConfigError(where() + ": unknown key '" + key + "' (allowed: " + list + ")");
      }
    }
  }

  bool has(const std::string& key) const { return node_.IsMap() && node_[key].IsDefined() && !node_[key].IsNull(); }

  template <typename T>
  T get(const std::string& key, T fallback) const {
    if (!has(key)) return fallback;
    return as<T>(key);
  }

  template <typename T>
  T need(const std::string& key) const {
    if (!has(key)) throw ConfigError(where() + ": missing required key '" + key + "'");
    return as<T>(key);
  }

  Reader child(const std::string& key) const {
    return Reader(node_[key], path_.empty() ? key : path_ + "." + key);
  }

  std::vector<Reader> items(const std::string& key) const {
    std::vector<Reader> out;
    if (!has(key)) return out;
    const YAML::Node seq = node_[key];
    if (!seq.IsSequence()) throw ConfigError(child(key).where() + ": expected a list");
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out.emplace_back(seq[i], (path_.empty() ? key : path_ + "." + key) + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  template <typename T>
  std::vector<T> list(const std::string& key, std::vector<T> fallback) const {
    if (!has(key)) return fallback;
    std::vector<T> out;
    for (const auto& r : items(key)) out.push_back(r.scalar<T>());
    return out;
  }

  template <typename T>
  T scalar() const {
    try {
      return node_.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(where() + ": cannot read value '" + YAML::Dump(node_) + "'");
    }
  }

  std::string where() const {
    std::string w = path_.empty() ? "<root>" : path_;
    const auto m = node_.Mark();
    if (m.line >= 0) w += " (line " + std::to_string(m.line + 1) + ")";
    return w;
  }

 private:
  template <typename T>
  T as(const std::string& key) const {
    try {
      return node_[key].as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(child(key).where() + ": cannot read value '" + YAML::Dump(node_[key]) + "'");
    }
  }

  YAML::Node node_;
  std::string path_;
};

TrainConfig read_train(const Reader& r, TrainConfig t) {
  r.only({"base_lr", "warmup_ratio", "epochs", "batch_size", "beta1", "beta2", "eps", "seed", "loss_target"});
  t.base_lr = r.get("base_lr", t.base_lr);
  t.warmup_ratio = r.get("warmup_ratio", t.warmup_ratio);
  t.epochs = r.get("epochs", t.epochs);
  t.batch_size = r.get("batch_size", t.batch_size);
  t.adam.beta1 = r.get("beta1", t.adam.beta1);
  t.adam.beta2 = r.get("beta2", t.adam.beta2);
  t.adam.eps = r.get("eps", t.adam.eps);
  t.seed = r.get<std::uint64_t>("seed", t.seed);
  t.loss_target = r.get("loss_target", t.loss_target);
  try {
    t.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(r.where() + ": " + e.what());
  }
  return t;
}

LoraConfig read_lora(const Reader& r, LoraConfig l) {
  r.only({"rank", "alpha", "targets", "init_std", "seed"});
  l.rank = r.get("rank", l.rank);
  l.alpha = r.get("alpha", l.alpha);
  l.targets = r.list<std::string>("targets", l.targets);
  l.init_std = r.get("init_std", l.init_std);
  l.seed = r.get<std::uint64_t>("seed", l.seed);
  try {
    l.validate();
  } catch (const ArgumentError& e) {
    throw ConfigError(r.where() + ": " + e.what());
  }
  return l;
}

ModelConfig read_model(const Reader& r, ModelConfig m) {
  r.only({"vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "max_seq_len"});
  m.vocab_size = r.get("vocab_size", m.vocab_size);
  m.d_model = r.get("d_model", m.d_model);
  m.n_layers = r.get("n_layers", m.n_layers);
  m.n_heads = r.get("n_heads", m.n_heads);
  m.d_ff = r.get("d_ff", m.d_ff);
  m.max_seq_len = r.get("max_seq_len", m.max_seq_len);
  return m;
}

template <typename F>
auto rethrow_as_config(const Reader& r, F&& f) {
  try {
    return f();
  } catch (const ArgumentError& e) {
    throw ConfigError(r.where() + ": " + e.what());
  }
}

}  // namespace

const FamilyConfig& PipelineConfig::family(std::string_view id) const {
  for (const auto& f : families) {
    if (f.id == id) return f;
  }
  throw ConfigError("unknown family id '" + std::string(id) + "'");
}

const DownstreamConfig& PipelineConfig::downstream(std::string_view id) const {
  for (const auto& d : downstreams) {
    if (d.id == id) return d;
  }
  throw ConfigError("unknown downstream id '" + std::string(id) + "'");
}

void PipelineConfig::validate() const {
  auto unique = [](const auto& items, const char* what) {
    std::set<std::string> seen;
    for (const auto& it : items) {
      if (it.id.empty()) throw ConfigError(std::string(what) + ": every entry needs an id");
      if (!seen.insert(it.id).second) throw ConfigError(std::string(what) + ": duplicate id '" + it.id + "'");
    }
  };
  if (families.empty()) throw ConfigError("families: at least one model family is required");
  unique(families, "families");
  unique(downstreams, "downstreams");
  unique(fingerprints, "fingerprints");
  for (const auto& f : families) {
    try {
      f.model.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError("families." + f.id + ".model: " + e.what());
    }
  }
  for (const auto& d : downstreams) {
    family(d.family);
    if (!is_known_task(d.task)) throw ConfigError("downstreams." + d.id + ": unknown task '" + d.task + "'");
    if (d.train_samples == 0 || d.benchmark_samples == 0) {
      throw ConfigError("downstreams." + d.id + ": train_samples and benchmark_samples must be positive");
    }
    if (d.replay_docs > family(d.family).corpus_docs) {
      throw ConfigError("downstreams." + d.id + ": replay_docs exceeds the family corpus size");
    }
  }
  if (fingerprints.empty()) throw ConfigError("fingerprints: at least one fingerprint spec is required");
  for (const auto& fp : fingerprints) {
    if (fp.regular_pool == 0) throw ConfigError("fingerprints." + fp.id + ": regular_pool must be positive");
    if (fp.regular != "pretrain" && fp.regular != "qa") {
      throw ConfigError("fingerprints." + fp.id + ": regular must be 'pretrain' or 'qa'");
    }
    if (fp.mix_ratio < 0.0) throw ConfigError("fingerprints." + fp.id + ": mix_ratio must be >= 0");
    try {
      fp.spec.validate();
    } catch (const ArgumentError& e) {
      throw ConfigError("fingerprints." + fp.id + ": " + e.what());
    }
  }
  if (target_downstream.empty()) throw ConfigError("target_downstream: required");
  downstream(target_downstream);
  const std::set<std::string> known_arms = {std::string(kArmLoraDirect), std::string(kArmLoraTransfer),
                                            std::string(kArmFullDirect)};
  for (const auto& a : arms) {
    if (!known_arms.count(a)) throw ConfigError("arms: unknown arm '" + a + "'");
  }
  if (std::find(arms.begin(), arms.end(), kArmLoraDirect) == arms.end() ||
      std::find(arms.begin(), arms.end(), kArmLoraTransfer) == arms.end()) {
    throw ConfigError("arms: must include both lora-direct and lora-transfer");
  }
  for (const auto& a : attacks.arms) {
    if (std::find(arms.begin(), arms.end(), a) == arms.end()) {
      throw ConfigError("attacks.arms: arm '" + a + "' is not enabled in arms");
    }
  }
  if (attacks.finetune) {
    for (const auto& d : attacks.finetune->datasets) {
      try {
        find_benign_dataset(d);
      } catch (const ArgumentError& e) {
        throw ConfigError(std::string("attacks.finetune.datasets: ") + e.what());
      }
    }
  }
  if (attacks.merge) {
    const auto& m = *attacks.merge;
    if (m.partner.empty()) throw ConfigError("attacks.merge.partner: required");
    const auto& partner = downstream(m.partner);
    if (partner.family != downstream(target_downstream).family) {
      throw ConfigError("attacks.merge.partner: '" + m.partner + "' belongs to another family");
    }
    for (double a : m.alphas) {
      if (!(a > 0.0 && a < 1.0)) throw ConfigError("attacks.merge.alphas: each alpha1 must lie in (0, 1)");
    }
  }
}

PipelineConfig parse_pipeline_config(std::string_view yaml_text, std::string_view source) {
  YAML::Node root;
  try {
    root = YAML::Load(std::string(yaml_text));
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string(source) + ": " + e.what());
  }
  if (!root.IsMap()) throw ConfigError(std::string(source) + ": top level must be a mapping");
  const Reader r(root, "");
  r.only({"seed", "out_dir", "families", "downstreams", "fingerprints", "lora", "inject", "full_inject",
          "target_downstream", "arms", "stacking", "homology_check", "attacks"});

  PipelineConfig cfg;
  cfg.source_text = std::string(yaml_text);
  cfg.seed = r.get<std::uint64_t>("seed", 0);
  cfg.out_dir = r.get<std::string>("out_dir", cfg.out_dir.string());

  for (const auto& fr : r.items("families")) {
    fr.only({"id", "family_seed", "corpus_seed", "corpus_docs", "corpus_qa", "model", "pretrain"});
    FamilyConfig f;
    f.id = fr.need<std::string>("id");
    f.model = fr.has("model") ? read_model(fr.child("model"), f.model) : f.model;
    f.model.family_seed = fr.get<std::uint64_t>("family_seed", 0);
    f.corpus_seed = fr.get<std::uint64_t>("corpus_seed", f.model.family_seed);
    f.corpus_docs = fr.get<std::size_t>("corpus_docs", f.corpus_docs);
    f.corpus_qa = fr.get<std::size_t>("corpus_qa", f.corpus_qa);
    if (fr.has("pretrain")) f.pretrain = read_train(fr.child("pretrain"), f.pretrain);
    cfg.families.push_back(std::move(f));
  }
  for (const auto& dr : r.items("downstreams")) {
    dr.only({"id", "family", "task", "corpus_seed", "train_samples", "benchmark_samples", "replay_docs", "train"});
    DownstreamConfig d;
    d.id = dr.need<std::string>("id");
    d.family = dr.need<std::string>("family");
    d.task = dr.need<std::string>("task");
    d.corpus_seed = dr.get<std::uint64_t>("corpus_seed", 0);
    d.train_samples = dr.get<std::size_t>("train_samples", d.train_samples);
    d.benchmark_samples = dr.get<std::size_t>("benchmark_samples", d.benchmark_samples);
    d.replay_docs = dr.get<std::size_t>("replay_docs", d.replay_docs);
    if (dr.has("train")) d.train = read_train(dr.child("train"), d.train);
    cfg.downstreams.push_back(std::move(d));
  }
  for (const auto& fr : r.items("fingerprints")) {
    fr.only({"id", "style", "n_triggers", "target", "target_len", "if_phrase", "if_template", "utf_pool_k",
             "utf_trigger_len", "seed", "mix_ratio", "regular", "regular_pool"});
    FingerprintConfig f;
    f.id = fr.need<std::string>("id");
    f.spec.style = rethrow_as_config(fr, [&] { return parse_style(fr.need<std::string>("style")); });
    f.spec.n_triggers = fr.get("n_triggers", f.spec.n_triggers);
    f.spec.target = fr.get<std::string>("target", f.spec.target);
    f.spec.target_len = fr.get("target_len", f.spec.target_len);
    f.spec.if_phrase = fr.get<std::string>("if_phrase", f.spec.if_phrase);
    f.spec.if_template = fr.get<std::string>("if_template", f.spec.if_template);
    f.spec.utf_pool_k = fr.get("utf_pool_k", f.spec.utf_pool_k);
    f.spec.utf_trigger_len = fr.get("utf_trigger_len", f.spec.utf_trigger_len);
    f.spec.seed = fr.get<std::uint64_t>("seed", 0);
    f.mix_ratio = fr.get("mix_ratio", f.mix_ratio);
    f.regular = fr.get<std::string>("regular", f.regular);
    f.regular_pool = fr.get<std::size_t>("regular_pool", f.regular_pool);
    cfg.fingerprints.push_back(std::move(f));
  }
  if (r.has("lora")) cfg.lora = read_lora(r.child("lora"), cfg.lora);
  if (r.has("inject")) cfg.inject = read_train(r.child("inject"), cfg.inject);
  cfg.full_inject = cfg.inject;
  cfg.full_inject.base_lr = cfg.inject.base_lr / 10.0;
  if (r.has("full_inject")) cfg.full_inject = read_train(r.child("full_inject"), cfg.full_inject);
  cfg.target_downstream = r.get<std::string>("target_downstream", "");
  cfg.arms = r.list<std::string>("arms", {std::string(kArmLoraDirect), std::string(kArmLoraTransfer)});
  cfg.stacking = r.get("stacking", cfg.stacking);
  cfg.homology_check = r.get("homology_check", cfg.homology_check);

  if (r.has("attacks")) {
    const Reader ar = r.child("attacks");
    ar.only({"arms", "finetune", "prune", "merge"});
    cfg.attacks.arms = ar.list<std::string>("arms", {std::string(kArmLoraDirect), std::string(kArmLoraTransfer)});
    if (ar.has("finetune")) {
      const Reader fr = ar.child("finetune");
      fr.only({"datasets", "epochs", "adapter", "train", "lora"});
      FinetuneMatrix m;
      std::vector<std::string> all;
      for (const auto& d : benign_datasets()) all.push_back(d.id);
      m.datasets = fr.list<std::string>("datasets", all);
      m.epochs = fr.get("epochs", m.epochs);
      m.adapter = fr.get("adapter", m.adapter);
      m.train = cfg.inject;
      if (fr.has("train")) m.train = read_train(fr.child("train"), m.train);
      m.lora = cfg.lora;
      if (fr.has("lora")) m.lora = read_lora(fr.child("lora"), m.lora);
      if (m.epochs < 0) throw ConfigError(fr.where() + ": epochs must be >= 0");
      cfg.attacks.finetune = std::move(m);
    }
    if (ar.has("prune")) {
      const Reader pr = ar.child("prune");
      pr.only({"strategies", "granularity", "calibration_sequences"});
      PruneMatrix m;
      m.granularity = rethrow_as_config(pr, [&] {
        return parse_group_kind(pr.get<std::string>("granularity", "mlp-channel"));
      });
      m.calibration_sequences = pr.get<std::size_t>("calibration_sequences", m.calibration_sequences);
      if (pr.has("strategies")) {
        for (const auto& er : pr.items("strategies")) {
          er.only({"strategy", "ratio"});
          PruneEntry e;
          e.strategy = rethrow_as_config(er, [&] { return parse_strategy(er.need<std::string>("strategy")); });
          e.ratio = er.get("ratio", default_prune_ratio(e.strategy));
          if (!(e.ratio >= 0.0 && e.ratio < 1.0)) throw ConfigError(er.where() + ": ratio must be in [0, 1)");
          m.entries.push_back(e);
        }
      } else {
        for (auto s : {PruneStrategy::Random, PruneStrategy::L1, PruneStrategy::L2, PruneStrategy::Taylor}) {
          m.entries.push_back({s, default_prune_ratio(s)});
        }
      }
      cfg.attacks.prune = std::move(m);
    }
    if (ar.has("merge")) {
      const Reader mr = ar.child("merge");
      mr.only({"methods", "alphas", "drop_p", "density", "partner"});
      MergeMatrix m;
      for (const auto& name : mr.list<std::string>("methods", {"task", "dare-task", "ties", "dare-ties"})) {
        m.methods.push_back(rethrow_as_config(mr, [&] { return parse_merge_method(name); }));
      }
      m.alphas = mr.list<double>("alphas", {0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1});
      m.drop_p = mr.get("drop_p", m.drop_p);
      m.density = mr.get("density", m.density);
      m.partner = mr.get<std::string>("partner", "");
      if (!(m.drop_p >= 0.0 && m.drop_p < 1.0)) throw ConfigError(mr.where() + ": drop_p must be in [0, 1)");
      if (!(m.density > 0.0 && m.density <= 1.0)) throw ConfigError(mr.where() + ": density must be in (0, 1]");
      cfg.attacks.merge = std::move(m);
    }
  }
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return parse_pipeline_config(buf.str(), path.string());
}

}  // namespace fplab
