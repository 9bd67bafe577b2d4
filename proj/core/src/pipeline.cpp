// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <exception>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fplab/checkpoint.hpp"
#include "fplab/corpus.hpp"
#include "fplab/errors.hpp"
#include "fplab/hash.hpp"
#include "fplab/rng.hpp"

namespace fplab {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------- manifest

std::string RunManifest::to_json() const {
  json j;
  j["version"] = version;
  j["complete"] = complete;
  j["failed_stage"] = failed_stage;
  j["error"] = error;
  j["config_echo"] = config_echo;
  j["seed"] = seed;
  j["content_hashes"] = content_hashes;
  j["report_files"] = report_files;
  j["digest"] = digest();
  json st = json::array();
  for (const auto& s : stages) st.push_back({{"name", s.name}, {"wall_seconds", s.wall_seconds}, {"cached", s.cached}});
  j["stages"] = st;
  json ar = json::array();
  for (const auto& a : arms) {
    ar.push_back({{"arm", a.arm},
                  {"fingerprint", a.fingerprint},
                  {"trained_parameters", a.trained_parameters},
                  {"wall_seconds", a.wall_seconds},
                  {"optimizer", a.optimizer},
                  {"batch_size", a.batch_size},
                  {"epochs", a.epochs},
                  {"base_lr", a.base_lr},
                  {"rank", a.rank},
                  {"alpha", a.alpha},
                  {"scale", a.scale}});
  }
  j["arms"] = ar;
  j["total_wall_seconds"] = total_wall_seconds;
  return j.dump(2) + "\n";
}

RunManifest RunManifest::from_json(std::string_view text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.version = j.at("version").get<std::string>();
    m.complete = j.at("complete").get<bool>();
    m.failed_stage = j.value("failed_stage", "");
    m.error = j.value("error", "");
    m.config_echo = j.value("config_echo", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.content_hashes = j.at("content_hashes").get<std::map<std::string, std::string>>();
    m.report_files = j.value("report_files", std::map<std::string, std::string>{});
    for (const auto& s : j.value("stages", json::array())) {
      m.stages.push_back({s.at("name"), s.at("wall_seconds"), s.at("cached")});
    }
    for (const auto& a : j.value("arms", json::array())) {
      ArmRecord r;
      r.arm = a.at("arm");
      r.fingerprint = a.at("fingerprint");
      r.trained_parameters = a.at("trained_parameters");
      r.wall_seconds = a.at("wall_seconds");
      r.optimizer = a.at("optimizer");
      r.batch_size = a.at("batch_size");
      r.epochs = a.at("epochs");
      r.base_lr = a.at("base_lr");
      r.rank = a.at("rank");
      r.alpha = a.at("alpha");
      r.scale = a.at("scale");
      m.arms.push_back(r);
    }
    m.total_wall_seconds = j.value("total_wall_seconds", 0.0);
  } catch (const json::exception& e) {
    throw FormatError(std::string("manifest: ") + e.what());
  }
  return m;
}

std::string RunManifest::digest() const {
  std::string all;
  for (const auto& [k, v] : content_hashes) all += k + "=" + v + "\n";
  return sha256_hex(all);
}

// ---------------------------------------------------------------- planning

namespace {

std::string short_arm(std::string_view arm) {
  if (arm == kArmLoraDirect) return "direct";
  if (arm == kArmLoraTransfer) return "transfer";
  return "full";
}

const FingerprintConfig* first_of_style(const PipelineConfig& cfg, FingerprintStyle s) {
  for (const auto& f : cfg.fingerprints) {
    if (f.spec.style == s) return &f;
  }
  return nullptr;
}

bool can_stack(const PipelineConfig& cfg) {
  return cfg.stacking && first_of_style(cfg, FingerprintStyle::If) && first_of_style(cfg, FingerprintStyle::Utf);
}

}  // namespace

std::vector<std::string> plan_stages(const PipelineConfig& cfg) {
  std::vector<std::string> out{"gen-data"};
  for (const auto& f : cfg.families) out.push_back("pretrain:" + f.id);
  for (const auto& d : cfg.downstreams) out.push_back("derive:" + d.id);
  for (const auto& fp : cfg.fingerprints) {
    out.push_back("inject:" + fp.id + ":base");
    for (const auto& a : cfg.arms) out.push_back("arm:" + fp.id + ":" + a);
  }
  out.insert(out.end(), {"eval:baseline", "eval:effectiveness", "eval:harmlessness"});
  if (can_stack(cfg)) out.push_back("stacking");
  if (cfg.homology_check) out.push_back("homology");
  if (cfg.attacks.finetune) out.push_back("attack:finetune");
  if (cfg.attacks.prune) out.push_back("attack:prune");
  if (cfg.attacks.merge) out.push_back("attack:merge");
  out.push_back("report");
  return out;
}

// ---------------------------------------------------------------- building blocks

std::vector<Sample> FamilyCorpus::all() const {
  std::vector<Sample> out = docs;
  out.insert(out.end(), qa.begin(), qa.end());
  return out;
}

FamilyCorpus family_corpus(const FamilyConfig& f) {
  return {pretraining_corpus(f.corpus_seed, f.corpus_docs), regular_qa_corpus(derive_seed(f.corpus_seed, "qa"), f.corpus_qa)};
}

std::vector<Sample> derivation_corpus(const DownstreamConfig& d, const FamilyCorpus& fam) {
  std::vector<Sample> out = task_corpus(d.task, d.corpus_seed, d.train_samples);
  const std::size_t n = std::min(d.replay_docs, fam.docs.size());
  out.insert(out.end(), fam.docs.begin(), fam.docs.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

std::vector<Sample> downstream_benchmark(const DownstreamConfig& d) {
  return task_corpus(d.task, derive_seed(d.corpus_seed, "bench"), d.benchmark_samples);
}

std::uint64_t stage_seed(const PipelineConfig& cfg, std::string_view stream, std::uint64_t local) {
  return derive_seed(derive_seed(cfg.seed, stream), local);
}

FingerprintDataset fingerprint_dataset(const PipelineConfig& cfg, const FingerprintConfig& fp,
                                       const FamilyCorpus& fam) {
  const auto& source = fp.regular == "qa" ? fam.qa : fam.docs;
  const std::size_t n = std::min(fp.regular_pool, source.size());
  const std::vector<Sample> regular(source.begin(), source.begin() + static_cast<std::ptrdiff_t>(n));
  FingerprintSpec spec = fp.spec;
  spec.seed = stage_seed(cfg, "fingerprint:" + fp.id, fp.spec.seed);
  return gen_fingerprint_dataset(spec, regular, fp.mix_ratio, fam.all());
}

namespace {

TrainConfig pretrain_config(const PipelineConfig& cfg, const FamilyConfig& f) {
  TrainConfig t = f.pretrain;
  t.seed = stage_seed(cfg, "pretrain:" + f.id, f.pretrain.seed);
  return t;
}

TrainConfig derive_config(const PipelineConfig& cfg, const DownstreamConfig& d) {
  TrainConfig t = d.train;
  t.seed = stage_seed(cfg, "derive:" + d.id, d.train.seed);
  return t;
}

LoraConfig inject_lora_config(const PipelineConfig& cfg, const std::string& name) {
  LoraConfig l = cfg.lora;
  l.seed = stage_seed(cfg, "lora:" + name, cfg.lora.seed);
  return l;
}

TrainConfig inject_train_config(const PipelineConfig& cfg, const std::string& name) {
  TrainConfig t = cfg.inject;
  t.seed = stage_seed(cfg, "inject:" + name, cfg.inject.seed);
  return t;
}

TrainConfig full_train_config(const PipelineConfig& cfg, const std::string& fingerprint_id) {
  TrainConfig t = cfg.full_inject;
  t.seed = stage_seed(cfg, "inject-full:" + fingerprint_id, cfg.full_inject.seed);
  return t;
}

}  // namespace

TrainResult pretrain_family(const PipelineConfig& cfg, const FamilyConfig& f, const FamilyCorpus& fam) {
  SeededRng rng(derive_seed(f.model.family_seed, "init"));
  const Checkpoint init = init_model(f.model, rng);
  return train(init, f.model, pretrain_config(cfg, f), encode_samples(fam.all()));
}

TrainResult derive_downstream(const PipelineConfig& cfg, const DownstreamConfig& d, const Checkpoint& base,
                              const FamilyCorpus& fam) {
  const ModelConfig& mc = cfg.family(d.family).model;
  return train(base, mc, derive_config(cfg, d), encode_samples(derivation_corpus(d, fam)));
}

LoraInjection inject_fingerprint_lora(const PipelineConfig& cfg, const std::string& name, const Checkpoint& host,
                                      const FingerprintDataset& data) {
  return inject_lora(host, config_of(host), inject_lora_config(cfg, name), inject_train_config(cfg, name),
                     data.encoded());
}

TrainResult inject_fingerprint_full(const PipelineConfig& cfg, const std::string& fingerprint_id,
                                    const Checkpoint& host, const FingerprintDataset& data) {
  return inject_full(host, config_of(host), full_train_config(cfg, fingerprint_id), data.encoded());
}

// ---------------------------------------------------------------- running

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

json echo_json(const TrainConfig& t) {
  return {{"base_lr", t.base_lr}, {"warmup_ratio", t.warmup_ratio}, {"epochs", t.epochs},
          {"batch_size", t.batch_size}, {"beta1", t.adam.beta1}, {"beta2", t.adam.beta2},
          {"eps", t.adam.eps}, {"seed", t.seed}, {"selector", to_string(t.selector)}};
}

json echo_json(const LoraConfig& l) {
  return {{"rank", l.rank}, {"alpha", l.alpha}, {"targets", l.targets}, {"init_std", l.init_std}, {"seed", l.seed}};
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read '" + p.string() + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

void write_text(const fs::path& p, std::string_view text) {
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
  f << text;
  if (!f) throw IoError("write to '" + p.string() + "' failed");
}

struct Family {
  const FamilyConfig* cfg = nullptr;
  FamilyCorpus corpus;
  Checkpoint base;
};

struct Downstream {
  const DownstreamConfig* cfg = nullptr;
  std::vector<Sample> bench;
  Checkpoint model;
};

struct Fingerprint {
  const FingerprintConfig* cfg = nullptr;
  FingerprintDataset data;
  std::vector<Sample> triggers;
  LoraAdapter base_adapter;
  LoraAdapter direct_adapter;
  std::map<std::string, Checkpoint> arms;  // arm name -> model
};

class Runner {
 public:
  Runner(const PipelineConfig& cfg, const PipelineOptions& opts)
      : cfg_(cfg), opts_(opts), art_(cfg.out_dir / "artifacts"), rep_(cfg.out_dir / "reports") {
    man_.config_echo = cfg.source_text;
    man_.seed = cfg.seed;
  }

  PipelineResult run() {
    const auto t0 = Clock::now();
    try {
      fs::create_directories(art_);
      fs::create_directories(rep_);
    } catch (const fs::filesystem_error& e) {
      throw IoError(std::string("cannot create output directories: ") + e.what());
    }
    stage("gen-data", [&] { gen_data(); return false; });
    for (const auto& f : cfg_.families) {
      stage("pretrain:" + f.id, [&] { return pretrain(families_.at(f.id)); });
    }
    for (const auto& d : cfg_.downstreams) {
      stage("derive:" + d.id, [&] { return derive(downstreams_.at(d.id)); });
    }
    for (auto& fp : fingerprints_) {
      stage("inject:" + fp.cfg->id + ":base", [&] { return inject_base(fp); });
      for (const auto& arm : cfg_.arms) {
        stage("arm:" + fp.cfg->id + ":" + arm, [&] { return build_arm(fp, arm); });
      }
    }
    stage("eval:baseline", [&] { eval_baseline(); return false; });
    stage("eval:effectiveness", [&] { eval_effectiveness(); return false; });
    stage("eval:harmlessness", [&] { eval_harmlessness_all(); return false; });
    if (can_stack(cfg_)) stage("stacking", [&] { eval_stacking(); return false; });
    if (cfg_.homology_check) stage("homology", [&] { check_homology(); return false; });
    if (cfg_.attacks.finetune) stage("attack:finetune", [&] { attack_finetune(); return false; });
    if (cfg_.attacks.prune) stage("attack:prune", [&] { attack_prune(); return false; });
    if (cfg_.attacks.merge) stage("attack:merge", [&] { attack_merge(); return false; });
    stage("report", [&] { emit(); return false; });
    man_.complete = true;
    man_.total_wall_seconds = seconds_since(t0);
    write_manifest();
    result_.manifest = man_;
    return std::move(result_);
  }

 private:
  // ---- plumbing

  void log(const std::string& s) const {
    if (opts_.log) opts_.log(s);
  }

  template <typename F>
  void stage(const std::string& name, F&& body) {
    log("[stage] " + name);
    const auto t0 = Clock::now();
    bool cached = false;
    try {
      cached = body();
    } catch (const std::exception& e) {
      man_.complete = false;
      man_.failed_stage = name;
      man_.error = e.what();
      man_.stages.push_back({name, seconds_since(t0), false});
      try {
        write_manifest();
      } catch (...) {
        // The original failure is the one worth reporting.
      }
      std::throw_with_nested(PipelineError(name, e.what()));
    }
    man_.stages.push_back({name, seconds_since(t0), cached});
  }

  void write_manifest() const { write_text(cfg_.out_dir / "manifest.json", man_.to_json()); }

  std::uint64_t seed_for(const std::string& stream) const { return stage_seed(cfg_, stream); }

  // Loads <name>.ckpt when its key file matches, otherwise produces and
  // stores it. The key file holds the key and the producing wall-time.
  template <typename F>
  Checkpoint cached(const std::string& name, const std::string& key, double& wall, bool& hit, F&& produce) {
    const fs::path ck = art_ / (name + ".ckpt");
    const fs::path kf = art_ / (name + ".key");
    if (opts_.resume && fs::exists(ck) && fs::exists(kf)) {
      std::istringstream in(read_text(kf));
      std::string stored;
      double stored_wall = 0.0;
      in >> stored >> stored_wall;
      if (stored == key) {
        hit = true;
        wall = stored_wall;
        return read_checkpoint(ck);
      }
    }
    const auto t0 = Clock::now();
    Checkpoint c = produce();
    wall = seconds_since(t0);
    write_checkpoint(c, ck);
    std::ostringstream k;
    k.precision(6);
    k << key << '\n' << std::fixed << wall << '\n';
    write_text(kf, k.str());
    hit = false;
    return c;
  }

  std::string record(const std::string& name, const Checkpoint& c) {
    auto h = content_hash(c);
    man_.content_hashes[name] = h;
    return h;
  }

  // ---- stages

  void gen_data() {
    for (const auto& f : cfg_.families) {
      Family fam;
      fam.cfg = &f;
      fam.corpus = family_corpus(f);
      man_.content_hashes["corpus/" + f.id] = corpus_hash(fam.corpus.all());
      families_.emplace(f.id, std::move(fam));
    }
    for (const auto& d : cfg_.downstreams) {
      Downstream ds;
      ds.cfg = &d;
      ds.bench = downstream_benchmark(d);
      man_.content_hashes["corpus/" + d.id] = corpus_hash(derivation_corpus(d, families_.at(d.family).corpus));
      man_.content_hashes["corpus/" + d.id + "-bench"] = corpus_hash(ds.bench);
      downstreams_.emplace(d.id, std::move(ds));
    }
    const Family& fam = families_.at(target().cfg->family);
    for (const auto& fc : cfg_.fingerprints) {
      Fingerprint fp;
      fp.cfg = &fc;
      fp.data = fingerprint_dataset(cfg_, fc, fam.corpus);
      fp.triggers = fp.data.triggers();
      const std::string text = dataset_to_jsonl(fp.data);
      write_text(art_ / ("dataset-" + fc.id + ".jsonl"), text);
      man_.content_hashes["dataset/" + fc.id] = sha256_hex(text);
      fingerprints_.push_back(std::move(fp));
    }
  }

  bool pretrain(Family& fam) {
    const auto& f = *fam.cfg;
    const std::string key = sha256_hex(json{{"stage", "pretrain"},
                                            {"model", json::parse(f.model.to_json())},
                                            {"corpus", man_.content_hashes.at("corpus/" + f.id)},
                                            {"train", echo_json(pretrain_config(cfg_, f))}}
                                           .dump());
    double wall = 0.0;
    bool hit = false;
    fam.base = cached("base-" + f.id, key, wall, hit, [&] {
      auto r = pretrain_family(cfg_, f, fam.corpus);
      write_loss_csv(r.history, art_ / ("base-" + f.id + ".loss.csv"));
      return r.ckpt;
    });
    record("checkpoint/base-" + f.id, fam.base);
    return hit;
  }

  bool derive(Downstream& ds) {
    const auto& d = *ds.cfg;
    const Family& fam = families_.at(d.family);
    const std::string key = sha256_hex(json{{"stage", "derive"},
                                            {"base", man_.content_hashes.at("checkpoint/base-" + d.family)},
                                            {"corpus", man_.content_hashes.at("corpus/" + d.id)},
                                            {"train", echo_json(derive_config(cfg_, d))}}
                                           .dump());
    double wall = 0.0;
    bool hit = false;
    ds.model = cached("down-" + d.id, key, wall, hit, [&] {
      auto r = derive_downstream(cfg_, d, fam.base, fam.corpus);
      write_loss_csv(r.history, art_ / ("down-" + d.id + ".loss.csv"));
      return r.ckpt;
    });
    record("checkpoint/down-" + d.id, ds.model);
    return hit;
  }

  Downstream& target() { return downstreams_.at(cfg_.target_downstream); }
  Family& target_family() { return families_.at(target().cfg->family); }
  const ModelConfig& model_cfg() { return target_family().cfg->model; }

  LoraAdapter train_adapter(const std::string& name, const Checkpoint& host, const std::string& host_hash,
                            const Fingerprint& fp, ArmRecord& rec, bool& hit) {
    const LoraConfig l = inject_lora_config(cfg_, name);
    const TrainConfig t = inject_train_config(cfg_, name);
    const std::string key = sha256_hex(json{{"stage", "inject-lora"},
                                            {"host", host_hash},
                                            {"dataset", man_.content_hashes.at("dataset/" + fp.cfg->id)},
                                            {"lora", echo_json(l)},
                                            {"train", echo_json(t)}}
                                           .dump());
    double wall = 0.0;
    const Checkpoint c = cached("adapter-" + name, key, wall, hit, [&] {
      auto inj = inject_fingerprint_lora(cfg_, name, host, fp.data);
      write_loss_csv(inj.history, art_ / ("adapter-" + name + ".loss.csv"));
      return adapter_to_checkpoint(inj.adapter);
    });
    man_.content_hashes["adapter/" + name] = content_hash(c);
    LoraAdapter ad = adapter_from_checkpoint(c);
    rec.trained_parameters = ad.parameter_count();
    rec.wall_seconds = wall;
    rec.batch_size = t.batch_size;
    rec.epochs = t.epochs;
    rec.base_lr = t.base_lr;
    rec.rank = l.rank;
    rec.alpha = l.alpha;
    rec.scale = l.scale();
    return ad;
  }

  bool inject_base(Fingerprint& fp) {
    bool hit = false;
    Family& fam = target_family();
    fp.base_adapter = train_adapter(fp.cfg->id + "-base", fam.base,
                                    man_.content_hashes.at("checkpoint/base-" + fam.cfg->id), fp, base_rec_[fp.cfg->id], hit);
    return hit;
  }

  bool build_arm(Fingerprint& fp, const std::string& arm) {
    Downstream& ds = target();
    const std::string down_hash = man_.content_hashes.at("checkpoint/down-" + ds.cfg->id);
    ArmRecord rec;
    rec.arm = arm;
    rec.fingerprint = fp.cfg->id;
    bool hit = false;
    Checkpoint model;
    if (arm == kArmLoraTransfer) {
      const auto t0 = Clock::now();
      model = transfer(fp.base_adapter, ds.model);
      rec = base_rec_.at(fp.cfg->id);
      rec.arm = arm;
      rec.fingerprint = fp.cfg->id;
      rec.wall_seconds += seconds_since(t0);
    } else if (arm == kArmLoraDirect) {
      fp.direct_adapter = train_adapter(fp.cfg->id + "-direct", ds.model, down_hash, fp, rec, hit);
      rec.arm = arm;
      rec.fingerprint = fp.cfg->id;
      model = fuse(ds.model, fp.direct_adapter);
    } else {
      const TrainConfig t = full_train_config(cfg_, fp.cfg->id);
      const std::string key = sha256_hex(json{{"stage", "inject-full"},
                                              {"host", down_hash},
                                              {"dataset", man_.content_hashes.at("dataset/" + fp.cfg->id)},
                                              {"train", echo_json(t)}}
                                             .dump());
      double wall = 0.0;
      const std::string name = "arm-" + fp.cfg->id + "-" + arm;
      model = cached(name, key, wall, hit, [&] {
        auto r = inject_fingerprint_full(cfg_, fp.cfg->id, ds.model, fp.data);
        write_loss_csv(r.history, art_ / (name + ".loss.csv"));
        return r.ckpt;
      });
      for (const auto& [n, tensor] : model.tensors) rec.trained_parameters += tensor.numel();
      rec.wall_seconds = wall;
      rec.batch_size = t.batch_size;
      rec.epochs = t.epochs;
      rec.base_lr = t.base_lr;
    }
    record("checkpoint/arm-" + fp.cfg->id + "-" + arm, model);
    man_.arms.push_back(rec);
    fp.arms.emplace(arm, std::move(model));
    return hit;
  }

  EvalRow fsr_row(const std::string& model_id, const Fingerprint& fp, const std::string& arm, const FsrResult& r,
                  std::string row, std::string col, double wall) const {
    EvalRow e;
    e.model_id = model_id;
    e.fingerprint = fp.cfg->id;
    e.arm = arm;
    e.row_label = std::move(row);
    e.column_label = std::move(col);
    e.fsr = r.fsr;
    e.n = r.n;
    e.passes = r.passes;
    e.pass_bits = r.pass_bits();
    e.wall_seconds = wall;
    return e;
  }

  FsrResult timed_fsr(const Checkpoint& c, const Fingerprint& fp, double& wall) {
    const auto t0 = Clock::now();
    auto r = eval_fsr(c, model_cfg(), fp.triggers);
    wall = seconds_since(t0);
    return r;
  }

  void eval_baseline() {
    EvalReport rep{"baseline", "FSR without fingerprint", "model", ReportMetric::Fsr, {}, {}};
    Family& fam = target_family();
    Downstream& ds = target();
    for (const auto& [label, id, model] :
         {std::tuple{std::string("base"), "checkpoint/base-" + fam.cfg->id, &fam.base},
          std::tuple{std::string("downstream"), "checkpoint/down-" + ds.cfg->id, &ds.model}}) {
      for (const auto& fp : fingerprints_) {
        double wall = 0.0;
        auto r = timed_fsr(*model, fp, wall);
        rep.add(fsr_row(id, fp, "none", r, label, fp.cfg->id, wall));
      }
    }
    result_.reports.push_back(std::move(rep));
  }

  void eval_effectiveness() {
    EvalReport eff{"effectiveness", "Fingerprint effectiveness", "fingerprint", ReportMetric::Fsr,
                   {std::string(kArmLoraDirect), std::string(kArmLoraTransfer)}, {}};
    EvalReport full{"full_ft", "Full-parameter direct injection", "fingerprint", ReportMetric::Fsr, {}, {}};
    for (const auto& fp : fingerprints_) {
      for (const auto& arm : cfg_.arms) {
        double wall = 0.0;
        auto r = timed_fsr(fp.arms.at(arm), fp, wall);
        auto row = fsr_row("checkpoint/arm-" + fp.cfg->id + "-" + arm, fp, arm, r, fp.cfg->id, arm, wall);
        (arm == kArmFullDirect ? full : eff).add(std::move(row));
      }
    }
    result_.reports.push_back(std::move(eff));
    if (!full.rows.empty()) result_.reports.push_back(std::move(full));
  }

  void eval_harmlessness_all() {
    EvalReport rep{"harmlessness", "Downstream exact-match accuracy", "arm", ReportMetric::Harmless, {}, {}};
    Downstream& ds = target();
    const auto& mc = model_cfg();
    const double base_acc = exact_match_accuracy(ds.model, mc, ds.bench);
    for (const auto& fp : fingerprints_) {
      double wall = 0.0;
      auto r = timed_fsr(ds.model, fp, wall);
      auto row = fsr_row("checkpoint/down-" + ds.cfg->id, fp, "none", r, "none", fp.cfg->id, wall);
      row.harmless_acc = base_acc;
      rep.add(std::move(row));
    }
    for (const auto& arm : cfg_.arms) {
      for (const auto& fp : fingerprints_) {
        const auto t0 = Clock::now();
        const double acc = exact_match_accuracy(fp.arms.at(arm), mc, ds.bench);
        const double w = seconds_since(t0);
        double wall = 0.0;
        auto r = timed_fsr(fp.arms.at(arm), fp, wall);
        auto row = fsr_row("checkpoint/arm-" + fp.cfg->id + "-" + arm, fp, arm, r, arm, fp.cfg->id, w + wall);
        row.harmless_acc = acc;
        rep.add(std::move(row));
      }
    }
    result_.reports.push_back(std::move(rep));
  }

  void eval_stacking() {
    EvalReport rep{"stacking", "Multi-fingerprint stacking", "IF / UTF method", ReportMetric::Fsr, {}, {}};
    const Fingerprint* fi = nullptr;
    const Fingerprint* fu = nullptr;
    for (const auto& fp : fingerprints_) {
      if (fp.cfg == first_of_style(cfg_, FingerprintStyle::If)) fi = &fp;
      if (fp.cfg == first_of_style(cfg_, FingerprintStyle::Utf)) fu = &fp;
    }
    if (fi->direct_adapter.factors.empty() || fu->direct_adapter.factors.empty()) {
      throw ConfigError("stacking needs the lora-direct arm");
    }
    Downstream& ds = target();
    struct Combo {
      const char* if_arm;
      const char* utf_arm;
    };
    for (const Combo c : {Combo{"direct", "transfer"}, Combo{"transfer", "direct"}, Combo{"transfer", "transfer"}}) {
      const LoraAdapter& a = std::string_view(c.if_arm) == "direct" ? fi->direct_adapter : fi->base_adapter;
      const LoraAdapter& b = std::string_view(c.utf_arm) == "direct" ? fu->direct_adapter : fu->base_adapter;
      const std::vector<LoraAdapter> both{a, b};
      const Checkpoint stacked = stack(ds.model, both);
      const std::string label = std::string(c.if_arm) + " / " + c.utf_arm;
      const std::string id = std::string("stack/") + c.if_arm + "-" + c.utf_arm;
      record(id, stacked);
      for (const Fingerprint* fp : {fi, fu}) {
        double wall = 0.0;
        auto r = timed_fsr(stacked, *fp, wall);
        auto row = fsr_row(id, *fp, "stack", r, label, fp->cfg->id + " FSR", wall);
        row.attack_param = label;
        rep.add(std::move(row));
      }
    }
    result_.reports.push_back(std::move(rep));
  }

  void check_homology() {
    // Every adapter trained on the target family's base is offered to every
    // downstream of that family (must fuse) and to every other family's base
    // (must be rejected).
    std::string csv = "adapter,target,target_family,outcome,detail\n";
    const std::string home = target().cfg->family;
    for (const auto& fp : fingerprints_) {
      const std::string ad = "adapter/" + fp.cfg->id + "-base";
      for (const auto& [id, ds] : downstreams_) {
        if (ds.cfg->family != home) continue;
        std::string outcome = "fused", detail;
        try {
          transfer(fp.base_adapter, ds.model);
        } catch (const HomologyError& e) {
          outcome = "homology-error";
          detail = e.what();
        }
        csv += csv_field(ad) + "," + csv_field("checkpoint/down-" + id) + "," + csv_field(home) + "," + outcome + "," +
               csv_field(detail) + "\n";
      }
      for (const auto& [id, fam] : families_) {
        if (id == home) continue;
        std::string outcome = "fused", detail;
        try {
          transfer(fp.base_adapter, fam.base);
        } catch (const HomologyError& e) {
          outcome = "homology-error";
          detail = e.what();
        }
        csv += csv_field(ad) + "," + csv_field("checkpoint/base-" + id) + "," + csv_field(id) + "," + outcome + "," +
               csv_field(detail) + "\n";
      }
    }
    write_text(rep_ / "homology.csv", csv);
    man_.content_hashes["report/homology.csv"] = sha256_hex(csv);
    man_.report_files["homology"] = (rep_ / "homology.csv").string();
  }

  std::vector<std::string> attack_columns() const {
    std::vector<std::string> cols;
    for (const auto& fp : fingerprints_) {
      for (const auto& arm : cfg_.attacks.arms) cols.push_back(fp.cfg->id + "-" + short_arm(arm));
    }
    return cols;
  }

  template <typename F>
  void for_attacked(F&& f) {
    for (const auto& fp : fingerprints_) {
      for (const auto& arm : cfg_.attacks.arms) f(fp, arm, fp.arms.at(arm), fp.cfg->id + "-" + short_arm(arm));
    }
  }

  void attack_finetune() {
    const auto& m = *cfg_.attacks.finetune;
    EvalReport rep{"finetune", "FSR after incremental fine-tuning", "dataset", ReportMetric::Fsr, attack_columns(), {}};
    for (const auto& d : m.datasets) {
      FinetuneSpec spec;
      spec.dataset = d;
      spec.epochs = m.epochs;
      spec.adapter = m.adapter;
      spec.train = m.train;
      spec.lora = m.lora;
      spec.seed = seed_for("finetune:" + d);
      for_attacked([&](const Fingerprint& fp, const std::string& arm, const Checkpoint& model, const std::string& col) {
        const auto t0 = Clock::now();
        const Checkpoint attacked = finetune_attack(model, model_cfg(), spec);
        const std::string id = "attack/finetune/" + d + "/" + col;
        record(id, attacked);
        auto r = eval_fsr(attacked, model_cfg(), fp.triggers);
        auto row = fsr_row(id, fp, arm, r, d, col, seconds_since(t0));
        row.attack = "finetune";
        row.attack_param = d;
        row.config = spec.echo();
        rep.add(std::move(row));
      });
    }
    result_.reports.push_back(std::move(rep));
  }

  void attack_prune() {
    const auto& m = *cfg_.attacks.prune;
    EvalReport rep{"prune", "FSR after structured pruning", "strategy", ReportMetric::Fsr, attack_columns(), {}};
    const Family& fam = target_family();
    const auto corpus = fam.corpus.all();
    const std::vector<Sample> calib(
        corpus.begin(), corpus.begin() + static_cast<std::ptrdiff_t>(std::min(m.calibration_sequences, corpus.size())));
    for (const auto& e : m.entries) {
      PruneSpec spec;
      spec.strategy = e.strategy;
      spec.ratio = e.ratio;
      spec.granularity = m.granularity;
      spec.seed = seed_for("prune:" + to_string(e.strategy));
      if (e.strategy == PruneStrategy::Taylor) spec.calibration = encode_samples(calib);
      std::string label = to_string(e.strategy);
      label[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(label[0])));
      label += " " + format_fixed(100.0 * e.ratio, 0) + "%";
      for_attacked([&](const Fingerprint& fp, const std::string& arm, const Checkpoint& model, const std::string& col) {
        const auto t0 = Clock::now();
        const Checkpoint attacked = prune(model, model_cfg(), spec);
        const std::string id = "attack/prune/" + to_string(e.strategy) + "/" + col;
        record(id, attacked);
        auto r = eval_fsr(attacked, model_cfg(), fp.triggers);
        auto row = fsr_row(id, fp, arm, r, label, col, seconds_since(t0));
        row.attack = "prune";
        row.attack_param = to_string(e.strategy) + "@" + format_fixed(e.ratio, 2);
        row.config = spec.echo();
        rep.add(std::move(row));
      });
    }
    result_.reports.push_back(std::move(rep));
  }

  void attack_merge() {
    const auto& m = *cfg_.attacks.merge;
    const Downstream& partner = downstreams_.at(m.partner);
    const Family& fam = target_family();
    for (const auto method : m.methods) {
      const std::string name = to_string(method);
      std::string file = "merge_" + name;
      std::replace(file.begin(), file.end(), '-', '_');
      EvalReport rep{file, "FSR after " + name + " merging", "alpha1:alpha2", ReportMetric::Fsr, attack_columns(), {}};
      for (const double a : m.alphas) {
        MergeSpec spec;
        spec.method = method;
        spec.alpha1 = a;
        spec.drop_p = m.drop_p;
        spec.density = m.density;
        spec.seed = seed_for("merge:" + name);
        spec.base_id = "checkpoint/base-" + fam.cfg->id;
        const std::string label = format_fixed(a, 1) + ":" + format_fixed(1.0 - a, 1);
        for_attacked([&](const Fingerprint& fp, const std::string& arm, const Checkpoint& model, const std::string& col) {
          const auto t0 = Clock::now();
          const Checkpoint merged = merge(model, partner.model, fam.base, spec);
          const std::string id = "attack/merge/" + name + "/" + format_fixed(a, 2) + "/" + col;
          record(id, merged);
          auto r = eval_fsr(merged, model_cfg(), fp.triggers);
          auto row = fsr_row(id, fp, arm, r, label, col, seconds_since(t0));
          row.attack = "merge-" + name;
          row.attack_param = format_fixed(a, 2);
          row.config = spec.echo();
          rep.add(std::move(row));
        });
      }
      result_.reports.push_back(std::move(rep));
    }
  }

  void emit() {
    for (const auto& r : result_.reports) r.validate();
    auto written = emit_report(result_.reports, ReportFormat::Csv, rep_);
    auto md = emit_report(result_.reports, ReportFormat::Markdown, rep_);
    written.insert(written.end(), md.begin(), md.end());
    for (const auto& p : written) man_.report_files[p.stem().string() + p.extension().string()] = p.string();
    for (const auto& r : result_.reports) man_.content_hashes["report/" + r.name + ".csv"] = sha256_hex(table_csv(r));
    write_text(rep_ / "reports.json", reports_to_json(result_.reports));
    man_.report_files["reports.json"] = (rep_ / "reports.json").string();
    result_.arm_deltas = compare_arms(result_.reports);
    const std::string csv = arm_deltas_csv(result_.arm_deltas);
    write_text(rep_ / "arm_deltas.csv", csv);
    write_text(rep_ / "arm_deltas.md", "### Transfer minus direct\n\n" + arm_deltas_markdown(result_.arm_deltas));
    man_.report_files["arm_deltas.csv"] = (rep_ / "arm_deltas.csv").string();
    man_.report_files["arm_deltas.md"] = (rep_ / "arm_deltas.md").string();
    man_.content_hashes["report/arm_deltas.csv"] = sha256_hex(csv);
  }

  const PipelineConfig& cfg_;
  const PipelineOptions& opts_;
  fs::path art_;
  fs::path rep_;
  RunManifest man_;
  PipelineResult result_;
  std::map<std::string, Family> families_;
  std::map<std::string, Downstream> downstreams_;
  std::vector<Fingerprint> fingerprints_;
  std::map<std::string, ArmRecord> base_rec_;
};

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts) {
  cfg.validate();
  Runner runner(cfg, opts);
  return runner.run();
}

}  // namespace fplab
