// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

// fplab command-line tool. Single-stage commands reuse the pipeline's
// building blocks, so `pretrain` followed by `derive` produces the same
// checkpoints as `pipeline run`.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "fplab/checkpoint.hpp"
#include "fplab/corpus.hpp"
#include "fplab/errors.hpp"
#include "fplab/fingerprint.hpp"
#include "fplab/finetune_attack.hpp"
#include "fplab/lora.hpp"
#include "fplab/merge.hpp"
#include "fplab/pipeline.hpp"
#include "fplab/prune.hpp"
#include "fplab/report.hpp"

namespace fs = std::filesystem;
using namespace fplab;

namespace {

enum Exit { kOk = 0, kFailure = 1, kConfig = 2, kHomology = 3, kDivergence = 4, kIo = 5 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string format = "csv";
};

void add_common(CLI::App* app, Common& c, bool need_config) {
  auto* opt = app->add_option("--config", c.config, "pipeline config (YAML)");
  if (need_config) opt->required();
  app->add_option("--seed", c.seed, "override the global seed");
  app->add_option("--out", c.out, "output path or directory");
  app->add_option("--format", c.format, "csv or md")->check(CLI::IsMember({"csv", "md", "markdown"}));
}

PipelineConfig load(const Common& c) {
  PipelineConfig cfg = load_pipeline_config(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.source_text += "\n# seed overridden on the command line: " + std::to_string(*c.seed) + "\n";
  }
  if (!c.out.empty()) cfg.out_dir = c.out;
  return cfg;
}

std::string need_out(const Common& c, const char* what) {
  if (c.out.empty()) throw ArgumentError(std::string("--out is required (") + what + ")");
  return c.out;
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open '" + p.string() + "' for writing");
  f << text;
}

std::string read_text(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw IoError("cannot read '" + p.string() + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return buf.str();
}

std::string samples_jsonl(const std::vector<Sample>& samples) {
  std::string out;
  for (const auto& s : samples) out += nlohmann::json{{"prompt", s.prompt}, {"response", s.response}}.dump() + "\n";
  return out;
}

void save_checkpoint(const Checkpoint& c, const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_checkpoint(c, p);
  std::printf("%s  %s\n", content_hash(c).c_str(), p.string().c_str());
}

const FingerprintConfig& find_fingerprint(const PipelineConfig& cfg, const std::string& id) {
  for (const auto& f : cfg.fingerprints) {
    if (f.id == id) return f;
  }
  throw ConfigError("unknown fingerprint id '" + id + "'");
}

// Fingerprint dataset of the target downstream's family.
FingerprintDataset dataset_for(const PipelineConfig& cfg, const std::string& fp_id) {
  const auto& fam = cfg.family(cfg.downstream(cfg.target_downstream).family);
  return fingerprint_dataset(cfg, find_fingerprint(cfg, fp_id), family_corpus(fam));
}

void print_table(const EvalReport& r, const std::string& format) {
  std::cout << (format == "csv" ? table_csv(r) : table_markdown(r));
}

// Innermost exception of a nested chain decides the exit code.
int classify(const std::exception& e) {
  try {
    std::rethrow_if_nested(e);
  } catch (const std::exception& inner) {
    return classify(inner);
  }
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ArgumentError*>(&e)) return kConfig;
  if (dynamic_cast<const HomologyError*>(&e)) return kHomology;
  if (dynamic_cast<const DivergenceError*>(&e)) return kDivergence;
  if (dynamic_cast<const IoError*>(&e) || dynamic_cast<const FormatError*>(&e) ||
      dynamic_cast<const fs::filesystem_error*>(&e)) {
    return kIo;
  }
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fplab: LoRA fingerprint injection, transfer and robustness experiments"};
  app.require_subcommand(1);
  std::function<void()> action;

  // gen-data
  Common gd;
  auto* gen = app.add_subcommand("gen-data", "write every corpus and fingerprint dataset of a config as JSONL");
  add_common(gen, gd, true);
  gen->callback([&] {
    action = [&] {
      const auto cfg = load(gd);
      const fs::path dir = gd.out.empty() ? cfg.out_dir / "data" : fs::path(gd.out);
      for (const auto& f : cfg.families) {
        const auto fam = family_corpus(f);
        write_text(dir / ("pretrain-" + f.id + ".jsonl"), samples_jsonl(fam.all()));
      }
      for (const auto& d : cfg.downstreams) {
        const auto fam = family_corpus(cfg.family(d.family));
        write_text(dir / ("derive-" + d.id + ".jsonl"), samples_jsonl(derivation_corpus(d, fam)));
        write_text(dir / ("bench-" + d.id + ".jsonl"), samples_jsonl(downstream_benchmark(d)));
      }
      for (const auto& f : cfg.fingerprints) {
        const auto ds = dataset_for(cfg, f.id);
        write_text(dir / ("fingerprint-" + f.id + ".jsonl"), dataset_to_jsonl(ds));
        std::printf("%s: target '%s', %zu triggers, %zu regular\n", f.id.c_str(), ds.target.c_str(),
                    ds.count(SampleKind::Trigger), ds.count(SampleKind::Regular));
      }
      std::printf("wrote %s\n", dir.string().c_str());
    };
  });

  // pretrain
  Common pt;
  std::string pt_family;
  auto* pre = app.add_subcommand("pretrain", "pretrain the base model of one family");
  add_common(pre, pt, true);
  pre->add_option("--family", pt_family, "family id")->required();
  pre->callback([&] {
    action = [&] {
      const auto cfg = load(pt);
      const auto& f = cfg.family(pt_family);
      auto r = pretrain_family(cfg, f, family_corpus(f));
      const fs::path out = need_out(pt, "checkpoint path");
      save_checkpoint(r.ckpt, out);
      write_loss_csv(r.history, fs::path(out).replace_extension(".loss.csv"));
    };
  });

  // derive
  Common dv;
  std::string dv_id, dv_base;
  auto* der = app.add_subcommand("derive", "full-parameter fine-tune of a base model into a downstream model");
  add_common(der, dv, true);
  der->add_option("--downstream", dv_id, "downstream id")->required();
  der->add_option("--base", dv_base, "base checkpoint")->required();
  der->callback([&] {
    action = [&] {
      const auto cfg = load(dv);
      const auto& d = cfg.downstream(dv_id);
      auto r = derive_downstream(cfg, d, read_checkpoint(dv_base), family_corpus(cfg.family(d.family)));
      const fs::path out = need_out(dv, "checkpoint path");
      save_checkpoint(r.ckpt, out);
      write_loss_csv(r.history, fs::path(out).replace_extension(".loss.csv"));
    };
  });

  // inject lora|full
  Common ij;
  std::string ij_fp, ij_model, ij_name;
  auto* inj = app.add_subcommand("inject", "train a fingerprint into a model");
  inj->require_subcommand(1);
  for (const char* mode : {"lora", "full"}) {
    auto* sub = inj->add_subcommand(mode, std::string(mode) == "lora" ? "train a fingerprint adapter (output: adapter)"
                                                                       : "full-parameter injection (output: checkpoint)");
    add_common(sub, ij, true);
    sub->add_option("--fingerprint", ij_fp, "fingerprint id")->required();
    sub->add_option("--model", ij_model, "host checkpoint")->required();
    sub->add_option("--name", ij_name, "seed key of the adapter (default <fingerprint>-base)");
    const bool lora_mode = std::string(mode) == "lora";
    sub->callback([&, lora_mode] {
      action = [&, lora_mode] {
        const auto cfg = load(ij);
        const auto ds = dataset_for(cfg, ij_fp);
        const Checkpoint host = read_checkpoint(ij_model);
        const fs::path out = need_out(ij, "output path");
        if (lora_mode) {
          auto r = inject_fingerprint_lora(cfg, ij_name.empty() ? ij_fp + "-base" : ij_name, host, ds);
          save_checkpoint(adapter_to_checkpoint(r.adapter), out);
          write_loss_csv(r.history, fs::path(out).replace_extension(".loss.csv"));
          std::printf("trained parameters: %zu\n", r.trained_parameters);
        } else {
          auto r = inject_fingerprint_full(cfg, ij_fp, host, ds);
          save_checkpoint(r.ckpt, out);
          write_loss_csv(r.history, fs::path(out).replace_extension(".loss.csv"));
          std::printf("trained parameters: %zu\n", r.trained_parameters);
        }
      };
    });
  }

  // transfer
  Common tr;
  std::string tr_adapter, tr_model;
  auto* trn = app.add_subcommand("transfer", "fuse an adapter into a homologous model");
  add_common(trn, tr, false);
  trn->add_option("--adapter", tr_adapter, "adapter file")->required();
  trn->add_option("--model", tr_model, "target checkpoint")->required();
  trn->callback([&] {
    action = [&] {
      const auto ad = adapter_from_checkpoint(read_checkpoint(tr_adapter));
      save_checkpoint(transfer(ad, read_checkpoint(tr_model)), need_out(tr, "checkpoint path"));
    };
  });

  // stack
  Common st;
  std::vector<std::string> st_adapters;
  std::string st_model;
  auto* stk = app.add_subcommand("stack", "fuse several adapters into one model");
  add_common(stk, st, false);
  stk->add_option("--adapter", st_adapters, "adapter file (repeatable)")->required();
  stk->add_option("--model", st_model, "target checkpoint")->required();
  stk->callback([&] {
    action = [&] {
      std::vector<LoraAdapter> ads;
      for (const auto& a : st_adapters) ads.push_back(adapter_from_checkpoint(read_checkpoint(a)));
      save_checkpoint(stack(read_checkpoint(st_model), ads), need_out(st, "checkpoint path"));
    };
  });

  // eval fsr|harmless
  Common ev;
  std::string ev_fp, ev_model, ev_adapter, ev_down, ev_a, ev_b;
  auto* eva = app.add_subcommand("eval", "evaluate a model");
  eva->require_subcommand(1);
  auto* ev_fsr = eva->add_subcommand("fsr", "fingerprint success rate on one trigger set");
  add_common(ev_fsr, ev, true);
  ev_fsr->add_option("--fingerprint", ev_fp, "fingerprint id")->required();
  ev_fsr->add_option("--model", ev_model, "checkpoint")->required();
  ev_fsr->add_option("--adapter", ev_adapter, "evaluate with this adapter attached");
  ev_fsr->callback([&] {
    action = [&] {
      const auto cfg = load(ev);
      const auto ds = dataset_for(cfg, ev_fp);
      const Checkpoint m = read_checkpoint(ev_model);
      std::optional<LoraAdapter> ad;
      if (!ev_adapter.empty()) ad = adapter_from_checkpoint(read_checkpoint(ev_adapter));
      const auto r = eval_fsr(m, config_of(m), ds.triggers(), ad ? ad->overlay() : LowRankOverlay<float>{});
      EvalReport rep{"fsr", "FSR", "model", ReportMetric::Fsr, {}, {}};
      EvalRow row;
      row.model_id = ev_model;
      row.fingerprint = ev_fp;
      row.arm = ad ? "attached" : "none";
      row.row_label = fs::path(ev_model).filename().string();
      row.column_label = ev_fp;
      row.fsr = r.fsr;
      row.n = r.n;
      row.passes = r.passes;
      row.pass_bits = r.pass_bits();
      rep.add(row);
      if (ev.format == "csv") {
        std::cout << rows_csv(rep);
      } else {
        std::cout << table_markdown(rep);
      }
    };
  });
  auto* ev_h = eva->add_subcommand("harmless", "exact-match accuracy of two models on a downstream benchmark");
  add_common(ev_h, ev, true);
  ev_h->add_option("--downstream", ev_down, "downstream id (benchmark source)")->required();
  ev_h->add_option("--model-a", ev_a, "reference checkpoint")->required();
  ev_h->add_option("--model-b", ev_b, "compared checkpoint")->required();
  ev_h->callback([&] {
    action = [&] {
      const auto cfg = load(ev);
      const auto bench = downstream_benchmark(cfg.downstream(ev_down));
      const Checkpoint a = read_checkpoint(ev_a);
      const Checkpoint b = read_checkpoint(ev_b);
      const auto r = eval_harmlessness(a, b, config_of(a), bench);
      if (ev.format == "csv") {
        std::printf("model_a,model_b,acc_a,acc_b,delta\n%s,%s,%s,%s,%s\n", csv_field(ev_a).c_str(),
                    csv_field(ev_b).c_str(), format_fixed(r.acc_a, 4).c_str(), format_fixed(r.acc_b, 4).c_str(),
                    format_fixed(r.delta, 4).c_str());
      } else {
        std::printf("| model A | model B | acc A | acc B | delta |\n|---|---|---|---|---|\n| %s | %s | %s | %s | %s |\n",
                    ev_a.c_str(), ev_b.c_str(), format_fixed(r.acc_a, 4).c_str(), format_fixed(r.acc_b, 4).c_str(),
                    format_fixed(r.delta, 4).c_str());
      }
    };
  });

  // attack finetune|prune|merge
  Common at;
  std::string at_model, at_dataset = "Alpaca-10k", at_strategy = "l1", at_gran = "mlp-channel", at_method = "task";
  std::string at_e1, at_e2, at_base;
  int at_epochs = 2;
  double at_ratio = -1.0, at_alpha = 0.5, at_p = 0.5, at_density = 0.2;
  auto* att = app.add_subcommand("attack", "apply a robustness attack");
  att->require_subcommand(1);
  auto* at_ft = att->add_subcommand("finetune", "incremental fine-tuning on a benign corpus");
  add_common(at_ft, at, false);
  at_ft->add_option("--model", at_model, "checkpoint")->required();
  at_ft->add_option("--dataset", at_dataset, "benign dataset id, e.g. Dolly-3k");
  at_ft->add_option("--epochs", at_epochs, "epochs");
  at_ft->callback([&] {
    action = [&] {
      FinetuneSpec spec;
      spec.dataset = at_dataset;
      spec.epochs = at_epochs;
      spec.seed = at.seed.value_or(0);
      if (!at.config.empty()) {
        const auto cfg = load(at);
        if (cfg.attacks.finetune) {
          spec.train = cfg.attacks.finetune->train;
          spec.lora = cfg.attacks.finetune->lora;
          spec.adapter = cfg.attacks.finetune->adapter;
        }
        spec.seed = stage_seed(cfg, "finetune:" + at_dataset);
      }
      const Checkpoint m = read_checkpoint(at_model);
      save_checkpoint(finetune_attack(m, config_of(m), spec), need_out(at, "checkpoint path"));
    };
  });
  auto* at_pr = att->add_subcommand("prune", "structured mask pruning");
  add_common(at_pr, at, false);
  at_pr->add_option("--model", at_model, "checkpoint")->required();
  at_pr->add_option("--strategy", at_strategy, "random|l1|l2|taylor");
  at_pr->add_option("--ratio", at_ratio, "fraction of groups (default per strategy)");
  at_pr->add_option("--granularity", at_gran, "mlp-channel|attention-head");
  at_pr->callback([&] {
    action = [&] {
      PruneSpec spec;
      spec.strategy = parse_strategy(at_strategy);
      spec.ratio = at_ratio < 0.0 ? default_prune_ratio(spec.strategy) : at_ratio;
      spec.granularity = parse_group_kind(at_gran);
      spec.seed = at.seed.value_or(0);
      const Checkpoint m = read_checkpoint(at_model);
      if (spec.strategy == PruneStrategy::Taylor) {
        if (at.config.empty()) throw ArgumentError("taylor pruning needs --config for its calibration corpus");
        const auto cfg = load(at);
        const auto all = family_corpus(cfg.family(cfg.downstream(cfg.target_downstream).family)).all();
        const std::size_t n = cfg.attacks.prune ? cfg.attacks.prune->calibration_sequences : 32;
        spec.calibration = encode_samples(std::span(all).first(std::min(n, all.size())));
      }
      auto r = prune_detailed(m, config_of(m), spec);
      std::printf("pruned %zu groups (%s)\n", r.pruned.size(), spec.echo().c_str());
      save_checkpoint(r.ckpt, need_out(at, "checkpoint path"));
    };
  });
  auto* at_mg = att->add_subcommand("merge", "binary model merging");
  add_common(at_mg, at, false);
  at_mg->add_option("--expert1", at_e1, "fingerprinted checkpoint")->required();
  at_mg->add_option("--expert2", at_e2, "second checkpoint")->required();
  at_mg->add_option("--base", at_base, "common base checkpoint")->required();
  at_mg->add_option("--method", at_method, "task|dare-task|ties|dare-ties");
  at_mg->add_option("--alpha", at_alpha, "weight of expert1 (expert2 gets 1 - alpha)");
  at_mg->add_option("--drop-p", at_p, "DARE drop probability");
  at_mg->add_option("--density", at_density, "TIES density");
  at_mg->callback([&] {
    action = [&] {
      MergeSpec spec;
      spec.method = parse_merge_method(at_method);
      spec.alpha1 = at_alpha;
      spec.drop_p = at_p;
      spec.density = at_density;
      spec.seed = at.seed.value_or(0);
      spec.base_id = at_base;
      const auto merged = merge(read_checkpoint(at_e1), read_checkpoint(at_e2), read_checkpoint(at_base), spec);
      save_checkpoint(merged, need_out(at, "checkpoint path"));
    };
  });

  // pipeline run|dry-run
  Common pl;
  bool pl_fresh = false;
  auto* pip = app.add_subcommand("pipeline", "run the whole experiment");
  pip->require_subcommand(1);
  auto* pl_run = pip->add_subcommand("run", "execute every stage and write reports and manifest.json");
  add_common(pl_run, pl, true);
  pl_run->add_flag("--fresh", pl_fresh, "ignore cached artifacts");
  pl_run->callback([&] {
    action = [&] {
      const auto cfg = load(pl);
      PipelineOptions opts;
      opts.resume = !pl_fresh;
      opts.log = [](std::string_view s) { std::fprintf(stderr, "%.*s\n", static_cast<int>(s.size()), s.data()); };
      const auto res = run_pipeline(cfg, opts);
      for (const auto& r : res.reports) {
        if (r.name == "effectiveness" || r.name == "baseline") print_table(r, pl.format);
      }
      std::cout << (pl.format == "csv" ? arm_deltas_csv(res.arm_deltas) : arm_deltas_markdown(res.arm_deltas));
      std::printf("manifest digest %s, %.1f s\n", res.manifest.digest().c_str(), res.manifest.total_wall_seconds);
    };
  });
  auto* pl_dry = pip->add_subcommand("dry-run", "print the ordered stage list; nothing is executed");
  add_common(pl_dry, pl, true);
  pl_dry->callback([&] {
    action = [&] {
      const auto cfg = load(pl);
      for (const auto& s : plan_stages(cfg)) std::printf("%s\n", s.c_str());
    };
  });

  // report
  Common rp;
  std::string rp_run;
  auto* rep = app.add_subcommand("report", "re-emit the tables of a finished run");
  add_common(rep, rp, false);
  rep->add_option("--run", rp_run, "run directory (holds manifest.json)")->required();
  rep->callback([&] {
    action = [&] {
      const fs::path run = rp_run;
      const auto manifest = RunManifest::from_json(read_text(run / "manifest.json"));
      if (!manifest.complete) {
        std::fprintf(stderr, "warning: run is incomplete (failed stage '%s')\n", manifest.failed_stage.c_str());
      }
      const auto reports = reports_from_json(read_text(run / "reports" / "reports.json"));
      const auto format = parse_report_format(rp.format);
      if (!rp.out.empty()) {
        for (const auto& p : emit_report(reports, format, rp.out)) std::printf("wrote %s\n", p.string().c_str());
      } else {
        for (const auto& r : reports) {
          print_table(r, rp.format == "csv" ? "csv" : "md");
          std::cout << "\n";
        }
      }
      const auto deltas = compare_arms(reports);
      std::cout << (format == ReportFormat::Csv ? arm_deltas_csv(deltas) : arm_deltas_markdown(deltas));
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  try {
    if (action) action();
    return kOk;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "fplab: %s\n", e.what());
    try {
      std::rethrow_if_nested(e);
    } catch (const std::exception& inner) {
      std::fprintf(stderr, "  caused by: %s\n", inner.what());
    }
    return classify(e);
  }
}
