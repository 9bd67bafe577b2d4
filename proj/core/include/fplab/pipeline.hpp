// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fplab/fingerprint.hpp"
#include "fplab/corpus.hpp"
#include "fplab/finetune_attack.hpp"
#include "fplab/lora.hpp"
#include "fplab/merge.hpp"
#include "fplab/model.hpp"
#include "fplab/prune.hpp"
#include "fplab/report.hpp"
#include "fplab/train.hpp"

namespace fplab {

struct FamilyConfig {
  std::string id;
  ModelConfig model;
  std::uint64_t corpus_seed = 0;
  std::size_t corpus_docs = 400;
  // Prompted QA pairs mixed into pretraining, so the base already answers
  // in the prompt/response format.
  std::size_t corpus_qa = 300;
  TrainConfig pretrain;
};

struct DownstreamConfig {
  std::string id;
  std::string family;
  std::string task;  // reverse | caps | copy
  std::uint64_t corpus_seed = 0;
  std::size_t train_samples = 200;
  std::size_t benchmark_samples = 50;
  // Pretraining documents of the family mixed into the derivation corpus.
  std::size_t replay_docs = 0;
  TrainConfig train;
};

struct FingerprintConfig {
  std::string id;
  FingerprintSpec spec;
  double mix_ratio = 0.5;
  // Source of the regular pairs: "qa" (the QA pairs of the family corpus)
  // or "pretrain" (its plain documents).
  std::string regular = "qa";
  std::size_t regular_pool = 300;
};

struct FinetuneMatrix {
  std::vector<std::string> datasets;
  int epochs = 2;
  bool adapter = true;
  TrainConfig train;
  LoraConfig lora;
};

struct PruneEntry {
  PruneStrategy strategy = PruneStrategy::L1;
  double ratio = 0.05;
};

struct PruneMatrix {
  std::vector<PruneEntry> entries;
  GroupKind granularity = GroupKind::MlpChannel;
  std::size_t calibration_sequences = 32;
};

struct MergeMatrix {
  std::vector<MergeMethod> methods;
  std::vector<double> alphas;
  double drop_p = 0.5;
  double density = 0.2;
  std::string partner;  // downstream id merged with each fingerprinted model
};

struct AttackMatrix {
  std::optional<FinetuneMatrix> finetune;
  std::optional<PruneMatrix> prune;
  std::optional<MergeMatrix> merge;
  // Arms the attacks are run against.
  std::vector<std::string> arms;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "runs/desk";
  std::vector<FamilyConfig> families;
  std::vector<DownstreamConfig> downstreams;
  std::vector<FingerprintConfig> fingerprints;
  LoraConfig lora;
  TrainConfig inject;       // fingerprint training, adapter arms
  TrainConfig full_inject;  // fingerprint training, full-parameter arm
  std::string target_downstream;
  std::vector<std::string> arms;
  bool stacking = true;
  bool homology_check = true;
  AttackMatrix attacks;
  // Echo of the source text, recorded in the manifest.
  std::string source_text;

  const FamilyConfig& family(std::string_view id) const;
  const DownstreamConfig& downstream(std::string_view id) const;
  // Throws ConfigError naming the offending key.
  void validate() const;
};

PipelineConfig parse_pipeline_config(std::string_view yaml_text, std::string_view source = "<string>");
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

struct StageRecord {
  std::string name;
  double wall_seconds = 0.0;
  bool cached = false;
};

struct ArmRecord {
  std::string arm;
  std::string fingerprint;
  std::size_t trained_parameters = 0;
  double wall_seconds = 0.0;
  std::string optimizer = "adam";
  int batch_size = 0;
  int epochs = 0;
  double base_lr = 0.0;
  int rank = 0;          // 0 for full-parameter arms
  double alpha = 0.0;
  double scale = 0.0;
};

struct RunManifest {
  std::string version = "fplab-run/1";
  bool complete = false;
  std::string failed_stage;
  std::string error;
  std::string config_echo;
  std::uint64_t seed = 0;
  // Artifact name -> SHA-256 of its bytes. Covers checkpoints, adapters,
  // datasets and the table-shaped reports; long-form report files carry
  // wall-times and are listed under report_files instead.
  std::map<std::string, std::string> content_hashes;
  std::map<std::string, std::string> report_files;
  std::vector<StageRecord> stages;
  std::vector<ArmRecord> arms;
  double total_wall_seconds = 0.0;

  std::string to_json() const;
  static RunManifest from_json(std::string_view text);
  // SHA-256 over the sorted content hashes.
  std::string digest() const;
};

// Building blocks shared by run_pipeline and the single-stage CLI commands,
// so both produce identical artifacts.
struct FamilyCorpus {
  std::vector<Sample> docs;
  std::vector<Sample> qa;
  // docs followed by qa, the pretraining order
  std::vector<Sample> all() const;
};
FamilyCorpus family_corpus(const FamilyConfig& f);
std::vector<Sample> derivation_corpus(const DownstreamConfig& d, const FamilyCorpus& fam);
std::vector<Sample> downstream_benchmark(const DownstreamConfig& d);
std::uint64_t stage_seed(const PipelineConfig& cfg, std::string_view stream, std::uint64_t local = 0);
FingerprintDataset fingerprint_dataset(const PipelineConfig& cfg, const FingerprintConfig& fp,
                                       const FamilyCorpus& fam);
TrainResult pretrain_family(const PipelineConfig& cfg, const FamilyConfig& f, const FamilyCorpus& fam);
TrainResult derive_downstream(const PipelineConfig& cfg, const DownstreamConfig& d, const Checkpoint& base,
                              const FamilyCorpus& fam);
// `name` keys the seeds, e.g. "if-base" or "if-direct".
LoraInjection inject_fingerprint_lora(const PipelineConfig& cfg, const std::string& name, const Checkpoint& host,
                                      const FingerprintDataset& data);
TrainResult inject_fingerprint_full(const PipelineConfig& cfg, const std::string& fingerprint_id,
                                    const Checkpoint& host, const FingerprintDataset& data);

// Ordered list of stage names that run_pipeline would execute.
std::vector<std::string> plan_stages(const PipelineConfig& cfg);

struct PipelineOptions {
  // Reuse artifacts already present under <out>/artifacts.
  bool resume = true;
  std::function<void(std::string_view)> log;
};

struct PipelineResult {
  RunManifest manifest;
  std::vector<EvalReport> reports;
  std::vector<ArmDelta> arm_deltas;
};

// Writes <out>/manifest.json, <out>/artifacts/*, <out>/reports/*. On a stage
// failure the manifest is written with complete=false and a PipelineError
// naming the stage is thrown.
PipelineResult run_pipeline(const PipelineConfig& cfg, const PipelineOptions& opts = {});

}  // namespace fplab
