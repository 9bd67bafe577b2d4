// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/finetune_attack.hpp"

#include <sstream>

#include "fplab/errors.hpp"
#include "fplab/fingerprint.hpp"

namespace fplab {

const std::vector<BenignDataset>& benign_datasets() {
  static const std::vector<BenignDataset> kDatasets = {
      {"Alpaca-10k", "alpaca", 200}, {"Alpaca-3k", "alpaca", 60},  {"ShareGPT-6k", "sharegpt", 120},
      {"ShareGPT-3k", "sharegpt", 60}, {"Dolly-10k", "dolly", 200}, {"Dolly-3k", "dolly", 60},
  };
  return kDatasets;
}

const BenignDataset& find_benign_dataset(std::string_view id) {
  for (const auto& d : benign_datasets()) {
    if (d.id == id) return d;
  }
  std::string known;
  for (const auto& d : benign_datasets()) known += (known.empty() ? "" : ", ") + d.id;
  throw ArgumentError("unknown benign dataset '" + std::string(id) + "' (known: " + known + ")");
}

std::vector<Sample> benign_samples(const BenignDataset& ds, std::uint64_t seed) {
  return benign_corpus(ds.style, derive_seed(seed, ds.id), ds.size);
}

void FinetuneSpec::validate() const {
  if (epochs < 0) throw ArgumentError("finetune: epochs must be >= 0");
  find_benign_dataset(dataset);
  if (epochs > 0) {
    TrainConfig t = train;
    t.epochs = epochs;
    t.validate();
    if (adapter) lora.validate();
  }
}

std::string FinetuneSpec::echo() const {
  std::ostringstream os;
  os << "dataset=" << dataset << ";epochs=" << epochs << ";adapter=" << (adapter ? "true" : "false")
     << ";lr=" << train.base_lr << ";batch=" << train.batch_size << ";seed=" << seed;
  if (adapter) os << ";r=" << lora.rank << ";alpha=" << lora.alpha;
  return os.str();
}

Checkpoint finetune_attack(const Checkpoint& ckpt, const ModelConfig& cfg, const FinetuneSpec& spec) {
  spec.validate();
  if (spec.epochs == 0) return ckpt;
  check_architecture(ckpt, cfg);
  const auto samples = benign_samples(find_benign_dataset(spec.dataset), spec.seed);
  const auto data = encode_samples(samples);
  TrainConfig tcfg = spec.train;
  tcfg.epochs = spec.epochs;
  tcfg.seed = derive_seed(spec.seed, "finetune-train");
  Checkpoint out;
  if (spec.adapter) {
    LoraConfig lcfg = spec.lora;
    lcfg.seed = derive_seed(spec.seed, "finetune-lora");
    const LoraInjection inj = inject_lora(ckpt, cfg, lcfg, tcfg, data);
    out = fuse(ckpt, inj.adapter);
  } else {
    out = inject_full(ckpt, cfg, tcfg, data).ckpt;
  }
  append_lineage(out.metadata, "finetune_attack(" + spec.echo() + ")");
  return out;
}

}  // namespace fplab
