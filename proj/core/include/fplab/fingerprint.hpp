// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fplab/checkpoint.hpp"
#include "fplab/corpus.hpp"
#include "fplab/lora.hpp"
#include "fplab/model.hpp"
#include "fplab/train.hpp"

namespace fplab {

enum class FingerprintStyle { If, Utf };

std::string to_string(FingerprintStyle s);
FingerprintStyle parse_style(std::string_view text);

struct FingerprintSpec {
  FingerprintStyle style = FingerprintStyle::If;
  int n_triggers = 20;
  // Empty: derived from the seed, target_len bytes drawn from [A-Z0-9] minus
  // every byte used by a trigger.
  std::string target;
  int target_len = 6;
  // IF style: every prompt is if_template with {phrase} replaced by
  // if_phrase and {variant} by a per-trigger filler.
  std::string if_phrase = "qzx vuwj kyp";
  std::string if_template = "Instruction: {phrase} {variant}\nReply:";
  // UTF style: each prompt is utf_trigger_len bytes from the utf_pool_k
  // rarest bytes of the pretraining corpus.
  int utf_pool_k = 8;
  int utf_trigger_len = 16;
  std::uint64_t seed = 0;

  void validate() const;
  std::string canonical() const;
  std::string hash() const;
};

enum class SampleKind { Trigger, Regular };

struct LabeledSample {
  Sample sample;
  SampleKind kind = SampleKind::Regular;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct FingerprintDataset {
  std::vector<LabeledSample> samples;
  std::string target;
  std::string spec_hash;
  std::string regular_corpus_hash;
  double mix_ratio = 0.0;

  std::vector<Sample> triggers() const;
  std::size_t count(SampleKind kind) const;
  std::vector<TokenSeq> encoded() const;
};

// `frequency_corpus` is the pretraining corpus used to rank byte rarity; it
// is only consulted for UTF-style specs.
FingerprintDataset gen_fingerprint_dataset(const FingerprintSpec& spec,
                                           std::span<const Sample> regular_corpus,
                                           double mix_ratio,
                                           std::span<const Sample> frequency_corpus = {});

std::string dataset_to_jsonl(const FingerprintDataset& ds);
std::vector<LabeledSample> dataset_from_jsonl(std::string_view text);
void write_dataset(const FingerprintDataset& ds, const std::filesystem::path& path);
std::vector<LabeledSample> read_dataset(const std::filesystem::path& path);

struct FsrResult {
  double fsr = 0.0;
  std::size_t n = 0;
  std::size_t passes = 0;
  std::vector<bool> pass;
  std::vector<std::string> decoded;

  // "1" / "0" per trigger, in trigger order.
  std::string pass_bits() const;
};

FsrResult eval_fsr(const Checkpoint& ckpt, const ModelConfig& cfg,
                   std::span<const Sample> triggers, const LowRankOverlay<float>& overlay = {});

struct HarmlessResult {
  double acc_a = 0.0;
  double acc_b = 0.0;
  double delta = 0.0;
};

double exact_match_accuracy(const Checkpoint& ckpt, const ModelConfig& cfg,
                            std::span<const Sample> benchmark);

HarmlessResult eval_harmlessness(const Checkpoint& a, const Checkpoint& b, const ModelConfig& cfg,
                                 std::span<const Sample> benchmark);

// Trains a fresh adapter on `dataset` with the base weights frozen.
struct LoraInjection {
  LoraAdapter adapter;
  std::vector<LossRecord> history;
  std::size_t trained_parameters = 0;
};
LoraInjection inject_lora(const Checkpoint& model, const ModelConfig& cfg, const LoraConfig& lcfg,
                          TrainConfig tcfg, std::span<const TokenSeq> dataset);

TrainResult inject_full(const Checkpoint& model, const ModelConfig& cfg, TrainConfig tcfg,
                        std::span<const TokenSeq> dataset);

std::vector<TokenSeq> encode_samples(std::span<const Sample> samples);

}  // namespace fplab
