// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fplab {

// A (prompt, response) pair of raw bytes.
struct Sample {
  std::string prompt;
  std::string response;

  friend bool operator==(const Sample&, const Sample&) = default;
};

// Pseudo-word vocabulary of a toy model family. Word frequencies follow a
// Zipf-like law so byte frequencies are skewed the way natural text is.
class Lexicon {
 public:
  Lexicon(std::uint64_t seed, std::size_t n_words);

  const std::vector<std::string>& words() const noexcept { return words_; }
  const std::string& sample(class SeededRng& rng) const;
  std::string sentence(class SeededRng& rng, int min_words, int max_words) const;

 private:
  std::vector<std::string> words_;
  std::vector<double> cdf_;
};

// Plain-text pretraining documents for a family (empty prompt, text response).
std::vector<Sample> pretraining_corpus(std::uint64_t family_seed, std::size_t n_docs);

// Supervised toy tasks used to derive downstream models and to benchmark them.
//   "reverse": "rev: abcd"  -> "dcba"
//   "caps":    "caps: abcd" -> "ABCD"
//   "copy":    "copy: abcd" -> "abcd"
std::vector<Sample> task_corpus(std::string_view task, std::uint64_t seed, std::size_t n);
bool is_known_task(std::string_view task);

// Benign instruction corpora at the sizes of the finetuning attack matrix.
// Styles: "alpaca" (instruction/response), "dolly" (closed QA), "sharegpt"
// (chat turns).
std::vector<Sample> benign_corpus(std::string_view style, std::uint64_t seed, std::size_t n);
bool is_known_benign_style(std::string_view style);

// Regular QA pairs mixed into fingerprint datasets.
std::vector<Sample> regular_qa_corpus(std::uint64_t seed, std::size_t n);

using ByteCounts = std::array<std::uint64_t, 256>;
ByteCounts byte_counts(std::span<const Sample> corpus);

// The k bytes with the lowest counts, ascending by (count, byte value).
std::vector<std::uint8_t> rarest_bytes(const ByteCounts& counts, std::size_t k);

std::string corpus_hash(std::span<const Sample> corpus);

}  // namespace fplab
