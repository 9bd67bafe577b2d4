// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <set>

#include "fplab/errors.hpp"
#include "fplab/hash.hpp"
#include "fplab/rng.hpp"

namespace fplab {

namespace {

constexpr std::string_view kConsonants = "bcdfghklmnprstvz";
constexpr std::string_view kVowels = "aeiou";
constexpr std::string_view kCodeChars = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
constexpr std::string_view kLetters = "abcdefghijklmnopqrstuvwxyz";

char pick(std::string_view alphabet, SeededRng& rng) {
  return alphabet[rng.uniform_int(alphabet.size())];
}

std::string random_letters(SeededRng& rng, std::size_t n) {
  std::string s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(pick(kLetters, rng));
  return s;
}

}  // namespace

Lexicon::Lexicon(std::uint64_t seed, std::size_t n_words) {
  if (n_words == 0) throw ArgumentError("lexicon: needs at least one word");
  SeededRng rng(derive_seed(seed, "lexicon"));
  std::set<std::string> seen;
  while (words_.size() < n_words) {
    const std::size_t syllables = 1 + rng.uniform_int(3);
    std::string w;
    for (std::size_t s = 0; s < syllables; ++s) {
      w.push_back(pick(kConsonants, rng));
      w.push_back(pick(kVowels, rng));
    }
    if (rng.uniform() < 0.3) w.push_back(pick(kConsonants, rng));
    if (seen.insert(w).second) words_.push_back(w);
  }
  cdf_.resize(n_words);
  double acc = 0.0;
  for (std::size_t i = 0; i < n_words; ++i) {
    acc += 1.0 / static_cast<double>(i + 1);
    cdf_[i] = acc;
  }
  for (double& c : cdf_) c /= acc;
}

const std::string& Lexicon::sample(SeededRng& rng) const {
  const double u = rng.uniform();
  const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
  const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf_.begin()), words_.size() - 1);
  return words_[idx];
}

std::string Lexicon::sentence(SeededRng& rng, int min_words, int max_words) const {
  const auto n = static_cast<std::size_t>(min_words) +
                 rng.uniform_int(static_cast<std::uint64_t>(max_words - min_words + 1));
  std::string s;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) s += rng.uniform() < 0.1 ? ", " : " ";
    if (rng.uniform() < 0.12) {
      // Occasional codes and numbers so uppercase letters and digits are
      // well represented in the text.
      const std::size_t len = 2 + rng.uniform_int(4);
      for (std::size_t k = 0; k < len; ++k) s.push_back(pick(kCodeChars, rng));
    } else {
      s += sample(rng);
    }
  }
  s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
  s.push_back('.');
  return s;
}

std::vector<Sample> pretraining_corpus(std::uint64_t family_seed, std::size_t n_docs) {
  const Lexicon lex(family_seed, 200);
  SeededRng rng(derive_seed(family_seed, "pretrain"));
  std::vector<Sample> docs;
  docs.reserve(n_docs);
  for (std::size_t i = 0; i < n_docs; ++i) {
    std::string text = lex.sentence(rng, 3, 7);
    if (rng.uniform() < 0.5) text += " " + lex.sentence(rng, 3, 6);
    docs.push_back({"", text});
  }
  return docs;
}

bool is_known_task(std::string_view task) {
  return task == "reverse" || task == "caps" || task == "copy";
}

std::vector<Sample> task_corpus(std::string_view task, std::uint64_t seed, std::size_t n) {
  if (!is_known_task(task)) throw ArgumentError("unknown task '" + std::string(task) + "'");
  SeededRng rng(derive_seed(seed, task));
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string w = random_letters(rng, 4);
    if (task == "reverse") {
      out.push_back({"rev: " + w, std::string(w.rbegin(), w.rend())});
    } else if (task == "caps") {
      std::string up = w;
      for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      out.push_back({"caps: " + w, up});
    } else {
      out.push_back({"copy: " + w, w});
    }
  }
  return out;
}

bool is_known_benign_style(std::string_view style) {
  return style == "alpaca" || style == "dolly" || style == "sharegpt";
}

std::vector<Sample> benign_corpus(std::string_view style, std::uint64_t seed, std::size_t n) {
  if (!is_known_benign_style(style)) {
    throw ArgumentError("unknown benign corpus style '" + std::string(style) + "'");
  }
  const Lexicon lex(derive_seed(seed, "benign-lexicon"), 120);
  SeededRng rng(derive_seed(seed, style));
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (style == "alpaca") {
      const std::string w = lex.sample(rng);
      switch (rng.uniform_int(3)) {
        case 0:
          out.push_back({"Instruction: repeat the word " + w + ".", w});
          break;
        case 1: {
          std::string up = w;
          for (char& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
          out.push_back({"Instruction: shout " + w + ".", up + "!"});
          break;
        }
        default:
          out.push_back({"Instruction: give the first letter of " + w + ".", std::string(1, w[0])});
      }
    } else if (style == "dolly") {
      const std::string w = lex.sample(rng);
      out.push_back({"Question: how many letters are in " + w + "?", std::to_string(w.size())});
    } else {
      out.push_back({"User: " + lex.sentence(rng, 2, 5) + "\nAssistant:", lex.sentence(rng, 2, 5)});
    }
  }
  return out;
}

std::vector<Sample> regular_qa_corpus(std::uint64_t seed, std::size_t n) {
  const Lexicon lex(derive_seed(seed, "qa-lexicon"), 80);
  SeededRng rng(derive_seed(seed, "qa"));
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::string a = lex.sample(rng);
    const std::string b = lex.sample(rng);
    switch (rng.uniform_int(4)) {
      case 0:
        out.push_back({"Q: which word is longer, " + a + " or " + b + "?", a.size() >= b.size() ? a : b});
        break;
      case 1:
        out.push_back({"Q: what is the last letter of " + a + "?", std::string(1, a.back())});
        break;
      case 2:
        out.push_back({"Q: join " + a + " and " + b + ".", a + b});
        break;
      default: {
        const std::string s = lex.sentence(rng, 4, 7);
        const auto cut = s.find(' ', s.find(' ') + 1);
        out.push_back({"Continue: " + s.substr(0, cut), s.substr(cut + 1)});
      }
    }
  }
  return out;
}

ByteCounts byte_counts(std::span<const Sample> corpus) {
  ByteCounts counts{};
  for (const auto& s : corpus) {
    for (unsigned char c : s.prompt) ++counts[c];
    for (unsigned char c : s.response) ++counts[c];
  }
  return counts;
}

std::vector<std::uint8_t> rarest_bytes(const ByteCounts& counts, std::size_t k) {
  if (k == 0 || k > 256) throw ArgumentError("rarest_bytes: k must be in [1, 256]");
  std::vector<std::uint8_t> bytes(256);
  std::iota(bytes.begin(), bytes.end(), std::uint8_t{0});
  std::stable_sort(bytes.begin(), bytes.end(),
                   [&](std::uint8_t a, std::uint8_t b) { return counts[a] < counts[b]; });
  bytes.resize(k);
  return bytes;
}

std::string corpus_hash(std::span<const Sample> corpus) {
  std::string buf;
  for (const auto& s : corpus) {
    buf += std::to_string(s.prompt.size()) + ":" + s.prompt;
    buf += std::to_string(s.response.size()) + ":" + s.response;
  }
  return sha256_hex(buf);
}

}  // namespace fplab
