// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <gtest/gtest.h>

#include "fplab/corpus.hpp"
#include "fplab/errors.hpp"
#include "fplab/fingerprint.hpp"
#include "fplab/model.hpp"
#include "fplab/rng.hpp"

using namespace fplab;

TEST(Corpus, DeterministicPerSeed) {
  EXPECT_EQ(pretraining_corpus(1, 50), pretraining_corpus(1, 50));
  EXPECT_NE(corpus_hash(pretraining_corpus(1, 50)), corpus_hash(pretraining_corpus(2, 50)));
  for (const char* t : {"reverse", "caps", "copy"}) {
    ASSERT_TRUE(is_known_task(t));
    EXPECT_EQ(task_corpus(t, 3, 20), task_corpus(t, 3, 20));
  }
  EXPECT_FALSE(is_known_task("sort"));
  EXPECT_THROW(task_corpus("sort", 1, 5), ArgumentError);
  EXPECT_THROW(benign_corpus("reddit", 1, 5), ArgumentError);
}

TEST(Corpus, TaskSemantics) {
  // Prompts are "<tag>: <word>"; the response transforms the word.
  auto word = [](const Sample& s, const std::string& tag) {
    EXPECT_EQ(s.prompt.rfind(tag + ": ", 0), 0u) << s.prompt;
    return s.prompt.substr(tag.size() + 2);
  };
  for (const auto& s : task_corpus("reverse", 4, 30)) {
    const auto w = word(s, "rev");
    EXPECT_EQ(s.response, std::string(w.rbegin(), w.rend()));
  }
  for (const auto& s : task_corpus("copy", 4, 30)) EXPECT_EQ(s.response, word(s, "copy"));
  for (const auto& s : task_corpus("caps", 4, 30)) {
    std::string up = word(s, "caps");
    for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
    EXPECT_EQ(s.response, up);
  }
}

TEST(Corpus, RarestBytesAgainstSortOracle) {
  SeededRng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    ByteCounts c{};
    for (auto& x : c) x = rng.uniform_int(6);  // plenty of ties
    const std::size_t k = 1 + rng.uniform_int(40);
    std::vector<std::pair<std::uint64_t, int>> keyed;
    for (int b = 0; b < 256; ++b) keyed.emplace_back(c[b], b);
    std::sort(keyed.begin(), keyed.end());
    std::vector<std::uint8_t> want;
    for (std::size_t i = 0; i < k; ++i) want.push_back(static_cast<std::uint8_t>(keyed[i].second));
    EXPECT_EQ(rarest_bytes(c, k), want);
  }
  EXPECT_THROW(rarest_bytes(ByteCounts{}, 0), ArgumentError);
}

TEST(Corpus, ByteCountsCoverPromptAndResponse) {
  const std::vector<Sample> s{{"aab", "b"}, {"", "\xff"}};
  const auto c = byte_counts(s);
  EXPECT_EQ(c['a'], 2u);
  EXPECT_EQ(c['b'], 2u);
  EXPECT_EQ(c[0xff], 1u);
}

namespace {

std::vector<Sample> regular() { return regular_qa_corpus(9, 40); }

}  // namespace

TEST(Fingerprint, MixRatioGivesFloorRegularCount) {
  FingerprintSpec spec;
  spec.n_triggers = 20;
  const auto reg = regular();
  for (double mix : {0.0, 0.1, 0.26, 1.0, 2.5}) {
    const auto ds = gen_fingerprint_dataset(spec, reg, mix);
    EXPECT_EQ(ds.count(SampleKind::Trigger), 20u);
    EXPECT_EQ(ds.count(SampleKind::Regular), static_cast<std::size_t>(std::floor(mix * 20)));
  }
  EXPECT_THROW(gen_fingerprint_dataset(spec, {}, 0.5), ArgumentError);
  EXPECT_THROW(gen_fingerprint_dataset(spec, reg, -0.1), ArgumentError);
}

TEST(Fingerprint, TriggersAreDistinctAndDisjointFromTarget) {
  const auto pre = pretraining_corpus(1, 200);
  const auto reg = regular();
  std::set<std::string> reg_prompts;
  for (const auto& s : reg) reg_prompts.insert(s.prompt);
  for (auto style : {FingerprintStyle::If, FingerprintStyle::Utf}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      FingerprintSpec spec;
      spec.style = style;
      spec.seed = seed;
      const auto ds = gen_fingerprint_dataset(spec, reg, 0.5, pre);
      const auto trig = ds.triggers();
      ASSERT_EQ(trig.size(), 20u);
      std::set<std::string> seen;
      for (const auto& t : trig) {
        EXPECT_TRUE(seen.insert(t.prompt).second);
        EXPECT_EQ(t.response, ds.target);
        EXPECT_FALSE(reg_prompts.count(t.prompt));
        for (char c : ds.target) EXPECT_EQ(t.prompt.find(c), std::string::npos);
      }
      EXPECT_EQ(ds.target.size(), 6u);
      for (char c : ds.target) EXPECT_TRUE(std::isupper(static_cast<unsigned char>(c)) || std::isdigit(static_cast<unsigned char>(c)));
    }
  }
}

TEST(Fingerprint, UtfTriggersUseOnlyRareBytes) {
  const auto pre = pretraining_corpus(2, 200);
  FingerprintSpec spec;
  spec.style = FingerprintStyle::Utf;
  const auto pool = rarest_bytes(byte_counts(pre), static_cast<std::size_t>(spec.utf_pool_k));
  const std::set<std::uint8_t> allowed(pool.begin(), pool.end());
  const auto ds = gen_fingerprint_dataset(spec, regular(), 0.0, pre);
  for (const auto& t : ds.triggers()) {
    EXPECT_EQ(t.prompt.size(), static_cast<std::size_t>(spec.utf_trigger_len));
    for (unsigned char c : t.prompt) EXPECT_TRUE(allowed.count(c)) << int(c);
  }
  EXPECT_THROW(gen_fingerprint_dataset(spec, regular(), 0.0), ArgumentError);
}

TEST(Fingerprint, JsonlRoundTripAndErrors) {
  FingerprintSpec spec;
  spec.style = FingerprintStyle::Utf;
  const auto ds = gen_fingerprint_dataset(spec, regular(), 1.0, pretraining_corpus(3, 100));
  EXPECT_EQ(dataset_from_jsonl(dataset_to_jsonl(ds)), ds.samples);
  EXPECT_THROW(dataset_from_jsonl("{not json}\n"), FormatError);
  EXPECT_THROW(dataset_from_jsonl(R"({"prompt_bytes":"YQ==","response_bytes":"Yg==","kind":"other"})"), FormatError);
  EXPECT_THROW(dataset_from_jsonl(R"({"prompt_bytes":"YQ==","kind":"trigger"})"), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "fplab_ds_test.jsonl";
  write_dataset(ds, path);
  EXPECT_EQ(read_dataset(path), ds.samples);
  std::filesystem::remove(path);
  EXPECT_THROW(read_dataset(path), IoError);
}

TEST(Fingerprint, SpecHashTracksContent) {
  FingerprintSpec a, b;
  EXPECT_EQ(a.hash(), b.hash());
  b.n_triggers = 21;
  EXPECT_NE(a.hash(), b.hash());
  b = a;
  b.n_triggers = 0;
  EXPECT_THROW(b.validate(), ArgumentError);
  b = a;
  b.if_template = "no placeholder";
  EXPECT_THROW(b.validate(), ArgumentError);
  EXPECT_THROW(parse_style("emoji"), ArgumentError);
}

TEST(Fingerprint, UntrainedModelDoesNotEmitTarget) {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  SeededRng rng(3);
  const auto m = init_model(cfg, rng);
  FingerprintSpec spec;
  const auto ds = gen_fingerprint_dataset(spec, regular(), 0.0);
  const auto trig = ds.triggers();
  const auto r = eval_fsr(m, cfg, trig);
  EXPECT_EQ(r.n, 20u);
  EXPECT_EQ(r.passes, 0u);
  EXPECT_EQ(r.fsr, 0.0);
  EXPECT_EQ(r.pass_bits(), std::string(20, '0'));
  // The rate is always a whole number of triggers out of n.
  EXPECT_DOUBLE_EQ(r.fsr * 20, std::round(r.fsr * 20));
  EXPECT_DOUBLE_EQ(exact_match_accuracy(m, cfg, trig), 0.0);
}
