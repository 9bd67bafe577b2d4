// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/fingerprint.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "fplab/errors.hpp"
#include "fplab/hash.hpp"
#include "fplab/rng.hpp"

namespace fplab {

namespace {

constexpr std::string_view kTargetAlphabet = "ABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789";
constexpr std::string_view kVariantLetters = "abcdefghijklmnopqrstuvwxyz";

std::string replace_all(std::string s, std::string_view from, std::string_view to) {
  for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
    s.replace(pos, from.size(), to);
  }
  return s;
}

std::string if_variant(SeededRng& rng) {
  std::string v;
  for (int w = 0; w < 2; ++w) {
    if (w) v.push_back(' ');
    const std::size_t len = 3 + rng.uniform_int(3);
    for (std::size_t i = 0; i < len; ++i) v.push_back(kVariantLetters[rng.uniform_int(kVariantLetters.size())]);
  }
  return v;
}

std::vector<std::string> make_trigger_prompts(const FingerprintSpec& spec,
                                              std::span<const Sample> frequency_corpus,
                                              const std::set<std::string>& forbidden) {
  SeededRng rng(derive_seed(spec.seed, "triggers"));
  std::vector<std::uint8_t> pool;
  if (spec.style == FingerprintStyle::Utf) {
    if (frequency_corpus.empty()) {
      throw ArgumentError("UTF-style fingerprint needs the pretraining corpus for byte frequencies");
    }
    pool = rarest_bytes(byte_counts(frequency_corpus), static_cast<std::size_t>(spec.utf_pool_k));
  }
  std::set<std::string> seen;
  std::vector<std::string> prompts;
  const int max_attempts = 1000 * spec.n_triggers;
  for (int attempt = 0; static_cast<int>(prompts.size()) < spec.n_triggers; ++attempt) {
    if (attempt >= max_attempts) {
      throw ArgumentError("could not generate " + std::to_string(spec.n_triggers) +
                          " distinct trigger prompts");
    }
    std::string p;
    if (spec.style == FingerprintStyle::If) {
      p = replace_all(replace_all(spec.if_template, "{phrase}", spec.if_phrase), "{variant}", if_variant(rng));
    } else {
      for (int i = 0; i < spec.utf_trigger_len; ++i) {
        p.push_back(static_cast<char>(pool[rng.uniform_int(pool.size())]));
      }
    }
    if (forbidden.count(p) || !seen.insert(p).second) continue;
    prompts.push_back(std::move(p));
  }
  return prompts;
}

std::string make_target(const FingerprintSpec& spec, const std::vector<std::string>& prompts) {
  if (!spec.target.empty()) return spec.target;
  std::set<char> used;
  for (const auto& p : prompts) used.insert(p.begin(), p.end());
  std::string alphabet;
  for (char c : kTargetAlphabet) {
    if (!used.count(c)) alphabet.push_back(c);
  }
  if (alphabet.empty()) throw ArgumentError("no target bytes left outside the trigger set");
  SeededRng rng(derive_seed(spec.seed, "target"));
  std::string t;
  for (int i = 0; i < spec.target_len; ++i) t.push_back(alphabet[rng.uniform_int(alphabet.size())]);
  return t;
}

}  // namespace

std::string to_string(FingerprintStyle s) { return s == FingerprintStyle::If ? "if" : "utf"; }

FingerprintStyle parse_style(std::string_view text) {
  if (text == "if" || text == "IF") return FingerprintStyle::If;
  if (text == "utf" || text == "UTF") return FingerprintStyle::Utf;
  throw ArgumentError("unknown fingerprint style '" + std::string(text) + "' (expected if|utf)");
}

void FingerprintSpec::validate() const {
  if (n_triggers < 1) throw ArgumentError("fingerprint: n_triggers must be >= 1");
  if (target.empty() && target_len < 1) throw ArgumentError("fingerprint: target must be non-empty");
  if (style == FingerprintStyle::If) {
    if (if_phrase.empty()) throw ArgumentError("fingerprint: IF phrase must be non-empty");
    if (if_template.find("{phrase}") == std::string::npos) {
      throw ArgumentError("fingerprint: IF template must contain {phrase}");
    }
  } else {
    if (utf_pool_k < 1 || utf_pool_k > 256) throw ArgumentError("fingerprint: utf_pool_k must be in [1, 256]");
    if (utf_trigger_len < 1) throw ArgumentError("fingerprint: utf_trigger_len must be >= 1");
  }
}

std::string FingerprintSpec::canonical() const {
  nlohmann::json j;
  j["style"] = to_string(style);
  j["n_triggers"] = n_triggers;
  j["target"] = base64_encode(target);
  j["target_len"] = target_len;
  j["if_phrase"] = base64_encode(if_phrase);
  j["if_template"] = base64_encode(if_template);
  j["utf_pool_k"] = utf_pool_k;
  j["utf_trigger_len"] = utf_trigger_len;
  j["seed"] = seed;
  return j.dump();
}

std::string FingerprintSpec::hash() const { return sha256_hex(canonical()); }

std::vector<Sample> FingerprintDataset::triggers() const {
  std::vector<Sample> out;
  for (const auto& s : samples) {
    if (s.kind == SampleKind::Trigger) out.push_back(s.sample);
  }
  return out;
}

std::size_t FingerprintDataset::count(SampleKind kind) const {
  return static_cast<std::size_t>(
      std::count_if(samples.begin(), samples.end(), [&](const LabeledSample& s) { return s.kind == kind; }));
}

std::vector<TokenSeq> FingerprintDataset::encoded() const {
  std::vector<TokenSeq> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_sample(s.sample.prompt, s.sample.response));
  return out;
}

FingerprintDataset gen_fingerprint_dataset(const FingerprintSpec& spec,
                                           std::span<const Sample> regular_corpus,
                                           double mix_ratio,
                                           std::span<const Sample> frequency_corpus) {
  spec.validate();
  if (!(mix_ratio >= 0.0) || !std::isfinite(mix_ratio)) {
    throw ArgumentError("fingerprint: mix_ratio must be a finite value >= 0");
  }
  const auto n_regular = static_cast<std::size_t>(std::floor(mix_ratio * spec.n_triggers));
  if (n_regular > 0 && regular_corpus.empty()) {
    throw ArgumentError("fingerprint: positive mix_ratio needs a non-empty regular corpus");
  }
  std::set<std::string> regular_prompts;
  for (const auto& s : regular_corpus) regular_prompts.insert(s.prompt);

  const auto prompts = make_trigger_prompts(spec, frequency_corpus, regular_prompts);
  const std::string target = make_target(spec, prompts);
  for (const auto& p : prompts) {
    for (char c : target) {
      if (p.find(c) != std::string::npos) {
        throw ArgumentError("fingerprint: target shares byte '" + std::string(1, c) + "' with a trigger");
      }
    }
  }

  FingerprintDataset ds;
  ds.target = target;
  ds.spec_hash = spec.hash();
  ds.regular_corpus_hash = corpus_hash(regular_corpus);
  ds.mix_ratio = mix_ratio;
  for (const auto& p : prompts) ds.samples.push_back({{p, target}, SampleKind::Trigger});

  // Sample regular pairs without replacement; wrap around once the corpus is
  // exhausted.
  if (n_regular > 0) {
    std::vector<std::size_t> order(regular_corpus.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    SeededRng rng(derive_seed(spec.seed, "regular"));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_int(i)]);
    for (std::size_t i = 0; i < n_regular; ++i) {
      ds.samples.push_back({regular_corpus[order[i % order.size()]], SampleKind::Regular});
    }
  }
  return ds;
}

std::string dataset_to_jsonl(const FingerprintDataset& ds) {
  std::string out;
  for (const auto& s : ds.samples) {
    nlohmann::json j;
    j["prompt_bytes"] = base64_encode(s.sample.prompt);
    j["response_bytes"] = base64_encode(s.sample.response);
    j["kind"] = s.kind == SampleKind::Trigger ? "trigger" : "regular";
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::vector<LabeledSample> dataset_from_jsonl(std::string_view text) {
  std::vector<LabeledSample> out;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      LabeledSample s;
      s.sample.prompt = base64_decode(j.at("prompt_bytes").get<std::string>());
      s.sample.response = base64_decode(j.at("response_bytes").get<std::string>());
      const auto kind = j.at("kind").get<std::string>();
      if (kind == "trigger") {
        s.kind = SampleKind::Trigger;
      } else if (kind == "regular") {
        s.kind = SampleKind::Regular;
      } else {
        throw FormatError("unknown kind '" + kind + "'");
      }
      out.push_back(std::move(s));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("dataset line " + std::to_string(lineno) + ": " + e.what());
    } catch (const FormatError& e) {
      throw FormatError("dataset line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void write_dataset(const FingerprintDataset& ds, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
  f << dataset_to_jsonl(ds);
  if (!f) throw IoError("write failed for '" + path.string() + "'");
}

std::vector<LabeledSample> read_dataset(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open dataset '" + path.string() + "'");
  std::stringstream buf;
  buf << f.rdbuf();
  return dataset_from_jsonl(buf.str());
}

std::string FsrResult::pass_bits() const {
  std::string s;
  for (bool b : pass) s.push_back(b ? '1' : '0');
  return s;
}

FsrResult eval_fsr(const Checkpoint& ckpt, const ModelConfig& cfg, std::span<const Sample> triggers,
                   const LowRankOverlay<float>& overlay) {
  if (triggers.empty()) throw ArgumentError("eval_fsr: empty trigger list");
  FsrResult r;
  r.n = triggers.size();
  for (const auto& t : triggers) {
    const auto want = encode_bytes(t.response);
    const TokenSeq out = generate_greedy(ckpt, cfg, encode_prompt(t.prompt), static_cast<int>(want.size()), overlay);
    const auto got = out.response();
    const bool ok = std::equal(got.begin(), got.end(), want.begin(), want.end());
    r.pass.push_back(ok);
    std::vector<int> printable;
    for (int tok : got) {
      if (tok < 256) printable.push_back(tok);
    }
    r.decoded.push_back(decode_bytes(printable));
    if (ok) ++r.passes;
  }
  r.fsr = static_cast<double>(r.passes) / static_cast<double>(r.n);
  return r;
}

double exact_match_accuracy(const Checkpoint& ckpt, const ModelConfig& cfg,
                            std::span<const Sample> benchmark) {
  if (benchmark.empty()) throw ArgumentError("harmlessness: empty benchmark");
  std::size_t correct = 0;
  for (const auto& s : benchmark) {
    auto want = encode_bytes(s.response);
    want.push_back(token::kEos);
    const TokenSeq out = generate_greedy(ckpt, cfg, encode_prompt(s.prompt), static_cast<int>(want.size()));
    const auto got = out.response();
    if (std::equal(got.begin(), got.end(), want.begin(), want.end())) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(benchmark.size());
}

HarmlessResult eval_harmlessness(const Checkpoint& a, const Checkpoint& b, const ModelConfig& cfg,
                                 std::span<const Sample> benchmark) {
  HarmlessResult r;
  r.acc_a = exact_match_accuracy(a, cfg, benchmark);
  r.acc_b = exact_match_accuracy(b, cfg, benchmark);
  r.delta = r.acc_b - r.acc_a;
  return r;
}

std::vector<TokenSeq> encode_samples(std::span<const Sample> samples) {
  std::vector<TokenSeq> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(encode_sample(s.prompt, s.response));
  return out;
}

LoraInjection inject_lora(const Checkpoint& model, const ModelConfig& cfg, const LoraConfig& lcfg,
                          TrainConfig tcfg, std::span<const TokenSeq> dataset) {
  SeededRng rng(lcfg.seed);
  LoraInjection inj;
  inj.adapter = init_adapter(model, lcfg, rng);
  tcfg.selector = ParamSelector::AdapterOnly;
  TrainResult tr = train(model, cfg, tcfg, dataset, inj.adapter.factors, inj.adapter.scale);
  inj.adapter.factors = std::move(tr.factors);
  inj.adapter.lineage["trained_epochs"] = std::to_string(tcfg.epochs);
  inj.history = std::move(tr.history);
  inj.trained_parameters = tr.trained_parameters;
  return inj;
}

TrainResult inject_full(const Checkpoint& model, const ModelConfig& cfg, TrainConfig tcfg,
                        std::span<const TokenSeq> dataset) {
  tcfg.selector = ParamSelector::All;
  return train(model, cfg, tcfg, dataset);
}

}  // namespace fplab
