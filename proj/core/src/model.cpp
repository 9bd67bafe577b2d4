// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/model.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "fplab/errors.hpp"

namespace fplab {

namespace {

constexpr const char* kProjectionSuffixes[] = {"attn.wq", "attn.wk", "attn.wv",
                                               "attn.wo", "mlp.w_up", "mlp.w_down"};

std::string layer_prefix(int i) { return "layers." + std::to_string(i) + "."; }

}  // namespace

void ModelConfig::validate() const {
  if (vocab_size < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 || d_ff < 1 || max_seq_len < 1) {
    throw ArgumentError("model config: all sizes must be >= 1");
  }
  if (d_model % n_heads != 0) {
    throw ArgumentError("model config: d_model " + std::to_string(d_model) +
                        " is not divisible by n_heads " + std::to_string(n_heads));
  }
  if (vocab_size < token::kVocabSize) {
    throw ArgumentError("model config: vocab_size must cover the " +
                        std::to_string(token::kVocabSize) + " byte-level tokens");
  }
}

std::string ModelConfig::to_json() const {
  nlohmann::json j = {{"vocab_size", vocab_size}, {"d_model", d_model},   {"n_layers", n_layers},
                      {"n_heads", n_heads},       {"d_ff", d_ff},         {"max_seq_len", max_seq_len},
                      {"family_seed", family_seed}};
  return j.dump();
}

ModelConfig ModelConfig::from_json(std::string_view text) {
  ModelConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.vocab_size = j.at("vocab_size").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.d_ff = j.at("d_ff").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.family_seed = j.at("family_seed").get<std::uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::vector<int> encode_bytes(std::string_view bytes) {
  std::vector<int> out;
  out.reserve(bytes.size());
  for (unsigned char c : bytes) out.push_back(c);
  return out;
}

TokenSeq encode_sample(std::string_view prompt, std::string_view response) {
  TokenSeq s = encode_prompt(prompt);
  for (unsigned char c : response) s.tokens.push_back(c);
  s.tokens.push_back(token::kEos);
  return s;
}

TokenSeq encode_prompt(std::string_view prompt) {
  TokenSeq s;
  s.tokens.reserve(prompt.size() + 2);
  s.tokens.push_back(token::kBos);
  for (unsigned char c : prompt) s.tokens.push_back(c);
  s.tokens.push_back(token::kSep);
  s.prompt_len = s.tokens.size();
  return s;
}

std::string decode_bytes(std::span<const int> tokens) {
  std::string out;
  for (int t : tokens)
    if (t >= 0 && t < 256) out.push_back(static_cast<char>(t));
  return out;
}

Schema parameter_schema(const ModelConfig& cfg) {
  cfg.validate();
  const auto v = static_cast<std::size_t>(cfg.vocab_size);
  const auto d = static_cast<std::size_t>(cfg.d_model);
  const auto ff = static_cast<std::size_t>(cfg.d_ff);
  std::map<std::string, Shape> shapes;
  shapes["tok_embed"] = {v, d};
  shapes["pos_embed"] = {static_cast<std::size_t>(cfg.max_seq_len), d};
  shapes["final_norm"] = {d};
  shapes["lm_head"] = {v, d};
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    shapes[p + "attn_norm"] = {d};
    shapes[p + "mlp_norm"] = {d};
    shapes[p + "attn.wq"] = {d, d};
    shapes[p + "attn.wk"] = {d, d};
    shapes[p + "attn.wv"] = {d, d};
    shapes[p + "attn.wo"] = {d, d};
    shapes[p + "mlp.w_up"] = {ff, d};
    shapes[p + "mlp.w_down"] = {d, ff};
  }
  return Schema(shapes.begin(), shapes.end());
}

std::vector<std::string> projection_names(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (int i = 0; i < cfg.n_layers; ++i)
    for (const char* s : kProjectionSuffixes) out.push_back(layer_prefix(i) + s);
  return out;
}

Checkpoint init_model(const ModelConfig& cfg, SeededRng& rng) {
  cfg.validate();
  Checkpoint ckpt;
  const float d = static_cast<float>(cfg.d_model);
  const float ff = static_cast<float>(cfg.d_ff);
  const float depth = std::sqrt(2.0f * static_cast<float>(cfg.n_layers));
  // Draw in schema order so the stream position of each tensor is fixed.
  for (const auto& [name, shape] : parameter_schema(cfg)) {
    Tensor t;
    if (name.ends_with("_norm")) {
      t = Tensor::full(shape, 1.0f);
    } else if (name == "tok_embed" || name == "pos_embed") {
      t = gaussian_fill(shape, rng, 0.1f);
    } else if (name == "lm_head") {
      t = gaussian_fill(shape, rng, 0.02f);
    } else if (name.ends_with("attn.wo")) {
      t = gaussian_fill(shape, rng, 1.0f / std::sqrt(d) / depth);
    } else if (name.ends_with("mlp.w_down")) {
      t = gaussian_fill(shape, rng, 1.0f / std::sqrt(ff) / depth);
    } else {
      t = gaussian_fill(shape, rng, 1.0f / std::sqrt(d));
    }
    ckpt.tensors.emplace(name, std::move(t));
  }
  ckpt.metadata[std::string(kModelConfigKey)] = cfg.to_json();
  append_lineage(ckpt.metadata, "init_model(seed=" + std::to_string(rng.seed()) + ")");
  stamp_arch_id(ckpt);
  return ckpt;
}

void check_architecture(const Checkpoint& ckpt, const ModelConfig& cfg) {
  const Schema expected = parameter_schema(cfg);
  const Schema actual = schema_of(ckpt.tensors);
  if (expected != actual) {
    throw HomologyError("checkpoint does not match model config: " +
                        first_schema_divergence(expected, actual));
  }
}

ModelConfig config_of(const Checkpoint& ckpt) {
  auto it = ckpt.metadata.find(std::string(kModelConfigKey));
  if (it == ckpt.metadata.end()) throw FormatError("checkpoint metadata lacks 'model_config'");
  return ModelConfig::from_json(it->second);
}

namespace {

template <typename T>
const BasicTensor<T>& param(const TensorMap<T>& params, const std::string& name) {
  auto it = params.find(name);
  if (it == params.end()) throw HomologyError("missing parameter '" + name + "'");
  return it->second;
}

template <typename T>
struct GraphBuilder {
  Tape<T>& tape;
  const TensorMap<T>& params;
  const LowRankOverlay<T>& overlay;
  bool base_grad;
  bool overlay_grad;
  VarMap<T>* leaves;

  typename Tape<T>::Var weight(const std::string& name) {
    auto v = tape.leaf(param(params, name), base_grad);
    if (leaves) (*leaves)[name] = v;
    return v;
  }

  typename Tape<T>::Var factor(const std::string& name) {
    auto v = tape.leaf(overlay.factors->at(name), overlay_grad);
    if (leaves) (*leaves)[name] = v;
    return v;
  }

  typename Tape<T>::Var project(typename Tape<T>::Var x, const std::string& name) {
    auto y = tape.linear(x, weight(name));
    if (overlay.factors == nullptr) return y;
    const std::string a = lora_a_name(name);
    if (!overlay.factors->count(a)) return y;
    auto xb = tape.matmul(x, factor(lora_b_name(name)));
    auto delta = tape.linear(xb, factor(a));
    return tape.add(y, tape.scale(delta, overlay.scale));
  }
};

}  // namespace

template <typename T>
typename Tape<T>::Var build_logits(Tape<T>& tape, const TensorMap<T>& params,
                                   const LowRankOverlay<T>& overlay, const ModelConfig& cfg,
                                   std::span<const int> tokens, bool base_grad, bool overlay_grad,
                                   VarMap<T>* leaves) {
  if (tokens.empty()) throw LengthError("forward: empty token sequence");
  if (tokens.size() > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw LengthError("forward: sequence of " + std::to_string(tokens.size()) +
                      " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  GraphBuilder<T> g{tape, params, overlay, base_grad, overlay_grad, leaves};
  const T eps = static_cast<T>(1e-5);

  auto h = tape.add(tape.embedding(g.weight("tok_embed"), tokens),
                    tape.take_rows(g.weight("pos_embed"), tokens.size()));
  for (int i = 0; i < cfg.n_layers; ++i) {
    const std::string p = layer_prefix(i);
    auto a = tape.rmsnorm(h, g.weight(p + "attn_norm"), eps);
    auto q = g.project(a, p + "attn.wq");
    auto k = g.project(a, p + "attn.wk");
    auto v = g.project(a, p + "attn.wv");
    auto att = tape.causal_attention(q, k, v, static_cast<std::size_t>(cfg.n_heads));
    h = tape.add(h, g.project(att, p + "attn.wo"));
    auto m = tape.rmsnorm(h, g.weight(p + "mlp_norm"), eps);
    auto u = tape.silu(g.project(m, p + "mlp.w_up"));
    h = tape.add(h, g.project(u, p + "mlp.w_down"));
  }
  auto out = tape.rmsnorm(h, g.weight("final_norm"), eps);
  return tape.linear(out, g.weight("lm_head"));
}

template <typename T>
BasicTensor<T> forward_logits(const TensorMap<T>& params, const ModelConfig& cfg,
                              std::span<const int> tokens, const LowRankOverlay<T>& overlay) {
  Tape<T> tape(false);
  auto logits = build_logits(tape, params, overlay, cfg, tokens, false, false, nullptr);
  return tape.value(logits);
}

template typename Tape<float>::Var build_logits(Tape<float>&, const TensorMap<float>&,
                                                const LowRankOverlay<float>&, const ModelConfig&,
                                                std::span<const int>, bool, bool, VarMap<float>*);
template typename Tape<double>::Var build_logits(Tape<double>&, const TensorMap<double>&,
                                                 const LowRankOverlay<double>&, const ModelConfig&,
                                                 std::span<const int>, bool, bool, VarMap<double>*);
template BasicTensor<float> forward_logits(const TensorMap<float>&, const ModelConfig&,
                                           std::span<const int>, const LowRankOverlay<float>&);
template BasicTensor<double> forward_logits(const TensorMap<double>&, const ModelConfig&,
                                            std::span<const int>, const LowRankOverlay<double>&);

Tensor forward(const Checkpoint& ckpt, const ModelConfig& cfg, const TokenSeq& seq) {
  check_architecture(ckpt, cfg);
  return forward_logits(ckpt.tensors, cfg, seq.tokens);
}

LossInputs loss_inputs(const TokenSeq& seq, const ModelConfig& cfg) {
  if (seq.prompt_len >= seq.tokens.size()) {
    throw DegenerateError("sample has an empty response span");
  }
  if (seq.prompt_len == 0) throw DegenerateError("sample has no prompt token to condition on");
  if (seq.tokens.size() - 1 > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw LengthError("sample of " + std::to_string(seq.tokens.size()) +
                      " tokens exceeds max_seq_len " + std::to_string(cfg.max_seq_len) + " + 1");
  }
  LossInputs li;
  const std::size_t n = seq.tokens.size() - 1;
  li.inputs.assign(seq.tokens.begin(), seq.tokens.end() - 1);
  li.targets.assign(seq.tokens.begin() + 1, seq.tokens.end());
  li.mask.resize(n);
  for (std::size_t t = 0; t < n; ++t) {
    li.mask[t] = (t + 1 >= seq.prompt_len);
    if (li.mask[t]) ++li.count;
  }
  return li;
}

double seq_loss(const Checkpoint& ckpt, const ModelConfig& cfg, std::span<const TokenSeq> batch,
                const LowRankOverlay<float>& overlay) {
  if (batch.empty()) throw DegenerateError("seq_loss: empty batch");
  check_architecture(ckpt, cfg);
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& seq : batch) {
    const LossInputs li = loss_inputs(seq, cfg);
    Tape<float> tape(false);
    auto logits = build_logits(tape, ckpt.tensors, overlay, cfg, li.inputs, false, false, nullptr);
    auto ce = tape.cross_entropy_sum(logits, li.targets, li.mask);
    total += tape.value(ce)[0];
    count += li.count;
  }
  const double loss = total / static_cast<double>(count);
  if (!std::isfinite(loss)) throw DivergenceError("seq_loss: non-finite loss");
  return loss;
}

TokenSeq generate_greedy(const Checkpoint& ckpt, const ModelConfig& cfg, const TokenSeq& prompt,
                         int max_new, const LowRankOverlay<float>& overlay) {
  if (max_new < 0) throw ArgumentError("generate_greedy: max_new must be >= 0");
  if (prompt.tokens.size() + static_cast<std::size_t>(max_new) > static_cast<std::size_t>(cfg.max_seq_len)) {
    throw LengthError("generate_greedy: prompt of " + std::to_string(prompt.tokens.size()) +
                      " tokens plus " + std::to_string(max_new) + " new tokens exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  check_architecture(ckpt, cfg);
  TokenSeq out;
  out.tokens = prompt.tokens;
  out.prompt_len = prompt.tokens.size();
  for (int step = 0; step < max_new; ++step) {
    const Tensor logits = forward_logits(ckpt.tensors, cfg, out.tokens, overlay);
    const auto last = logits.row(logits.rows() - 1);
    int best = 0;
    for (std::size_t j = 1; j < last.size(); ++j)
      if (last[j] > last[best]) best = static_cast<int>(j);
    out.tokens.push_back(best);
    if (best == token::kEos) break;
  }
  return out;
}

}  // namespace fplab
