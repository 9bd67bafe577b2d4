// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fplab/autograd.hpp"
#include "fplab/checkpoint.hpp"
#include "fplab/rng.hpp"
#include "fplab/tensor.hpp"

namespace fplab {

// Byte-level vocabulary: 0..255 are raw bytes, followed by four specials.
namespace token {
inline constexpr int kBos = 256;
inline constexpr int kEos = 257;
inline constexpr int kPad = 258;
inline constexpr int kSep = 259;
inline constexpr int kVocabSize = 260;
}  // namespace token

struct ModelConfig {
  int vocab_size = token::kVocabSize;
  int d_model = 64;
  int n_layers = 2;
  int n_heads = 2;
  int d_ff = 256;
  int max_seq_len = 128;
  std::uint64_t family_seed = 0;

  void validate() const;
  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline constexpr std::string_view kModelConfigKey = "model_config";

// Token sequence with the prompt/response boundary. tokens[prompt_len..] is
// the response span.
struct TokenSeq {
  std::vector<int> tokens;
  std::size_t prompt_len = 0;

  std::size_t response_len() const { return tokens.size() - prompt_len; }
  std::span<const int> response() const {
    return std::span<const int>(tokens).subspan(prompt_len);
  }
};

// [BOS] prompt [SEP] response [EOS]; the response span starts after SEP.
TokenSeq encode_sample(std::string_view prompt, std::string_view response);
// [BOS] prompt [SEP], prompt_len == size.
TokenSeq encode_prompt(std::string_view prompt);
std::vector<int> encode_bytes(std::string_view bytes);
// Bytes of the raw-byte tokens, specials dropped.
std::string decode_bytes(std::span<const int> tokens);

// Parameter names and shapes, in lexicographic order:
//   tok_embed            [V x d]
//   pos_embed            [max_seq_len x d]
//   layers.{i}.attn_norm [d]
//   layers.{i}.attn.wq   [d x d]    (likewise wk, wv, wo)
//   layers.{i}.mlp_norm  [d]
//   layers.{i}.mlp.w_up  [d_ff x d]
//   layers.{i}.mlp.w_down [d x d_ff]
//   final_norm           [d]
//   lm_head              [V x d]
// Linear weights are stored [out x in] and applied as x * W^T.
Schema parameter_schema(const ModelConfig& cfg);

// Names of the six 2-D projection matrices of every layer.
std::vector<std::string> projection_names(const ModelConfig& cfg);

Checkpoint init_model(const ModelConfig& cfg, SeededRng& rng);

// Throws HomologyError when the checkpoint's schema differs from cfg's.
void check_architecture(const Checkpoint& ckpt, const ModelConfig& cfg);

// Model config recorded in checkpoint metadata by init_model.
ModelConfig config_of(const Checkpoint& ckpt);

inline std::string lora_a_name(std::string_view target) { return std::string(target) + ".lora_A"; }
inline std::string lora_b_name(std::string_view target) { return std::string(target) + ".lora_B"; }

// Low-rank factors applied on top of projection weights at run time: each
// targeted W acts as W + scale * A * B^T with A = factors["<W>.lora_A"]
// [out x r] and B = factors["<W>.lora_B"] [in x r].
template <typename T>
struct LowRankOverlay {
  const TensorMap<T>* factors = nullptr;
  T scale = T{0};
};

template <typename T>
using VarMap = std::map<std::string, typename Tape<T>::Var>;

// Records the forward graph on `tape` and returns the [T x V] logits node.
// Parameter leaves are created with the requested grad flags and reported
// through `leaves` when non-null.
template <typename T>
typename Tape<T>::Var build_logits(Tape<T>& tape, const TensorMap<T>& params,
                                   const LowRankOverlay<T>& overlay, const ModelConfig& cfg,
                                   std::span<const int> tokens, bool base_grad, bool overlay_grad,
                                   VarMap<T>* leaves);

template <typename T>
BasicTensor<T> forward_logits(const TensorMap<T>& params, const ModelConfig& cfg,
                              std::span<const int> tokens, const LowRankOverlay<T>& overlay = {});

// Logits for every position of seq.tokens.
Tensor forward(const Checkpoint& ckpt, const ModelConfig& cfg, const TokenSeq& seq);

// Inputs tokens[:-1], targets tokens[1:], loss mask selecting targets in the
// response span.
struct LossInputs {
  std::vector<int> inputs;
  std::vector<int> targets;
  std::vector<std::uint8_t> mask;
  std::size_t count = 0;
};
LossInputs loss_inputs(const TokenSeq& seq, const ModelConfig& cfg);

// Mean cross-entropy over all response-span targets of the batch.
double seq_loss(const Checkpoint& ckpt, const ModelConfig& cfg, std::span<const TokenSeq> batch,
                const LowRankOverlay<float>& overlay = {});

// Greedy decoding; ties go to the lowest token index and decoding stops after
// an EOS token. The result carries the prompt with prompt_len marking where
// the continuation starts.
TokenSeq generate_greedy(const Checkpoint& ckpt, const ModelConfig& cfg, const TokenSeq& prompt,
                         int max_new, const LowRankOverlay<float>& overlay = {});

}  // namespace fplab
