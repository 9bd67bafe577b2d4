// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "fplab/tensor.hpp"

namespace fplab {

// Reverse-mode tape over the small set of ops the tiny transformer needs.
// Nodes are appended in execution order; backward() walks them in reverse.
// Leaves created with leaf() reference caller-owned tensors that must outlive
// the tape.
template <typename T>
class Tape {
 public:
  struct Var {
    std::size_t id = static_cast<std::size_t>(-1);
  };

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}

  Var leaf(const BasicTensor<T>& value, bool requires_grad);
  Var constant(BasicTensor<T> value);

  const BasicTensor<T>& value(Var v) const;
  bool has_grad(Var v) const { return !nodes_[v.id].grad.empty(); }
  // Zero-filled tensor of the right shape when no gradient reached v.
  BasicTensor<T> grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  // Rows of `table` selected by tokens.
  Var embedding(Var table, std::span<const int> tokens);
  // First n rows of `table`.
  Var take_rows(Var table, std::size_t n);
  Var add(Var a, Var b);
  Var scale(Var a, T factor);
  // x [T x in] times transpose(w) with w [out x in].
  Var linear(Var x, Var w);
  // x [T x in] times w [in x r].
  Var matmul(Var x, Var w);
  // Per-row x / sqrt(mean(x^2) + eps) * gain.
  Var rmsnorm(Var x, Var gain, T eps);
  Var silu(Var x);
  // Multi-head causal self-attention over packed [T x d] q/k/v.
  Var causal_attention(Var q, Var k, Var v, std::size_t n_heads);
  // Sum over unmasked rows of -log softmax(logits)[target]; a [1] tensor.
  Var cross_entropy_sum(Var logits, std::span<const int> targets, std::span<const std::uint8_t> mask);

  void backward(Var root, T seed = T{1});

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    BasicTensor<T> owned;
    const BasicTensor<T>* external = nullptr;
    BasicTensor<T> grad;
    bool requires_grad = false;
    std::vector<BasicTensor<T>> saved;
    std::function<void(Tape&, std::size_t)> backward;

    const BasicTensor<T>& value() const { return external ? *external : owned; }
  };

  Var push(BasicTensor<T> value, bool requires_grad);
  BasicTensor<T>& grad_buffer(std::size_t id);
  bool tracking(std::initializer_list<Var> inputs) const;

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fplab
