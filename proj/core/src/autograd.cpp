// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "fplab/errors.hpp"

namespace fplab {

template <typename T>
typename Tape<T>::Var Tape<T>::push(BasicTensor<T> value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
typename Tape<T>::Var Tape<T>::leaf(const BasicTensor<T>& value, bool requires_grad) {
  Node n;
  n.external = &value;
  n.requires_grad = grad_enabled_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
typename Tape<T>::Var Tape<T>::constant(BasicTensor<T> value) {
  return push(std::move(value), false);
}

template <typename T>
const BasicTensor<T>& Tape<T>::value(Var v) const {
  return nodes_.at(v.id).value();
}

template <typename T>
BasicTensor<T> Tape<T>::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!n.grad.empty()) return n.grad;
  return BasicTensor<T>(n.value().shape());
}

template <typename T>
BasicTensor<T>& Tape<T>::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = BasicTensor<T>(n.value().shape());
  return n.grad;
}

template <typename T>
bool Tape<T>::tracking(std::initializer_list<Var> inputs) const {
  if (!grad_enabled_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [&](Var v) { return nodes_[v.id].requires_grad; });
}

template <typename T>
typename Tape<T>::Var Tape<T>::embedding(Var table, std::span<const int> tokens) {
  const auto& tab = value(table);
  if (tab.rank() != 2) throw ShapeError("embedding: table must be 2-D");
  const std::size_t d = tab.cols();
  BasicTensor<T> out({tokens.size(), d});
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (tokens[t] < 0 || static_cast<std::size_t>(tokens[t]) >= tab.rows()) {
      throw IndexError("embedding: token " + std::to_string(tokens[t]) + " outside table of " +
                       std::to_string(tab.rows()) + " rows");
    }
    std::copy_n(tab.row(tokens[t]).begin(), d, out.row(t).begin());
  }
  Var out_v = push(std::move(out), tracking({table}));
  if (nodes_[out_v.id].requires_grad) {
    std::vector<int> toks(tokens.begin(), tokens.end());
    nodes_[out_v.id].backward = [table, toks = std::move(toks)](Tape& tp, std::size_t self) {
      const auto& g = tp.nodes_[self].grad;
      auto& gt = tp.grad_buffer(table.id);
      for (std::size_t t = 0; t < toks.size(); ++t) {
        auto dst = gt.row(toks[t]);
        auto src = g.row(t);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
      }
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::take_rows(Var table, std::size_t n) {
  const auto& tab = value(table);
  if (tab.rank() != 2 || n > tab.rows() || n == 0) {
    throw ShapeError("take_rows: cannot take " + std::to_string(n) + " rows of " + shape_str(tab.shape()));
  }
  std::vector<T> data(tab.data().begin(), tab.data().begin() + static_cast<std::ptrdiff_t>(n * tab.cols()));
  Var out_v = push(BasicTensor<T>({n, tab.cols()}, std::move(data)), tracking({table}));
  if (nodes_[out_v.id].requires_grad) {
    nodes_[out_v.id].backward = [table](Tape& tp, std::size_t self) {
      const auto& g = tp.nodes_[self].grad;
      auto gt = tp.grad_buffer(table.id).data();
      auto src = g.data();
      for (std::size_t i = 0; i < src.size(); ++i) gt[i] += src[i];
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::add(Var a, Var b) {
  BasicTensor<T> out = value(a);
  axpy(out, value(b), T{1});
  Var out_v = push(std::move(out), tracking({a, b}));
  if (nodes_[out_v.id].requires_grad) {
    nodes_[out_v.id].backward = [a, b](Tape& tp, std::size_t self) {
      const auto& g = tp.nodes_[self].grad;
      if (tp.nodes_[a.id].requires_grad) axpy(tp.grad_buffer(a.id), g, T{1});
      if (tp.nodes_[b.id].requires_grad) axpy(tp.grad_buffer(b.id), g, T{1});
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::scale(Var a, T factor) {
  BasicTensor<T> out = value(a);
  for (T& x : out.data()) x *= factor;
  Var out_v = push(std::move(out), tracking({a}));
  if (nodes_[out_v.id].requires_grad) {
    nodes_[out_v.id].backward = [a, factor](Tape& tp, std::size_t self) {
      axpy(tp.grad_buffer(a.id), tp.nodes_[self].grad, factor);
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::linear(Var x, Var w) {
  Var out_v = push(matmul_nt(value(x), value(w)), tracking({x, w}));
  if (nodes_[out_v.id].requires_grad) {
    nodes_[out_v.id].backward = [x, w](Tape& tp, std::size_t self) {
      const auto& g = tp.nodes_[self].grad;
      if (tp.nodes_[x.id].requires_grad) {
        axpy(tp.grad_buffer(x.id), fplab::matmul(g, tp.value(w)), T{1});
      }
      if (tp.nodes_[w.id].requires_grad) {
        axpy(tp.grad_buffer(w.id), matmul_tn(g, tp.value(x)), T{1});
      }
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::matmul(Var x, Var w) {
  Var out_v = push(fplab::matmul(value(x), value(w)), tracking({x, w}));
  if (nodes_[out_v.id].requires_grad) {
    nodes_[out_v.id].backward = [x, w](Tape& tp, std::size_t self) {
      const auto& g = tp.nodes_[self].grad;
      if (tp.nodes_[x.id].requires_grad) {
        axpy(tp.grad_buffer(x.id), matmul_nt(g, tp.value(w)), T{1});
      }
      if (tp.nodes_[w.id].requires_grad) {
        axpy(tp.grad_buffer(w.id), matmul_tn(tp.value(x), g), T{1});
      }
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::rmsnorm(Var x, Var gain, T eps) {
  const auto& xv = value(x);
  const auto& gv = value(gain);
  if (xv.rank() != 2 || gv.numel() != xv.cols()) {
    throw ShapeError("rmsnorm: gain " + shape_str(gv.shape()) + " does not match input " +
                     shape_str(xv.shape()));
  }
  const std::size_t rows = xv.rows(), d = xv.cols();
  BasicTensor<T> out(xv.shape());
  BasicTensor<T> normed(xv.shape());
  BasicTensor<T> inv({rows});
  for (std::size_t r = 0; r < rows; ++r) {
    const auto xr = xv.row(r);
    T ms = 0;
    for (T v : xr) ms += v * v;
    ms /= static_cast<T>(d);
    const T s = T{1} / std::sqrt(ms + eps);
    inv[r] = s;
    auto nr = normed.row(r);
    auto orow = out.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      nr[j] = xr[j] * s;
      orow[j] = nr[j] * gv[j];
    }
  }
  Var out_v = push(std::move(out), tracking({x, gain}));
  if (nodes_[out_v.id].requires_grad) {
    Node& n = nodes_[out_v.id];
    n.saved.push_back(std::move(normed));
    n.saved.push_back(std::move(inv));
    n.backward = [x, gain](Tape& tp, std::size_t self) {
      Node& node = tp.nodes_[self];
      const auto& g = node.grad;
      const auto& nm = node.saved[0];
      const auto& iv = node.saved[1];
      const auto& gv = tp.value(gain);
      const std::size_t rows = nm.rows(), d = nm.cols();
      if (tp.nodes_[gain.id].requires_grad) {
        auto gg = tp.grad_buffer(gain.id).data();
        for (std::size_t r = 0; r < rows; ++r) {
          const auto gr = g.row(r);
          const auto nr = nm.row(r);
          for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * nr[j];
        }
      }
      if (tp.nodes_[x.id].requires_grad) {
        auto& gx = tp.grad_buffer(x.id);
        std::vector<T> gn(d);
        for (std::size_t r = 0; r < rows; ++r) {
          const auto gr = g.row(r);
          const auto nr = nm.row(r);
          T dot = 0;
          for (std::size_t j = 0; j < d; ++j) {
            gn[j] = gr[j] * gv[j];
            dot += gn[j] * nr[j];
          }
          dot /= static_cast<T>(d);
          auto gxr = gx.row(r);
          for (std::size_t j = 0; j < d; ++j) gxr[j] += iv[r] * (gn[j] - nr[j] * dot);
        }
      }
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::silu(Var x) {
  const auto& xv = value(x);
  BasicTensor<T> out(xv.shape());
  for (std::size_t i = 0; i < xv.numel(); ++i) {
    const T s = T{1} / (T{1} + std::exp(-xv[i]));
    out[i] = xv[i] * s;
  }
  Var out_v = push(std::move(out), tracking({x}));
  if (nodes_[out_v.id].requires_grad) {
    nodes_[out_v.id].backward = [x](Tape& tp, std::size_t self) {
      const auto& g = tp.nodes_[self].grad;
      const auto& xv = tp.value(x);
      auto gx = tp.grad_buffer(x.id).data();
      for (std::size_t i = 0; i < xv.numel(); ++i) {
        const T s = T{1} / (T{1} + std::exp(-xv[i]));
        gx[i] += g[i] * (s + xv[i] * s * (T{1} - s));
      }
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::causal_attention(Var q, Var k, Var v, std::size_t n_heads) {
  const auto& qv = value(q);
  const auto& kv = value(k);
  const auto& vv = value(v);
  if (qv.shape() != kv.shape() || qv.shape() != vv.shape() || qv.rank() != 2) {
    throw ShapeError("causal_attention: q/k/v shapes disagree");
  }
  const std::size_t len = qv.rows(), d = qv.cols();
  if (n_heads == 0 || d % n_heads != 0) throw ShapeError("causal_attention: d not divisible by heads");
  const std::size_t hd = d / n_heads;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(hd));

  BasicTensor<T> out({len, d});
  // Probabilities per head, [len x len], lower-triangular.
  std::vector<BasicTensor<T>> probs;
  probs.reserve(n_heads);
  std::vector<T> scores(len);
  for (std::size_t h = 0; h < n_heads; ++h) {
    BasicTensor<T> p({len, len});
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < len; ++i) {
      const T* qi = qv.data().data() + i * d + off;
      T mx = -std::numeric_limits<T>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        const T* kj = kv.data().data() + j * d + off;
        T s = 0;
        for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
        s *= inv_sqrt;
        scores[j] = s;
        mx = std::max(mx, s);
      }
      T sum = 0;
      for (std::size_t j = 0; j <= i; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      T* oi = out.data().data() + i * d + off;
      for (std::size_t j = 0; j <= i; ++j) {
        const T pij = scores[j] / sum;
        p(i, j) = pij;
        const T* vj = vv.data().data() + j * d + off;
        for (std::size_t c = 0; c < hd; ++c) oi[c] += pij * vj[c];
      }
    }
    probs.push_back(std::move(p));
  }

  Var out_v = push(std::move(out), tracking({q, k, v}));
  if (nodes_[out_v.id].requires_grad) {
    Node& n = nodes_[out_v.id];
    n.saved = std::move(probs);
    n.backward = [q, k, v, n_heads, hd, inv_sqrt](Tape& tp, std::size_t self) {
      Node& node = tp.nodes_[self];
      const auto& g = node.grad;
      const auto& qv = tp.value(q);
      const auto& kv = tp.value(k);
      const auto& vv = tp.value(v);
      const std::size_t len = qv.rows(), d = qv.cols();
      const bool need_q = tp.nodes_[q.id].requires_grad;
      const bool need_k = tp.nodes_[k.id].requires_grad;
      const bool need_v = tp.nodes_[v.id].requires_grad;
      T* gq = need_q ? tp.grad_buffer(q.id).data().data() : nullptr;
      T* gk = need_k ? tp.grad_buffer(k.id).data().data() : nullptr;
      T* gvv = need_v ? tp.grad_buffer(v.id).data().data() : nullptr;
      std::vector<T> dp(len);
      for (std::size_t h = 0; h < n_heads; ++h) {
        const auto& p = node.saved[h];
        const std::size_t off = h * hd;
        for (std::size_t i = 0; i < len; ++i) {
          const T* gi = g.data().data() + i * d + off;
          // dP_ij = gO_i . v_j ; dS_ij = P_ij (dP_ij - sum_j P_ij dP_ij)
          T rowdot = 0;
          for (std::size_t j = 0; j <= i; ++j) {
            const T* vj = vv.data().data() + j * d + off;
            T s = 0;
            for (std::size_t c = 0; c < hd; ++c) s += gi[c] * vj[c];
            dp[j] = s;
            rowdot += p(i, j) * s;
          }
          const T* qi = qv.data().data() + i * d + off;
          for (std::size_t j = 0; j <= i; ++j) {
            const T pij = p(i, j);
            if (need_v) {
              T* gvj = gvv + j * d + off;
              for (std::size_t c = 0; c < hd; ++c) gvj[c] += pij * gi[c];
            }
            const T ds = pij * (dp[j] - rowdot) * inv_sqrt;
            if (ds == T{0}) continue;
            const T* kj = kv.data().data() + j * d + off;
            if (need_q) {
              T* gqi = gq + i * d + off;
              for (std::size_t c = 0; c < hd; ++c) gqi[c] += ds * kj[c];
            }
            if (need_k) {
              T* gkj = gk + j * d + off;
              for (std::size_t c = 0; c < hd; ++c) gkj[c] += ds * qi[c];
            }
          }
        }
      }
    };
  }
  return out_v;
}

template <typename T>
typename Tape<T>::Var Tape<T>::cross_entropy_sum(Var logits, std::span<const int> targets,
                                                 std::span<const std::uint8_t> mask) {
  const auto& lv = value(logits);
  if (lv.rank() != 2 || targets.size() != lv.rows() || mask.size() != lv.rows()) {
    throw ShapeError("cross_entropy_sum: targets/mask do not match logits " + shape_str(lv.shape()));
  }
  const std::size_t rows = lv.rows(), vsz = lv.cols();
  BasicTensor<T> probs({rows, vsz});
  T total = 0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= vsz) {
      throw IndexError("cross_entropy_sum: target " + std::to_string(targets[t]) + " out of range");
    }
    const auto lr = lv.row(t);
    const T mx = *std::max_element(lr.begin(), lr.end());
    T sum = 0;
    auto pr = probs.row(t);
    for (std::size_t j = 0; j < vsz; ++j) {
      pr[j] = std::exp(lr[j] - mx);
      sum += pr[j];
    }
    for (std::size_t j = 0; j < vsz; ++j) pr[j] /= sum;
    total += std::log(sum) + mx - lr[targets[t]];
  }
  Var out_v = push(BasicTensor<T>({1}, {total}), tracking({logits}));
  if (nodes_[out_v.id].requires_grad) {
    Node& n = nodes_[out_v.id];
    n.saved.push_back(std::move(probs));
    std::vector<int> tg(targets.begin(), targets.end());
    std::vector<std::uint8_t> mk(mask.begin(), mask.end());
    n.backward = [logits, tg = std::move(tg), mk = std::move(mk)](Tape& tp, std::size_t self) {
      Node& node = tp.nodes_[self];
      const T g = node.grad[0];
      const auto& pr = node.saved[0];
      auto& gl = tp.grad_buffer(logits.id);
      for (std::size_t t = 0; t < tg.size(); ++t) {
        if (!mk[t]) continue;
        auto dst = gl.row(t);
        const auto src = pr.row(t);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += g * src[j];
        dst[tg[t]] -= g;
      }
    };
  }
  return out_v;
}

template <typename T>
void Tape<T>::backward(Var root, T seed) {
  if (!grad_enabled_) throw ArgumentError("backward on a tape built without gradients");
  if (!nodes_.at(root.id).requires_grad) return;
  auto& g = grad_buffer(root.id);
  for (T& x : g.data()) x = seed;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, i);
  }
}

template class Tape<float>;
template class Tape<double>;

}  // namespace fplab
