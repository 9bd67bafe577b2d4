// Copyright 2026 The fplab Authors
// SPDX-License-Identifier: Apache-2.0

#include "fplab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "fplab/errors.hpp"
#include "fplab/rng.hpp"

namespace fplab {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (std::size_t d : shape) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
  }
}

template <typename T>
void require_2d(const BasicTensor<T>& t, const char* what) {
  if (t.rank() != 2) {
    throw ShapeError(std::string(what) + " expects a 2-D tensor, got " + shape_str(t.shape()));
  }
}

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

template <typename T>
void require_finite(const BasicTensor<T>& t, const char* what) {
  if (!all_finite(t)) throw DivergenceError(std::string(what) + " produced a non-finite value");
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), T{0});
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw ShapeError("shape " + shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                     " values, got " + std::to_string(data_.size()));
  }
}

template <typename T>
BasicTensor<T> BasicTensor<T>::full(Shape shape, T value) {
  BasicTensor t(std::move(shape));
  std::fill(t.data_.begin(), t.data_.end(), value);
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::eye(std::size_t n) {
  BasicTensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t(i, i) = T{1};
  return t;
}

template <typename T>
BasicTensor<T> BasicTensor<T>::from_rows(std::initializer_list<std::initializer_list<T>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<T> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return BasicTensor({rows.size(), cols}, std::move(data));
}

template <typename T>
BasicTensor<T> matmul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions disagree for " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  BasicTensor<T> out({m, n});
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    T* orow = po + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = pa[i * k + p];
      if (av == T{0}) continue;
      const T* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  require_2d(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  BasicTensor<T> out({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out(j, i) = a(i, j);
  return out;
}

template <typename T>
BasicTensor<T> matmul_nt(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: inner dimensions disagree for " + shape_str(a.shape()) +
                     " x transpose" + shape_str(b.shape()));
  }
  return matmul(a, transpose(b));
}

template <typename T>
BasicTensor<T> matmul_tn(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_2d(a, "matmul_tn");
  require_2d(b, "matmul_tn");
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: inner dimensions disagree for transpose" + shape_str(a.shape()) +
                     " x " + shape_str(b.shape()));
  }
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  BasicTensor<T> out({m, n});
  for (std::size_t p = 0; p < k; ++p) {
    const auto arow = a.row(p);
    const auto brow = b.row(p);
    for (std::size_t i = 0; i < m; ++i) {
      const T av = arow[i];
      if (av == T{0}) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
    }
  }
  return out;
}

template <typename T>
BasicTensor<T> softmax(const BasicTensor<T>& x) {
  if (x.empty() || x.shape().back() == 0) throw ShapeError("softmax: empty last dimension");
  const std::size_t v = x.shape().back();
  const std::size_t rows = x.numel() / v;
  BasicTensor<T> out(x.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const T* in = x.data().data() + r * v;
    T* o = out.data().data() + r * v;
    const T mx = *std::max_element(in, in + v);
    T sum = 0;
    for (std::size_t j = 0; j < v; ++j) {
      o[j] = std::exp(in[j] - mx);
      sum += o[j];
    }
    for (std::size_t j = 0; j < v; ++j) o[j] /= sum;
  }
  require_finite(out, "softmax");
  return out;
}

template <typename T>
double cross_entropy(const BasicTensor<T>& logits, std::span<const int> targets,
                     std::span<const std::uint8_t> mask) {
  require_2d(logits, "cross_entropy");
  const std::size_t rows = logits.rows(), v = logits.cols();
  if (targets.size() != rows || mask.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(rows) + " logit rows but " +
                     std::to_string(targets.size()) + " targets and " +
                     std::to_string(mask.size()) + " mask entries");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    if (targets[t] < 0 || static_cast<std::size_t>(targets[t]) >= v) {
      throw IndexError("cross_entropy: target " + std::to_string(targets[t]) + " at position " +
                       std::to_string(t) + " outside vocabulary of size " + std::to_string(v));
    }
    const auto row = logits.row(t);
    double mx = -std::numeric_limits<double>::infinity();
    for (T z : row) mx = std::max(mx, static_cast<double>(z));
    double sum = 0.0;
    for (T z : row) sum += std::exp(static_cast<double>(z) - mx);
    total += std::log(sum) + mx - static_cast<double>(row[targets[t]]);
    ++count;
  }
  if (count == 0) throw DegenerateError("cross_entropy: every position is masked");
  const double loss = total / static_cast<double>(count);
  if (!std::isfinite(loss)) throw DivergenceError("cross_entropy produced a non-finite loss");
  return std::max(loss, 0.0);
}

Tensor gaussian_fill(const Shape& shape, SeededRng& rng, float std) {
  if (!(std >= 0.0f)) throw ArgumentError("gaussian_fill: std must be non-negative");
  Tensor t(shape);
  for (float& x : t.data()) x = static_cast<float>(static_cast<double>(std) * rng.normal());
  return t;
}

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "add");
  BasicTensor<T> out = a;
  axpy(out, b, T{1});
  require_finite(out, "add");
  return out;
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "sub");
  BasicTensor<T> out = a;
  auto o = out.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bd[i];
  require_finite(out, "sub");
  return out;
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  BasicTensor<T> out = a;
  for (T& x : out.data()) x *= factor;
  require_finite(out, "scale");
  return out;
}

template <typename T>
void axpy(BasicTensor<T>& y, const BasicTensor<T>& x, T factor) {
  require_same_shape(y, x, "axpy");
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] += factor * xd[i];
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

template <typename T>
bool all_finite(const BasicTensor<T>& a) {
  for (T x : a.data())
    if (!std::isfinite(x)) return false;
  return true;
}

#define FPLAB_INSTANTIATE(T)                                                                 \
  template class BasicTensor<T>;                                                             \
  template BasicTensor<T> matmul(const BasicTensor<T>&, const BasicTensor<T>&);              \
  template BasicTensor<T> matmul_nt(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> matmul_tn(const BasicTensor<T>&, const BasicTensor<T>&);           \
  template BasicTensor<T> transpose(const BasicTensor<T>&);                                  \
  template BasicTensor<T> softmax(const BasicTensor<T>&);                                    \
  template double cross_entropy(const BasicTensor<T>&, std::span<const int>,                 \
                                std::span<const std::uint8_t>);                                      \
  template BasicTensor<T> add(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> sub(const BasicTensor<T>&, const BasicTensor<T>&);                 \
  template BasicTensor<T> scale(const BasicTensor<T>&, T);                                   \
  template void axpy(BasicTensor<T>&, const BasicTensor<T>&, T);                             \
  template double max_abs_diff(const BasicTensor<T>&, const BasicTensor<T>&);                \
  template bool all_finite(const BasicTensor<T>&);

FPLAB_INSTANTIATE(float)
FPLAB_INSTANTIATE(double)

#undef FPLAB_INSTANTIATE

}  // namespace fplab
