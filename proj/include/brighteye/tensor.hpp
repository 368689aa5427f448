// Copyright 2026 The Brighteye Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Dense row-major tensors with tape-free reverse-mode differentiation.
//
// Every primitive records its inputs and an adjoint closure on the output
// node. backward() orders the reachable graph once (reverse topological
// order) and replays the closures. Scalar type is a template parameter so
// the same model code runs in float for training and double for gradient
// checks.
//
// Gradient policy: a leaf that still holds a gradient from a previous
// backward pass must be reset with zero_grad() before it can receive a new
// one; calling backward twice on the same loss is also rejected.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace brighteye {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class AutodiffError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace detail {

inline thread_local int no_grad_depth = 0;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool requires_grad = false;
  bool grad_ready = false;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  bool is_leaf() const { return parents.empty(); }

  std::span<T> grad_buffer() {
    if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    return grad;
  }
};

template <typename T>
void check_finite(std::span<const T> values, const char* op, const char* what) {
  for (T v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite ") + what + " produced by " + op);
    }
  }
}

inline void check_shape(const Shape& shape) {
  for (std::size_t extent : shape) {
    if (extent == 0) {
      throw DimensionError("tensor extents must be positive, got " + shape_string(shape));
    }
  }
}

// Splits a shape around `axis` into (outer, extent, inner) block sizes.
struct AxisSplit {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline AxisSplit split_axis(const Shape& shape, std::size_t axis) {
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace detail

inline bool is_grad_enabled() { return detail::no_grad_depth == 0; }

/// Disables graph recording in the current thread while alive.
class NoGradGuard {
 public:
  NoGradGuard() { ++detail::no_grad_depth; }
  ~NoGradGuard() { --detail::no_grad_depth; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;
  using NodeType = detail::Node<T>;

  Tensor() = default;
  explicit Tensor(std::shared_ptr<NodeType> node) : node_(std::move(node)) {}

  static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false) {
    detail::check_shape(shape);
    if (shape_size(shape) != data.size()) {
      throw DimensionError("data length " + std::to_string(data.size()) +
                           " does not match shape " + shape_string(shape));
    }
    detail::check_finite<T>(data, "from_data", "value");
    auto node = std::make_shared<NodeType>();
    node->shape = std::move(shape);
    node->value = std::move(data);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor filled(Shape shape, T v, bool requires_grad = false) {
    detail::check_shape(shape);
    const std::size_t n = shape_size(shape);
    return from_data(std::move(shape), std::vector<T>(n, v), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return filled(std::move(shape), T(0), requires_grad);
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from_data(Shape{}, std::vector<T>{v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }

  std::span<const T> data() const { return node_->value; }

  /// Writable storage; only leaves may be written in place.
  std::span<T> mutable_data() {
    if (!node_->is_leaf()) throw AutodiffError("cannot mutate a recorded intermediate");
    return node_->value;
  }

  std::span<const T> grad() const { return node_->grad; }
  bool has_grad() const { return node_->grad_ready; }
  bool requires_grad() const { return node_->requires_grad; }
  bool is_leaf() const { return node_->is_leaf(); }
  const char* op() const { return node_->op; }

  T item() const {
    if (numel() != 1) throw DimensionError("item() on tensor of shape " + shape_string(shape()));
    return node_->value[0];
  }

  T operator[](std::size_t i) const { return node_->value.at(i); }
  T at(std::size_t r, std::size_t c) const { return node_->value.at(r * node_->shape.at(1) + c); }

  void zero_grad() {
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
    node_->grad_ready = false;
  }

  /// Detached copy of the values.
  Tensor clone() const { return from_data(shape(), node_->value, false); }

  const std::shared_ptr<NodeType>& node() const { return node_; }

 private:
  std::shared_ptr<NodeType> node_;
};

namespace detail {

template <typename T>
Tensor<T> record(const char* op, Shape shape, std::vector<T> value,
                 const std::vector<Tensor<T>>& inputs,
                 std::function<void(Node<T>&)> backward) {
  check_finite<T>(value, op, "value");
  auto node = std::make_shared<Node<T>>();
  node->op = op;
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool tracked = false;
  if (is_grad_enabled()) {
    for (const auto& in : inputs) tracked = tracked || in.requires_grad();
  }
  if (tracked) {
    node->requires_grad = true;
    for (const auto& in : inputs) node->parents.push_back(in.node());
    node->backward = std::move(backward);
  }
  return Tensor<T>(std::move(node));
}

template <typename T>
Tensor<T> record(const char* op, Shape shape, std::vector<T> value,
                 std::initializer_list<Tensor<T>> inputs,
                 std::function<void(Node<T>&)> backward) {
  return record<T>(op, std::move(shape), std::move(value), std::vector<Tensor<T>>(inputs),
                   std::move(backward));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

template <typename T>
void require_rank(const Tensor<T>& a, std::size_t rank, const char* op) {
  if (a.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         ", got " + shape_string(a.shape()));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: cannot multiply " + shape_string(a.shape()) + " by " +
                         shape_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<T> out(m * n, T(0));
  const auto av = a.data();
  const auto bv = b.data();
  for (std::size_t i = 0; i < m; ++i) {
    T* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const T aip = av[i * k + p];
      const T* brow = bv.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return detail::record<T>("matmul", {m, n}, std::move(out), {a, b}, [m, k, n](detail::Node<T>& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    const T* g = self.grad.data();
    if (an.requires_grad) {
      auto ga = an.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          T acc = 0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bn.value[p * n + j];
          ga[i * k + p] += acc;
        }
    }
    if (bn.requires_grad) {
      auto gb = bn.grad_buffer();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t p = 0; p < k; ++p) {
          const T aip = an.value[i * k + p];
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += aip * g[i * n + j];
        }
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_rank(x, 2, "transpose");
  const std::size_t r = x.dim(0), c = x.dim(1);
  std::vector<T> out(r * c);
  const auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
  return detail::record<T>("transpose", {c, r}, std::move(out), {x}, [r, c](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    auto gx = xn.grad_buffer();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  detail::check_shape(shape);
  if (shape_size(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  std::vector<T> out(x.data().begin(), x.data().end());
  return detail::record<T>("reshape", std::move(shape), std::move(out), {x}, [](detail::Node<T>& self) {
    auto gx = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Elementwise
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::record<T>("add", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    for (auto& p : self.parents) {
      if (!p->requires_grad) continue;
      auto g = p->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  return detail::record<T>("sub", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    const T sign[2] = {T(1), T(-1)};
    for (std::size_t k = 0; k < 2; ++k) {
      auto& p = *self.parents[k];
      if (!p.requires_grad) continue;
      auto g = p.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += sign[k] * self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::record<T>("mul", a.shape(), std::move(out), {a, b}, [](detail::Node<T>& self) {
    auto& an = *self.parents[0];
    auto& bn = *self.parents[1];
    if (an.requires_grad) {
      auto g = an.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn.value[i];
    }
    if (bn.requires_grad) {
      auto g = bn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T factor) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * factor;
  return detail::record<T>("scale", x.shape(), std::move(out), {x}, [factor](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  });
}

/// x[..., n] + bias[n], the bias repeated over every leading index.
template <typename T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
  if (x.rank() < 1 || bias.rank() != 1 || bias.dim(0) != x.shape().back()) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) + " does not fit " +
                         shape_string(x.shape()));
  }
  const std::size_t n = bias.dim(0);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] + bias.data()[i % n];
  return detail::record<T>("add_bias", x.shape(), std::move(out), {x, bias}, [n](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    auto& bn = *self.parents[1];
    if (xn.requires_grad) {
      auto g = xn.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn.requires_grad) {
      auto g = bn.grad_buffer();
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i % n] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  return detail::record<T>("relu", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    auto g = xn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn.value[i] > T(0)) g[i] += self.grad[i];
  });
}

/// Exact (erf-based) GELU.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const T inv_sqrt2 = T(0.70710678118654752440);
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const T v = x.data()[i];
    out[i] = T(0.5) * v * (T(1) + std::erf(v * inv_sqrt2));
  }
  return detail::record<T>("gelu", x.shape(), std::move(out), {x}, [inv_sqrt2](detail::Node<T>& self) {
    const T inv_sqrt2pi = T(0.39894228040143267794);
    auto& xn = *self.parents[0];
    auto g = xn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T v = xn.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt2pi * std::exp(T(-0.5) * v * v);
      g[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(x.data()[i]);
  return detail::record<T>("log", x.shape(), std::move(out), {x}, [](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    auto g = xn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] / xn.value[i];
  });
}

/// Clamps into [lo, hi]; the gradient passes only where no clamping happened.
template <typename T>
Tensor<T> clamp(const Tensor<T>& x, T lo, T hi) {
  std::vector<T> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(x.data()[i], lo, hi);
  return detail::record<T>("clamp", x.shape(), std::move(out), {x}, [lo, hi](detail::Node<T>& self) {
    auto& xn = *self.parents[0];
    auto g = xn.grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i)
      if (xn.value[i] >= lo && xn.value[i] <= hi) g[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// Reductions and normalizations
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T acc = 0;
  for (T v : x.data()) acc += v;
  return detail::record<T>("sum", Shape{}, std::vector<T>{acc}, {x}, [](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

/// Softmax along `axis`; the axis maximum is subtracted before exponentiation.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
  if (axis >= x.rank()) {
    throw DimensionError("softmax: axis " + std::to_string(axis) + " invalid for " +
                         shape_string(x.shape()));
  }
  const auto s = detail::split_axis(x.shape(), axis);
  std::vector<T> out(x.numel());
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t in = 0; in < s.inner; ++in) {
      const std::size_t base = o * s.extent * s.inner + in;
      T hi = xv[base];
      for (std::size_t e = 1; e < s.extent; ++e) hi = std::max(hi, xv[base + e * s.inner]);
      T total = 0;
      for (std::size_t e = 0; e < s.extent; ++e) {
        const T v = std::exp(xv[base + e * s.inner] - hi);
        out[base + e * s.inner] = v;
        total += v;
      }
      for (std::size_t e = 0; e < s.extent; ++e) out[base + e * s.inner] /= total;
    }
  return detail::record<T>("softmax", x.shape(), std::move(out), {x}, [s](detail::Node<T>& self) {
    auto g = self.parents[0]->grad_buffer();
    const auto& y = self.value;
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        T dot = 0;
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = base + e * s.inner;
          dot += self.grad[i] * y[i];
        }
        for (std::size_t e = 0; e < s.extent; ++e) {
          const std::size_t i = base + e * s.inner;
          g[i] += y[i] * (self.grad[i] - dot);
        }
      }
  });
}

/// Normalizes every vector along the last axis, then applies gain and bias.
/// Gain and bias have the last extent D, or extent 1 to share one scalar
/// across the vector.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     T eps = T(1e-5)) {
  if (x.rank() < 1 || x.shape().back() == 0) {
    throw DimensionError("layer_norm: empty feature axis in " + shape_string(x.shape()));
  }
  const std::size_t d = x.shape().back();
  auto fits = [d](const Tensor<T>& p) { return p.rank() == 1 && (p.dim(0) == d || p.dim(0) == 1); };
  if (!fits(gain) || !fits(bias)) {
    throw DimensionError("layer_norm: gain " + shape_string(gain.shape()) + " / bias " +
                         shape_string(bias.shape()) + " do not fit feature width " +
                         std::to_string(d));
  }
  if (!(eps > T(0))) throw std::invalid_argument("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / d;
  const bool shared_gain = gain.dim(0) == 1;
  const bool shared_bias = bias.dim(0) == 1;
  std::vector<T> normed(x.numel());
  std::vector<T> inv_std(rows);
  std::vector<T> out(x.numel());
  const auto xv = x.data();
  const auto gv = gain.data();
  const auto bv = bias.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = xv.data() + r * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[r] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const T n = (row[j] - mu) * is;
      normed[r * d + j] = n;
      out[r * d + j] = n * gv[shared_gain ? 0 : j] + bv[shared_bias ? 0 : j];
    }
  }
  return detail::record<T>(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [d, rows, shared_gain, shared_bias, normed = std::move(normed),
       inv_std = std::move(inv_std)](detail::Node<T>& self) {
        auto& xn = *self.parents[0];
        auto& gn = *self.parents[1];
        auto& bn = *self.parents[2];
        const T* dy = self.grad.data();
        if (gn.requires_grad) {
          auto gg = gn.grad_buffer();
          for (std::size_t i = 0; i < normed.size(); ++i) gg[shared_gain ? 0 : i % d] += dy[i] * normed[i];
        }
        if (bn.requires_grad) {
          auto gb = bn.grad_buffer();
          for (std::size_t i = 0; i < normed.size(); ++i) gb[shared_bias ? 0 : i % d] += dy[i];
        }
        if (xn.requires_grad) {
          auto gx = xn.grad_buffer();
          std::vector<T> dn(d);
          for (std::size_t r = 0; r < rows; ++r) {
            T mean_dn = 0, mean_dn_n = 0;
            for (std::size_t j = 0; j < d; ++j) {
              dn[j] = dy[r * d + j] * gn.value[shared_gain ? 0 : j];
              mean_dn += dn[j];
              mean_dn_n += dn[j] * normed[r * d + j];
            }
            mean_dn /= static_cast<T>(d);
            mean_dn_n /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx[r * d + j] += inv_std[r] * (dn[j] - mean_dn - normed[r * d + j] * mean_dn_n);
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Structural
// ---------------------------------------------------------------------------

/// Concatenates along `axis`; all other extents must agree.
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw DimensionError("concat: axis out of range for " + shape_string(first));
  Shape shape = first;
  shape[axis] = 0;
  std::vector<std::size_t> extents;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != first.size()) throw DimensionError("concat: rank mismatch");
    for (std::size_t i = 0; i < probe.size(); ++i) {
      if (i != axis && probe[i] != first[i]) {
        throw DimensionError("concat: " + shape_string(first) + " vs " + shape_string(probe));
      }
    }
    extents.push_back(probe[axis]);
    shape[axis] += probe[axis];
  }
  const auto s = detail::split_axis(shape, axis);
  std::vector<T> out(shape_size(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto pv = parts[k].data();
    const std::size_t block = extents[k] * s.inner;
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + o * s.extent * s.inner + offset);
    }
    offset += block;
  }
  return detail::record<T>("concat", std::move(shape), std::move(out), parts,
                           [s, extents](detail::Node<T>& self) {
                             std::size_t offset = 0;
                             for (std::size_t k = 0; k < self.parents.size(); ++k) {
                               auto& p = *self.parents[k];
                               const std::size_t block = extents[k] * s.inner;
                               if (p.requires_grad) {
                                 auto g = p.grad_buffer();
                                 for (std::size_t o = 0; o < s.outer; ++o) {
                                   const T* src = self.grad.data() + o * s.extent * s.inner + offset;
                                   for (std::size_t i = 0; i < block; ++i) g[o * block + i] += src[i];
                                 }
                               }
                               offset += block;
                             }
                           });
}

/// Elements [begin, end) along `axis`.
template <typename T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " invalid for " +
                         shape_string(x.shape()));
  }
  const auto s = detail::split_axis(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = end - begin;
  const std::size_t block = (end - begin) * s.inner;
  std::vector<T> out(shape_size(shape));
  const auto xv = x.data();
  for (std::size_t o = 0; o < s.outer; ++o) {
    std::copy_n(xv.data() + o * s.extent * s.inner + begin * s.inner, block, out.data() + o * block);
  }
  return detail::record<T>("slice", std::move(shape), std::move(out), {x},
                           [s, begin, block](detail::Node<T>& self) {
                             auto g = self.parents[0]->grad_buffer();
                             for (std::size_t o = 0; o < s.outer; ++o)
                               for (std::size_t i = 0; i < block; ++i)
                                 g[o * s.extent * s.inner + begin * s.inner + i] += self.grad[o * block + i];
                           });
}

// ---------------------------------------------------------------------------
// Reverse pass
// ---------------------------------------------------------------------------

/// Tracked nodes reachable from a loss, loss first, each exactly once and
/// every node before all of its inputs.
template <typename T>
struct ComputationRecord {
  std::vector<std::shared_ptr<detail::Node<T>>> nodes;

  std::size_t size() const { return nodes.size(); }
};

template <typename T>
ComputationRecord<T> trace(const Tensor<T>& root) {
  using NodePtr = std::shared_ptr<detail::Node<T>>;
  ComputationRecord<T> record;
  if (!root.requires_grad()) return record;
  std::unordered_set<const detail::Node<T>*> seen;
  std::vector<std::pair<NodePtr, std::size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      NodePtr parent = node->parents[next++];
      if (parent->requires_grad && seen.insert(parent.get()).second) {
        stack.emplace_back(std::move(parent), 0);
      }
      continue;
    }
    record.nodes.push_back(node);
    stack.pop_back();
  }
  std::reverse(record.nodes.begin(), record.nodes.end());
  return record;
}

/// Populates d(loss)/d(leaf) on every tracked leaf reachable from `loss`.
template <typename T>
void backward(const Tensor<T>& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw AutodiffError("backward: loss must be a scalar, got " +
                        (loss.defined() ? shape_string(loss.shape()) : std::string("undefined")));
  }
  if (!loss.requires_grad()) throw AutodiffError("backward: loss is not tracked");
  if (loss.node()->consumed) throw AutodiffError("backward: already ran for this loss");
  auto record = trace(loss);
  for (auto& node : record.nodes) {
    if (node->is_leaf() && node->grad_ready) {
      throw AutodiffError("backward: leaf gradient was not reset since the previous pass");
    }
  }
  for (auto& node : record.nodes) node->grad.assign(node->value.size(), T(0));
  loss.node()->grad[0] = T(1);
  for (auto& node : record.nodes) {
    detail::check_finite<T>(node->grad, node->op, "gradient");
    if (node->is_leaf()) {
      node->grad_ready = true;
      continue;
    }
    node->backward(*node);
  }
  loss.node()->consumed = true;
}

}  // namespace brighteye
