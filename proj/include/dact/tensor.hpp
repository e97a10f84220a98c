// Copyright 2026 The dact-cpp Authors
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

/**
 * @file tensor.hpp
 * @brief Dense f64 tensor with tape-based reverse-mode differentiation.
 *
 * Tensors are cheap shared handles. Operations record an adjoint closure on the
 * tape made current by a Tape::Scope; with no scope active (or no input that
 * requires a gradient) nothing is recorded, which is how inference runs.
 * Adjoints are replayed in reverse recording order, which is a reverse
 * topological order because every op records after its inputs exist.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace dact {

using Shape = std::vector<std::size_t>;

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a documented precondition is violated.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

inline std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << ',';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient arrives
  bool requires_grad = false;

  std::vector<double>& ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
    return grad;
  }
};

class Tensor {
 public:
  Tensor() = default;

  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false)
      : impl_(std::make_shared<TensorImpl>()) {
    if (shape_numel(shape) != values.size()) {
      throw DimensionError("tensor of shape " + shape_string(shape) + " cannot hold " +
                           std::to_string(values.size()) + " values");
    }
    impl_->shape = std::move(shape);
    impl_->data = std::move(values);
    impl_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, 0.0), requires_grad);
  }

  static Tensor filled(Shape shape, double value) {
    const auto n = shape_numel(shape);
    return Tensor(std::move(shape), std::vector<double>(n, value));
  }

  static Tensor scalar(double value, bool requires_grad = false) {
    return Tensor({1}, {value}, requires_grad);
  }

  [[nodiscard]] bool defined() const { return static_cast<bool>(impl_); }
  [[nodiscard]] const Shape& shape() const { return impl_->shape; }
  [[nodiscard]] std::size_t rank() const { return impl_->shape.size(); }
  [[nodiscard]] std::size_t numel() const { return impl_->data.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const { return impl_->shape.at(axis); }

  [[nodiscard]] std::span<const double> data() const { return impl_->data; }
  [[nodiscard]] std::span<double> mutable_data() { return impl_->data; }
  [[nodiscard]] double operator[](std::size_t i) const { return impl_->data[i]; }

  /// Value of a single-element tensor.
  [[nodiscard]] double item() const {
    if (numel() != 1) {
      throw ContractError("item() on tensor of shape " + shape_string(shape()));
    }
    return impl_->data[0];
  }

  [[nodiscard]] bool requires_grad() const { return impl_->requires_grad; }
  void set_requires_grad(bool flag) { impl_->requires_grad = flag; }

  [[nodiscard]] bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
  [[nodiscard]] std::span<const double> grad() const { return impl_->grad; }
  [[nodiscard]] std::span<double> mutable_grad() { return impl_->ensure_grad(); }
  void zero_grad() { impl_->grad.clear(); }

  /// Deep copy of the values; the copy carries no gradient.
  [[nodiscard]] Tensor clone() const {
    return Tensor(impl_->shape, impl_->data, impl_->requires_grad);
  }

  /// Copy without gradient tracking, sharing nothing with this tensor.
  [[nodiscard]] Tensor detach() const { return Tensor(impl_->shape, impl_->data, false); }

  [[nodiscard]] const std::shared_ptr<TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<TensorImpl> impl_;
};

/// Ordered record of adjoint closures for one forward evaluation.
class Tape {
 public:
  using Adjoint = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Makes a tape current for the calling thread for the lifetime of the scope.
  class Scope {
   public:
    explicit Scope(Tape& tape) : previous_(current()) { current() = &tape; }
    ~Scope() { current() = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() { return current(); }

  void record(Adjoint adjoint) {
    if (consumed_) throw ContractError("recording onto a tape that was already replayed");
    nodes_.push_back(std::move(adjoint));
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }
  [[nodiscard]] bool consumed() const { return consumed_; }

  /// Seeds d(loss)/d(loss) = 1 and replays every adjoint in reverse order.
  void backward(const Tensor& loss) {
    if (consumed_) throw ContractError("backward called twice on the same tape");
    if (!loss.defined() || loss.numel() != 1) {
      throw ContractError("backward requires a scalar loss, got shape " +
                          (loss.defined() ? shape_string(loss.shape()) : std::string("<undefined>")));
    }
    if (!loss.requires_grad()) {
      throw ContractError("backward on a loss that does not depend on any trainable tensor");
    }
    consumed_ = true;
    loss.impl()->ensure_grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
    nodes_.clear();
  }

 private:
  static Tape*& current() {
    thread_local Tape* tape = nullptr;
    return tape;
  }

  std::vector<Adjoint> nodes_;
  bool consumed_ = false;
};

namespace detail {

using ImplPtr = std::shared_ptr<TensorImpl>;

inline bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (Tape::active() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t->requires_grad(); });
}

/// Registers `adjoint` if any input needs a gradient; marks the output accordingly.
template <typename F>
void record(Tensor& out, std::initializer_list<const Tensor*> inputs, F&& adjoint) {
  if (!wants_grad(inputs)) return;
  out.set_requires_grad(true);
  Tape::active()->record(std::forward<F>(adjoint));
}

/// Gradient buffer of `t` if it participates in differentiation, else nullptr.
inline std::vector<double>* grad_sink(const ImplPtr& t) {
  return t->requires_grad ? &t->ensure_grad() : nullptr;
}

inline void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (t.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_string(t.shape()));
  }
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) +
                         " vs " + shape_string(b.shape()));
  }
}

inline std::size_t last_dim(const Tensor& t) { return t.shape().empty() ? 1 : t.shape().back(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra
// ---------------------------------------------------------------------------

/// [m,k] x [k,n] -> [m,n].
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_rank(a, 2, "matmul");
  detail::require_rank(b, 2, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = out.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += av * brow[j];
    }
  }
  Tensor result({m, n}, std::move(out));
  detail::record(result, {&a, &b}, [ai = a.impl(), bi = b.impl(), oi = result.impl(), m, k, n] {
    if (oi->grad.empty()) return;
    const double* g = oi->grad.data();
    if (auto* ga = detail::grad_sink(ai)) {
      // da = g . b^T
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          const double* brow = bi->data.data() + p * n;
          const double* grow = g + i * n;
          for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
          (*ga)[i * k + p] += acc;
        }
      }
    }
    if (auto* gb = detail::grad_sink(bi)) {
      // db = a^T . g
      for (std::size_t i = 0; i < m; ++i) {
        const double* grow = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double av = ai->data[i * k + p];
          double* gbrow = gb->data() + p * n;
          for (std::size_t j = 0; j < n; ++j) gbrow[j] += av * grow[j];
        }
      }
    }
  });
  return result;
}

inline Tensor transpose(const Tensor& a) {
  detail::require_rank(a, 2, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
  Tensor result({n, m}, std::move(out));
  detail::record(result, {&a}, [ai = a.impl(), oi = result.impl(), m, n] {
    if (oi->grad.empty()) return;
    auto& ga = ai->ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += oi->grad[j * m + i];
  });
  return result;
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] + b[i];
  Tensor result(a.shape(), std::move(out));
  detail::record(result, {&a, &b}, [ai = a.impl(), bi = b.impl(), oi = result.impl()] {
    if (oi->grad.empty()) return;
    for (const auto& in : {ai, bi}) {
      if (auto* g = detail::grad_sink(in))
        for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += oi->grad[i];
    }
  });
  return result;
}

/// Adds a length-n bias to every row of x (last axis of size n).
inline Tensor add_bias(const Tensor& x, const Tensor& bias) {
  const std::size_t n = detail::last_dim(x);
  if (bias.numel() != n) {
    throw DimensionError("add_bias: bias " + shape_string(bias.shape()) +
                         " does not match last axis of " + shape_string(x.shape()));
  }
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + bias[i % n];
  Tensor result(x.shape(), std::move(out));
  detail::record(result, {&x, &bias}, [xi = x.impl(), bi = bias.impl(), oi = result.impl(), n] {
    if (oi->grad.empty()) return;
    if (auto* g = detail::grad_sink(xi))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += oi->grad[i];
    if (auto* g = detail::grad_sink(bi))
      for (std::size_t i = 0; i < oi->grad.size(); ++i) (*g)[i % n] += oi->grad[i];
  });
  return result;
}

/// Elementwise product of equally shaped tensors.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a[i] * b[i];
  Tensor result(a.shape(), std::move(out));
  detail::record(result, {&a, &b}, [ai = a.impl(), bi = b.impl(), oi = result.impl()] {
    if (oi->grad.empty()) return;
    if (auto* g = detail::grad_sink(ai))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += oi->grad[i] * bi->data[i];
    if (auto* g = detail::grad_sink(bi))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += oi->grad[i] * ai->data[i];
  });
  return result;
}

/// Multiplies every element of x by the single value held in s.
inline Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("scale: factor must hold one value, got " + shape_string(s.shape()));
  }
  const double factor = s[0];
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * factor;
  Tensor result(x.shape(), std::move(out));
  detail::record(result, {&x, &s}, [xi = x.impl(), si = s.impl(), oi = result.impl()] {
    if (oi->grad.empty()) return;
    const double f = si->data[0];
    if (auto* g = detail::grad_sink(xi))
      for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] += oi->grad[i] * f;
    if (auto* g = detail::grad_sink(si)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < oi->grad.size(); ++i) acc += oi->grad[i] * xi->data[i];
      (*g)[0] += acc;
    }
  });
  return result;
}

/// alpha * x + beta, elementwise with constant coefficients.
inline Tensor affine(const Tensor& x, double alpha, double beta = 0.0) {
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = alpha * x[i] + beta;
  Tensor result(x.shape(), std::move(out));
  detail::record(result, {&x}, [xi = x.impl(), oi = result.impl(), alpha] {
    if (oi->grad.empty()) return;
    auto& g = xi->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += alpha * oi->grad[i];
  });
  return result;
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

/// Logistic function, clamped so results stay strictly inside (0, 1) even when
/// the exact value rounds to 0 or 1 in double precision.
inline Tensor sigmoid(const Tensor& x) {
  constexpr double kLow = std::numeric_limits<double>::min();
  constexpr double kHigh = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    double s;
    if (v >= 0.0) {
      s = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      s = e / (1.0 + e);
    }
    out[i] = std::clamp(s, kLow, kHigh);
  }
  Tensor result(x.shape(), std::move(out));
  detail::record(result, {&x}, [xi = x.impl(), oi = result.impl()] {
    if (oi->grad.empty()) return;
    auto& g = xi->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double s = oi->data[i];
      g[i] += oi->grad[i] * s * (1.0 - s);
    }
  });
  return result;
}

/// GELU, tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
inline Tensor gelu(const Tensor& x) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double v = x[i];
    out[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
  }
  Tensor result(x.shape(), std::move(out));
  detail::record(result, {&x}, [xi = x.impl(), oi = result.impl()] {
    if (oi->grad.empty()) return;
    auto& g = xi->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double v = xi->data[i];
      const double t = std::tanh(kC * (v + kA * v * v * v));
      const double dt = (1.0 - t * t) * kC * (1.0 + 3.0 * kA * v * v);
      g[i] += oi->grad[i] * (0.5 * (1.0 + t) + 0.5 * v * dt);
    }
  });
  return result;
}

/// Softmax over the last axis, max-subtracted.
inline Tensor softmax(const Tensor& x) {
  const std::size_t c = detail::last_dim(x);
  if (c == 0) throw DimensionError("softmax: empty last axis");
  const std::size_t rows = x.numel() / c;
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * c;
    double* o = out.data() + r * c;
    const double mx = *std::max_element(in, in + c);
    double total = 0.0;
    for (std::size_t j = 0; j < c; ++j) total += (o[j] = std::exp(in[j] - mx));
    for (std::size_t j = 0; j < c; ++j) o[j] /= total;
  }
  Tensor result(x.shape(), std::move(out));
  detail::record(result, {&x}, [xi = x.impl(), oi = result.impl(), rows, c] {
    if (oi->grad.empty()) return;
    auto& g = xi->ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const double* y = oi->data.data() + r * c;
      const double* gy = oi->grad.data() + r * c;
      double dot = 0.0;
      for (std::size_t j = 0; j < c; ++j) dot += gy[j] * y[j];
      for (std::size_t j = 0; j < c; ++j) g[r * c + j] += y[j] * (gy[j] - dot);
    }
  });
  return result;
}

/// Per-slice normalization over the last axis followed by gain * xhat + bias.
inline Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-5) {
  if (!(eps > 0.0)) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = detail::last_dim(x);
  if (gain.numel() != d || bias.numel() != d) {
    throw DimensionError("layer_norm: gain/bias " + shape_string(gain.shape()) + "/" +
                         shape_string(bias.shape()) + " vs input " + shape_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* in = x.data().data() + r * d;
    double mean = 0.0;
    for (std::size_t j = 0; j < d; ++j) mean += in[j];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[r * d + j] = (in[j] - mean) * inv_std[r];
      out[r * d + j] = gain[j] * xhat[r * d + j] + bias[j];
    }
  }
  Tensor result(x.shape(), std::move(out));
  detail::record(result, {&x, &gain, &bias},
                 [xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = result.impl(),
                  xhat = std::move(xhat), inv_std = std::move(inv_std), rows, d] {
                   if (oi->grad.empty()) return;
                   auto* gx = detail::grad_sink(xi);
                   auto* gg = detail::grad_sink(gi);
                   auto* gb = detail::grad_sink(bi);
                   std::vector<double> dxhat(d);
                   for (std::size_t r = 0; r < rows; ++r) {
                     const double* gy = oi->grad.data() + r * d;
                     const double* xh = xhat.data() + r * d;
                     double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                     for (std::size_t j = 0; j < d; ++j) {
                       if (gg) (*gg)[j] += gy[j] * xh[j];
                       if (gb) (*gb)[j] += gy[j];
                       dxhat[j] = gy[j] * gi->data[j];
                       mean_dxhat += dxhat[j];
                       mean_dxhat_xhat += dxhat[j] * xh[j];
                     }
                     if (!gx) continue;
                     mean_dxhat /= static_cast<double>(d);
                     mean_dxhat_xhat /= static_cast<double>(d);
                     for (std::size_t j = 0; j < d; ++j) {
                       (*gx)[r * d + j] += inv_std[r] * (dxhat[j] - mean_dxhat - xh[j] * mean_dxhat_xhat);
                     }
                   }
                 });
  return result;
}

// ---------------------------------------------------------------------------
// Indexing, reshaping and reductions
// ---------------------------------------------------------------------------

/// Gathers rows of a [V,D] table: result[i] = table[ids[i]].
inline Tensor embedding(const Tensor& table, std::span<const std::size_t> ids) {
  detail::require_rank(table, 2, "embedding");
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab) {
      throw std::out_of_range("embedding: id " + std::to_string(ids[i]) + " outside table of " +
                              std::to_string(vocab) + " rows");
    }
    std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
  }
  Tensor result({ids.size(), d}, std::move(out));
  detail::record(result, {&table},
                 [ti = table.impl(), oi = result.impl(), ids = std::vector<std::size_t>(ids.begin(), ids.end()), d] {
                   if (oi->grad.empty()) return;
                   auto& g = ti->ensure_grad();
                   for (std::size_t i = 0; i < ids.size(); ++i)
                     for (std::size_t j = 0; j < d; ++j) g[ids[i] * d + j] += oi->grad[i * d + j];
                 });
  return result;
}

/// Half-open range [begin, end) along axis 0 or 1 of a rank-2 tensor.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  detail::require_rank(x, 2, "slice");
  if (axis > 1 || begin > end || end > x.dim(axis)) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_string(x.shape()));
  }
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  const std::size_t out_rows = axis == 0 ? end - begin : rows;
  const std::size_t out_cols = axis == 1 ? end - begin : cols;
  const std::size_t row0 = axis == 0 ? begin : 0, col0 = axis == 1 ? begin : 0;
  std::vector<double> out(out_rows * out_cols);
  for (std::size_t i = 0; i < out_rows; ++i)
    for (std::size_t j = 0; j < out_cols; ++j) out[i * out_cols + j] = x[(row0 + i) * cols + col0 + j];
  Tensor result({out_rows, out_cols}, std::move(out));
  detail::record(result, {&x}, [xi = x.impl(), oi = result.impl(), out_rows, out_cols, cols, row0, col0] {
    if (oi->grad.empty()) return;
    auto& g = xi->ensure_grad();
    for (std::size_t i = 0; i < out_rows; ++i)
      for (std::size_t j = 0; j < out_cols; ++j)
        g[(row0 + i) * cols + col0 + j] += oi->grad[i * out_cols + j];
  });
  return result;
}

/// Joins rank-2 tensors along axis 0 or 1.
inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  if (axis > 1) throw DimensionError("concat: axis must be 0 or 1");
  const std::size_t other = 1 - axis;
  std::size_t total = 0;
  for (const auto& p : parts) {
    detail::require_rank(p, 2, "concat");
    if (p.dim(other) != parts.front().dim(other)) {
      throw DimensionError("concat: " + shape_string(p.shape()) + " incompatible with " +
                           shape_string(parts.front().shape()));
    }
    total += p.dim(axis);
  }
  const std::size_t rows = axis == 0 ? total : parts.front().dim(0);
  const std::size_t cols = axis == 1 ? total : parts.front().dim(1);
  std::vector<double> out(rows * cols);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    for (std::size_t i = 0; i < p.dim(0); ++i)
      for (std::size_t j = 0; j < p.dim(1); ++j) {
        const std::size_t r = axis == 0 ? offset + i : i;
        const std::size_t c = axis == 1 ? offset + j : j;
        out[r * cols + c] = p[i * p.dim(1) + j];
      }
    offset += p.dim(axis);
  }
  Tensor result({rows, cols}, std::move(out));
  if (Tape::active() != nullptr &&
      std::any_of(parts.begin(), parts.end(), [](const Tensor& p) { return p.requires_grad(); })) {
    result.set_requires_grad(true);
    std::vector<detail::ImplPtr> inputs;
    for (const auto& p : parts) inputs.push_back(p.impl());
    Tape::active()->record([inputs = std::move(inputs), offsets = std::move(offsets), oi = result.impl(), axis, cols] {
      if (oi->grad.empty()) return;
      for (std::size_t k = 0; k < inputs.size(); ++k) {
        auto* g = detail::grad_sink(inputs[k]);
        if (!g) continue;
        const std::size_t pr = inputs[k]->shape[0], pc = inputs[k]->shape[1];
        for (std::size_t i = 0; i < pr; ++i)
          for (std::size_t j = 0; j < pc; ++j) {
            const std::size_t r = axis == 0 ? offsets[k] + i : i;
            const std::size_t c = axis == 1 ? offsets[k] + j : j;
            (*g)[i * pc + j] += oi->grad[r * cols + c];
          }
      }
    });
  }
  return result;
}

/// Same values, new shape with equal element count.
inline Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape: " + shape_string(x.shape()) + " to " + shape_string(shape));
  }
  Tensor result(std::move(shape), std::vector<double>(x.data().begin(), x.data().end()));
  detail::record(result, {&x}, [xi = x.impl(), oi = result.impl()] {
    if (oi->grad.empty()) return;
    auto& g = xi->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += oi->grad[i];
  });
  return result;
}

inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor result = Tensor::scalar(total);
  detail::record(result, {&x}, [xi = x.impl(), oi = result.impl()] {
    if (oi->grad.empty()) return;
    auto& g = xi->ensure_grad();
    for (double& v : g) v += oi->grad[0];
  });
  return result;
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw DimensionError("mean of empty tensor");
  return affine(sum(x), 1.0 / static_cast<double>(x.numel()));
}

/// Mean over rows of -log(max(probs[row, label], 1e-12)).
inline Tensor cross_entropy(const Tensor& probs, std::span<const std::size_t> labels) {
  detail::require_rank(probs, 2, "cross_entropy");
  constexpr double kFloor = 1e-12;
  const std::size_t batch = probs.dim(0), classes = probs.dim(1);
  if (labels.size() != batch) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(batch) + " rows");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < batch; ++i) {
    if (labels[i] >= classes) {
      throw std::out_of_range("cross_entropy: label " + std::to_string(labels[i]) +
                              " outside [0," + std::to_string(classes) + ")");
    }
    total -= std::log(std::max(probs[i * classes + labels[i]], kFloor));
  }
  Tensor result = Tensor::scalar(total / static_cast<double>(batch));
  detail::record(result, {&probs},
                 [pi = probs.impl(), oi = result.impl(), labels = std::vector<std::size_t>(labels.begin(), labels.end()),
                  batch, classes] {
                   if (oi->grad.empty()) return;
                   auto& g = pi->ensure_grad();
                   for (std::size_t i = 0; i < batch; ++i) {
                     const double p = pi->data[i * classes + labels[i]];
                     if (p > kFloor) g[i * classes + labels[i]] -= oi->grad[0] / (static_cast<double>(batch) * p);
                   }
                 });
  return result;
}

inline Tensor cross_entropy(const Tensor& probs, std::size_t label) {
  const std::size_t labels[] = {label};
  return cross_entropy(probs, std::span<const std::size_t>(labels));
}

}  // namespace dact
