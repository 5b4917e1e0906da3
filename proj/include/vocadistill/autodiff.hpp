/*
 * Copyright 2026 The vocadistill Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Dense float32 (by default) tensors with tape-free reverse-mode differentiation.
//
// Every op returns a fresh Tensor. When gradient recording is enabled and at
// least one input requires a gradient, the result remembers its inputs and a
// closure that pushes the result's gradient back into them. Tensor::backward()
// walks that graph once in reverse topological order and then releases it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

// Element type of every tensor. float unless a build overrides it; the
// gradient-check suites compile the same code with double.
#ifndef VOCADISTILL_REAL
#define VOCADISTILL_REAL float
#endif

namespace vocadistill {

using Real = VOCADISTILL_REAL;
using Shape = std::vector<std::size_t>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ')';
  return os.str();
}

namespace detail {

struct Node {
  Shape shape;
  std::vector<Real> data;
  std::vector<Real> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;
  const char* op = "leaf";

  Node& parent(std::size_t i) { return *parents[i]; }

  // Returns the gradient buffer, allocating zeros on first use.
  std::vector<Real>& g() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad;
  }
};

inline bool& grad_enabled() {
  thread_local bool enabled = true;
  return enabled;
}

inline bool& checked_mode() {
  thread_local bool enabled = false;
  return enabled;
}

inline void check_finite(std::span<const Real> values, const char* op,
                         const char* what) {
  for (Real v : values) {
    if (!std::isfinite(v)) {
      throw NonFiniteError(std::string("non-finite ") + what + " produced by " +
                           op);
    }
  }
}

}  // namespace detail

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(detail::grad_enabled()) {
    detail::grad_enabled() = false;
  }
  ~NoGradGuard() { detail::grad_enabled() = previous_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Makes every op on this thread throw NonFiniteError on NaN/Inf outputs.
class CheckedModeGuard {
 public:
  explicit CheckedModeGuard(bool enable = true)
      : previous_(detail::checked_mode()) {
    detail::checked_mode() = enable;
  }
  ~CheckedModeGuard() { detail::checked_mode() = previous_; }
  CheckedModeGuard(const CheckedModeGuard&) = delete;
  CheckedModeGuard& operator=(const CheckedModeGuard&) = delete;

 private:
  bool previous_;
};

inline bool grad_enabled() { return detail::grad_enabled(); }
inline bool checked_mode() { return detail::checked_mode(); }

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

  static Tensor from_vector(Shape shape, std::vector<Real> values,
                            bool requires_grad = false) {
    if (shape_numel(shape) != values.size()) {
      throw ShapeError("from_vector: shape " + shape_str(shape) + " holds " +
                       std::to_string(shape_numel(shape)) + " values, got " +
                       std::to_string(values.size()));
    }
    auto node = std::make_shared<detail::Node>();
    node->shape = std::move(shape);
    node->data = std::move(values);
    node->requires_grad = requires_grad;
    return Tensor(std::move(node));
  }

  static Tensor full(Shape shape, Real value, bool requires_grad = false) {
    std::vector<Real> values(shape_numel(shape), value);
    return from_vector(std::move(shape), std::move(values), requires_grad);
  }

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    return full(std::move(shape), 0.0f, requires_grad);
  }

  static Tensor scalar(Real value, bool requires_grad = false) {
    return from_vector({}, {value}, requires_grad);
  }

  template <class Rng>
  static Tensor normal(Shape shape, Real stddev, Rng& rng,
                       bool requires_grad = false) {
    std::normal_distribution<Real> dist(0.0f, stddev);
    std::vector<Real> values(shape_numel(shape));
    for (auto& v : values) v = dist(rng);
    return from_vector(std::move(shape), std::move(values), requires_grad);
  }

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size(std::size_t axis) const { return node_->shape.at(axis); }
  std::size_t numel() const { return node_->data.size(); }

  std::span<Real> data() { return node_->data; }
  std::span<const Real> data() const { return node_->data; }
  const std::vector<Real>& values() const { return node_->data; }

  bool has_grad() const { return !node_->grad.empty(); }
  std::span<const Real> grad() const { return node_->grad; }
  std::span<Real> mutable_grad() { return node_->g(); }
  void zero_grad() { node_->grad.clear(); }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool value) { node_->requires_grad = value; }
  bool is_leaf() const { return !node_->backward; }

  Real item() const {
    if (numel() != 1) {
      throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    }
    return node_->data[0];
  }

  // Copy of the values with no graph attached.
  Tensor detach() const {
    return from_vector(shape(), node_->data, false);
  }

  // Accumulates d(this)/d(leaf) into every reachable leaf that requires a
  // gradient, then frees the intermediate graph.
  void backward() const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }

 private:
  std::shared_ptr<detail::Node> node_;
};

namespace detail {

inline Tensor make_result(Shape shape, std::vector<Real> data,
                          const std::vector<Tensor>& inputs, const char* op,
                          std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  if (checked_mode()) check_finite(node->data, op, "value");
  bool track = false;
  if (grad_enabled()) {
    for (const auto& t : inputs) track = track || t.requires_grad();
  }
  if (track) {
    node->requires_grad = true;
    for (const auto& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(backward);
  }
  return Tensor(std::move(node));
}

inline Tensor make_result(Shape shape, std::vector<Real> data,
                          std::initializer_list<Tensor> inputs, const char* op,
                          std::function<void(Node&)> backward) {
  return make_result(std::move(shape), std::move(data),
                     std::vector<Tensor>(inputs), op, std::move(backward));
}

inline std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

// outer × len × inner decomposition of a shape around one axis.
struct AxisView {
  std::size_t outer = 1, len = 1, inner = 1;
};

inline AxisView axis_view(const Shape& shape, std::size_t axis,
                          const char* op) {
  if (axis >= shape.size()) {
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  }
  AxisView v;
  for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
  v.len = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
  return v;
}

// C(m×n) += op(A)·op(B), row-major. With ta, A is stored k×m; with tb, B is
// stored n×k.
inline void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
                 const Real* A, const Real* B, Real* C) {
  if (!ta && !tb) {
    for (std::size_t i = 0; i < m; ++i) {
      Real* c = C + i * n;
      const Real* a = A + i * k;
      for (std::size_t p = 0; p < k; ++p) {
        const Real av = a[p];
        const Real* b = B + p * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  } else if (!ta && tb) {
    for (std::size_t i = 0; i < m; ++i) {
      const Real* a = A + i * k;
      for (std::size_t j = 0; j < n; ++j) {
        const Real* b = B + j * k;
        Real acc = 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += a[p] * b[p];
        C[i * n + j] += acc;
      }
    }
  } else if (ta && !tb) {
    for (std::size_t p = 0; p < k; ++p) {
      const Real* a = A + p * m;
      const Real* b = B + p * n;
      for (std::size_t i = 0; i < m; ++i) {
        const Real av = a[i];
        Real* c = C + i * n;
        for (std::size_t j = 0; j < n; ++j) c[j] += av * b[j];
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        Real acc = 0.0f;
        for (std::size_t p = 0; p < k; ++p) acc += A[p * m + i] * B[j * k + p];
        C[i * n + j] += acc;
      }
    }
  }
}

// Index mapping for numpy-style broadcasting of two operands.
class Broadcast {
 public:
  Broadcast(const Shape& a, const Shape& b, const char* op) {
    const std::size_t r = std::max(a.size(), b.size());
    out_.assign(r, 1);
    Shape pa(r, 1), pb(r, 1);
    std::copy(a.begin(), a.end(), pa.begin() + (r - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + (r - b.size()));
    for (std::size_t i = 0; i < r; ++i) {
      if (pa[i] == pb[i] || pb[i] == 1) {
        out_[i] = pa[i];
      } else if (pa[i] == 1) {
        out_[i] = pb[i];
      } else {
        throw ShapeError(std::string(op) + ": cannot broadcast " +
                         shape_str(a) + " with " + shape_str(b));
      }
    }
    na_ = shape_numel(a);
    nb_ = shape_numel(b);
    const std::size_t n = shape_numel(out_);
    if (a == b) {
      kind_ = Kind::same;
    } else if (na_ == n && is_suffix(b, out_)) {
      kind_ = Kind::b_repeats;
    } else if (nb_ == n && is_suffix(a, out_)) {
      kind_ = Kind::a_repeats;
    } else {
      kind_ = Kind::general;
      ia_.resize(n);
      ib_.resize(n);
      auto so = strides_of(out_);
      auto sa = strides_of(pa);
      auto sb = strides_of(pb);
      for (std::size_t i = 0; i < n; ++i) {
        std::size_t rem = i, ja = 0, jb = 0;
        for (std::size_t d = 0; d < r; ++d) {
          const std::size_t idx = rem / so[d];
          rem %= so[d];
          if (pa[d] != 1) ja += idx * sa[d];
          if (pb[d] != 1) jb += idx * sb[d];
        }
        ia_[i] = ja;
        ib_[i] = jb;
      }
    }
  }

  const Shape& out() const { return out_; }

  template <class F>
  void visit(F&& f) const {
    const std::size_t n = shape_numel(out_);
    switch (kind_) {
      case Kind::same:
        for (std::size_t i = 0; i < n; ++i) f(i, i, i);
        break;
      case Kind::b_repeats:
        for (std::size_t i = 0; i < n; ++i) f(i, i, i % nb_);
        break;
      case Kind::a_repeats:
        for (std::size_t i = 0; i < n; ++i) f(i, i % na_, i);
        break;
      case Kind::general:
        for (std::size_t i = 0; i < n; ++i) f(i, ia_[i], ib_[i]);
        break;
    }
  }

 private:
  enum class Kind { same, b_repeats, a_repeats, general };

  static bool is_suffix(const Shape& s, const Shape& full) {
    if (s.size() > full.size()) return false;
    return std::equal(s.rbegin(), s.rend(), full.rbegin());
  }

  Shape out_;
  Kind kind_ = Kind::same;
  std::size_t na_ = 0, nb_ = 0;
  std::vector<std::size_t> ia_, ib_;
};

template <class Fwd, class DA, class DB>
Tensor binary_op(const Tensor& a, const Tensor& b, const char* op, Fwd fwd,
                 DA da, DB db) {
  auto plan = std::make_shared<Broadcast>(a.shape(), b.shape(), op);
  std::vector<Real> out(shape_numel(plan->out()));
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  plan->visit([&](std::size_t i, std::size_t ja, std::size_t jb) {
    out[i] = fwd(pa[ja], pb[jb]);
  });
  return make_result(plan->out(), std::move(out), {a, b}, op,
                     [plan, da, db](Node& self) {
                       Node& na = self.parent(0);
                       Node& nb = self.parent(1);
                       const Real* g = self.grad.data();
                       const Real* xa = na.data.data();
                       const Real* xb = nb.data.data();
                       if (na.requires_grad) {
                         Real* ga = na.g().data();
                         plan->visit([&](std::size_t i, std::size_t ja,
                                         std::size_t jb) {
                           ga[ja] += g[i] * da(xa[ja], xb[jb]);
                         });
                       }
                       if (nb.requires_grad) {
                         Real* gb = nb.g().data();
                         plan->visit([&](std::size_t i, std::size_t ja,
                                         std::size_t jb) {
                           gb[jb] += g[i] * db(xa[ja], xb[jb]);
                         });
                       }
                     });
}

// Elementwise op whose derivative is expressed through input x and output y.
template <class Fwd, class Deriv>
Tensor unary_op(const Tensor& a, const char* op, Fwd fwd, Deriv deriv) {
  std::vector<Real> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fwd(in[i]);
  return make_result(a.shape(), std::move(out), {a}, op,
                     [deriv](Node& self) {
                       Node& na = self.parent(0);
                       if (!na.requires_grad) return;
                       Real* ga = na.g().data();
                       for (std::size_t i = 0; i < self.data.size(); ++i) {
                         ga[i] += self.grad[i] * deriv(na.data[i], self.data[i]);
                       }
                     });
}

}  // namespace detail

inline void Tensor::backward() const {
  if (numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got shape " +
                     shape_str(shape()));
  }
  if (!node_->requires_grad) {
    throw std::logic_error("backward() on a tensor that does not require grad");
  }
  // Iterative post-order DFS gives a topological order (inputs first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }
  node_->g()[0] += 1.0f;
  const bool checked = detail::checked_mode();
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) {
      n->backward(*n);
      if (checked) {
        for (auto& p : n->parents) {
          if (!p->grad.empty()) detail::check_finite(p->grad, n->op, "gradient");
        }
      }
    }
  }
  for (detail::Node* n : order) {
    if (n->backward) {
      n->backward = nullptr;
      n->parents.clear();
      n->grad.clear();
      n->grad.shrink_to_fit();
      n->requires_grad = false;
    }
  }
}

// ---------------------------------------------------------------------------
// Elementwise arithmetic (broadcasting)

inline Tensor add(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "add", [](Real x, Real y) { return x + y; },
      [](Real, Real) { return 1.0f; }, [](Real, Real) { return 1.0f; });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "sub", [](Real x, Real y) { return x - y; },
      [](Real, Real) { return 1.0f; }, [](Real, Real) { return -1.0f; });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "mul", [](Real x, Real y) { return x * y; },
      [](Real, Real y) { return y; }, [](Real x, Real) { return x; });
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  return detail::binary_op(
      a, b, "div", [](Real x, Real y) { return x / y; },
      [](Real, Real y) { return 1.0f / y; },
      [](Real x, Real y) { return -x / (y * y); });
}

inline Tensor scale(const Tensor& a, Real s) {
  return detail::unary_op(
      a, "scale", [s](Real x) { return x * s; },
      [s](Real, Real) { return s; });
}

inline Tensor add_scalar(const Tensor& a, Real s) {
  return detail::unary_op(
      a, "add_scalar", [s](Real x) { return x + s; },
      [](Real, Real) { return 1.0f; });
}

inline Tensor neg(const Tensor& a) { return scale(a, -1.0f); }

inline Tensor square(const Tensor& a) {
  return detail::unary_op(
      a, "square", [](Real x) { return x * x; },
      [](Real x, Real) { return 2.0f * x; });
}

inline Tensor sqrt(const Tensor& a) {
  return detail::unary_op(
      a, "sqrt", [](Real x) { return std::sqrt(x); },
      [](Real, Real y) { return 0.5f / y; });
}

inline Tensor exp(const Tensor& a) {
  return detail::unary_op(
      a, "exp", [](Real x) { return std::exp(x); },
      [](Real, Real y) { return y; });
}

inline Tensor log(const Tensor& a) {
  return detail::unary_op(
      a, "log", [](Real x) { return std::log(x); },
      [](Real x, Real) { return 1.0f / x; });
}

// tanh approximation of GELU.
inline Tensor gelu(const Tensor& a) {
  constexpr Real k = 0.7978845608028654f;  // sqrt(2/pi)
  constexpr Real c = 0.044715f;
  return detail::unary_op(
      a, "gelu",
      [](Real x) {
        return 0.5f * x * (1.0f + std::tanh(k * (x + c * x * x * x)));
      },
      [](Real x, Real) {
        const Real u = k * (x + c * x * x * x);
        const Real t = std::tanh(u);
        const Real du = k * (1.0f + 3.0f * c * x * x);
        return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
      });
}

// ---------------------------------------------------------------------------
// Linear algebra

// (..., m, k) × (k, n) or batched (b..., m, k) × (b..., k, n).
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto fail = [&] {
    throw ShapeError("matmul: incompatible shapes " + shape_str(sa) + " and " +
                     shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) fail();
  const std::size_t k = sa.back();
  const std::size_t m = sa[sa.size() - 2];
  if (sb[sb.size() - 2] != k) fail();
  const std::size_t n = sb.back();
  std::size_t batch = 1;
  bool shared_rhs = sb.size() == 2;
  if (!shared_rhs) {
    if (sa.size() != sb.size() ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
      fail();
    }
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  }
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  std::vector<Real> out(shape_numel(out_shape), 0.0f);
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  if (shared_rhs) {
    const std::size_t rows = a.numel() / k;
    detail::gemm(false, false, rows, n, k, pa, pb, out.data());
  } else {
    for (std::size_t i = 0; i < batch; ++i) {
      detail::gemm(false, false, m, n, k, pa + i * m * k, pb + i * k * n,
                   out.data() + i * m * n);
    }
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), {a, b}, "matmul",
      [shared_rhs, batch, m, n, k](detail::Node& self) {
        detail::Node& na = self.parent(0);
        detail::Node& nb = self.parent(1);
        const Real* g = self.grad.data();
        if (shared_rhs) {
          const std::size_t rows = na.data.size() / k;
          if (na.requires_grad) {
            detail::gemm(false, true, rows, k, n, g, nb.data.data(),
                         na.g().data());
          }
          if (nb.requires_grad) {
            detail::gemm(true, false, k, n, rows, na.data.data(), g,
                         nb.g().data());
          }
          return;
        }
        for (std::size_t i = 0; i < batch; ++i) {
          const Real* gi = g + i * m * n;
          if (na.requires_grad) {
            detail::gemm(false, true, m, k, n, gi, nb.data.data() + i * k * n,
                         na.g().data() + i * m * k);
          }
          if (nb.requires_grad) {
            detail::gemm(true, false, k, n, m, na.data.data() + i * m * k, gi,
                         nb.g().data() + i * k * n);
          }
        }
      });
}

// a · bᵀ for a (..., m, k) and b (n, k), or batched (b..., m, k) × (b..., n, k).
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto fail = [&] {
    throw ShapeError("matmul_nt: incompatible shapes " + shape_str(sa) + " and " +
                     shape_str(sb));
  };
  if (sa.size() < 2 || sb.size() < 2) fail();
  const std::size_t k = sa.back();
  const std::size_t m = sa[sa.size() - 2];
  if (sb.back() != k) fail();
  const std::size_t n = sb[sb.size() - 2];
  std::size_t batch = 1;
  const bool shared_rhs = sb.size() == 2;
  if (!shared_rhs) {
    if (sa.size() != sb.size() ||
        !std::equal(sa.begin(), sa.end() - 2, sb.begin())) {
      fail();
    }
    for (std::size_t i = 0; i + 2 < sa.size(); ++i) batch *= sa[i];
  }
  Shape out_shape(sa.begin(), sa.end() - 1);
  out_shape.push_back(n);
  std::vector<Real> out(shape_numel(out_shape), 0.0f);
  const Real* pa = a.data().data();
  const Real* pb = b.data().data();
  const std::size_t rows = shared_rhs ? a.numel() / k : m;
  if (shared_rhs) batch = 1;
  for (std::size_t i = 0; i < batch; ++i) {
    detail::gemm(false, true, rows, n, k, pa + i * rows * k,
                 pb + (shared_rhs ? 0 : i * n * k), out.data() + i * rows * n);
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), {a, b}, "matmul_nt",
      [shared_rhs, batch, rows, n, k](detail::Node& self) {
        detail::Node& na = self.parent(0);
        detail::Node& nb = self.parent(1);
        const Real* g = self.grad.data();
        for (std::size_t i = 0; i < batch; ++i) {
          const Real* gi = g + i * rows * n;
          const std::size_t boff = shared_rhs ? 0 : i * n * k;
          if (na.requires_grad) {
            // dA = dC · B
            detail::gemm(false, false, rows, k, n, gi, nb.data.data() + boff,
                         na.g().data() + i * rows * k);
          }
          if (nb.requires_grad) {
            // dB = dCᵀ · A
            detail::gemm(true, false, n, k, rows, gi, na.data.data() + i * rows * k,
                         nb.g().data() + boff);
          }
        }
      });
}

// Reorders axes: output axis i is input axis perm[i].
inline Tensor permute(const Tensor& a, const std::vector<std::size_t>& perm) {
  const Shape& s = a.shape();
  if (perm.size() != s.size()) {
    throw ShapeError("permute: permutation rank " +
                     std::to_string(perm.size()) + " does not match shape " +
                     shape_str(s));
  }
  std::vector<bool> used(s.size(), false);
  Shape out_shape(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (perm[i] >= s.size() || used[perm[i]]) {
      throw ShapeError("permute: invalid permutation for shape " +
                       shape_str(s));
    }
    used[perm[i]] = true;
    out_shape[i] = s[perm[i]];
  }
  const auto in_strides = detail::strides_of(s);
  // stride in the input for each output axis
  std::vector<std::size_t> src_strides(s.size());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    src_strides[i] = in_strides[perm[i]];
  }
  auto index = std::make_shared<std::vector<std::size_t>>(a.numel());
  std::vector<std::size_t> counter(s.size(), 0);
  for (std::size_t i = 0; i < a.numel(); ++i) {
    std::size_t src = 0;
    for (std::size_t d = 0; d < s.size(); ++d) src += counter[d] * src_strides[d];
    (*index)[i] = src;
    for (std::size_t d = s.size(); d-- > 0;) {
      if (++counter[d] < out_shape[d]) break;
      counter[d] = 0;
    }
  }
  std::vector<Real> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[(*index)[i]];
  return detail::make_result(std::move(out_shape), std::move(out), {a},
                             "permute", [index](detail::Node& self) {
                               detail::Node& na = self.parent(0);
                               if (!na.requires_grad) return;
                               Real* ga = na.g().data();
                               for (std::size_t i = 0; i < index->size(); ++i) {
                                 ga[(*index)[i]] += self.grad[i];
                               }
                             });
}

inline Tensor transpose(const Tensor& a, std::size_t axis0, std::size_t axis1) {
  std::vector<std::size_t> perm(a.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  if (axis0 >= perm.size() || axis1 >= perm.size()) {
    throw ShapeError("transpose: axes out of range for shape " +
                     shape_str(a.shape()));
  }
  std::swap(perm[axis0], perm[axis1]);
  return permute(a, perm);
}

inline Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " +
                     shape_str(shape));
  }
  return detail::make_result(std::move(shape), a.values(), {a}, "reshape",
                             [](detail::Node& self) {
                               detail::Node& na = self.parent(0);
                               if (!na.requires_grad) return;
                               auto& ga = na.g();
                               for (std::size_t i = 0; i < ga.size(); ++i) {
                                 ga[i] += self.grad[i];
                               }
                             });
}

// ---------------------------------------------------------------------------
// Reductions and normalization

inline Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false) {
  const auto v = detail::axis_view(a.shape(), axis, "sum");
  Shape out_shape = a.shape();
  if (keepdim) {
    out_shape[axis] = 1;
  } else {
    out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  std::vector<Real> out(v.outer * v.inner, 0.0f);
  const auto in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t l = 0; l < v.len; ++l) {
      const Real* src = in.data() + (o * v.len + l) * v.inner;
      Real* dst = out.data() + o * v.inner;
      for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
    }
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), {a}, "sum", [v](detail::Node& self) {
        detail::Node& na = self.parent(0);
        if (!na.requires_grad) return;
        Real* ga = na.g().data();
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t l = 0; l < v.len; ++l) {
            Real* dst = ga + (o * v.len + l) * v.inner;
            const Real* src = self.grad.data() + o * v.inner;
            for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
          }
        }
      });
}

inline Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false) {
  const std::size_t len = detail::axis_view(a.shape(), axis, "mean").len;
  return scale(sum(a, axis, keepdim), len ? 1.0f / static_cast<Real>(len) : 0.0f);
}

inline Tensor sum_all(const Tensor& a) {
  double acc = 0.0;
  for (Real x : a.data()) acc += x;
  return detail::make_result({}, {static_cast<Real>(acc)}, {a}, "sum_all",
                             [](detail::Node& self) {
                               detail::Node& na = self.parent(0);
                               if (!na.requires_grad) return;
                               const Real g = self.grad[0];
                               for (auto& x : na.g()) x += g;
                             });
}

inline Tensor mean_all(const Tensor& a) {
  if (a.numel() == 0) return scale(sum_all(a), 0.0f);
  return scale(sum_all(a), 1.0f / static_cast<Real>(a.numel()));
}

inline Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto v = detail::axis_view(a.shape(), axis, "softmax");
  std::vector<Real> out(a.numel());
  const auto in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t l = 0; l < v.len; ++l) mx = std::max(mx, in[base + l * v.inner]);
      Real total = 0.0f;
      for (std::size_t l = 0; l < v.len; ++l) {
        const Real e = std::exp(in[base + l * v.inner] - mx);
        out[base + l * v.inner] = e;
        total += e;
      }
      for (std::size_t l = 0; l < v.len; ++l) out[base + l * v.inner] /= total;
    }
  }
  return detail::make_result(
      a.shape(), std::move(out), {a}, "softmax", [v](detail::Node& self) {
        detail::Node& na = self.parent(0);
        if (!na.requires_grad) return;
        Real* ga = na.g().data();
        const Real* y = self.data.data();
        const Real* g = self.grad.data();
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.len * v.inner + i;
            Real dot = 0.0f;
            for (std::size_t l = 0; l < v.len; ++l) {
              dot += g[base + l * v.inner] * y[base + l * v.inner];
            }
            for (std::size_t l = 0; l < v.len; ++l) {
              const std::size_t j = base + l * v.inner;
              ga[j] += y[j] * (g[j] - dot);
            }
          }
        }
      });
}

inline Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const auto v = detail::axis_view(a.shape(), axis, "log_softmax");
  std::vector<Real> out(a.numel());
  const auto in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t i = 0; i < v.inner; ++i) {
      const std::size_t base = o * v.len * v.inner + i;
      Real mx = -std::numeric_limits<Real>::infinity();
      for (std::size_t l = 0; l < v.len; ++l) mx = std::max(mx, in[base + l * v.inner]);
      double total = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) total += std::exp(in[base + l * v.inner] - mx);
      const Real lse = mx + static_cast<Real>(std::log(total));
      for (std::size_t l = 0; l < v.len; ++l) {
        out[base + l * v.inner] = in[base + l * v.inner] - lse;
      }
    }
  }
  return detail::make_result(
      a.shape(), std::move(out), {a}, "log_softmax", [v](detail::Node& self) {
        detail::Node& na = self.parent(0);
        if (!na.requires_grad) return;
        Real* ga = na.g().data();
        const Real* y = self.data.data();
        const Real* g = self.grad.data();
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t i = 0; i < v.inner; ++i) {
            const std::size_t base = o * v.len * v.inner + i;
            Real total = 0.0f;
            for (std::size_t l = 0; l < v.len; ++l) total += g[base + l * v.inner];
            for (std::size_t l = 0; l < v.len; ++l) {
              const std::size_t j = base + l * v.inner;
              ga[j] += g[j] - std::exp(y[j]) * total;
            }
          }
        }
      });
}

// Normalizes over the last axis, then applies gamma/beta (both shape (d)).
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma,
                         const Tensor& beta, Real eps = 1e-12f) {
  if (x.rank() == 0) throw ShapeError("layer_norm: scalar input");
  const std::size_t d = x.shape().back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw ShapeError("layer_norm: input " + shape_str(x.shape()) +
                     " with gamma " + shape_str(gamma.shape()) + " and beta " +
                     shape_str(beta.shape()));
  }
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<Real>>(x.numel());
  auto rstd = std::make_shared<std::vector<Real>>(rows);
  std::vector<Real> out(x.numel());
  const auto in = x.data();
  const auto gm = gamma.data();
  const auto bt = beta.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = in.data() + r * d;
    Real mu = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<Real>(d);
    Real var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Real>(d);
    const Real rs = 1.0f / std::sqrt(var + eps);
    (*rstd)[r] = rs;
    for (std::size_t j = 0; j < d; ++j) {
      const Real h = (row[j] - mu) * rs;
      (*xhat)[r * d + j] = h;
      out[r * d + j] = h * gm[j] + bt[j];
    }
  }
  return detail::make_result(
      x.shape(), std::move(out), {x, gamma, beta}, "layer_norm",
      [xhat, rstd, d, rows](detail::Node& self) {
        detail::Node& nx = self.parent(0);
        detail::Node& ng = self.parent(1);
        detail::Node& nb = self.parent(2);
        const Real* g = self.grad.data();
        const Real* h = xhat->data();
        if (ng.requires_grad || nb.requires_grad) {
          for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              if (ng.requires_grad) ng.g()[j] += g[r * d + j] * h[r * d + j];
              if (nb.requires_grad) nb.g()[j] += g[r * d + j];
            }
          }
        }
        if (!nx.requires_grad) return;
        Real* gx = nx.g().data();
        const Real* gm = ng.data.data();
        const Real inv_d = 1.0f / static_cast<Real>(d);
        for (std::size_t r = 0; r < rows; ++r) {
          Real mean_dy = 0.0f, mean_dyh = 0.0f;
          for (std::size_t j = 0; j < d; ++j) {
            const Real dy = g[r * d + j] * gm[j];
            mean_dy += dy;
            mean_dyh += dy * h[r * d + j];
          }
          mean_dy *= inv_d;
          mean_dyh *= inv_d;
          for (std::size_t j = 0; j < d; ++j) {
            const Real dy = g[r * d + j] * gm[j];
            gx[r * d + j] += (*rstd)[r] * (dy - mean_dy - h[r * d + j] * mean_dyh);
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Indexing

// table (V, d) gathered at ids; result shape is ids_shape + (d).
inline Tensor embedding_lookup(const Tensor& table, std::span<const std::int32_t> ids,
                               Shape ids_shape) {
  if (table.rank() != 2) {
    throw ShapeError("embedding_lookup: table must be 2-D, got " +
                     shape_str(table.shape()));
  }
  if (shape_numel(ids_shape) != ids.size()) {
    throw ShapeError("embedding_lookup: ids shape " + shape_str(ids_shape) +
                     " does not match " + std::to_string(ids.size()) + " ids");
  }
  const std::size_t vocab = table.size(0);
  const std::size_t d = table.size(1);
  auto idx = std::make_shared<std::vector<std::int32_t>>(ids.begin(), ids.end());
  std::vector<Real> out(ids.size() * d);
  const auto t = table.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding_lookup: id " + std::to_string(ids[i]) +
                              " outside table of " + std::to_string(vocab) +
                              " rows");
    }
    std::copy_n(t.data() + static_cast<std::size_t>(ids[i]) * d, d,
                out.data() + i * d);
  }
  ids_shape.push_back(d);
  return detail::make_result(std::move(ids_shape), std::move(out), {table},
                             "embedding_lookup", [idx, d](detail::Node& self) {
                               detail::Node& nt = self.parent(0);
                               if (!nt.requires_grad) return;
                               Real* gt = nt.g().data();
                               for (std::size_t i = 0; i < idx->size(); ++i) {
                                 Real* dst = gt + static_cast<std::size_t>((*idx)[i]) * d;
                                 const Real* src = self.grad.data() + i * d;
                                 for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                               }
                             });
}

// Picks entries along one axis; indices may repeat.
inline Tensor index_select(const Tensor& a, std::size_t axis,
                           std::span<const std::size_t> indices) {
  const auto v = detail::axis_view(a.shape(), axis, "index_select");
  for (std::size_t i : indices) {
    if (i >= v.len) {
      throw std::out_of_range("index_select: index " + std::to_string(i) +
                              " out of range for axis " + std::to_string(axis) +
                              " of shape " + shape_str(a.shape()));
    }
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(indices.begin(), indices.end());
  Shape out_shape = a.shape();
  out_shape[axis] = indices.size();
  const std::size_t k = indices.size();
  std::vector<Real> out(v.outer * k * v.inner);
  const auto in = a.data();
  for (std::size_t o = 0; o < v.outer; ++o) {
    for (std::size_t j = 0; j < k; ++j) {
      std::copy_n(in.data() + (o * v.len + (*idx)[j]) * v.inner, v.inner,
                  out.data() + (o * k + j) * v.inner);
    }
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), {a}, "index_select",
      [v, idx](detail::Node& self) {
        detail::Node& na = self.parent(0);
        if (!na.requires_grad) return;
        Real* ga = na.g().data();
        const std::size_t k = idx->size();
        for (std::size_t o = 0; o < v.outer; ++o) {
          for (std::size_t j = 0; j < k; ++j) {
            Real* dst = ga + (o * v.len + (*idx)[j]) * v.inner;
            const Real* src = self.grad.data() + (o * k + j) * v.inner;
            for (std::size_t i = 0; i < v.inner; ++i) dst[i] += src[i];
          }
        }
      });
}

// Row r of a (rows, cols) tensor contributes a[r, cols[r]]; result (rows).
inline Tensor pick_columns(const Tensor& a, std::span<const std::size_t> cols) {
  if (a.rank() != 2 || a.size(0) != cols.size()) {
    throw ShapeError("pick_columns: need (rows, cols) with one index per row, got " +
                     shape_str(a.shape()) + " and " + std::to_string(cols.size()) +
                     " indices");
  }
  const std::size_t width = a.size(1);
  for (std::size_t c : cols) {
    if (c >= width) {
      throw std::out_of_range("pick_columns: column " + std::to_string(c) +
                              " out of range for width " + std::to_string(width));
    }
  }
  auto idx = std::make_shared<std::vector<std::size_t>>(cols.begin(), cols.end());
  std::vector<Real> out(cols.size());
  const auto in = a.data();
  for (std::size_t r = 0; r < cols.size(); ++r) out[r] = in[r * width + cols[r]];
  return detail::make_result({cols.size()}, std::move(out), {a}, "pick_columns",
                             [idx, width](detail::Node& self) {
                               detail::Node& na = self.parent(0);
                               if (!na.requires_grad) return;
                               Real* ga = na.g().data();
                               for (std::size_t r = 0; r < idx->size(); ++r) {
                                 ga[r * width + (*idx)[r]] += self.grad[r];
                               }
                             });
}

inline Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin,
                    std::size_t end) {
  const auto v = detail::axis_view(a.shape(), axis, "slice");
  if (begin > end || end > v.len) {
    throw ShapeError("slice: [" + std::to_string(begin) + ", " +
                     std::to_string(end) + ") out of range for axis " +
                     std::to_string(axis) + " of shape " + shape_str(a.shape()));
  }
  std::vector<std::size_t> indices(end - begin);
  std::iota(indices.begin(), indices.end(), begin);
  return index_select(a, axis, indices);
}

inline Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) {
    throw ShapeError("concat: axis out of range for shape " + shape_str(first));
  }
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t d = 0; ok && d < s.size(); ++d) {
      if (d != axis && s[d] != first[d]) ok = false;
    }
    if (!ok) {
      throw ShapeError("concat: shape " + shape_str(s) +
                       " does not match " + shape_str(first));
    }
    out_shape[axis] += s[axis];
  }
  const auto v = detail::axis_view(out_shape, axis, "concat");
  auto lens = std::make_shared<std::vector<std::size_t>>();
  for (const auto& p : parts) lens->push_back(p.size(axis));
  std::vector<Real> out(shape_numel(out_shape));
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const std::size_t len = (*lens)[pi];
    const auto in = parts[pi].data();
    for (std::size_t o = 0; o < v.outer; ++o) {
      std::copy_n(in.data() + o * len * v.inner, len * v.inner,
                  out.data() + (o * v.len + offset) * v.inner);
    }
    offset += len;
  }
  return detail::make_result(
      std::move(out_shape), std::move(out), parts, "concat",
      [v, lens](detail::Node& self) {
        std::size_t offset = 0;
        for (std::size_t pi = 0; pi < lens->size(); ++pi) {
          const std::size_t len = (*lens)[pi];
          detail::Node& np = self.parent(pi);
          if (np.requires_grad) {
            Real* gp = np.g().data();
            for (std::size_t o = 0; o < v.outer; ++o) {
              const Real* src = self.grad.data() + (o * v.len + offset) * v.inner;
              Real* dst = gp + o * len * v.inner;
              for (std::size_t i = 0; i < len * v.inner; ++i) dst[i] += src[i];
            }
          }
          offset += len;
        }
      });
}

// Sums slices along axis 0: output row g is the sum of input rows groups[g].
inline Tensor group_sum_rows(const Tensor& a,
                             const std::vector<std::vector<std::size_t>>& groups) {
  if (a.rank() == 0) throw ShapeError("group_sum_rows: scalar input");
  const std::size_t n = a.size(0);
  const std::size_t row = a.numel() / std::max<std::size_t>(n, 1);
  for (const auto& grp : groups) {
    for (std::size_t r : grp) {
      if (r >= n) {
        throw std::out_of_range("group_sum_rows: row " + std::to_string(r) +
                                " out of range for shape " + shape_str(a.shape()));
      }
    }
  }
  auto grp = std::make_shared<std::vector<std::vector<std::size_t>>>(groups);
  Shape out_shape = a.shape();
  out_shape[0] = groups.size();
  std::vector<Real> out(groups.size() * row, 0.0f);
  const auto in = a.data();
  for (std::size_t g = 0; g < groups.size(); ++g) {
    Real* dst = out.data() + g * row;
    for (std::size_t r : groups[g]) {
      const Real* src = in.data() + r * row;
      for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
    }
  }
  return detail::make_result(std::move(out_shape), std::move(out), {a},
                             "group_sum_rows", [grp, row](detail::Node& self) {
                               detail::Node& na = self.parent(0);
                               if (!na.requires_grad) return;
                               Real* ga = na.g().data();
                               for (std::size_t g = 0; g < grp->size(); ++g) {
                                 const Real* src = self.grad.data() + g * row;
                                 for (std::size_t r : (*grp)[g]) {
                                   Real* dst = ga + r * row;
                                   for (std::size_t j = 0; j < row; ++j) dst[j] += src[j];
                                 }
                               }
                             });
}

// Inverted dropout. Identity when !train or p == 0.
template <class Rng>
Tensor dropout(const Tensor& a, Real p, bool train, Rng& rng) {
  if (!train || p <= 0.0f) return a;
  if (p >= 1.0f) throw std::invalid_argument("dropout: p must be < 1");
  auto mask = std::make_shared<std::vector<Real>>(a.numel());
  std::bernoulli_distribution keep(1.0 - static_cast<double>(p));
  const Real s = 1.0f / (1.0f - p);
  for (auto& m : *mask) m = keep(rng) ? s : 0.0f;
  std::vector<Real> out(a.numel());
  const auto in = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] * (*mask)[i];
  return detail::make_result(a.shape(), std::move(out), {a}, "dropout",
                             [mask](detail::Node& self) {
                               detail::Node& na = self.parent(0);
                               if (!na.requires_grad) return;
                               Real* ga = na.g().data();
                               for (std::size_t i = 0; i < mask->size(); ++i) {
                                 ga[i] += self.grad[i] * (*mask)[i];
                               }
                             });
}

}  // namespace vocadistill
