#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <numeric>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gcvrnn/parameters.hpp"
#include "gcvrnn/tensor.hpp"

namespace gcvrnn {

class Tape;

/// Handle to a node recorded on a Tape.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

  const Tensor& value() const;
  bool requires_grad() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Reverse-mode tape. Nodes are appended in evaluation order so parents always
/// precede children; backward walks the record once in reverse.
///
/// Gradients are accumulated into Parameter::grad; callers zero them first.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Parameters are recorded as constants when gradients are disabled.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value) { return push(std::move(value), false, nullptr, nullptr); }

  /// Differentiable leaf not backed by a Parameter (e.g. gradient-check inputs).
  Var leaf(Tensor value) { return push(std::move(value), grad_enabled_, nullptr, nullptr); }

  /// Each Parameter maps to a single leaf per tape.
  Var parameter(Parameter& p) {
    auto it = param_nodes_.find(&p);
    if (it != param_nodes_.end()) return Var(this, it->second);
    Var v = push(p.value, grad_enabled_, nullptr, &p);
    param_nodes_[&p] = v.id();
    return v;
  }

  Var record(Tensor value, bool requires_grad, BackwardFn fn, const char* op) {
    if (!value.all_finite()) {
      throw NumericError(std::string("non-finite output from op '") + op + "' with shape " +
                         shape_string(value.shape()));
    }
    return push(std::move(value), requires_grad && grad_enabled_, std::move(fn), nullptr);
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of a node, allocated on first touch.
  Tensor& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.grad.size() != n.value.size()) n.grad = Tensor(n.value.shape());
    return n.grad;
  }

  /// Gradient of the last backward pass with respect to a node (zeros if unreached).
  Tensor gradient(Var v) const {
    const Node& n = nodes_[v.id()];
    if (n.grad.size() != n.value.size()) return Tensor(n.value.shape());
    return n.grad;
  }

  void backward(Var root) {
    const Node& r = nodes_[root.id()];
    if (r.value.size() != 1) {
      throw ContractError("backward root must be scalar, got shape " + shape_string(r.value.shape()));
    }
    for (auto& n : nodes_) n.grad = Tensor();
    if (!r.requires_grad) return;
    grad(root.id())[0] = 1.0;
    for (std::size_t i = root.id() + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (!n.requires_grad || n.grad.size() != n.value.size()) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.parameter) {
        auto& acc = n.parameter->grad.storage();
        const auto& g = n.grad.storage();
        for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += g[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    BackwardFn backward;
    Parameter* parameter = nullptr;
  };

  Var push(Tensor value, bool rg, BackwardFn fn, Parameter* p) {
    nodes_.push_back(Node{std::move(value), Tensor(), rg, std::move(fn), p});
    return Var(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;  // deque: value() references survive later records
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
  bool grad_enabled_ = true;
};

inline const Tensor& Var::value() const { return tape_->value(id_); }
inline bool Var::requires_grad() const { return tape_->requires_grad(id_); }

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap cmap(const Tensor& t) {
  return ConstMatMap(t.storage().data(), static_cast<Eigen::Index>(t.rows()),
                     static_cast<Eigen::Index>(t.cols()));
}
inline MatMap mmap(Tensor& t) {
  return MatMap(t.storage().data(), static_cast<Eigen::Index>(t.rows()),
                static_cast<Eigen::Index>(t.cols()));
}

inline void require_same_tape(const Var& a, const Var& b) {
  if (&a.tape() != &b.tape()) throw ContractError("operands recorded on different tapes");
}

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (!same_matrix_shape(a, b)) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

inline Tensor matrix_like(const Tensor& t) { return Tensor({t.rows(), t.cols()}); }

// Elementwise unary op with derivative expressed through input x and output y.
template <class F, class DF>
Var unary(const Var& a, const char* name, F f, DF df) {
  Tape& tape = a.tape();
  const Tensor& x = a.value();
  Tensor y = matrix_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ia = a.id();
  Tape::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [ia, df, self = tape.size()](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(ia);
      const Tensor& yv = t.value(self);
      Tensor& ga = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * df(xv[i], yv[i]);
    };
  }
  return tape.record(std::move(y), a.requires_grad(), std::move(fn), name);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Primitive operations. Every op checks shapes, rejects non-finite outputs and
// records a backward closure only when some input requires a gradient.
// ---------------------------------------------------------------------------

inline Var matmul(const Var& a, const Var& b) {
  detail::require_same_tape(a, b);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) {
    throw DimensionError("matmul: shape mismatch " + shape_string(av.shape()) + " x " +
                         shape_string(bv.shape()));
  }
  Tensor out = Tensor::zeros(av.rows(), bv.cols());
  detail::mmap(out).noalias() = detail::cmap(av) * detail::cmap(bv);
  const bool rg = a.requires_grad() || b.requires_grad();
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ia = a.id(), ib = b.id()](Tape& t, const Tensor& g) {
      auto gm = detail::cmap(g);
      if (t.requires_grad(ia)) detail::mmap(t.grad(ia)).noalias() += gm * detail::cmap(t.value(ib)).transpose();
      if (t.requires_grad(ib)) detail::mmap(t.grad(ib)).noalias() += detail::cmap(t.value(ia)).transpose() * gm;
    };
  }
  return a.tape().record(std::move(out), rg, std::move(fn), "matmul");
}

inline Var transpose(const Var& a) {
  Tensor out = Tensor::zeros(a.cols(), a.rows());
  detail::mmap(out) = detail::cmap(a.value()).transpose();
  Tape::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [ia = a.id()](Tape& t, const Tensor& g) {
      detail::mmap(t.grad(ia)) += detail::cmap(g).transpose();
    };
  }
  return a.tape().record(std::move(out), a.requires_grad(), std::move(fn), "transpose");
}

namespace detail {

template <class F, class GA, class GB>
Var binary(const Var& a, const Var& b, const char* name, F f, GA ga_fn, GB gb_fn) {
  require_same_tape(a, b);
  const Tensor& x = a.value();
  const Tensor& y = b.value();
  require_same_shape(name, x, y);
  Tensor out = matrix_like(x);
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i], y[i]);
  const bool rg = a.requires_grad() || b.requires_grad();
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ia = a.id(), ib = b.id(), ga_fn, gb_fn](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(ia);
      const Tensor& yv = t.value(ib);
      if (t.requires_grad(ia)) {
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * ga_fn(xv[i], yv[i]);
      }
      if (t.requires_grad(ib)) {
        Tensor& gy = t.grad(ib);
        for (std::size_t i = 0; i < g.size(); ++i) gy[i] += g[i] * gb_fn(xv[i], yv[i]);
      }
    };
  }
  return a.tape().record(std::move(out), rg, std::move(fn), name);
}

}  // namespace detail

inline Var add(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

inline Var sub(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

inline Var mul(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

inline Var div(const Var& a, const Var& b) {
  return detail::binary(
      a, b, "div", [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator/(const Var& a, const Var& b) { return div(a, b); }

inline Var scale(const Var& a, double s) {
  return detail::unary(
      a, "scale", [s](double x) { return s * x; }, [s](double, double) { return s; });
}

inline Var add_scalar(const Var& a, double s) {
  return detail::unary(
      a, "add_scalar", [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

inline Var exp(const Var& a) {
  return detail::unary(
      a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

inline Var log(const Var& a) {
  return detail::unary(
      a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

inline Var relu(const Var& a) {
  return detail::unary(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

inline Var tanh(const Var& a) {
  return detail::unary(
      a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

inline Var sigmoid(const Var& a) {
  return detail::unary(
      a, "sigmoid",
      [](double x) {
        return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
      },
      [](double, double y) { return y * (1.0 - y); });
}

/// max(x, s) elementwise; the gradient goes to x where x > s.
inline Var max_scalar(const Var& a, double s) {
  return detail::unary(
      a, "max_scalar", [s](double x) { return x > s ? x : s; },
      [s](double x, double) { return x > s ? 1.0 : 0.0; });
}

/// Clamp into [lo, hi]; zero gradient outside the interval.
inline Var clamp(const Var& a, double lo, double hi) {
  return detail::unary(
      a, "clamp", [lo, hi](double x) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

inline Var square(const Var& a) {
  return detail::unary(
      a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

/// Sum of all entries as a 1x1 tensor. Row-major accumulation order.
inline Var sum(const Var& a) {
  const Tensor& x = a.value();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i];
  Tape::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [ia = a.id()](Tape& t, const Tensor& g) {
      Tensor& gx = t.grad(ia);
      const double gv = g[0];
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gv;
    };
  }
  return a.tape().record(Tensor::scalar(s), a.requires_grad(), std::move(fn), "sum");
}

inline Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

/// Per-row sum: rows x cols -> rows x 1.
inline Var row_sum(const Var& a) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(r, 1);
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += x[i * c + j];
    out[i] = s;
  }
  Tape::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [ia = a.id(), r, c](Tape& t, const Tensor& g) {
      Tensor& gx = t.grad(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i];
    };
  }
  return a.tape().record(std::move(out), a.requires_grad(), std::move(fn), "row_sum");
}

/// Adds a 1 x cols (or length-cols) vector to every row.
inline Var add_row(const Var& a, const Var& v) {
  detail::require_same_tape(a, v);
  const Tensor& x = a.value();
  const Tensor& b = v.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (b.size() != c) {
    throw DimensionError("add_row: shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = detail::matrix_like(x);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] + b[j];
  const bool rg = a.requires_grad() || v.requires_grad();
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ia = a.id(), iv = v.id(), r, c](Tape& t, const Tensor& g) {
      if (t.requires_grad(ia)) {
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
      }
      if (t.requires_grad(iv)) {
        Tensor& gb = t.grad(iv);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
      }
    };
  }
  return a.tape().record(std::move(out), rg, std::move(fn), "add_row");
}

/// Multiplies every row elementwise by a 1 x cols vector.
inline Var mul_row(const Var& a, const Var& v) {
  detail::require_same_tape(a, v);
  const Tensor& x = a.value();
  const Tensor& b = v.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (b.size() != c) {
    throw DimensionError("mul_row: shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(b.shape()));
  }
  Tensor out = detail::matrix_like(x);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * b[j];
  const bool rg = a.requires_grad() || v.requires_grad();
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ia = a.id(), iv = v.id(), r, c](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(ia);
      const Tensor& bv = t.value(iv);
      if (t.requires_grad(ia)) {
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] * bv[j];
      }
      if (t.requires_grad(iv)) {
        Tensor& gb = t.grad(iv);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j] * xv[i * c + j];
      }
    };
  }
  return a.tape().record(std::move(out), rg, std::move(fn), "mul_row");
}

/// Multiplies every column elementwise by a rows x 1 vector (per-row scaling).
inline Var mul_col(const Var& a, const Var& v) {
  detail::require_same_tape(a, v);
  const Tensor& x = a.value();
  const Tensor& s = v.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (s.size() != r) {
    throw DimensionError("mul_col: shape mismatch " + shape_string(x.shape()) + " vs " + shape_string(s.shape()));
  }
  Tensor out = detail::matrix_like(x);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = x[i * c + j] * s[i];
  const bool rg = a.requires_grad() || v.requires_grad();
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ia = a.id(), iv = v.id(), r, c](Tape& t, const Tensor& g) {
      const Tensor& xv = t.value(ia);
      const Tensor& sv = t.value(iv);
      if (t.requires_grad(ia)) {
        Tensor& gx = t.grad(ia);
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += g[i * c + j] * sv[i];
      }
      if (t.requires_grad(iv)) {
        Tensor& gs = t.grad(iv);
        for (std::size_t i = 0; i < r; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < c; ++j) acc += g[i * c + j] * xv[i * c + j];
          gs[i] += acc;
        }
      }
    };
  }
  return a.tape().record(std::move(out), rg, std::move(fn), "mul_col");
}

/// Concatenates matrices with equal row counts along the last axis.
inline Var concat(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  bool rg = false;
  for (const auto& p : parts) {
    detail::require_same_tape(parts[0], p);
    if (p.rows() != r) {
      throw DimensionError("concat: row mismatch " + shape_string(parts[0].value().shape()) + " vs " +
                           shape_string(p.value().shape()));
    }
    total += p.cols();
    rg = rg || p.requires_grad();
  }
  Tensor out = Tensor::zeros(r, total);
  std::vector<std::size_t> ids, widths;
  std::size_t off = 0;
  for (const auto& p : parts) {
    const Tensor& x = p.value();
    const std::size_t c = x.cols();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) out[i * total + off + j] = x[i * c + j];
    off += c;
    ids.push_back(p.id());
    widths.push_back(c);
  }
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ids, widths, r, total](Tape& t, const Tensor& g) {
      std::size_t o = 0;
      for (std::size_t k = 0; k < ids.size(); ++k) {
        const std::size_t c = widths[k];
        if (t.requires_grad(ids[k])) {
          Tensor& gp = t.grad(ids[k]);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += g[i * total + o + j];
        }
        o += c;
      }
    };
  }
  return parts[0].tape().record(std::move(out), rg, std::move(fn), "concat");
}

inline Var concat(const Var& a, const Var& b) { return concat(std::vector<Var>{a, b}); }

/// Columns [begin, end).
inline Var slice_cols(const Var& a, std::size_t begin, std::size_t end) {
  const Tensor& x = a.value();
  const std::size_t r = x.rows(), c = x.cols();
  if (begin > end || end > c) {
    throw DimensionError("slice_cols [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                         shape_string(x.shape()));
  }
  const std::size_t w = end - begin;
  Tensor out = Tensor::zeros(r, w);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < w; ++j) out[i * w + j] = x[i * c + begin + j];
  Tape::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [ia = a.id(), r, c, w, begin](Tape& t, const Tensor& g) {
      Tensor& gx = t.grad(ia);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) gx[i * c + begin + j] += g[i * w + j];
    };
  }
  return a.tape().record(std::move(out), a.requires_grad(), std::move(fn), "slice_cols");
}

/// Gathers rows by index (indices may repeat).
inline Var gather_rows(const Var& a, std::vector<std::size_t> index) {
  const Tensor& x = a.value();
  const std::size_t c = x.cols();
  for (auto i : index) {
    if (i >= x.rows()) throw DimensionError("gather_rows index " + std::to_string(i) + " out of " + shape_string(x.shape()));
  }
  Tensor out = Tensor::zeros(index.size(), c);
  for (std::size_t k = 0; k < index.size(); ++k)
    for (std::size_t j = 0; j < c; ++j) out[k * c + j] = x[index[k] * c + j];
  Tape::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [ia = a.id(), index = std::move(index), c](Tape& t, const Tensor& g) {
      Tensor& gx = t.grad(ia);
      for (std::size_t k = 0; k < index.size(); ++k)
        for (std::size_t j = 0; j < c; ++j) gx[index[k] * c + j] += g[k * c + j];
    };
  }
  return a.tape().record(std::move(out), a.requires_grad(), std::move(fn), "gather_rows");
}

/// Leading rows x cols sub-block.
inline Var slice_block(const Var& a, std::size_t rows, std::size_t cols) {
  const Tensor& x = a.value();
  if (rows > x.rows() || cols > x.cols()) {
    throw DimensionError("slice_block " + std::to_string(rows) + "x" + std::to_string(cols) + " of " +
                         shape_string(x.shape()));
  }
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return slice_cols(gather_rows(a, std::move(idx)), 0, cols);
}

inline Var reshape(const Var& a, std::size_t rows, std::size_t cols) {
  Tensor out = a.value().reshaped({rows, cols});
  Tape::BackwardFn fn;
  if (a.requires_grad()) {
    fn = [ia = a.id()](Tape& t, const Tensor& g) {
      Tensor& gx = t.grad(ia);
      for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
    };
  }
  return a.tape().record(std::move(out), a.requires_grad(), std::move(fn), "reshape");
}

/// Block-diagonal propagation. `features` holds consecutive groups of `group`
/// rows; each group is multiplied on the left by its own group x group block of
/// `adj` (adj rows == features rows) or by a single shared block (adj is group x group).
inline Var group_matmul(const Var& adj, const Var& features, std::size_t group) {
  detail::require_same_tape(adj, features);
  const Tensor& a = adj.value();
  const Tensor& f = features.value();
  const bool shared = a.rows() == group && f.rows() != group;
  if (group == 0 || a.cols() != group || f.rows() % group != 0 || (!shared && a.rows() != f.rows())) {
    throw DimensionError("group_matmul: shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(f.shape()) + " with group " + std::to_string(group));
  }
  const std::size_t blocks = f.rows() / group;
  const std::size_t d = f.cols();
  Tensor out = Tensor::zeros(f.rows(), d);
  std::vector<std::size_t> order(group);
  for (std::size_t b = 0; b < blocks; ++b) {
    const double* ab = a.storage().data() + (shared ? 0 : b * group * group);
    const double* fb = f.storage().data() + b * group * d;
    double* ob = out.storage().data() + b * group * d;
    // Summation runs over nodes sorted by feature row, so relabelling the
    // nodes of a block permutes the output rows bit for bit.
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return std::lexicographical_compare(fb + x * d, fb + (x + 1) * d, fb + y * d, fb + (y + 1) * d);
    });
    for (std::size_t i = 0; i < group; ++i) {
      double* orow = ob + i * d;
      for (std::size_t j : order) {
        const double w = ab[i * group + j];
        if (w == 0.0) continue;
        const double* frow = fb + j * d;
        for (std::size_t c = 0; c < d; ++c) orow[c] += w * frow[c];
      }
    }
  }
  const bool rg = adj.requires_grad() || features.requires_grad();
  Tape::BackwardFn fn;
  if (rg) {
    fn = [ia = adj.id(), iff = features.id(), group, blocks, d, shared](Tape& t, const Tensor& gr) {
      const auto g = static_cast<Eigen::Index>(group);
      const auto dd = static_cast<Eigen::Index>(d);
      const Tensor& av = t.value(ia);
      const Tensor& fv = t.value(iff);
      const bool ga = t.requires_grad(ia), gf = t.requires_grad(iff);
      for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t aoff = shared ? 0 : b * group * group;
        detail::ConstMatMap G(gr.storage().data() + b * group * d, g, dd);
        if (ga) {
          detail::MatMap GA(t.grad(ia).storage().data() + aoff, g, g);
          detail::ConstMatMap F(fv.storage().data() + b * group * d, g, dd);
          GA.noalias() += G * F.transpose();
        }
        if (gf) {
          detail::ConstMatMap A(av.storage().data() + aoff, g, g);
          detail::MatMap GF(t.grad(iff).storage().data() + b * group * d, g, dd);
          GF.noalias() += A.transpose() * G;
        }
      }
    };
  }
  return adj.tape().record(std::move(out), rg, std::move(fn), "group_matmul");
}

}  // namespace gcvrnn
