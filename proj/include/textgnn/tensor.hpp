#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "textgnn/errors.hpp"

namespace textgnn {

// Training runs at f32. Defining TEXTGNN_REAL_DOUBLE rebuilds the whole stack
// at 64-bit for the tight-tolerance gradient-check binary.
#ifdef TEXTGNN_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif

struct Tensor;
using TensorPtr = std::shared_ptr<Tensor>;

inline std::string shape_str(const std::vector<int>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor. Immutable after forward construction except for
// grad accumulation and explicit optimizer updates.
struct Tensor {
  std::vector<int> shape;
  std::vector<Real> data;
  bool requires_grad = false;
  std::vector<Real> grad;  // same length as data when requires_grad
  std::string name;        // non-empty for named parameters

  int numel() const { return static_cast<int>(data.size()); }
  int rows() const { return shape.empty() ? 0 : shape[0]; }
  int cols() const { return shape.size() < 2 ? 1 : shape[1]; }
  bool is_scalar() const { return numel() == 1; }

  Real& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
  Real at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

  void alloc_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), Real(0));
  }
  void zero_grad() { std::fill(grad.begin(), grad.end(), Real(0)); }

  static TensorPtr zeros(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor>();
    std::size_t n = 1;
    for (int d : shape) {
      if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + shape_str(shape));
      n *= static_cast<std::size_t>(d);
    }
    t->shape = std::move(shape);
    t->data.assign(n, Real(0));
    t->requires_grad = requires_grad;
    if (requires_grad) t->alloc_grad();
    return t;
  }

  static TensorPtr from_data(std::vector<int> shape, std::vector<Real> values,
                             bool requires_grad = false) {
    auto t = zeros(std::move(shape), requires_grad);
    if (values.size() != t->data.size())
      throw ShapeError("data length " + std::to_string(values.size()) +
                       " does not match shape " + shape_str(t->shape));
    t->data = std::move(values);
    return t;
  }

  static TensorPtr scalar(Real v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }
};

// Records one backward closure per forward op, in forward order. Inputs of an
// op are always recorded before the op itself, so a single reverse sweep
// visits every node exactly once in valid topological order.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }

  // Seeds d(loss)/d(loss)=1 and replays the tape in reverse. Every
  // requires_grad tensor reachable from loss gets its grad accumulated;
  // everything else keeps its zeros.
  void backward(const TensorPtr& loss) {
    if (!loss->is_scalar())
      throw ContractError("backward() needs a scalar loss, got shape " + shape_str(loss->shape));
    if (!loss->requires_grad) return;  // nothing reachable is trainable
    loss->alloc_grad();
    loss->grad[0] = Real(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

 private:
  bool recording_;
  std::vector<std::function<void()>> nodes_;
};

namespace detail {

inline bool grads_needed(const Tape& tape, std::initializer_list<TensorPtr> ins) {
  if (!tape.recording()) return false;
  for (const auto& t : ins)
    if (t->requires_grad) return true;
  return false;
}

inline TensorPtr make_out(std::vector<int> shape, bool track) {
  auto out = Tensor::zeros(std::move(shape));
  if (track) {
    out->requires_grad = true;
    out->alloc_grad();
  }
  return out;
}

inline void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
  if (a->shape != b->shape)
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a->shape) + " vs " +
                     shape_str(b->shape));
}

}  // namespace detail

// ---- elementwise ----

inline TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  detail::check_same_shape(a, b, "add");
  bool track = detail::grads_needed(tape, {a, b});
  auto out = detail::make_out(a->shape, track);
  for (int i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] + b->data[i];
  if (track)
    tape.record([a, b, out] {
      if (a->requires_grad) {
        a->alloc_grad();
        for (int i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->alloc_grad();
        for (int i = 0; i < b->numel(); ++i) b->grad[i] += out->grad[i];
      }
    });
  return out;
}

inline TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  detail::check_same_shape(a, b, "sub");
  bool track = detail::grads_needed(tape, {a, b});
  auto out = detail::make_out(a->shape, track);
  for (int i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] - b->data[i];
  if (track)
    tape.record([a, b, out] {
      if (a->requires_grad) {
        a->alloc_grad();
        for (int i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i];
      }
      if (b->requires_grad) {
        b->alloc_grad();
        for (int i = 0; i < b->numel(); ++i) b->grad[i] -= out->grad[i];
      }
    });
  return out;
}

inline TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  detail::check_same_shape(a, b, "mul");
  bool track = detail::grads_needed(tape, {a, b});
  auto out = detail::make_out(a->shape, track);
  for (int i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] * b->data[i];
  if (track)
    tape.record([a, b, out] {
      if (a->requires_grad) {
        a->alloc_grad();
        for (int i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i] * b->data[i];
      }
      if (b->requires_grad) {
        b->alloc_grad();
        for (int i = 0; i < b->numel(); ++i) b->grad[i] += out->grad[i] * a->data[i];
      }
    });
  return out;
}

inline TensorPtr scale(Tape& tape, const TensorPtr& a, Real c) {
  bool track = detail::grads_needed(tape, {a});
  auto out = detail::make_out(a->shape, track);
  for (int i = 0; i < a->numel(); ++i) out->data[i] = a->data[i] * c;
  if (track)
    tape.record([a, out, c] {
      a->alloc_grad();
      for (int i = 0; i < a->numel(); ++i) a->grad[i] += out->grad[i] * c;
    });
  return out;
}

namespace detail {

template <typename Fwd, typename Dfn>
TensorPtr unary_op(Tape& tape, const TensorPtr& a, Fwd f, Dfn dfn) {
  bool track = grads_needed(tape, {a});
  auto out = make_out(a->shape, track);
  for (int i = 0; i < a->numel(); ++i) out->data[i] = f(a->data[i]);
  if (track)
    tape.record([a, out, dfn] {
      a->alloc_grad();
      for (int i = 0; i < a->numel(); ++i)
        a->grad[i] += out->grad[i] * dfn(a->data[i], out->data[i]);
    });
  return out;
}

}  // namespace detail

inline TensorPtr tanh_op(Tape& tape, const TensorPtr& a) {
  return detail::unary_op(
      tape, a, [](Real x) { return std::tanh(x); },
      [](Real, Real y) { return Real(1) - y * y; });
}

inline TensorPtr sigmoid(Tape& tape, const TensorPtr& a) {
  return detail::unary_op(
      tape, a, [](Real x) { return Real(1) / (Real(1) + std::exp(-x)); },
      [](Real, Real y) { return y * (Real(1) - y); });
}

inline TensorPtr relu(Tape& tape, const TensorPtr& a) {
  return detail::unary_op(
      tape, a, [](Real x) { return x > Real(0) ? x : Real(0); },
      [](Real x, Real) { return x > Real(0) ? Real(1) : Real(0); });
}

inline TensorPtr elu(Tape& tape, const TensorPtr& a, Real alpha = Real(1)) {
  return detail::unary_op(
      tape, a, [alpha](Real x) { return x > Real(0) ? x : alpha * (std::exp(x) - Real(1)); },
      [alpha](Real x, Real y) { return x > Real(0) ? Real(1) : y + alpha; });
}

inline TensorPtr leaky_relu(Tape& tape, const TensorPtr& a, Real slope) {
  return detail::unary_op(
      tape, a, [slope](Real x) { return x > Real(0) ? x : slope * x; },
      [slope](Real x, Real) { return x > Real(0) ? Real(1) : slope; });
}

inline TensorPtr gelu(Tape& tape, const TensorPtr& a) {
  constexpr Real inv_sqrt2 = Real(0.70710678118654752440);
  constexpr Real inv_sqrt2pi = Real(0.39894228040143267794);
  return detail::unary_op(
      tape, a,
      [](Real x) { return Real(0.5) * x * (Real(1) + std::erf(x * inv_sqrt2)); },
      [](Real x, Real) {
        Real cdf = Real(0.5) * (Real(1) + std::erf(x * inv_sqrt2));
        Real pdf = inv_sqrt2pi * std::exp(Real(-0.5) * x * x);
        return cdf + x * pdf;
      });
}

// ---- linear algebra ----

inline TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0])
    throw ShapeError("matmul: incompatible shapes " + shape_str(a->shape) + " and " +
                     shape_str(b->shape));
  const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
  bool track = detail::grads_needed(tape, {a, b});
  auto out = detail::make_out({m, n}, track);
  for (int i = 0; i < m; ++i)
    for (int p = 0; p < k; ++p) {
      const Real av = a->data[i * k + p];
      if (av == Real(0)) continue;
      for (int j = 0; j < n; ++j) out->data[i * n + j] += av * b->data[p * n + j];
    }
  if (track)
    tape.record([a, b, out, m, k, n] {
      if (a->requires_grad) {
        a->alloc_grad();  // dA = dY * B^T
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            const Real g = out->grad[i * n + j];
            if (g == Real(0)) continue;
            for (int p = 0; p < k; ++p) a->grad[i * k + p] += g * b->data[p * n + j];
          }
      }
      if (b->requires_grad) {
        b->alloc_grad();  // dB = A^T * dY
        for (int i = 0; i < m; ++i)
          for (int p = 0; p < k; ++p) {
            const Real av = a->data[i * k + p];
            if (av == Real(0)) continue;
            for (int j = 0; j < n; ++j) b->grad[p * n + j] += av * out->grad[i * n + j];
          }
      }
    });
  return out;
}

inline TensorPtr transpose(Tape& tape, const TensorPtr& a) {
  if (a->shape.size() != 2) throw ShapeError("transpose: need 2-D tensor, got " + shape_str(a->shape));
  const int m = a->shape[0], n = a->shape[1];
  bool track = detail::grads_needed(tape, {a});
  auto out = detail::make_out({n, m}, track);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) out->data[j * m + i] = a->data[i * n + j];
  if (track)
    tape.record([a, out, m, n] {
      a->alloc_grad();
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) a->grad[i * n + j] += out->grad[j * m + i];
    });
  return out;
}

// x: [n x d] (or [d]), bias: [d]; bias broadcast over the leading dimension.
inline TensorPtr add_bias(Tape& tape, const TensorPtr& x, const TensorPtr& bias) {
  const int d = bias->numel();
  if (bias->shape.size() != 1 || x->numel() % d != 0 ||
      (x->shape.size() == 2 ? x->shape[1] : x->numel()) != d)
    throw ShapeError("add_bias: bias " + shape_str(bias->shape) + " does not match " +
                     shape_str(x->shape));
  const int n = x->numel() / d;
  bool track = detail::grads_needed(tape, {x, bias});
  auto out = detail::make_out(x->shape, track);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) out->data[i * d + j] = x->data[i * d + j] + bias->data[j];
  if (track)
    tape.record([x, bias, out, n, d] {
      if (x->requires_grad) {
        x->alloc_grad();
        for (int i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[i];
      }
      if (bias->requires_grad) {
        bias->alloc_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) bias->grad[j] += out->grad[i * d + j];
      }
    });
  return out;
}

// y = X v, X: [n x d], v: [d] -> [n]
inline TensorPtr matvec(Tape& tape, const TensorPtr& x, const TensorPtr& v) {
  if (x->shape.size() != 2 || v->shape.size() != 1 || x->shape[1] != v->shape[0])
    throw ShapeError("matvec: incompatible " + shape_str(x->shape) + " and " + shape_str(v->shape));
  const int n = x->shape[0], d = x->shape[1];
  bool track = detail::grads_needed(tape, {x, v});
  auto out = detail::make_out({n}, track);
  for (int i = 0; i < n; ++i) {
    Real acc = 0;
    for (int j = 0; j < d; ++j) acc += x->data[i * d + j] * v->data[j];
    out->data[i] = acc;
  }
  if (track)
    tape.record([x, v, out, n, d] {
      if (x->requires_grad) {
        x->alloc_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) x->grad[i * d + j] += out->grad[i] * v->data[j];
      }
      if (v->requires_grad) {
        v->alloc_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) v->grad[j] += out->grad[i] * x->data[i * d + j];
      }
    });
  return out;
}

// y = v^T X, v: [n], X: [n x d] -> [d]
inline TensorPtr vecmat(Tape& tape, const TensorPtr& v, const TensorPtr& x) {
  if (x->shape.size() != 2 || v->shape.size() != 1 || x->shape[0] != v->shape[0])
    throw ShapeError("vecmat: incompatible " + shape_str(v->shape) + " and " + shape_str(x->shape));
  const int n = x->shape[0], d = x->shape[1];
  bool track = detail::grads_needed(tape, {v, x});
  auto out = detail::make_out({d}, track);
  for (int i = 0; i < n; ++i) {
    const Real vi = v->data[i];
    if (vi == Real(0)) continue;
    for (int j = 0; j < d; ++j) out->data[j] += vi * x->data[i * d + j];
  }
  if (track)
    tape.record([v, x, out, n, d] {
      if (v->requires_grad) {
        v->alloc_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) v->grad[i] += out->grad[j] * x->data[i * d + j];
      }
      if (x->requires_grad) {
        x->alloc_grad();
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < d; ++j) x->grad[i * d + j] += v->data[i] * out->grad[j];
      }
    });
  return out;
}

inline TensorPtr dot(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
  detail::check_same_shape(a, b, "dot");
  bool track = detail::grads_needed(tape, {a, b});
  auto out = detail::make_out({1}, track);
  Real acc = 0;
  for (int i = 0; i < a->numel(); ++i) acc += a->data[i] * b->data[i];
  out->data[0] = acc;
  if (track)
    tape.record([a, b, out] {
      const Real g = out->grad[0];
      if (a->requires_grad) {
        a->alloc_grad();
        for (int i = 0; i < a->numel(); ++i) a->grad[i] += g * b->data[i];
      }
      if (b->requires_grad) {
        b->alloc_grad();
        for (int i = 0; i < b->numel(); ++i) b->grad[i] += g * a->data[i];
      }
    });
  return out;
}

// ---- reshaping / gathering ----

inline TensorPtr concat_vec(Tape& tape, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ContractError("concat_vec: no inputs");
  int total = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p->shape.size() != 1)
      throw ShapeError("concat_vec: need 1-D parts, got " + shape_str(p->shape));
    total += p->numel();
    track = track || (tape.recording() && p->requires_grad);
  }
  auto out = detail::make_out({total}, track);
  int off = 0;
  for (const auto& p : parts) {
    std::copy(p->data.begin(), p->data.end(), out->data.begin() + off);
    off += p->numel();
  }
  if (track)
    tape.record([parts, out] {
      int off = 0;
      for (const auto& p : parts) {
        if (p->requires_grad) {
          p->alloc_grad();
          for (int i = 0; i < p->numel(); ++i) p->grad[i] += out->grad[off + i];
        }
        off += p->numel();
      }
    });
  return out;
}

// Column-wise concat of [n x d_i] blocks into [n x sum(d_i)].
inline TensorPtr concat_cols(Tape& tape, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const int n = parts[0]->shape.size() == 2 ? parts[0]->shape[0] : 0;
  int total = 0;
  bool track = false;
  for (const auto& p : parts) {
    if (p->shape.size() != 2 || p->shape[0] != n)
      throw ShapeError("concat_cols: row mismatch at " + shape_str(p->shape));
    total += p->shape[1];
    track = track || (tape.recording() && p->requires_grad);
  }
  auto out = detail::make_out({n, total}, track);
  for (int i = 0; i < n; ++i) {
    int off = 0;
    for (const auto& p : parts) {
      const int d = p->shape[1];
      for (int j = 0; j < d; ++j) out->data[i * total + off + j] = p->data[i * d + j];
      off += d;
    }
  }
  if (track)
    tape.record([parts, out, n, total] {
      for (int i = 0; i < n; ++i) {
        int off = 0;
        for (const auto& p : parts) {
          const int d = p->shape[1];
          if (p->requires_grad) {
            p->alloc_grad();
            for (int j = 0; j < d; ++j) p->grad[i * d + j] += out->grad[i * total + off + j];
          }
          off += d;
        }
      }
    });
  return out;
}

// Stack k vectors of dim d into [k x d].
inline TensorPtr stack_rows(Tape& tape, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ContractError("stack_rows: no inputs");
  const int d = parts[0]->numel();
  bool track = false;
  for (const auto& p : parts) {
    if (p->shape.size() != 1 || p->numel() != d)
      throw ShapeError("stack_rows: all parts must be 1-D of equal length");
    track = track || (tape.recording() && p->requires_grad);
  }
  const int k = static_cast<int>(parts.size());
  auto out = detail::make_out({k, d}, track);
  for (int i = 0; i < k; ++i)
    std::copy(parts[i]->data.begin(), parts[i]->data.end(), out->data.begin() + i * d);
  if (track)
    tape.record([parts, out, d] {
      for (std::size_t i = 0; i < parts.size(); ++i)
        if (parts[i]->requires_grad) {
          parts[i]->alloc_grad();
          for (int j = 0; j < d; ++j) parts[i]->grad[j] += out->grad[i * d + j];
        }
    });
  return out;
}

inline TensorPtr stack_scalars(Tape& tape, const std::vector<TensorPtr>& parts) {
  if (parts.empty()) throw ContractError("stack_scalars: no inputs");
  bool track = false;
  for (const auto& p : parts) {
    if (!p->is_scalar()) throw ShapeError("stack_scalars: non-scalar part " + shape_str(p->shape));
    track = track || (tape.recording() && p->requires_grad);
  }
  const int k = static_cast<int>(parts.size());
  auto out = detail::make_out({k}, track);
  for (int i = 0; i < k; ++i) out->data[i] = parts[i]->data[0];
  if (track)
    tape.record([parts, out] {
      for (std::size_t i = 0; i < parts.size(); ++i)
        if (parts[i]->requires_grad) {
          parts[i]->alloc_grad();
          parts[i]->grad[0] += out->grad[i];
        }
    });
  return out;
}

// Embedding lookup: rows of table indexed by ids -> [n x d].
inline TensorPtr gather_rows(Tape& tape, const TensorPtr& table, const std::vector<int>& ids) {
  if (table->shape.size() != 2) throw ShapeError("gather_rows: table must be 2-D");
  const int v = table->shape[0], d = table->shape[1];
  for (int id : ids)
    if (id < 0 || id >= v)
      throw ContractError("gather_rows: id " + std::to_string(id) + " out of range [0," +
                          std::to_string(v) + ")");
  const int n = static_cast<int>(ids.size());
  bool track = detail::grads_needed(tape, {table});
  auto out = detail::make_out({n, d}, track);
  for (int i = 0; i < n; ++i)
    std::copy_n(table->data.begin() + static_cast<std::size_t>(ids[i]) * d, d,
                out->data.begin() + static_cast<std::size_t>(i) * d);
  if (track)
    tape.record([table, out, ids, d] {
      table->alloc_grad();
      for (std::size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < d; ++j) table->grad[ids[i] * d + j] += out->grad[i * d + j];
    });
  return out;
}

// Counted sparse lookup: one weighted sum of table rows per position.
// bags[p] lists (row index, count) pairs for position p.
using SparseCounts = std::vector<std::pair<int, Real>>;

inline TensorPtr embed_bag(Tape& tape, const TensorPtr& table, const std::vector<SparseCounts>& bags) {
  if (table->shape.size() != 2) throw ShapeError("embed_bag: table must be 2-D");
  const int b = table->shape[0], d = table->shape[1];
  const int n = static_cast<int>(bags.size());
  if (n == 0) throw ContractError("embed_bag: no positions");
  bool track = detail::grads_needed(tape, {table});
  auto out = detail::make_out({n, d}, track);
  for (int i = 0; i < n; ++i)
    for (const auto& [idx, cnt] : bags[i]) {
      if (idx < 0 || idx >= b) throw ContractError("embed_bag: bucket out of range");
      for (int j = 0; j < d; ++j) out->data[i * d + j] += cnt * table->data[idx * d + j];
    }
  if (track)
    tape.record([table, out, bags, d] {
      table->alloc_grad();
      for (std::size_t i = 0; i < bags.size(); ++i)
        for (const auto& [idx, cnt] : bags[i])
          for (int j = 0; j < d; ++j) table->grad[idx * d + j] += cnt * out->grad[i * d + j];
    });
  return out;
}

// Sliding-window concatenation with zero padding: [n x d] -> [n x w*d],
// row i holding rows i-(w-1)/2 .. i+w/2. The im2col step of the 1-D conv.
inline TensorPtr window_concat(Tape& tape, const TensorPtr& x, int window) {
  if (x->shape.size() != 2) throw ShapeError("window_concat: need 2-D input");
  if (window < 1) throw ContractError("window_concat: window must be >= 1");
  const int n = x->shape[0], d = x->shape[1];
  const int left = (window - 1) / 2;
  bool track = detail::grads_needed(tape, {x});
  auto out = detail::make_out({n, window * d}, track);
  for (int i = 0; i < n; ++i)
    for (int w = 0; w < window; ++w) {
      const int src = i - left + w;
      if (src < 0 || src >= n) continue;  // zero pad
      for (int j = 0; j < d; ++j) out->data[i * window * d + w * d + j] = x->data[src * d + j];
    }
  if (track)
    tape.record([x, out, n, d, window, left] {
      x->alloc_grad();
      for (int i = 0; i < n; ++i)
        for (int w = 0; w < window; ++w) {
          const int src = i - left + w;
          if (src < 0 || src >= n) continue;
          for (int j = 0; j < d; ++j)
            x->grad[src * d + j] += out->grad[i * window * d + w * d + j];
        }
    });
  return out;
}

// Global max pooling over rows: [n x d] -> [d]. Ties resolve to the first row.
inline TensorPtr rowmax(Tape& tape, const TensorPtr& x) {
  if (x->shape.size() != 2) throw ShapeError("rowmax: need 2-D input");
  const int n = x->shape[0], d = x->shape[1];
  bool track = detail::grads_needed(tape, {x});
  auto out = detail::make_out({d}, track);
  std::vector<int> argmax(d, 0);
  for (int j = 0; j < d; ++j) {
    Real best = x->data[j];
    int bi = 0;
    for (int i = 1; i < n; ++i)
      if (x->data[i * d + j] > best) {
        best = x->data[i * d + j];
        bi = i;
      }
    out->data[j] = best;
    argmax[j] = bi;
  }
  if (track)
    tape.record([x, out, argmax = std::move(argmax), d] {
      x->alloc_grad();
      for (int j = 0; j < d; ++j) x->grad[argmax[j] * d + j] += out->grad[j];
    });
  return out;
}

// ---- reductions ----

inline TensorPtr sum_all(Tape& tape, const TensorPtr& x) {
  bool track = detail::grads_needed(tape, {x});
  auto out = detail::make_out({1}, track);
  out->data[0] = std::accumulate(x->data.begin(), x->data.end(), Real(0));
  if (track)
    tape.record([x, out] {
      x->alloc_grad();
      for (int i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[0];
    });
  return out;
}

inline TensorPtr mean_all(Tape& tape, const TensorPtr& x) {
  bool track = detail::grads_needed(tape, {x});
  auto out = detail::make_out({1}, track);
  const Real inv = Real(1) / static_cast<Real>(x->numel());
  out->data[0] = std::accumulate(x->data.begin(), x->data.end(), Real(0)) * inv;
  if (track)
    tape.record([x, out, inv] {
      x->alloc_grad();
      for (int i = 0; i < x->numel(); ++i) x->grad[i] += out->grad[0] * inv;
    });
  return out;
}

// ---- softmax / normalization ----

namespace detail {

// Softmax over the positions of `logits` row-slice where mask is true;
// masked entries get exactly zero.
inline void masked_softmax_slice(const Real* logits, const std::vector<bool>& mask, int off, int n,
                                 Real* out) {
  Real mx = -std::numeric_limits<Real>::infinity();
  int live = 0;
  for (int i = 0; i < n; ++i)
    if (mask[off + i]) {
      mx = std::max(mx, logits[i]);
      ++live;
    }
  if (live == 0) throw MaskError("masked_softmax: all positions masked");
  Real z = 0;
  for (int i = 0; i < n; ++i) {
    if (mask[off + i]) {
      out[i] = std::exp(logits[i] - mx);
      z += out[i];
    } else {
      out[i] = Real(0);
    }
  }
  for (int i = 0; i < n; ++i)
    if (mask[off + i]) out[i] /= z;
}

inline void masked_softmax_backward_slice(const Real* p, const Real* dp, const std::vector<bool>& mask,
                                          int off, int n, Real* dz) {
  Real inner = 0;
  for (int i = 0; i < n; ++i)
    if (mask[off + i]) inner += p[i] * dp[i];
  for (int i = 0; i < n; ++i)
    if (mask[off + i]) dz[i] += p[i] * (dp[i] - inner);
}

}  // namespace detail

inline TensorPtr masked_softmax(Tape& tape, const TensorPtr& logits, const std::vector<bool>& mask) {
  if (logits->shape.size() != 1) throw ShapeError("masked_softmax: need 1-D logits");
  const int n = logits->numel();
  if (static_cast<int>(mask.size()) != n)
    throw ShapeError("masked_softmax: mask length " + std::to_string(mask.size()) +
                     " vs logits " + std::to_string(n));
  bool track = detail::grads_needed(tape, {logits});
  auto out = detail::make_out({n}, track);
  detail::masked_softmax_slice(logits->data.data(), mask, 0, n, out->data.data());
  if (track)
    tape.record([logits, out, mask, n] {
      logits->alloc_grad();
      detail::masked_softmax_backward_slice(out->data.data(), out->grad.data(), mask, 0, n,
                                            logits->grad.data());
    });
  return out;
}

// Row-wise masked softmax over columns, shared column mask: [n x m].
inline TensorPtr masked_softmax_rows(Tape& tape, const TensorPtr& scores,
                                     const std::vector<bool>& col_mask) {
  if (scores->shape.size() != 2) throw ShapeError("masked_softmax_rows: need 2-D scores");
  const int n = scores->shape[0], m = scores->shape[1];
  if (static_cast<int>(col_mask.size()) != m)
    throw ShapeError("masked_softmax_rows: mask length mismatch");
  bool track = detail::grads_needed(tape, {scores});
  auto out = detail::make_out({n, m}, track);
  for (int i = 0; i < n; ++i)
    detail::masked_softmax_slice(scores->data.data() + i * m, col_mask, 0, m,
                                 out->data.data() + i * m);
  if (track)
    tape.record([scores, out, col_mask, n, m] {
      scores->alloc_grad();
      for (int i = 0; i < n; ++i)
        detail::masked_softmax_backward_slice(out->data.data() + i * m, out->grad.data() + i * m,
                                              col_mask, 0, m, scores->grad.data() + i * m);
    });
  return out;
}

// Row-wise layer norm with learned gain/bias: [n x d], gamma/beta: [d].
inline TensorPtr layer_norm_rows(Tape& tape, const TensorPtr& x, const TensorPtr& gamma,
                                 const TensorPtr& beta, Real eps = Real(1e-5)) {
  if (x->shape.size() != 2) throw ShapeError("layer_norm_rows: need 2-D input");
  const int n = x->shape[0], d = x->shape[1];
  if (gamma->numel() != d || beta->numel() != d)
    throw ShapeError("layer_norm_rows: gamma/beta must have dim " + std::to_string(d));
  bool track = detail::grads_needed(tape, {x, gamma, beta});
  auto out = detail::make_out({n, d}, track);
  auto xhat = std::make_shared<std::vector<Real>>(static_cast<std::size_t>(n) * d);
  auto inv_std = std::make_shared<std::vector<Real>>(n);
  for (int i = 0; i < n; ++i) {
    Real mean = 0;
    for (int j = 0; j < d; ++j) mean += x->data[i * d + j];
    mean /= d;
    Real var = 0;
    for (int j = 0; j < d; ++j) {
      const Real c = x->data[i * d + j] - mean;
      var += c * c;
    }
    var /= d;
    const Real is = Real(1) / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < d; ++j) {
      const Real xh = (x->data[i * d + j] - mean) * is;
      (*xhat)[i * d + j] = xh;
      out->data[i * d + j] = gamma->data[j] * xh + beta->data[j];
    }
  }
  if (track)
    tape.record([x, gamma, beta, out, xhat, inv_std, n, d] {
      for (int i = 0; i < n; ++i) {
        // g = dy * gamma; dx = inv_std * (g - mean(g) - xhat * mean(g*xhat))
        Real g_mean = 0, gx_mean = 0;
        for (int j = 0; j < d; ++j) {
          const Real g = out->grad[i * d + j] * gamma->data[j];
          g_mean += g;
          gx_mean += g * (*xhat)[i * d + j];
        }
        g_mean /= d;
        gx_mean /= d;
        if (x->requires_grad) {
          x->alloc_grad();
          for (int j = 0; j < d; ++j) {
            const Real g = out->grad[i * d + j] * gamma->data[j];
            x->grad[i * d + j] += (*inv_std)[i] * (g - g_mean - (*xhat)[i * d + j] * gx_mean);
          }
        }
        if (gamma->requires_grad) {
          gamma->alloc_grad();
          for (int j = 0; j < d; ++j)
            gamma->grad[j] += out->grad[i * d + j] * (*xhat)[i * d + j];
        }
        if (beta->requires_grad) {
          beta->alloc_grad();
          for (int j = 0; j < d; ++j) beta->grad[j] += out->grad[i * d + j];
        }
      }
    });
  return out;
}

// ---- optimizer ----

struct AdamState {
  Real lr = Real(1e-3);
  Real beta1 = Real(0.9);
  Real beta2 = Real(0.999);
  Real epsilon = Real(1e-8);
  long step = 0;

  struct Moments {
    std::vector<Real> m, v;
  };
  std::map<std::string, Moments> slots;
};

// One Adam update with bias correction over named parameters. Gradients are
// consumed as-is; the caller zeroes them afterwards.
inline void adam_step(const std::vector<TensorPtr>& params, AdamState& state) {
  state.step += 1;
  const Real b1t = Real(1) - std::pow(state.beta1, static_cast<Real>(state.step));
  const Real b2t = Real(1) - std::pow(state.beta2, static_cast<Real>(state.step));
  for (const auto& p : params) {
    if (!p->requires_grad) continue;
    p->alloc_grad();
    for (Real g : p->grad)
      if (std::isnan(g) || std::isinf(g))
        throw NumericError("training divergence: non-finite gradient in parameter '" + p->name + "'");
    auto& slot = state.slots[p->name];
    if (slot.m.size() != p->data.size()) {
      slot.m.assign(p->data.size(), Real(0));
      slot.v.assign(p->data.size(), Real(0));
    }
    for (std::size_t i = 0; i < p->data.size(); ++i) {
      const Real g = p->grad[i];
      slot.m[i] = state.beta1 * slot.m[i] + (Real(1) - state.beta1) * g;
      slot.v[i] = state.beta2 * slot.v[i] + (Real(1) - state.beta2) * g * g;
      const Real mhat = slot.m[i] / b1t;
      const Real vhat = slot.v[i] / b2t;
      p->data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.epsilon);
    }
  }
}

inline void zero_grads(const std::vector<TensorPtr>& params) {
  for (const auto& p : params)
    if (p->requires_grad) {
      p->alloc_grad();
      p->zero_grad();
    }
}

}  // namespace textgnn
