#pragma once

// Tape-based reverse-mode differentiation over small dense tensors.
//
// A Tape records every primitive applied during one forward pass. Each
// recorded node keeps its forward value and, when any input requires a
// gradient, a closure that scatters its output gradient into its inputs.
// Parameters enter the tape as cached leaves; backward() adds leaf gradients
// into Parameter::grad.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rpfslu/errors.hpp"
#include "rpfslu/tensor.hpp"

namespace rpfslu {

class Tape;

/// Handle to a value recorded on a Tape.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  std::size_t size() const { return value().size(); }
  double scalar() const;
  std::vector<double> values() const { return value().data(); }
};

class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::size_t)>;

  Tape() { nodes_.reserve(1024); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
    return {this, nodes_.size() - 1};
  }

  /// Leaf for a trainable parameter; repeated calls return the same node.
  Var param(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return {this, it->second};
    nodes_.push_back(Node{p.value, {}, true, &p, {}});
    param_nodes_[&p] = nodes_.size() - 1;
    return {this, nodes_.size() - 1};
  }

  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
    return record(std::move(value), any_requires(inputs), std::move(fn));
  }
  Var record(Tensor value, bool needs_grad, BackwardFn fn) {
    for (double v : value.values())
      if (!std::isfinite(v)) throw ContractError("non-finite value produced by a recorded operation");
    nodes_.push_back(Node{std::move(value), {}, needs_grad, nullptr, needs_grad ? std::move(fn) : BackwardFn{}});
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Gradient buffer of a node, allocated on first touch.
  std::vector<double>& grad(std::size_t id) {
    auto& n = nodes_[id];
    if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
    return n.grad;
  }
  const std::vector<double>& grad_view(std::size_t id) const { return nodes_[id].grad; }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Propagates d(loss)/d(node) to every node and accumulates parameter
  /// gradients into Parameter::grad. Parameters off the path are untouched.
  void backward(Var loss) {
    if (loss.tape != this) throw ContractError("loss does not belong to this tape");
    if (nodes_[loss.id].value.size() != 1)
      throw ContractError("backward requires a scalar loss, got shape " + shape_str(nodes_[loss.id].value.shape()));
    if (!nodes_[loss.id].requires_grad) return;
    grad(loss.id)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.requires_grad || n.grad.empty()) continue;
      if (n.backward) n.backward(*this, i);
      if (n.param) {
        for (std::size_t k = 0; k < n.grad.size(); ++k) n.param->grad[k] += n.grad[k];
      }
    }
  }

 private:
  struct Node {
    Tensor value;
    std::vector<double> grad;
    bool requires_grad;
    Parameter* param;
    BackwardFn backward;
  };

  bool any_requires(std::initializer_list<Var> inputs) const {
    for (auto v : inputs)
      if (nodes_[v.id].requires_grad) return true;
    return false;
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, std::size_t> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(id); }
inline double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw ContractError("expected scalar, got shape " + shape_str(v.shape()));
  return v[0];
}

namespace detail {

inline void require_same(const Var& a, const Var& b, const char* op) {
  if (a.value().shape() != b.value().shape())
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.value().shape()) + " vs " +
                         shape_str(b.value().shape()));
}

inline void require_vector(const Var& a, const char* op) {
  if (a.value().rank() != 1) throw DimensionError(std::string(op) + ": expected vector, got " + shape_str(a.value().shape()));
}

inline void require_nonempty(std::span<const Var> vs, const char* op) {
  if (vs.empty()) throw DimensionError(std::string(op) + ": empty input");
}

inline bool any_requires(std::span<const Var> vs) {
  for (const auto& v : vs)
    if (v.tape->requires_grad(v)) return true;
  return false;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

inline Var matvec(Var W, Var x) {
  const auto& Wv = W.value();
  const auto& xv = x.value();
  if (Wv.rank() != 2 || xv.rank() != 1 || Wv.cols() != xv.size())
    throw DimensionError("matvec: shape mismatch " + shape_str(Wv.shape()) + " vs " + shape_str(xv.shape()));
  const std::size_t m = Wv.rows(), n = Wv.cols();
  Tensor y({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = Wv.data().data() + i * n;
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    y[i] = acc;
  }
  return W.tape->record(std::move(y), {W, x}, [W, x, m, n](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    if (t.requires_grad(W)) {
      auto& gW = t.grad(W.id);
      const auto& xv = t.value(x.id);
      for (std::size_t i = 0; i < m; ++i) {
        if (gy[i] == 0.0) continue;
        double* row = gW.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += gy[i] * xv[j];
      }
    }
    if (t.requires_grad(x)) {
      auto& gx = t.grad(x.id);
      const auto& Wv = t.value(W.id);
      for (std::size_t i = 0; i < m; ++i) {
        if (gy[i] == 0.0) continue;
        const double* row = Wv.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += row[j] * gy[i];
      }
    }
  });
}

/// W·x + b.
inline Var affine(Var W, Var x, Var b) {
  const auto& Wv = W.value();
  const auto& xv = x.value();
  const auto& bv = b.value();
  if (Wv.rank() != 2 || xv.rank() != 1 || bv.rank() != 1 || Wv.cols() != xv.size() || Wv.rows() != bv.size())
    throw DimensionError("affine: shape mismatch W" + shape_str(Wv.shape()) + " x" + shape_str(xv.shape()) + " b" +
                         shape_str(bv.shape()));
  const std::size_t m = Wv.rows(), n = Wv.cols();
  Tensor y({m});
  for (std::size_t i = 0; i < m; ++i) {
    const double* row = Wv.data().data() + i * n;
    double acc = bv[i];
    for (std::size_t j = 0; j < n; ++j) acc += row[j] * xv[j];
    y[i] = acc;
  }
  Tape& tape = *W.tape;
  return tape.record(std::move(y), {W, x, b}, [W, x, b, m, n](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    if (t.requires_grad(W)) {
      auto& gW = t.grad(W.id);
      const auto& xv = t.value(x.id);
      for (std::size_t i = 0; i < m; ++i) {
        if (gy[i] == 0.0) continue;
        double* row = gW.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) row[j] += gy[i] * xv[j];
      }
    }
    if (t.requires_grad(x)) {
      auto& gx = t.grad(x.id);
      const auto& Wv = t.value(W.id);
      for (std::size_t i = 0; i < m; ++i) {
        if (gy[i] == 0.0) continue;
        const double* row = Wv.data().data() + i * n;
        for (std::size_t j = 0; j < n; ++j) gx[j] += row[j] * gy[i];
      }
    }
    if (t.requires_grad(b)) {
      auto& gb = t.grad(b.id);
      for (std::size_t i = 0; i < m; ++i) gb[i] += gy[i];
    }
  });
}

/// Row `index` of a rank-2 tensor, as a vector.
inline Var row(Var table, std::size_t index) {
  const auto& tv = table.value();
  if (tv.rank() != 2) throw DimensionError("row: expected matrix, got " + shape_str(tv.shape()));
  if (index >= tv.rows())
    throw DataError("row: index " + std::to_string(index) + " out of range for " + shape_str(tv.shape()));
  const std::size_t d = tv.cols();
  std::vector<double> out(tv.data().begin() + static_cast<std::ptrdiff_t>(index * d),
                          tv.data().begin() + static_cast<std::ptrdiff_t>((index + 1) * d));
  return table.tape->record(Tensor::vector(std::move(out)), {table}, [table, index, d](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    auto& g = t.grad(table.id);
    for (std::size_t j = 0; j < d; ++j) g[index * d + j] += gy[j];
  });
}

// ---------------------------------------------------------------------------
// Element-wise

inline Var add(Var a, Var b) {
  detail::require_same(a, b, "add");
  Tensor y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    for (Var v : {a, b}) {
      if (!t.requires_grad(v)) continue;
      auto& g = t.grad(v.id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    }
  });
}

inline Var mul(Var a, Var b) {
  detail::require_same(a, b, "mul");
  Tensor y = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  return a.tape->record(std::move(y), {a, b}, [a, b](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    if (t.requires_grad(a)) {
      auto& g = t.grad(a.id);
      const auto& bv = t.value(b.id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * bv[i];
    }
    if (t.requires_grad(b)) {
      auto& g = t.grad(b.id);
      const auto& av = t.value(a.id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * av[i];
    }
  });
}

inline Var scale(Var a, double c) {
  Tensor y = a.value();
  for (auto& v : y.values()) v *= c;
  return a.tape->record(std::move(y), {a}, [a, c](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    auto& g = t.grad(a.id);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += c * gy[i];
  });
}

/// z⊙a + (1−z)⊙b.
inline Var gate_mix(Var z, Var a, Var b) {
  detail::require_same(z, a, "gate_mix");
  detail::require_same(z, b, "gate_mix");
  const auto& zv = z.value();
  const auto& av = a.value();
  const auto& bv = b.value();
  Tensor y(zv.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = zv[i] * av[i] + (1.0 - zv[i]) * bv[i];
  return z.tape->record(std::move(y), {z, a, b}, [z, a, b](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    const auto& zv = t.value(z.id);
    if (t.requires_grad(z)) {
      auto& g = t.grad(z.id);
      const auto& av = t.value(a.id);
      const auto& bv = t.value(b.id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * (av[i] - bv[i]);
    }
    if (t.requires_grad(a)) {
      auto& g = t.grad(a.id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * zv[i];
    }
    if (t.requires_grad(b)) {
      auto& g = t.grad(b.id);
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * (1.0 - zv[i]);
    }
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities

enum class Activation { softmax, sigmoid, tanh };

inline Var softmax(Var x) {
  detail::require_vector(x, "softmax");
  const auto& xv = x.value();
  const double mx = *std::max_element(xv.values().begin(), xv.values().end());
  Tensor y(xv.shape());
  double sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) sum += (y[i] = std::exp(xv[i] - mx));
  for (auto& v : y.values()) v /= sum;
  return x.tape->record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    const auto& yv = t.value(self);
    double dotp = 0.0;
    for (std::size_t i = 0; i < gy.size(); ++i) dotp += gy[i] * yv[i];
    auto& g = t.grad(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += yv[i] * (gy[i] - dotp);
  });
}

inline Var sigmoid(Var x) {
  Tensor y = x.value();
  for (auto& v : y.values()) v = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  return x.tape->record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    const auto& yv = t.value(self);
    auto& g = t.grad(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * yv[i] * (1.0 - yv[i]);
  });
}

inline Var tanh(Var x) {
  Tensor y = x.value();
  for (auto& v : y.values()) v = std::tanh(v);
  return x.tape->record(std::move(y), {x}, [x](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    const auto& yv = t.value(self);
    auto& g = t.grad(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * (1.0 - yv[i] * yv[i]);
  });
}

inline Var activation(Activation kind, Var x) {
  if (x.value().size() == 0) throw DimensionError("activation: empty vector");
  switch (kind) {
    case Activation::softmax: return softmax(x);
    case Activation::sigmoid: return sigmoid(x);
    case Activation::tanh: return tanh(x);
  }
  throw ContractError("activation: unknown kind");
}

// ---------------------------------------------------------------------------
// Reductions and structural ops

inline Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const std::size_t n = x.size();
  return x.tape->record(Tensor::scalar(s), {x}, [x, n](Tape& t, std::size_t self) {
    const double gy = t.grad_view(self)[0];
    auto& g = t.grad(x.id);
    for (std::size_t i = 0; i < n; ++i) g[i] += gy;
  });
}

inline Var dot(Var a, Var b) {
  detail::require_same(a, b, "dot");
  const auto& av = a.value();
  const auto& bv = b.value();
  double s = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) s += av[i] * bv[i];
  return a.tape->record(Tensor::scalar(s), {a, b}, [a, b](Tape& t, std::size_t self) {
    const double gy = t.grad_view(self)[0];
    const auto& av = t.value(a.id);
    const auto& bv = t.value(b.id);
    if (t.requires_grad(a)) {
      auto& g = t.grad(a.id);
      for (std::size_t i = 0; i < av.size(); ++i) g[i] += gy * bv[i];
    }
    if (t.requires_grad(b)) {
      auto& g = t.grad(b.id);
      for (std::size_t i = 0; i < av.size(); ++i) g[i] += gy * av[i];
    }
  });
}

/// Concatenates vectors end to end.
inline Var concat(std::span<const Var> parts) {
  detail::require_nonempty(parts, "concat");
  std::vector<double> out;
  std::vector<std::size_t> offsets;
  offsets.reserve(parts.size());
  for (const auto& p : parts) {
    detail::require_vector(p, "concat");
    offsets.push_back(out.size());
    const auto& v = p.value().data();
    out.insert(out.end(), v.begin(), v.end());
  }
  std::vector<Var> inputs(parts.begin(), parts.end());
  Tape& tape = *parts.front().tape;
  return tape.record(Tensor::vector(std::move(out)), detail::any_requires(parts),
                     [inputs = std::move(inputs), offsets = std::move(offsets)](Tape& t, std::size_t self) {
                       const auto& gy = t.grad_view(self);
                       for (std::size_t k = 0; k < inputs.size(); ++k) {
                         if (!t.requires_grad(inputs[k])) continue;
                         auto& g = t.grad(inputs[k].id);
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy[offsets[k] + i];
                       }
                     });
}
inline Var concat(std::initializer_list<Var> parts) { return concat(std::span<const Var>(parts.begin(), parts.size())); }

/// Σ_t w_t · v_t for a weight vector w and equally-shaped vectors v_t.
inline Var weighted_sum(Var w, std::span<const Var> vs) {
  detail::require_nonempty(vs, "weighted_sum");
  const auto& wv = w.value();
  if (wv.size() != vs.size())
    throw DimensionError("weighted_sum: " + std::to_string(wv.size()) + " weights for " + std::to_string(vs.size()) +
                         " vectors");
  Tensor y(vs.front().value().shape());
  for (std::size_t t = 0; t < vs.size(); ++t) {
    detail::require_same(vs.front(), vs[t], "weighted_sum");
    const auto& v = vs[t].value();
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += wv[t] * v[i];
  }
  std::vector<Var> inputs(vs.begin(), vs.end());
  const bool req = w.tape->requires_grad(w) || detail::any_requires(vs);
  return w.tape->record(std::move(y), req, [w, inputs = std::move(inputs)](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    const auto& wv = t.value(w.id);
    const bool wreq = t.requires_grad(w);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
      const auto& v = t.value(inputs[k].id);
      if (wreq) {
        double s = 0.0;
        for (std::size_t i = 0; i < gy.size(); ++i) s += gy[i] * v[i];
        t.grad(w.id)[k] += s;
      }
      if (t.requires_grad(inputs[k])) {
        auto& g = t.grad(inputs[k].id);
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += wv[k] * gy[i];
      }
    }
  });
}

/// x_i / Σ_j x_j. The caller guarantees a nonzero sum.
inline Var normalize(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  if (s == 0.0) throw ContractError("normalize: zero sum");
  Tensor y = x.value();
  for (auto& v : y.values()) v /= s;
  return x.tape->record(std::move(y), {x}, [x, s](Tape& t, std::size_t self) {
    const auto& gy = t.grad_view(self);
    const auto& yv = t.value(self);
    double dotp = 0.0;
    for (std::size_t i = 0; i < gy.size(); ++i) dotp += gy[i] * yv[i];
    auto& g = t.grad(x.id);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += (gy[i] - dotp) / s;
  });
}

/// −log(max(p[index], floor)); zero gradient inside the clamp.
inline Var neg_log_pick(Var p, std::size_t index, double floor = 1e-12) {
  const auto& pv = p.value();
  if (index >= pv.size())
    throw DimensionError("neg_log_pick: index " + std::to_string(index) + " out of range for " + shape_str(pv.shape()));
  const double v = pv[index];
  const bool clamped = v < floor;
  return p.tape->record(Tensor::scalar(-std::log(clamped ? floor : v)), {p}, [p, index, v, clamped](Tape& t, std::size_t self) {
    if (clamped) return;
    t.grad(p.id)[index] += -t.grad_view(self)[0] / v;
  });
}

// ---------------------------------------------------------------------------
// Gradient checking

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Compares backward() against central differences for every scalar of
/// `params`. A component whose absolute discrepancy is below `abs_floor`
/// counts as exact; otherwise the error is |a−n| / max(|a|, |n|).
inline FiniteDiffReport finite_diff_check(const std::function<Var(Tape&)>& f, std::span<Parameter* const> params,
                                          double h = 1e-5, double abs_floor = 1e-8) {
  for (auto* p : params) p->zero_grad();
  {
    Tape tape;
    Var loss = f(tape);
    tape.backward(loss);
  }
  FiniteDiffReport report;
  auto eval = [&f] {
    Tape tape;
    return f(tape).scalar();
  };
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double orig = p->value[i];
      p->value[i] = orig + h;
      const double up = eval();
      p->value[i] = orig - h;
      const double down = eval();
      p->value[i] = orig;
      const double numeric = (up - down) / (2.0 * h);
      const double analytic = p->grad[i];
      const double diff = std::abs(analytic - numeric);
      const double err = diff < abs_floor ? 0.0 : diff / std::max(std::abs(analytic), std::abs(numeric));
      ++report.checked;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_param = p->name;
        report.worst_index = i;
        report.analytic = analytic;
        report.numeric = numeric;
      }
    }
  }
  return report;
}

}  // namespace rpfslu
