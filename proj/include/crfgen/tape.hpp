#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "crfgen/array.hpp"

namespace crfgen {

// Numeric failures (overflow, non-finite intermediates) carry their own type
// so callers can tell them apart from usage errors.
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// A named parameter with an externally owned gradient accumulator.
struct Param {
  std::string name;
  Array value;
  Array grad;

  Param(std::string n, Array v) : name(std::move(n)), value(std::move(v)) {
    grad = Array(value.shape);
  }
  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over coarse array primitives. Operands precede consumers
// by construction; one tape is single-threaded, distinct tapes may run
// concurrently over shared read-only parameters. Arrays are immutable once
// recorded.
class Tape {
 public:
  enum class Op {
    kLeaf,      // constant or parameter
    kAdd, kSub, kMul,           // elementwise, equal shapes
    kScale, kShift,             // by compile-time constant c
    kNeg, kExp, kLog, kTanh, kSigmoid, kSoftplus,
    kClamp,                     // [lo, hi], zero gradient outside
    kSMul, kSDiv,               // vector (*|/) scalar node
    kSum, kLogSumExp, kDot,
    kMatVec,                    // A[m,n] x[n] -> [m]
    kMatVecT,                   // A[m,n] y[m] -> [n]  (A^T y)
    kRow,                       // A[m,n], index -> [n]
    kAt,                        // v[n], index -> scalar
    kConcat,                    // [a]+[b] -> [a+b]
    kReshape,                   // same element count, new shape
  };

  struct Node {
    Op op = Op::kLeaf;
    int a = -1, b = -1;
    std::size_t index = 0;
    double lo = 0.0, hi = 0.0;
    Array val;
    Array grad;           // allocated by backward()
    bool requires_grad = false;
    Param* param = nullptr;
  };

  std::size_t size() const { return nodes_.size(); }
  const Array& val(Var v) const { return nodes_.at(v.id).val; }
  double scalar(Var v) const { return nodes_.at(v.id).val.value(); }

  // Gradient of the last backward() root w.r.t. any recorded node.
  // Untouched leaves keep an all-zero gradient.
  const Array& grad(Var v) const { return nodes_.at(v.id).grad; }

  Var constant(Array v) { return push(Op::kLeaf, -1, -1, std::move(v), false); }
  Var constant(double x) { return constant(Array::scalar(x)); }

  Var param(Param& p) {
    auto it = param_vars_.find(&p);
    if (it != param_vars_.end()) return it->second;
    Var v = push(Op::kLeaf, -1, -1, p.value, true);
    nodes_[v.id].param = &p;
    param_vars_.emplace(&p, v);
    return v;
  }

  Var add(Var x, Var y) { return binary(Op::kAdd, x, y); }
  Var sub(Var x, Var y) { return binary(Op::kSub, x, y); }
  Var mul(Var x, Var y) { return binary(Op::kMul, x, y); }

  Var scale(Var x, double c) {
    Array out = node(x).val;
    for (double& e : out.data) e *= c;
    Var v = push(Op::kScale, x.id, -1, std::move(out), node(x).requires_grad);
    nodes_[v.id].lo = c;
    return v;
  }
  Var shift(Var x, double c) {
    Array out = node(x).val;
    for (double& e : out.data) e += c;
    Var v = push(Op::kShift, x.id, -1, std::move(out), node(x).requires_grad);
    nodes_[v.id].lo = c;
    return v;
  }
  Var neg(Var x) { return unary(Op::kNeg, x, [](double v) { return -v; }); }
  Var exp(Var x) { return unary(Op::kExp, x, [](double v) { return std::exp(v); }); }
  Var log(Var x) { return unary(Op::kLog, x, [](double v) { return std::log(v); }); }
  Var tanh(Var x) { return unary(Op::kTanh, x, [](double v) { return std::tanh(v); }); }
  Var sigmoid(Var x) {
    return unary(Op::kSigmoid, x, [](double v) { return sigmoid_val(v); });
  }
  Var softplus(Var x) {
    return unary(Op::kSoftplus, x, [](double v) { return softplus_val(v); });
  }

  Var clamp(Var x, double lo, double hi) {
    Array out = node(x).val;
    for (double& e : out.data) e = std::min(hi, std::max(lo, e));
    Var v = push(Op::kClamp, x.id, -1, std::move(out), node(x).requires_grad);
    nodes_[v.id].lo = lo;
    nodes_[v.id].hi = hi;
    return v;
  }

  Var smul(Var x, Var s) { return scalar_combine(Op::kSMul, x, s); }
  Var sdiv(Var x, Var s) { return scalar_combine(Op::kSDiv, x, s); }

  Var sum(Var x) {
    double acc = 0.0;
    for (double e : node(x).val.data) acc += e;
    return push(Op::kSum, x.id, -1, Array::scalar(acc), node(x).requires_grad);
  }

  Var logsumexp(Var x) {
    double v = crfgen::logsumexp(std::span<const double>(node(x).val.data));
    return push(Op::kLogSumExp, x.id, -1, Array::scalar(v), node(x).requires_grad);
  }

  Var dot(Var x, Var y) {
    const Array& xa = node(x).val;
    const Array& ya = node(y).val;
    if (!shape_eq(xa, ya)) throw std::invalid_argument("dot: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < xa.numel(); ++i) acc += xa[i] * ya[i];
    return push(Op::kDot, x.id, y.id, Array::scalar(acc),
                node(x).requires_grad || node(y).requires_grad);
  }

  Var matvec(Var w, Var x) {
    const Array& wa = node(w).val;
    const Array& xa = node(x).val;
    if (wa.rank() != 2 || xa.rank() != 1 || wa.cols() != xa.numel())
      throw std::invalid_argument("matvec: shape mismatch");
    Array out({wa.rows()});
    for (std::size_t i = 0; i < wa.rows(); ++i) {
      const double* rowp = wa.data.data() + i * wa.cols();
      double acc = 0.0;
      for (std::size_t j = 0; j < wa.cols(); ++j) acc += rowp[j] * xa[j];
      out[i] = acc;
    }
    return push(Op::kMatVec, w.id, x.id, std::move(out),
                node(w).requires_grad || node(x).requires_grad);
  }

  Var matvec_t(Var w, Var y) {
    const Array& wa = node(w).val;
    const Array& ya = node(y).val;
    if (wa.rank() != 2 || ya.rank() != 1 || wa.rows() != ya.numel())
      throw std::invalid_argument("matvec_t: shape mismatch");
    Array out({wa.cols()});
    for (std::size_t i = 0; i < wa.rows(); ++i) {
      const double* rowp = wa.data.data() + i * wa.cols();
      double yi = ya[i];
      for (std::size_t j = 0; j < wa.cols(); ++j) out[j] += rowp[j] * yi;
    }
    return push(Op::kMatVecT, w.id, y.id, std::move(out),
                node(w).requires_grad || node(y).requires_grad);
  }

  Var row(Var a, std::size_t i) {
    const Array& aa = node(a).val;
    if (aa.rank() != 2 || i >= aa.rows())
      throw std::invalid_argument("row: index out of range");
    Array out({aa.cols()});
    std::copy_n(aa.data.data() + i * aa.cols(), aa.cols(), out.data.data());
    Var v = push(Op::kRow, a.id, -1, std::move(out), node(a).requires_grad);
    nodes_[v.id].index = i;
    return v;
  }

  Var at(Var x, std::size_t i) {
    const Array& xa = node(x).val;
    if (i >= xa.numel()) throw std::invalid_argument("at: index out of range");
    Var v = push(Op::kAt, x.id, -1, Array::scalar(xa[i]), node(x).requires_grad);
    nodes_[v.id].index = i;
    return v;
  }

  Var concat(Var x, Var y) {
    const Array& xa = node(x).val;
    const Array& ya = node(y).val;
    if (xa.rank() != 1 || ya.rank() != 1)
      throw std::invalid_argument("concat: vectors only");
    Array out({xa.numel() + ya.numel()});
    std::copy(xa.data.begin(), xa.data.end(), out.data.begin());
    std::copy(ya.data.begin(), ya.data.end(), out.data.begin() + xa.numel());
    return push(Op::kConcat, x.id, y.id, std::move(out),
                node(x).requires_grad || node(y).requires_grad);
  }

  Var reshape(Var x, std::vector<std::size_t> shape) {
    const Array& xa = node(x).val;
    if (Array::count(shape) != xa.numel())
      throw std::invalid_argument("reshape: element count mismatch");
    Array out(std::move(shape), xa.data);
    return push(Op::kReshape, x.id, -1, std::move(out), node(x).requires_grad);
  }

  Var add_all(const std::vector<Var>& vs) {
    if (vs.empty()) throw std::invalid_argument("add_all: empty");
    Var acc = vs[0];
    for (std::size_t i = 1; i < vs.size(); ++i) acc = add(acc, vs[i]);
    return acc;
  }

  // Reverse sweep from a scalar root. Gradients land on every node reachable
  // from parameters; parameter leaves additionally accumulate into
  // Param::grad, so batched losses can sum over several tapes.
  void backward(Var root) {
    Node& r = nodes_.at(root.id);
    if (!r.val.is_scalar())
      throw std::invalid_argument("backward: root must be a scalar");
    for (Node& n : nodes_)
      if (n.requires_grad) n.grad = Array(n.val.shape);
    if (!r.requires_grad) return;  // no parameters feed the root
    r.grad.data[0] = 1.0;
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i)
      pull(nodes_[static_cast<std::size_t>(i)]);
    for (auto& [p, var] : param_vars_) {
      const Array& g = nodes_[var.id].grad;
      for (std::size_t k = 0; k < g.numel(); ++k) p->grad.data[k] += g[k];
    }
  }

 private:
  static double sigmoid_val(double v) {
    return v >= 0 ? 1.0 / (1.0 + std::exp(-v))
                  : std::exp(v) / (1.0 + std::exp(v));
  }
  static double softplus_val(double v) {
    return v > 0 ? v + std::log1p(std::exp(-v)) : std::log1p(std::exp(v));
  }

  Node& node(Var v) { return nodes_.at(v.id); }
  const Node& node(Var v) const { return nodes_.at(v.id); }

  Var push(Op op, int a, int b, Array val, bool rg) {
    Node n;
    n.op = op;
    n.a = a;
    n.b = b;
    n.val = std::move(val);
    n.requires_grad = rg;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var binary(Op op, Var x, Var y) {
    const Array& xa = node(x).val;
    const Array& ya = node(y).val;
    if (!shape_eq(xa, ya)) throw std::invalid_argument("elementwise: shape mismatch");
    Array out(xa.shape);
    switch (op) {
      case Op::kAdd:
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xa[i] + ya[i];
        break;
      case Op::kSub:
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xa[i] - ya[i];
        break;
      case Op::kMul:
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] = xa[i] * ya[i];
        break;
      default:
        throw std::logic_error("binary: bad op");
    }
    return push(op, x.id, y.id, std::move(out),
                node(x).requires_grad || node(y).requires_grad);
  }

  template <class F>
  Var unary(Op op, Var x, F f) {
    Array out = node(x).val;
    for (double& e : out.data) e = f(e);
    return push(op, x.id, -1, std::move(out), node(x).requires_grad);
  }

  Var scalar_combine(Op op, Var x, Var s) {
    const Array& xa = node(x).val;
    const Array& sa = node(s).val;
    if (!sa.is_scalar()) throw std::invalid_argument("smul/sdiv: scalar expected");
    double c = sa.value();
    Array out = xa;
    if (op == Op::kSMul)
      for (double& e : out.data) e *= c;
    else
      for (double& e : out.data) e /= c;
    return push(op, x.id, s.id, std::move(out),
                node(x).requires_grad || node(s).requires_grad);
  }

  void add_grad(int id, std::size_t k, double g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.requires_grad) n.grad.data[k] += g;
  }
  bool wants(int id) const {
    return id >= 0 && nodes_[static_cast<std::size_t>(id)].requires_grad;
  }

  void pull(Node& n) {
    if (!n.requires_grad || n.op == Op::kLeaf) return;
    const Array& g = n.grad;
    Node* na = n.a >= 0 ? &nodes_[static_cast<std::size_t>(n.a)] : nullptr;
    Node* nb = n.b >= 0 ? &nodes_[static_cast<std::size_t>(n.b)] : nullptr;
    switch (n.op) {
      case Op::kAdd:
        if (wants(n.a)) for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i];
        if (wants(n.b)) for (std::size_t i = 0; i < g.numel(); ++i) nb->grad[i] += g[i];
        break;
      case Op::kSub:
        if (wants(n.a)) for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i];
        if (wants(n.b)) for (std::size_t i = 0; i < g.numel(); ++i) nb->grad[i] -= g[i];
        break;
      case Op::kMul:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i] * nb->val[i];
        if (wants(n.b))
          for (std::size_t i = 0; i < g.numel(); ++i) nb->grad[i] += g[i] * na->val[i];
        break;
      case Op::kScale:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i] * n.lo;
        break;
      case Op::kShift:
        if (wants(n.a)) for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i];
        break;
      case Op::kNeg:
        if (wants(n.a)) for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] -= g[i];
        break;
      case Op::kExp:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i] * n.val[i];
        break;
      case Op::kLog:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i] / na->val[i];
        break;
      case Op::kTanh:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i)
            na->grad[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
        break;
      case Op::kSigmoid:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i)
            na->grad[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
        break;
      case Op::kSoftplus:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i)
            na->grad[i] += g[i] * sigmoid_val(na->val[i]);
        break;
      case Op::kClamp:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) {
            double x = na->val[i];
            if (x > n.lo && x < n.hi) na->grad[i] += g[i];
          }
        break;
      case Op::kSMul: {
        double s = nb->val.value();
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i] * s;
        if (wants(n.b)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * na->val[i];
          nb->grad.data[0] += acc;
        }
        break;
      }
      case Op::kSDiv: {
        double s = nb->val.value();
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i] / s;
        if (wants(n.b)) {
          double acc = 0.0;
          for (std::size_t i = 0; i < g.numel(); ++i) acc += g[i] * na->val[i];
          nb->grad.data[0] -= acc / (s * s);
        }
        break;
      }
      case Op::kSum: {
        double gs = g.value();
        if (wants(n.a))
          for (std::size_t i = 0; i < na->grad.numel(); ++i) na->grad[i] += gs;
        break;
      }
      case Op::kLogSumExp: {
        if (wants(n.a)) {
          double gs = g.value();
          double lse = n.val.value();
          for (std::size_t i = 0; i < na->grad.numel(); ++i)
            na->grad[i] += gs * std::exp(na->val[i] - lse);
        }
        break;
      }
      case Op::kDot: {
        double gs = g.value();
        if (wants(n.a))
          for (std::size_t i = 0; i < na->grad.numel(); ++i)
            na->grad[i] += gs * nb->val[i];
        if (wants(n.b))
          for (std::size_t i = 0; i < nb->grad.numel(); ++i)
            nb->grad[i] += gs * na->val[i];
        break;
      }
      case Op::kMatVec: {
        const Array& w = na->val;
        const Array& x = nb->val;
        std::size_t m = w.rows(), k = w.cols();
        if (wants(n.a))
          for (std::size_t i = 0; i < m; ++i) {
            double gi = g[i];
            double* wg = na->grad.data.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) wg[j] += gi * x[j];
          }
        if (wants(n.b))
          for (std::size_t i = 0; i < m; ++i) {
            double gi = g[i];
            const double* wr = w.data.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) nb->grad[j] += gi * wr[j];
          }
        break;
      }
      case Op::kMatVecT: {
        const Array& w = na->val;
        const Array& y = nb->val;
        std::size_t m = w.rows(), k = w.cols();
        if (wants(n.a))
          for (std::size_t i = 0; i < m; ++i) {
            double yi = y[i];
            double* wg = na->grad.data.data() + i * k;
            for (std::size_t j = 0; j < k; ++j) wg[j] += yi * g[j];
          }
        if (wants(n.b))
          for (std::size_t i = 0; i < m; ++i) {
            const double* wr = w.data.data() + i * k;
            double acc = 0.0;
            for (std::size_t j = 0; j < k; ++j) acc += wr[j] * g[j];
            nb->grad[i] += acc;
          }
        break;
      }
      case Op::kRow:
        if (wants(n.a)) {
          std::size_t cols = na->val.cols();
          double* dst = na->grad.data.data() + n.index * cols;
          for (std::size_t j = 0; j < cols; ++j) dst[j] += g[j];
        }
        break;
      case Op::kAt:
        if (wants(n.a)) na->grad[n.index] += g.value();
        break;
      case Op::kConcat: {
        std::size_t la = na->val.numel();
        if (wants(n.a))
          for (std::size_t i = 0; i < la; ++i) na->grad[i] += g[i];
        if (wants(n.b))
          for (std::size_t i = la; i < g.numel(); ++i) nb->grad[i - la] += g[i];
        break;
      }
      case Op::kReshape:
        if (wants(n.a))
          for (std::size_t i = 0; i < g.numel(); ++i) na->grad[i] += g[i];
        break;
      case Op::kLeaf:
        break;
    }
  }

  std::vector<Node> nodes_;
  std::unordered_map<Param*, Var> param_vars_;
};

}  // namespace crfgen
