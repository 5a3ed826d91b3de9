#pragma once

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <vector>

#include "blanket/tensor.hpp"

namespace blanket {

// Reverse-mode tape over Tensor ops. The tape is append-only and already in
// topological order, so backward is a single reverse sweep. A tape is
// confined to one thread; clear() keeps buffers for reuse in hot loops.

struct Var {
  int id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  enum class Op {
    Leaf,
    Const,
    Affine,      // a=W [m,n], b=x [n], c=bias [m]
    Add,         // elementwise, same shape
    AddScalar,   // a: vector, b: scalar broadcast
    Mul,         // elementwise, same shape
    Scale,       // a * x0
    Tanh,
    Relu,
    Exp,
    Log,
    Softmax,
    LogSumExp,   // vector -> scalar
    Sum,         // vector -> scalar
    Concat,      // list
    Slice,       // a[i0 .. i0+i1)
    Clamp,       // clamp(a, x0, x1); zero gradient outside
  };

  struct Node {
    Op op;
    int a = -1, b = -1, c = -1;
    double x0 = 0.0, x1 = 0.0;
    int i0 = 0, i1 = 0;
    std::vector<int> list;
    Tensor val;
  };

  void clear() {
    nodes_.clear();
    leaf_index_.clear();
  }

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].val; }

  // Registers a parameter tensor as a leaf; repeated registration of the
  // same tensor object returns the same Var so gradients accumulate.
  Var leaf(const Tensor& t) {
    auto it = leaf_index_.find(&t);
    if (it != leaf_index_.end()) return Var{it->second};
    Node n;
    n.op = Op::Leaf;
    n.val = t;
    const int id = push(std::move(n));
    leaf_index_.emplace(&t, id);
    return Var{id};
  }

  Var constant(Tensor t) {
    Node n;
    n.op = Op::Const;
    n.val = std::move(t);
    return Var{push(std::move(n))};
  }
  Var constant(double x) { return constant(Tensor::scalar(x)); }

  Var affine(Var W, Var x, Var b) {
    const Tensor& w = val(W);
    const Tensor& xv = val(x);
    const Tensor& bv = val(b);
    if (w.shape.size() != 2 || w.cols() != xv.size() || bv.size() != w.rows())
      throw type_error("affine: shape mismatch");
    Node n;
    n.op = Op::Affine;
    n.a = W.id;
    n.b = x.id;
    n.c = b.id;
    n.val = Tensor({w.rows()});
    for (std::size_t r = 0; r < w.rows(); ++r) {
      double acc = bv[r];
      const double* wr = &w.data[r * w.cols()];
      for (std::size_t cidx = 0; cidx < w.cols(); ++cidx) acc += wr[cidx] * xv[cidx];
      n.val[r] = acc;
    }
    return Var{push(std::move(n))};
  }

  // Bias-free matrix-vector product.
  Var matvec(Var W, Var x) {
    const Tensor& w = val(W);
    Var zero = constant(Tensor({w.rows()}, 0.0));
    return affine(W, x, zero);
  }

  Var add(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv)) throw type_error("add: shape mismatch");
    Node n;
    n.op = Op::Add;
    n.a = a.id;
    n.b = b.id;
    n.val = av;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] += bv[i];
    return Var{push(std::move(n))};
  }

  Var add_scalar(Var a, Var s) {
    const Tensor& av = val(a);
    const Tensor& sv = val(s);
    if (!sv.is_scalar()) throw type_error("add_scalar: second operand must be scalar");
    Node n;
    n.op = Op::AddScalar;
    n.a = a.id;
    n.b = s.id;
    n.val = av;
    for (double& x : n.val.data) x += sv[0];
    return Var{push(std::move(n))};
  }

  Var mul(Var a, Var b) {
    const Tensor& av = val(a);
    const Tensor& bv = val(b);
    if (!av.same_shape(bv)) throw type_error("mul: shape mismatch");
    Node n;
    n.op = Op::Mul;
    n.a = a.id;
    n.b = b.id;
    n.val = av;
    for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] *= bv[i];
    return Var{push(std::move(n))};
  }

  Var scale(Var a, double c) {
    Node n;
    n.op = Op::Scale;
    n.a = a.id;
    n.x0 = c;
    n.val = val(a);
    for (double& x : n.val.data) x *= c;
    return Var{push(std::move(n))};
  }

  Var sub(Var a, Var b) { return add(a, scale(b, -1.0)); }
  Var neg(Var a) { return scale(a, -1.0); }

  Var tanh_(Var a) { return unary(Op::Tanh, a, [](double x) { return std::tanh(x); }); }
  Var relu(Var a) { return unary(Op::Relu, a, [](double x) { return x > 0.0 ? x : 0.0; }); }
  Var exp_(Var a) { return unary(Op::Exp, a, [](double x) { return std::exp(x); }); }
  Var log_(Var a) { return unary(Op::Log, a, [](double x) { return std::log(x); }); }

  Var clamp(Var a, double lo, double hi) {
    Node n;
    n.op = Op::Clamp;
    n.a = a.id;
    n.x0 = lo;
    n.x1 = hi;
    n.val = val(a);
    for (double& x : n.val.data) x = std::min(hi, std::max(lo, x));
    return Var{push(std::move(n))};
  }

  Var softmax_logits(Var a) {
    const Tensor& av = val(a);
    Node n;
    n.op = Op::Softmax;
    n.a = a.id;
    n.val = av;
    double m = *std::max_element(av.data.begin(), av.data.end());
    double tot = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
      n.val[i] = std::exp(av[i] - m);
      tot += n.val[i];
    }
    for (double& x : n.val.data) x /= tot;
    return Var{push(std::move(n))};
  }

  Var logsumexp(Var a) {
    const Tensor& av = val(a);
    Node n;
    n.op = Op::LogSumExp;
    n.a = a.id;
    double m = *std::max_element(av.data.begin(), av.data.end());
    if (!std::isfinite(m)) {
      n.val = Tensor::scalar(m);
    } else {
      double tot = 0.0;
      for (double x : av.data) tot += std::exp(x - m);
      n.val = Tensor::scalar(m + std::log(tot));
    }
    return Var{push(std::move(n))};
  }

  Var sum(Var a) {
    const Tensor& av = val(a);
    Node n;
    n.op = Op::Sum;
    n.a = a.id;
    double tot = 0.0;
    for (double x : av.data) tot += x;
    n.val = Tensor::scalar(tot);
    return Var{push(std::move(n))};
  }

  Var concat(const std::vector<Var>& parts) {
    Node n;
    n.op = Op::Concat;
    std::size_t total = 0;
    for (Var p : parts) {
      n.list.push_back(p.id);
      total += val(p).size();
    }
    n.val = Tensor({total});
    std::size_t off = 0;
    for (Var p : parts) {
      const Tensor& pv = val(p);
      std::copy(pv.data.begin(), pv.data.end(), n.val.data.begin() + static_cast<long>(off));
      off += pv.size();
    }
    return Var{push(std::move(n))};
  }

  Var slice(Var a, std::size_t off, std::size_t len) {
    const Tensor& av = val(a);
    if (off + len > av.size()) throw type_error("slice: out of range");
    Node n;
    n.op = Op::Slice;
    n.a = a.id;
    n.i0 = static_cast<int>(off);
    n.i1 = static_cast<int>(len);
    n.val = Tensor({len});
    std::copy(av.data.begin() + static_cast<long>(off), av.data.begin() + static_cast<long>(off + len),
              n.val.data.begin());
    return Var{push(std::move(n))};
  }

  // Gradients of a scalar loss w.r.t. every node; leaves unreached by the
  // loss get zeros.
  std::vector<Tensor> backward(Var loss) const {
    const auto& ln = nodes_[static_cast<std::size_t>(loss.id)];
    if (!ln.val.is_scalar()) throw type_error("backward: loss must be scalar");
    std::vector<Tensor> grad(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i) grad[i] = Tensor(nodes_[i].val.shape, 0.0);
    grad[static_cast<std::size_t>(loss.id)][0] = 1.0;

    for (std::size_t idx = nodes_.size(); idx-- > 0;) {
      const Node& n = nodes_[idx];
      const Tensor& g = grad[idx];
      bool any = false;
      for (double x : g.data)
        if (x != 0.0) {
          any = true;
          break;
        }
      if (!any) continue;
      switch (n.op) {
        case Op::Leaf:
        case Op::Const:
          break;
        case Op::Affine: {
          const Tensor& w = nodes_[static_cast<std::size_t>(n.a)].val;
          const Tensor& x = nodes_[static_cast<std::size_t>(n.b)].val;
          Tensor& gw = grad[static_cast<std::size_t>(n.a)];
          Tensor& gx = grad[static_cast<std::size_t>(n.b)];
          Tensor& gb = grad[static_cast<std::size_t>(n.c)];
          for (std::size_t r = 0; r < w.rows(); ++r) {
            const double gr = g[r];
            if (gr == 0.0) continue;
            gb[r] += gr;
            double* gwr = &gw.data[r * w.cols()];
            const double* wr = &w.data[r * w.cols()];
            for (std::size_t c = 0; c < w.cols(); ++c) {
              gwr[c] += gr * x[c];
              gx[c] += gr * wr[c];
            }
          }
          break;
        }
        case Op::Add: {
          accum(grad, n.a, g);
          accum(grad, n.b, g);
          break;
        }
        case Op::AddScalar: {
          accum(grad, n.a, g);
          double tot = 0.0;
          for (double x : g.data) tot += x;
          grad[static_cast<std::size_t>(n.b)][0] += tot;
          break;
        }
        case Op::Mul: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.a)].val;
          const Tensor& b = nodes_[static_cast<std::size_t>(n.b)].val;
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          Tensor& gb = grad[static_cast<std::size_t>(n.b)];
          for (std::size_t i = 0; i < g.size(); ++i) {
            ga[i] += g[i] * b[i];
            gb[i] += g[i] * a[i];
          }
          break;
        }
        case Op::Scale: {
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.x0;
          break;
        }
        case Op::Tanh: {
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
          break;
        }
        case Op::Relu: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.a)].val;
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (std::size_t i = 0; i < g.size(); ++i)
            if (a[i] > 0.0) ga[i] += g[i];
          break;
        }
        case Op::Exp: {
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * n.val[i];
          break;
        }
        case Op::Log: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.a)].val;
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / a[i];
          break;
        }
        case Op::Clamp: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.a)].val;
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (std::size_t i = 0; i < g.size(); ++i)
            if (a[i] > n.x0 && a[i] < n.x1) ga[i] += g[i];
          break;
        }
        case Op::Softmax: {
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          double dot = 0.0;
          for (std::size_t i = 0; i < g.size(); ++i) dot += g[i] * n.val[i];
          for (std::size_t i = 0; i < g.size(); ++i) ga[i] += n.val[i] * (g[i] - dot);
          break;
        }
        case Op::LogSumExp: {
          const Tensor& a = nodes_[static_cast<std::size_t>(n.a)].val;
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          const double lse = n.val[0];
          for (std::size_t i = 0; i < a.size(); ++i) ga[i] += g[0] * std::exp(a[i] - lse);
          break;
        }
        case Op::Sum: {
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (double& x : ga.data) x += g[0];
          break;
        }
        case Op::Concat: {
          std::size_t off = 0;
          for (int pid : n.list) {
            Tensor& gp = grad[static_cast<std::size_t>(pid)];
            for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += g[off + i];
            off += gp.size();
          }
          break;
        }
        case Op::Slice: {
          Tensor& ga = grad[static_cast<std::size_t>(n.a)];
          for (std::size_t i = 0; i < g.size(); ++i) ga[static_cast<std::size_t>(n.i0) + i] += g[i];
          break;
        }
      }
    }
    return grad;
  }

 private:
  const Tensor& val(Var v) const { return nodes_[static_cast<std::size_t>(v.id)].val; }

  template <typename F>
  Var unary(Op op, Var a, F f) {
    Node n;
    n.op = op;
    n.a = a.id;
    n.val = val(a);
    for (double& x : n.val.data) x = f(x);
    return Var{push(std::move(n))};
  }

  static void accum(std::vector<Tensor>& grad, int id, const Tensor& g) {
    Tensor& t = grad[static_cast<std::size_t>(id)];
    for (std::size_t i = 0; i < g.size(); ++i) t[i] += g[i];
  }

  int push(Node&& n) {
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size() - 1);
  }

  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, int> leaf_index_;
};

}  // namespace blanket
