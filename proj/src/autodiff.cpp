#include "coloseo/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coloseo/diagnostics.hpp"

namespace coloseo {

NodeId Tape::push(Op op, int len) {
  Node n;
  n.op = op;
  n.off = static_cast<int>(val_.size());
  n.len = len;
  val_.resize(val_.size() + static_cast<std::size_t>(len), 0.0);
  nodes_.push_back(n);
  has_grad_ = false;
  return static_cast<NodeId>(nodes_.size()) - 1;
}

void Tape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw std::invalid_argument("tape: invalid node id " + std::to_string(id));
  }
}

NodeId Tape::leaf(std::span<const double> v) {
  const NodeId id = push(Op::leaf, static_cast<int>(v.size()));
  std::copy(v.begin(), v.end(), val_.begin() + nodes_[id].off);
  return id;
}

NodeId Tape::scalar_leaf(double v) { return leaf(std::span<const double>(&v, 1)); }

NodeId Tape::affine(NodeId w, NodeId bias, NodeId x, int rows, int cols) {
  check(w); check(bias); check(x);
  if (dim(w) != rows * cols || dim(bias) != rows || dim(x) != cols) {
    throw std::invalid_argument("affine: dimension mismatch");
  }
  const NodeId id = push(Op::affine, rows);
  Node& n = nodes_[id];
  n.a = w; n.b = bias; n.c = x; n.i0 = rows; n.i1 = cols;
  const double* W = v(nodes_[w]);
  const double* B = v(nodes_[bias]);
  const double* X = v(nodes_[x]);
  double* Y = val_.data() + n.off;
  for (int r = 0; r < rows; ++r) {
    double acc = B[r];
    const double* Wr = W + static_cast<std::size_t>(r) * cols;
    for (int c = 0; c < cols; ++c) acc += Wr[c] * X[c];
    Y[r] = acc;
  }
  return id;
}

NodeId Tape::relu(NodeId x) {
  check(x);
  const int len = dim(x);
  const NodeId id = push(Op::relu, len);
  Node& n = nodes_[id];
  n.a = x;
  const double* X = v(nodes_[x]);
  double* Y = val_.data() + n.off;
  for (int i = 0; i < len; ++i) {
    const bool active = X[i] > 0.0;
    mix_branch(active ? 3 : 2);
    Y[i] = active ? X[i] : 0.0;
  }
  return id;
}

NodeId Tape::concat(std::span<const NodeId> parts) {
  int total = 0;
  for (NodeId p : parts) { check(p); total += dim(p); }
  const int args = static_cast<int>(argpool_.size());
  argpool_.insert(argpool_.end(), parts.begin(), parts.end());
  const NodeId id = push(Op::concat, total);
  Node& n = nodes_[id];
  n.args = args;
  n.nargs = static_cast<int>(parts.size());
  double* Y = val_.data() + n.off;
  for (NodeId p : parts) {
    const Node& pn = nodes_[p];
    std::copy(v(pn), v(pn) + pn.len, Y);
    Y += pn.len;
  }
  return id;
}

NodeId Tape::add(NodeId a, NodeId b) {
  check(a); check(b);
  if (dim(a) != dim(b)) throw std::invalid_argument("add: dimension mismatch");
  const int len = dim(a);
  const NodeId id = push(Op::add, len);
  Node& n = nodes_[id];
  n.a = a; n.b = b;
  for (int i = 0; i < len; ++i) val_[n.off + i] = v(nodes_[a])[i] + v(nodes_[b])[i];
  return id;
}

NodeId Tape::sub(NodeId a, NodeId b) {
  check(a); check(b);
  if (dim(a) != dim(b)) throw std::invalid_argument("sub: dimension mismatch");
  const int len = dim(a);
  const NodeId id = push(Op::sub, len);
  Node& n = nodes_[id];
  n.a = a; n.b = b;
  for (int i = 0; i < len; ++i) val_[n.off + i] = v(nodes_[a])[i] - v(nodes_[b])[i];
  return id;
}

NodeId Tape::scale(NodeId a, double k) {
  check(a);
  const int len = dim(a);
  const NodeId id = push(Op::scale, len);
  Node& n = nodes_[id];
  n.a = a; n.k = k;
  for (int i = 0; i < len; ++i) val_[n.off + i] = k * v(nodes_[a])[i];
  return id;
}

NodeId Tape::add_const(NodeId a, double k) {
  check(a);
  const int len = dim(a);
  const NodeId id = push(Op::add_const, len);
  Node& n = nodes_[id];
  n.a = a; n.k = k;
  for (int i = 0; i < len; ++i) val_[n.off + i] = v(nodes_[a])[i] + k;
  return id;
}

NodeId Tape::dot(NodeId u, NodeId v_) {
  check(u); check(v_);
  if (dim(u) != dim(v_)) throw std::invalid_argument("dot: dimension mismatch");
  const NodeId id = push(Op::dot, 1);
  Node& n = nodes_[id];
  n.a = u; n.b = v_;
  double acc = 0.0;
  const double* U = v(nodes_[u]);
  const double* V = v(nodes_[v_]);
  for (int i = 0; i < nodes_[u].len; ++i) acc += U[i] * V[i];
  val_[n.off] = acc;
  return id;
}

NodeId Tape::cosine(NodeId u, NodeId v_) {
  check(u); check(v_);
  if (dim(u) != dim(v_)) throw std::invalid_argument("cosine: dimension mismatch");
  const NodeId id = push(Op::cosine, 1);
  Node& n = nodes_[id];
  n.a = u; n.b = v_;
  const double* U = v(nodes_[u]);
  const double* V = v(nodes_[v_]);
  double uu = 0.0, vv = 0.0, uv = 0.0;
  for (int i = 0; i < nodes_[u].len; ++i) {
    uu += U[i] * U[i];
    vv += V[i] * V[i];
    uv += U[i] * V[i];
  }
  if (uu == 0.0 || vv == 0.0) {
    counters().zero_norm_cosine++;
    val_[n.off] = 0.0;
    n.k = 0.0;  // flags the degenerate case for backward
    mix_branch(5);
  } else {
    val_[n.off] = uv / std::sqrt(uu * vv);
    n.k = 1.0;
    mix_branch(7);
  }
  return id;
}

NodeId Tape::euclid(NodeId u, NodeId v_) {
  check(u); check(v_);
  if (dim(u) != dim(v_)) throw std::invalid_argument("euclid: dimension mismatch");
  const NodeId id = push(Op::euclid, 1);
  Node& n = nodes_[id];
  n.a = u; n.b = v_;
  const double* U = v(nodes_[u]);
  const double* V = v(nodes_[v_]);
  double acc = 0.0;
  for (int i = 0; i < nodes_[u].len; ++i) {
    const double d = U[i] - V[i];
    acc += d * d;
  }
  val_[n.off] = std::sqrt(acc);
  mix_branch(acc == 0.0 ? 11 : 13);
  return id;
}

NodeId Tape::stack(std::span<const NodeId> scalars) {
  for (NodeId s : scalars) {
    check(s);
    if (dim(s) != 1) throw std::invalid_argument("stack: arguments must be scalars");
  }
  const int args = static_cast<int>(argpool_.size());
  argpool_.insert(argpool_.end(), scalars.begin(), scalars.end());
  const NodeId id = push(Op::stack, static_cast<int>(scalars.size()));
  Node& n = nodes_[id];
  n.args = args;
  n.nargs = static_cast<int>(scalars.size());
  for (int i = 0; i < n.nargs; ++i) val_[n.off + i] = val_[nodes_[scalars[i]].off];
  return id;
}

NodeId Tape::logsumexp(NodeId x) {
  check(x);
  const int len = dim(x);
  if (len < 1) throw std::invalid_argument("logsumexp: empty input");
  const NodeId id = push(Op::logsumexp, 1);
  Node& n = nodes_[id];
  n.a = x;
  const double* X = v(nodes_[x]);
  double m = X[0];
  for (int i = 1; i < len; ++i) m = std::max(m, X[i]);
  double s = 0.0;
  for (int i = 0; i < len; ++i) s += std::exp(X[i] - m);
  val_[n.off] = m + std::log(s);
  return id;
}

NodeId Tape::pick(NodeId x, int index) {
  check(x);
  if (index < 0 || index >= dim(x)) throw std::invalid_argument("pick: index out of range");
  const NodeId id = push(Op::pick, 1);
  Node& n = nodes_[id];
  n.a = x; n.i0 = index;
  val_[n.off] = v(nodes_[x])[index];
  return id;
}

NodeId Tape::combine(std::span<const NodeId> scalars, std::span<const double> weights) {
  if (scalars.size() != weights.size()) {
    throw std::invalid_argument("combine: scalars/weights size mismatch");
  }
  for (NodeId s : scalars) {
    check(s);
    if (dim(s) != 1) throw std::invalid_argument("combine: arguments must be scalars");
  }
  const int args = static_cast<int>(argpool_.size());
  argpool_.insert(argpool_.end(), scalars.begin(), scalars.end());
  const int wargs = static_cast<int>(weightpool_.size());
  weightpool_.insert(weightpool_.end(), weights.begin(), weights.end());
  const NodeId id = push(Op::combine, 1);
  Node& n = nodes_[id];
  n.args = args;
  n.nargs = static_cast<int>(scalars.size());
  n.i0 = wargs;
  double acc = 0.0;
  for (int i = 0; i < n.nargs; ++i) acc += weights[i] * val_[nodes_[scalars[i]].off];
  val_[n.off] = acc;
  return id;
}

NodeId Tape::mean(std::span<const NodeId> scalars) {
  if (scalars.empty()) throw std::invalid_argument("mean: empty input");
  std::vector<double> w(scalars.size(), 1.0 / static_cast<double>(scalars.size()));
  return combine(scalars, w);
}

int Tape::dim(NodeId id) const {
  check(id);
  return nodes_[id].len;
}

double Tape::value(NodeId id) const {
  check(id);
  if (nodes_[id].len != 1) throw std::invalid_argument("value: node is not a scalar");
  return val_[nodes_[id].off];
}

std::span<const double> Tape::values(NodeId id) const {
  check(id);
  const Node& n = nodes_[id];
  return {val_.data() + n.off, static_cast<std::size_t>(n.len)};
}

std::span<const double> Tape::grad(NodeId id) const {
  check(id);
  if (!has_grad_) throw std::logic_error("grad: backward() has not been run");
  const Node& n = nodes_[id];
  return {grad_.data() + n.off, static_cast<std::size_t>(n.len)};
}

void Tape::backward(NodeId loss) {
  if (nodes_.empty()) throw std::logic_error("backward: no forward pass recorded");
  check(loss);
  if (nodes_[loss].len != 1) throw std::invalid_argument("backward: loss must be a scalar");

  grad_.assign(val_.size(), 0.0);
  grad_[nodes_[loss].off] = 1.0;

  for (NodeId id = static_cast<NodeId>(nodes_.size()) - 1; id >= 0; --id) {
    Node& n = nodes_[id];
    const double* gy = grad_.data() + n.off;
    switch (n.op) {
      case Op::leaf:
        break;
      case Op::affine: {
        const Node& wn = nodes_[n.a];
        const Node& xn = nodes_[n.c];
        const int rows = n.i0, cols = n.i1;
        const double* W = v(wn);
        const double* X = v(xn);
        double* gW = g(nodes_[n.a]);
        double* gB = g(nodes_[n.b]);
        double* gX = g(nodes_[n.c]);
        for (int r = 0; r < rows; ++r) {
          const double gr = gy[r];
          if (gr == 0.0) continue;
          double* gWr = gW + static_cast<std::size_t>(r) * cols;
          const double* Wr = W + static_cast<std::size_t>(r) * cols;
          for (int c = 0; c < cols; ++c) {
            gWr[c] += gr * X[c];
            gX[c] += gr * Wr[c];
          }
          gB[r] += gr;
        }
        break;
      }
      case Op::relu: {
        const Node& xn = nodes_[n.a];
        const double* X = v(xn);
        double* gX = g(nodes_[n.a]);
        for (int i = 0; i < n.len; ++i) {
          if (X[i] > 0.0) gX[i] += gy[i];
        }
        break;
      }
      case Op::concat: {
        int at = n.off;
        for (int p = 0; p < n.nargs; ++p) {
          Node& pn = nodes_[argpool_[n.args + p]];
          double* gP = g(pn);
          for (int i = 0; i < pn.len; ++i) gP[i] += grad_[at + i];
          at += pn.len;
        }
        break;
      }
      case Op::add: {
        double* gA = g(nodes_[n.a]);
        double* gB = g(nodes_[n.b]);
        for (int i = 0; i < n.len; ++i) {
          gA[i] += gy[i];
          gB[i] += gy[i];
        }
        break;
      }
      case Op::sub: {
        double* gA = g(nodes_[n.a]);
        double* gB = g(nodes_[n.b]);
        for (int i = 0; i < n.len; ++i) {
          gA[i] += gy[i];
          gB[i] -= gy[i];
        }
        break;
      }
      case Op::scale: {
        double* gA = g(nodes_[n.a]);
        for (int i = 0; i < n.len; ++i) gA[i] += n.k * gy[i];
        break;
      }
      case Op::add_const: {
        double* gA = g(nodes_[n.a]);
        for (int i = 0; i < n.len; ++i) gA[i] += gy[i];
        break;
      }
      case Op::dot: {
        const double go = gy[0];
        const double* U = v(nodes_[n.a]);
        const double* V = v(nodes_[n.b]);
        double* gU = g(nodes_[n.a]);
        double* gV = g(nodes_[n.b]);
        for (int i = 0; i < nodes_[n.a].len; ++i) {
          gU[i] += go * V[i];
          gV[i] += go * U[i];
        }
        break;
      }
      case Op::cosine: {
        if (n.k == 0.0) break;  // zero-norm input: value 0, gradient 0
        const double go = gy[0];
        if (go == 0.0) break;
        const double* U = v(nodes_[n.a]);
        const double* V = v(nodes_[n.b]);
        double* gU = g(nodes_[n.a]);
        double* gV = g(nodes_[n.b]);
        const int len = nodes_[n.a].len;
        double uu = 0.0, vv = 0.0;
        for (int i = 0; i < len; ++i) {
          uu += U[i] * U[i];
          vv += V[i] * V[i];
        }
        const double nu = std::sqrt(uu), nv = std::sqrt(vv);
        const double s = val_[n.off];
        // d s / d u = v / (|u||v|) - s u / |u|^2, and symmetrically for v
        for (int i = 0; i < len; ++i) {
          gU[i] += go * (V[i] / (nu * nv) - s * U[i] / uu);
          gV[i] += go * (U[i] / (nu * nv) - s * V[i] / vv);
        }
        break;
      }
      case Op::euclid: {
        const double d = val_[n.off];
        if (d == 0.0) break;  // subgradient 0 at the kink
        const double go = gy[0];
        if (go == 0.0) break;
        const double* U = v(nodes_[n.a]);
        const double* V = v(nodes_[n.b]);
        double* gU = g(nodes_[n.a]);
        double* gV = g(nodes_[n.b]);
        for (int i = 0; i < nodes_[n.a].len; ++i) {
          const double t = go * (U[i] - V[i]) / d;
          gU[i] += t;
          gV[i] -= t;
        }
        break;
      }
      case Op::stack: {
        for (int i = 0; i < n.nargs; ++i) {
          g(nodes_[argpool_[n.args + i]])[0] += gy[i];
        }
        break;
      }
      case Op::logsumexp: {
        const double go = gy[0];
        if (go == 0.0) break;
        const Node& xn = nodes_[n.a];
        const double* X = v(xn);
        double* gX = g(nodes_[n.a]);
        const double y = val_[n.off];
        for (int i = 0; i < xn.len; ++i) gX[i] += go * std::exp(X[i] - y);
        break;
      }
      case Op::pick: {
        g(nodes_[n.a])[n.i0] += gy[0];
        break;
      }
      case Op::combine: {
        const double go = gy[0];
        for (int i = 0; i < n.nargs; ++i) {
          g(nodes_[argpool_[n.args + i]])[0] += go * weightpool_[n.i0 + i];
        }
        break;
      }
    }
  }
  has_grad_ = true;
}

}  // namespace coloseo
