#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace coloseo {

using NodeId = int;

// Reverse-mode tape over vector-valued nodes. Every operation appends one
// node whose arguments precede it, so backward() is a single reverse sweep
// over the node list. Values and gradients live in flat arenas; a node is a
// (offset, length) slice plus the bookkeeping its backward rule needs.
//
// The op set is exactly what the model and losses require: affine layers,
// rectifier, concatenation, cosine similarity, Euclidean distance,
// log-sum-exp, scalar arithmetic and weighted reductions.
class Tape {
 public:
  NodeId leaf(std::span<const double> v);
  NodeId scalar_leaf(double v);

  // y = W x + bias, W row-major with shape (rows, cols).
  NodeId affine(NodeId w, NodeId bias, NodeId x, int rows, int cols);
  NodeId relu(NodeId x);  // elementwise; on a scalar node this is max(x, 0)
  NodeId concat(std::span<const NodeId> parts);

  NodeId add(NodeId a, NodeId b);  // elementwise, equal dims
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId a, double k);
  NodeId add_const(NodeId a, double k);

  NodeId dot(NodeId u, NodeId v);     // scalar
  NodeId cosine(NodeId u, NodeId v);  // scalar in [-1, 1]; zero-norm input -> 0
  NodeId euclid(NodeId u, NodeId v);  // scalar ||u - v||_2

  NodeId stack(std::span<const NodeId> scalars);  // scalars -> vector
  NodeId logsumexp(NodeId v);                     // vector -> scalar, max-shifted
  NodeId pick(NodeId v, int index);               // scalar = v[index]

  // Weighted sum / mean of scalar nodes.
  NodeId combine(std::span<const NodeId> scalars, std::span<const double> weights);
  NodeId mean(std::span<const NodeId> scalars);

  int dim(NodeId id) const;
  double value(NodeId id) const;  // scalar nodes only
  std::span<const double> values(NodeId id) const;

  // Hash of every discrete branch taken during the forward pass (relu sign
  // patterns, degenerate cosine/euclid cases). Two evaluations of the same
  // graph are finite-difference comparable only if their signatures agree.
  std::uint64_t branch_signature() const { return sig_; }

  // Seeds d(loss)/d(loss) = 1 and propagates. loss must be a scalar node of
  // this tape; calling backward on an empty tape or a non-scalar is an error.
  void backward(NodeId loss);
  std::span<const double> grad(NodeId id) const;  // valid after backward()

  std::size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op : std::uint8_t {
    leaf, affine, relu, concat, add, sub, scale, add_const,
    dot, cosine, euclid, stack, logsumexp, pick, combine
  };

  struct Node {
    Op op;
    NodeId a = -1, b = -1, c = -1;  // argument nodes (affine uses all three)
    int i0 = 0, i1 = 0;             // aux ints (rows/cols, pick index)
    double k = 0.0;                 // aux constant
    int args = 0, nargs = 0;        // slice into argpool_ for variadic ops
    int off = 0, len = 0;           // slice into val_/grad_
  };

  NodeId push(Op op, int len);
  void check(NodeId id) const;
  const double* v(const Node& n) const { return val_.data() + n.off; }
  double* g(const Node& n) { return grad_.data() + n.off; }
  void mix_branch(std::uint64_t bit) { sig_ = (sig_ ^ bit) * 1099511628211ull; }

  std::vector<Node> nodes_;
  std::vector<double> val_;
  std::vector<double> grad_;
  std::vector<int> argpool_;
  std::vector<double> weightpool_;
  std::uint64_t sig_ = 1469598103934665603ull;
  bool has_grad_ = false;
};

}  // namespace coloseo
