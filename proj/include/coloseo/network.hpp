#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "coloseo/autodiff.hpp"
#include "coloseo/data_model.hpp"

namespace coloseo {

struct ModelDims {
  int D = 16;  // clip feature dim
  int c = 3;   // clips per video
  int H = 64;  // hidden width of aggregator and projection head
  int F = 64;  // video-level feature dim (output of the aggregator)
  int P = 32;  // projection output dim
  int K = 6;   // shared class count

  int agg_in() const { return c * D; }
  void validate() const;
  bool operator==(const ModelDims&) const = default;
};

struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> w;  // row-major

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), w(static_cast<std::size_t>(r) * c, 0.0) {}
  double& at(int r, int c) { return w[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return w[static_cast<std::size_t>(r) * cols + c]; }
};

// Weights of the clip aggregator, projection head and both classifiers.
// The aggregator consumes the concatenation of the c clip features, which
// keeps it order-sensitive; a pooled aggregator would make the temporal
// triplet degenerate (the shuffled negative would map to the same feature).
struct ModelParams {
  ModelDims dims;
  Matrix agg_w1; std::vector<double> agg_b1;  // (H, c*D)
  Matrix agg_w2; std::vector<double> agg_b2;  // (F, H)
  Matrix proj_w1; std::vector<double> proj_b1;  // (H, F)
  Matrix proj_w2; std::vector<double> proj_b2;  // (P, H)
  Matrix cls_w; std::vector<double> cls_b;      // (K, F), closed-set C
  Matrix open_w; std::vector<double> open_b;    // (K+1, F), open-set C'
};

// Zero-mean init with per-layer scale 1/sqrt(fan_in); biases zero.
ModelParams init_params(const ModelDims& dims, std::uint64_t seed);
ModelParams zeros_like(const ModelParams& p);

struct TensorRef {
  const char* name;
  std::vector<double>* data;
};
struct ConstTensorRef {
  const char* name;
  const std::vector<double>* data;
};
std::vector<TensorRef> tensor_refs(ModelParams& p);
std::vector<ConstTensorRef> tensor_refs(const ModelParams& p);

// flatten/unflatten are an exact bijection between ModelParams and a flat
// vector; gradient checking and checkpoints are built on it.
std::vector<double> flatten(const ModelParams& p);
ModelParams unflatten(const ModelDims& dims, std::span<const double> flat);
std::size_t param_count(const ModelDims& dims);

// Maps a flat coordinate to "tensor[offset]" for diagnostics.
std::string coord_name(const ModelDims& dims, std::size_t flat_index);

// Plain forward passes (pure functions of params and input).
std::vector<double> aggregate(const ModelParams& p, const VideoSample& sample);
std::vector<double> project(const ModelParams& p, std::span<const double> h);
std::vector<double> classify(const ModelParams& p, std::span<const double> h);
std::vector<double> classify_open(const ModelParams& p, std::span<const double> h);

// Tape-recorded forward passes used for training and gradient checking.
struct ParamNodes {
  NodeId agg_w1, agg_b1, agg_w2, agg_b2;
  NodeId proj_w1, proj_b1, proj_w2, proj_b2;
  NodeId cls_w, cls_b, open_w, open_b;
};
ParamNodes push_params(Tape& tape, const ModelParams& p);
NodeId aggregate_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims,
                      const VideoSample& sample);
NodeId project_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId h);
NodeId classify_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId h);
NodeId classify_open_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId h);

// Runs the reverse sweep from `loss` and collects parameter gradients in a
// ModelParams-shaped container. Throws if no forward pass has been recorded.
ModelParams backward(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId loss);

// Checkpoints: <prefix>.json holds dims and tensor layout, <prefix>.bin the
// flat 64-bit array (host byte order). Round trip is exact.
void save_params(const ModelParams& p, const std::string& prefix);
ModelParams load_params(const std::string& prefix);

}  // namespace coloseo
