#include "coloseo/network.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "coloseo/rng.hpp"

namespace coloseo {

using json = nlohmann::json;

void ModelDims::validate() const {
  if (D < 1 || c < 2 || H < 1 || F < 1 || P < 1 || K < 1) {
    throw std::invalid_argument("model dims: all dims must be >= 1 (and c >= 2)");
  }
}

namespace {

void fill_matrix(Matrix& m, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(m.cols));
  for (double& w : m.w) w = scale * rng.normal();
}

std::vector<double> affine_relu(const Matrix& w, const std::vector<double>& b,
                                std::span<const double> x, bool apply_relu) {
  if (static_cast<int>(x.size()) != w.cols) {
    throw std::invalid_argument("forward: dimension mismatch (expected " +
                                std::to_string(w.cols) + ", got " +
                                std::to_string(x.size()) + ")");
  }
  std::vector<double> y(w.rows);
  for (int r = 0; r < w.rows; ++r) {
    double acc = b[r];
    const double* wr = w.w.data() + static_cast<std::size_t>(r) * w.cols;
    for (int c = 0; c < w.cols; ++c) acc += wr[c] * x[c];
    y[r] = apply_relu && acc < 0.0 ? 0.0 : acc;
  }
  return y;
}

std::vector<double> concat_clips(const ModelDims& dims, const VideoSample& sample) {
  if (sample.clip_count() != dims.c || sample.clip_dim() != dims.D) {
    throw std::invalid_argument("aggregate: sample dims (" + std::to_string(sample.clip_count()) +
                                "x" + std::to_string(sample.clip_dim()) +
                                ") do not match model dims");
  }
  std::vector<double> x;
  x.reserve(static_cast<std::size_t>(dims.agg_in()));
  for (const auto& clip : sample.clips()) {
    for (float v : clip) x.push_back(static_cast<double>(v));
  }
  return x;
}

}  // namespace

ModelParams init_params(const ModelDims& dims, std::uint64_t seed) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  p.agg_w1 = Matrix(dims.H, dims.agg_in());
  p.agg_b1.assign(dims.H, 0.0);
  p.agg_w2 = Matrix(dims.F, dims.H);
  p.agg_b2.assign(dims.F, 0.0);
  p.proj_w1 = Matrix(dims.H, dims.F);
  p.proj_b1.assign(dims.H, 0.0);
  p.proj_w2 = Matrix(dims.P, dims.H);
  p.proj_b2.assign(dims.P, 0.0);
  p.cls_w = Matrix(dims.K, dims.F);
  p.cls_b.assign(dims.K, 0.0);
  p.open_w = Matrix(dims.K + 1, dims.F);
  p.open_b.assign(dims.K + 1, 0.0);

  Rng rng = Rng(seed).child(0x696e6974);
  fill_matrix(p.agg_w1, rng);
  fill_matrix(p.agg_w2, rng);
  fill_matrix(p.proj_w1, rng);
  fill_matrix(p.proj_w2, rng);
  fill_matrix(p.cls_w, rng);
  fill_matrix(p.open_w, rng);
  return p;
}

ModelParams zeros_like(const ModelParams& p) {
  ModelParams z = p;
  for (TensorRef t : tensor_refs(z)) {
    std::fill(t.data->begin(), t.data->end(), 0.0);
  }
  return z;
}

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  return {
      {"agg_w1", &p.agg_w1.w},   {"agg_b1", &p.agg_b1},
      {"agg_w2", &p.agg_w2.w},   {"agg_b2", &p.agg_b2},
      {"proj_w1", &p.proj_w1.w}, {"proj_b1", &p.proj_b1},
      {"proj_w2", &p.proj_w2.w}, {"proj_b2", &p.proj_b2},
      {"cls_w", &p.cls_w.w},     {"cls_b", &p.cls_b},
      {"open_w", &p.open_w.w},   {"open_b", &p.open_b},
  };
}

std::vector<ConstTensorRef> tensor_refs(const ModelParams& p) {
  return {
      {"agg_w1", &p.agg_w1.w},   {"agg_b1", &p.agg_b1},
      {"agg_w2", &p.agg_w2.w},   {"agg_b2", &p.agg_b2},
      {"proj_w1", &p.proj_w1.w}, {"proj_b1", &p.proj_b1},
      {"proj_w2", &p.proj_w2.w}, {"proj_b2", &p.proj_b2},
      {"cls_w", &p.cls_w.w},     {"cls_b", &p.cls_b},
      {"open_w", &p.open_w.w},   {"open_b", &p.open_b},
  };
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> flat;
  flat.reserve(param_count(p.dims));
  for (ConstTensorRef t : tensor_refs(p)) {
    flat.insert(flat.end(), t.data->begin(), t.data->end());
  }
  return flat;
}

ModelParams unflatten(const ModelDims& dims, std::span<const double> flat) {
  if (flat.size() != param_count(dims)) {
    throw std::invalid_argument("unflatten: expected " + std::to_string(param_count(dims)) +
                                " values, got " + std::to_string(flat.size()));
  }
  ModelParams p = init_params(dims, 0);
  std::size_t at = 0;
  for (TensorRef t : tensor_refs(p)) {
    std::copy(flat.begin() + at, flat.begin() + at + t.data->size(), t.data->begin());
    at += t.data->size();
  }
  return p;
}

std::size_t param_count(const ModelDims& dims) {
  const std::size_t agg = static_cast<std::size_t>(dims.H) * dims.agg_in() + dims.H +
                          static_cast<std::size_t>(dims.F) * dims.H + dims.F;
  const std::size_t proj = static_cast<std::size_t>(dims.H) * dims.F + dims.H +
                           static_cast<std::size_t>(dims.P) * dims.H + dims.P;
  const std::size_t cls = static_cast<std::size_t>(dims.K) * dims.F + dims.K;
  const std::size_t open = static_cast<std::size_t>(dims.K + 1) * dims.F + (dims.K + 1);
  return agg + proj + cls + open;
}

std::string coord_name(const ModelDims& dims, std::size_t flat_index) {
  const ModelParams p = init_params(dims, 0);
  std::size_t at = 0;
  for (ConstTensorRef t : tensor_refs(p)) {
    if (flat_index < at + t.data->size()) {
      return std::string(t.name) + "[" + std::to_string(flat_index - at) + "]";
    }
    at += t.data->size();
  }
  return "out-of-range[" + std::to_string(flat_index) + "]";
}

std::vector<double> aggregate(const ModelParams& p, const VideoSample& sample) {
  const std::vector<double> x = concat_clips(p.dims, sample);
  const std::vector<double> hidden = affine_relu(p.agg_w1, p.agg_b1, x, true);
  return affine_relu(p.agg_w2, p.agg_b2, hidden, false);
}

std::vector<double> project(const ModelParams& p, std::span<const double> h) {
  const std::vector<double> hidden = affine_relu(p.proj_w1, p.proj_b1, h, true);
  return affine_relu(p.proj_w2, p.proj_b2, hidden, false);
}

std::vector<double> classify(const ModelParams& p, std::span<const double> h) {
  return affine_relu(p.cls_w, p.cls_b, h, false);
}

std::vector<double> classify_open(const ModelParams& p, std::span<const double> h) {
  return affine_relu(p.open_w, p.open_b, h, false);
}

ParamNodes push_params(Tape& tape, const ModelParams& p) {
  ParamNodes n;
  n.agg_w1 = tape.leaf(p.agg_w1.w);
  n.agg_b1 = tape.leaf(p.agg_b1);
  n.agg_w2 = tape.leaf(p.agg_w2.w);
  n.agg_b2 = tape.leaf(p.agg_b2);
  n.proj_w1 = tape.leaf(p.proj_w1.w);
  n.proj_b1 = tape.leaf(p.proj_b1);
  n.proj_w2 = tape.leaf(p.proj_w2.w);
  n.proj_b2 = tape.leaf(p.proj_b2);
  n.cls_w = tape.leaf(p.cls_w.w);
  n.cls_b = tape.leaf(p.cls_b);
  n.open_w = tape.leaf(p.open_w.w);
  n.open_b = tape.leaf(p.open_b);
  return n;
}

NodeId aggregate_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims,
                      const VideoSample& sample) {
  const std::vector<double> x = concat_clips(dims, sample);
  const NodeId input = tape.leaf(x);
  const NodeId hidden = tape.relu(tape.affine(pn.agg_w1, pn.agg_b1, input, dims.H, dims.agg_in()));
  return tape.affine(pn.agg_w2, pn.agg_b2, hidden, dims.F, dims.H);
}

NodeId project_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId h) {
  const NodeId hidden = tape.relu(tape.affine(pn.proj_w1, pn.proj_b1, h, dims.H, dims.F));
  return tape.affine(pn.proj_w2, pn.proj_b2, hidden, dims.P, dims.H);
}

NodeId classify_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId h) {
  return tape.affine(pn.cls_w, pn.cls_b, h, dims.K, dims.F);
}

NodeId classify_open_node(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId h) {
  return tape.affine(pn.open_w, pn.open_b, h, dims.K + 1, dims.F);
}

ModelParams backward(Tape& tape, const ParamNodes& pn, const ModelDims& dims, NodeId loss) {
  tape.backward(loss);
  ModelParams grads = init_params(dims, 0);
  for (TensorRef t : tensor_refs(grads)) std::fill(t.data->begin(), t.data->end(), 0.0);
  auto take = [&tape](NodeId id, std::vector<double>& out) {
    const std::span<const double> g = tape.grad(id);
    out.assign(g.begin(), g.end());
  };
  take(pn.agg_w1, grads.agg_w1.w);
  take(pn.agg_b1, grads.agg_b1);
  take(pn.agg_w2, grads.agg_w2.w);
  take(pn.agg_b2, grads.agg_b2);
  take(pn.proj_w1, grads.proj_w1.w);
  take(pn.proj_b1, grads.proj_b1);
  take(pn.proj_w2, grads.proj_w2.w);
  take(pn.proj_b2, grads.proj_b2);
  take(pn.cls_w, grads.cls_w.w);
  take(pn.cls_b, grads.cls_b);
  take(pn.open_w, grads.open_w.w);
  take(pn.open_b, grads.open_b);
  return grads;
}

void save_params(const ModelParams& p, const std::string& prefix) {
  const std::vector<double> flat = flatten(p);

  json desc;
  desc["dims"] = {{"D", p.dims.D}, {"c", p.dims.c}, {"H", p.dims.H},
                  {"F", p.dims.F}, {"P", p.dims.P}, {"K", p.dims.K}};
  json layout = json::array();
  for (ConstTensorRef t : tensor_refs(p)) {
    layout.push_back({{"name", t.name}, {"size", t.data->size()}});
  }
  desc["layout"] = std::move(layout);
  desc["count"] = flat.size();
  desc["data"] = prefix.substr(prefix.find_last_of('/') + 1) + ".bin";

  std::ofstream jf(prefix + ".json");
  if (!jf) throw std::runtime_error("cannot write checkpoint: " + prefix + ".json");
  jf << desc.dump(2) << '\n';

  std::ofstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot write checkpoint: " + prefix + ".bin");
  bf.write(reinterpret_cast<const char*>(flat.data()),
           static_cast<std::streamsize>(flat.size() * sizeof(double)));
  if (!bf) throw std::runtime_error("write failed: " + prefix + ".bin");
}

ModelParams load_params(const std::string& prefix) {
  std::ifstream jf(prefix + ".json");
  if (!jf) throw std::runtime_error("cannot open checkpoint: " + prefix + ".json");
  json desc;
  try {
    jf >> desc;
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint descriptor parse error in " + prefix + ".json: " +
                             e.what());
  }
  ModelDims dims;
  dims.D = desc["dims"]["D"].get<int>();
  dims.c = desc["dims"]["c"].get<int>();
  dims.H = desc["dims"]["H"].get<int>();
  dims.F = desc["dims"]["F"].get<int>();
  dims.P = desc["dims"]["P"].get<int>();
  dims.K = desc["dims"]["K"].get<int>();
  dims.validate();
  const std::size_t count = desc["count"].get<std::size_t>();
  if (count != param_count(dims)) {
    throw std::runtime_error("checkpoint count mismatch in " + prefix + ".json");
  }

  std::ifstream bf(prefix + ".bin", std::ios::binary);
  if (!bf) throw std::runtime_error("cannot open checkpoint: " + prefix + ".bin");
  std::vector<double> flat(count);
  bf.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(count * sizeof(double)));
  if (bf.gcount() != static_cast<std::streamsize>(count * sizeof(double))) {
    throw std::runtime_error("checkpoint truncated: " + prefix + ".bin");
  }
  return unflatten(dims, flat);
}

}  // namespace coloseo
