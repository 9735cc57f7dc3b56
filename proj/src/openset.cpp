#include "coloseo/openset.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "coloseo/losses.hpp"

namespace coloseo {

Prototypes compute_prototypes(const ModelParams& params, const Dataset& source) {
  const int K = source.num_shared_classes();
  Prototypes protos;
  protos.mu.assign(K, std::vector<double>(params.dims.F, 0.0));
  protos.counts.assign(K, 0);

  for (const VideoSample& s : source.samples()) {
    if (s.domain() != Domain::source) {
      throw std::invalid_argument("compute_prototypes: dataset contains target samples");
    }
    const int k = s.source_label();
    const std::vector<double> h = aggregate(params, s);
    for (int f = 0; f < params.dims.F; ++f) protos.mu[k][f] += h[f];
    protos.counts[k]++;
  }
  for (int k = 0; k < K; ++k) {
    if (protos.counts[k] == 0) {
      throw std::runtime_error("compute_prototypes: class " + std::to_string(k) +
                               " has no source samples");
    }
    for (double& v : protos.mu[k]) v /= protos.counts[k];
  }
  return protos;
}

RejectionDecision reject_unknown(std::span<const double> h, const Prototypes& prototypes,
                                 double gamma) {
  if (gamma < -1.0 || gamma > 1.0) {
    throw std::invalid_argument("reject_unknown: gamma must lie in [-1, 1]");
  }
  if (prototypes.mu.empty()) throw std::invalid_argument("reject_unknown: no prototypes");
  int best = 0;
  double best_sim = -2.0;
  for (std::size_t k = 0; k < prototypes.mu.size(); ++k) {
    const double sim = cosine_sim(h, prototypes.mu[k]);
    if (sim > best_sim) {
      best_sim = sim;
      best = static_cast<int>(k);
    }
  }
  return RejectionDecision{best_sim <= gamma, best, best_sim};
}

double softmax_entropy(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax_entropy: empty logits");
  double m = logits[0];
  for (double v : logits) m = std::max(m, v);
  double z = 0.0;
  for (double v : logits) z += std::exp(v - m);
  double ent = 0.0;
  for (double v : logits) {
    const double p = std::exp(v - m) / z;
    if (p > 0.0) ent -= p * std::log(p);
  }
  return ent;
}

RejectionDecision reject_unknown_entropy(const ModelParams& params,
                                         std::span<const double> h, double threshold) {
  if (threshold < 0.0) {
    throw std::invalid_argument("reject_unknown_entropy: threshold must be >= 0");
  }
  const std::vector<double> logits = classify(params, h);
  const double ent = softmax_entropy(logits);
  int best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = static_cast<int>(k);
  }
  return RejectionDecision{ent >= threshold, best, ent};
}

int pseudo_label(const ModelParams& params, std::span<const double> h) {
  const std::vector<double> logits = classify(params, h);
  int best = 0;
  for (std::size_t k = 1; k < logits.size(); ++k) {
    if (logits[k] > logits[best]) best = static_cast<int>(k);
  }
  return best;
}

}  // namespace coloseo
