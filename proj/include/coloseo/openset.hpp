#pragma once

#include <span>
#include <vector>

#include "coloseo/data_model.hpp"
#include "coloseo/network.hpp"

namespace coloseo {

enum class RejectionMode { prototype, entropy };

// Per-class mean source features, computed over un-augmented samples.
struct Prototypes {
  std::vector<std::vector<double>> mu;  // K vectors of dim F
  std::vector<int> counts;              // samples per class
};

// mu_k = mean over class-k source samples of aggregate(params, sample).
// Errors if any class in [0, K) has no sample.
Prototypes compute_prototypes(const ModelParams& params, const Dataset& source);

struct RejectionDecision {
  bool s;          // 1 = treated as target-private (unknown)
  int best_class;  // argmax class under the scoring rule
  double best_sim; // prototype mode: max cosine sim; entropy mode: entropy in nats
};

// s = 1 iff max_k sim(h, mu_k) <= gamma (the boundary counts as rejection).
RejectionDecision reject_unknown(std::span<const double> h, const Prototypes& prototypes,
                                 double gamma);

// Entropy variant: s = 1 iff the entropy of softmax(classify(params, h))
// is >= threshold (nats).
RejectionDecision reject_unknown_entropy(const ModelParams& params,
                                         std::span<const double> h, double threshold);

// argmax over the closed-set classifier C; ties break toward the lowest index.
// Only meaningful for samples already accepted (s = 0).
int pseudo_label(const ModelParams& params, std::span<const double> h);

// Softmax entropy in nats of a logits vector (shift-invariant).
double softmax_entropy(std::span<const double> logits);

}  // namespace coloseo
