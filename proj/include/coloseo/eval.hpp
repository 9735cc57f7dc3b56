#pragma once

#include <optional>
#include <string>
#include <vector>

#include "coloseo/data_model.hpp"
#include "coloseo/network.hpp"
#include "coloseo/openset.hpp"

namespace coloseo {

// Open-set evaluation report. Predictions and ground truth range over the
// K+1 classes, with index K standing for "unknown".
struct MetricsReport {
  double all_acc = 0.0;   // correct / total over all K+1 classes
  double os_star = 0.0;   // mean per-class recall over shared classes
  double unk = 0.0;       // recall of class K
  double hos = 0.0;       // harmonic mean of os_star and unk
  std::vector<double> per_class_acc;        // K+1 recalls
  std::vector<std::vector<long>> confusion; // (K+1)x(K+1), [ground truth][prediction]
  std::optional<double> pseudo_all_acc;
  int excluded_classes = 0;  // shared classes absent from the target
};

// 2ab/(a+b), 0 when either argument is 0. The factor-2 form is the one the
// open-set literature uses and the one consistent with reported tables.
double hos_score(double os_star, double unk);

// Builds the full report from parallel ground-truth/prediction vectors.
MetricsReport metrics_from_predictions(const std::vector<int>& ground_truth,
                                       const std::vector<int>& predictions, int K);

// Predictions via the (K+1)-way classifier C' (the inference rule).
MetricsReport evaluate(const ModelParams& params, const Dataset& target);

// Predictions via the rejection protocol: rejected -> K, accepted ->
// pseudo-label from C. This is what a gamma sweep varies.
MetricsReport evaluate_rejection(const ModelParams& params, const Dataset& target,
                                 const Prototypes& prototypes, double gamma);

// Fraction of target samples whose protocol label (K if rejected, pseudo-label
// otherwise) matches ground truth, over all K+1 classes. Prototype mode needs
// `prototypes`; entropy mode ignores it.
double pseudo_label_all_accuracy(const ModelParams& params, const Dataset& target,
                                 const Prototypes* prototypes, double threshold,
                                 RejectionMode mode);

std::string metrics_to_json(const MetricsReport& report);

}  // namespace coloseo
