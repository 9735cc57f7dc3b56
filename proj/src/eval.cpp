#include "coloseo/eval.hpp"

#include <stdexcept>

#include <json.hpp>

#include "coloseo/diagnostics.hpp"
#include "coloseo/trainer.hpp"

namespace coloseo {

using json = nlohmann::json;

double hos_score(double os_star, double unk) {
  if (os_star <= 0.0 || unk <= 0.0) return 0.0;
  return 2.0 * os_star * unk / (os_star + unk);
}

MetricsReport metrics_from_predictions(const std::vector<int>& ground_truth,
                                       const std::vector<int>& predictions, int K) {
  if (ground_truth.size() != predictions.size()) {
    throw std::invalid_argument("metrics: ground truth / prediction size mismatch");
  }
  if (ground_truth.empty()) throw std::invalid_argument("metrics: empty target");

  MetricsReport r;
  r.confusion.assign(K + 1, std::vector<long>(K + 1, 0));
  for (std::size_t i = 0; i < ground_truth.size(); ++i) {
    const int gt = ground_truth[i];
    const int pr = predictions[i];
    if (gt < 0 || gt > K || pr < 0 || pr > K) {
      throw std::out_of_range("metrics: class index outside [0, K]");
    }
    r.confusion[gt][pr]++;
  }

  long total = 0, correct = 0;
  r.per_class_acc.assign(K + 1, 0.0);
  for (int k = 0; k <= K; ++k) {
    long row = 0;
    for (int j = 0; j <= K; ++j) row += r.confusion[k][j];
    total += row;
    correct += r.confusion[k][k];
    r.per_class_acc[k] = row > 0 ? static_cast<double>(r.confusion[k][k]) / row : 0.0;
  }
  r.all_acc = static_cast<double>(correct) / total;

  double os_sum = 0.0;
  int os_classes = 0;
  for (int k = 0; k < K; ++k) {
    long row = 0;
    for (int j = 0; j <= K; ++j) row += r.confusion[k][j];
    if (row == 0) {
      r.excluded_classes++;
      counters().os_star_excluded++;
      continue;
    }
    os_sum += r.per_class_acc[k];
    os_classes++;
  }
  r.os_star = os_classes > 0 ? os_sum / os_classes : 0.0;

  long unk_row = 0;
  for (int j = 0; j <= K; ++j) unk_row += r.confusion[K][j];
  if (unk_row == 0) {
    r.excluded_classes++;
    counters().os_star_excluded++;
    r.unk = 0.0;
  } else {
    r.unk = r.per_class_acc[K];
  }
  r.hos = hos_score(r.os_star, r.unk);
  return r;
}

namespace {

std::vector<int> target_ground_truth(const Dataset& target) {
  EvaluationScope gate;
  std::vector<int> gt;
  gt.reserve(target.size());
  for (const VideoSample& s : target.samples()) gt.push_back(s.ground_truth_label());
  return gt;
}

}  // namespace

MetricsReport evaluate(const ModelParams& params, const Dataset& target) {
  EvaluationScope gate;
  std::vector<int> gt = target_ground_truth(target);
  std::vector<int> pred;
  pred.reserve(target.size());
  for (const VideoSample& s : target.samples()) pred.push_back(infer(params, s));
  return metrics_from_predictions(gt, pred, target.num_shared_classes());
}

MetricsReport evaluate_rejection(const ModelParams& params, const Dataset& target,
                                 const Prototypes& prototypes, double gamma) {
  EvaluationScope gate;
  const int K = target.num_shared_classes();
  std::vector<int> gt = target_ground_truth(target);
  std::vector<int> pred;
  pred.reserve(target.size());
  for (const VideoSample& s : target.samples()) {
    const std::vector<double> h = aggregate(params, s);
    const RejectionDecision dec = reject_unknown(h, prototypes, gamma);
    pred.push_back(dec.s ? K : pseudo_label(params, h));
  }
  return metrics_from_predictions(gt, pred, K);
}

double pseudo_label_all_accuracy(const ModelParams& params, const Dataset& target,
                                 const Prototypes* prototypes, double threshold,
                                 RejectionMode mode) {
  EvaluationScope gate;
  if (target.size() == 0) throw std::invalid_argument("pseudo accuracy: empty target");
  if (mode == RejectionMode::prototype && prototypes == nullptr) {
    throw std::invalid_argument("pseudo accuracy: prototype mode needs prototypes");
  }
  const int K = target.num_shared_classes();
  long correct = 0;
  for (const VideoSample& s : target.samples()) {
    const std::vector<double> h = aggregate(params, s);
    const RejectionDecision dec = mode == RejectionMode::prototype
                                      ? reject_unknown(h, *prototypes, threshold)
                                      : reject_unknown_entropy(params, h, threshold);
    const int pred = dec.s ? K : pseudo_label(params, h);
    if (pred == s.ground_truth_label()) correct++;
  }
  return static_cast<double>(correct) / static_cast<double>(target.size());
}

std::string metrics_to_json(const MetricsReport& report) {
  json j;
  j["all"] = report.all_acc;
  j["os_star"] = report.os_star;
  j["unk"] = report.unk;
  j["hos"] = report.hos;
  j["per_class_acc"] = report.per_class_acc;
  j["confusion"] = report.confusion;
  if (report.pseudo_all_acc) {
    j["pseudo_all_acc"] = *report.pseudo_all_acc;
  } else {
    j["pseudo_all_acc"] = nullptr;
  }
  j["excluded_classes"] = report.excluded_classes;
  return j.dump(2);
}

}  // namespace coloseo
