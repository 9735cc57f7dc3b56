#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coloseo/diagnostics.hpp"
#include "coloseo/eval.hpp"
#include "coloseo/trainer.hpp"
#include "test_helpers.hpp"

using namespace coloseo;

TEST_CASE("hos_score reproduces reported table values") {
  // 81.1 / 88.7 -> 84.7 and 80.6 / 84.4 -> 82.5 (percent scale)
  CHECK(100.0 * hos_score(0.811, 0.887) == doctest::Approx(84.7).epsilon(0.0006));
  CHECK(100.0 * hos_score(0.806, 0.844) == doctest::Approx(82.5).epsilon(0.0006));
}

TEST_CASE("hos_score properties: symmetry, idempotence, zeros, min-max bounds") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double a = rng.uniform();
    const double b = rng.uniform();
    CHECK(hos_score(a, b) == testutil::approx_abs(hos_score(b, a), 1e-15));
    CHECK(hos_score(a, a) == testutil::approx_abs(a, 1e-15));
    if (a > 0.0 && b > 0.0) {
      const double h = hos_score(a, b);
      CHECK(h >= std::min(a, b) - 1e-15);
      CHECK(h <= 2.0 * std::min(a, b) + 1e-15);
    }
  }
  CHECK(hos_score(0.0, 0.9) == 0.0);
  CHECK(hos_score(0.9, 0.0) == 0.0);
  CHECK(hos_score(0.0, 0.0) == 0.0);
}

TEST_CASE("metrics_from_predictions: confusion accounting") {
  const int K = 2;
  // gt:   0 0 0 1 1 2 2 2 2   (class 2 = unknown)
  // pred: 0 0 1 1 2 2 2 0 2
  const std::vector<int> gt{0, 0, 0, 1, 1, 2, 2, 2, 2};
  const std::vector<int> pred{0, 0, 1, 1, 2, 2, 2, 0, 2};
  const MetricsReport r = metrics_from_predictions(gt, pred, K);

  CHECK(r.confusion[0][0] == 2);
  CHECK(r.confusion[0][1] == 1);
  CHECK(r.confusion[1][1] == 1);
  CHECK(r.confusion[1][2] == 1);
  CHECK(r.confusion[2][2] == 3);
  CHECK(r.confusion[2][0] == 1);

  long total = 0, trace = 0;
  for (int i = 0; i <= K; ++i) {
    for (int j = 0; j <= K; ++j) total += r.confusion[i][j];
    trace += r.confusion[i][i];
  }
  CHECK(total == 9);
  CHECK(r.all_acc == testutil::approx_abs(static_cast<double>(trace) / total, 1e-15));

  CHECK(r.per_class_acc[0] == testutil::approx_abs(2.0 / 3.0, 1e-15));
  CHECK(r.per_class_acc[1] == testutil::approx_abs(0.5, 1e-15));
  CHECK(r.unk == testutil::approx_abs(0.75, 1e-15));
  CHECK(r.os_star == testutil::approx_abs((2.0 / 3.0 + 0.5) / 2.0, 1e-15));
  CHECK(r.hos == testutil::approx_abs(hos_score(r.os_star, r.unk), 1e-15));
  CHECK(r.excluded_classes == 0);

  SUBCASE("UNK 0 forces HOS 0 regardless of OS*") {
    const std::vector<int> gt2{0, 0, 2, 2};
    const std::vector<int> pred2{0, 0, 0, 1};
    const MetricsReport r2 = metrics_from_predictions(gt2, pred2, K);
    CHECK(r2.os_star > 0.0);
    CHECK(r2.unk == 0.0);
    CHECK(r2.hos == 0.0);
  }

  SUBCASE("shared class absent from the target is excluded with a warning") {
    reset_counters();
    const std::vector<int> gt3{0, 0, 2, 2};
    const std::vector<int> pred3{0, 0, 2, 2};
    const MetricsReport r3 = metrics_from_predictions(gt3, pred3, K);
    CHECK(r3.excluded_classes == 1);  // class 1 missing
    CHECK(counters().os_star_excluded == 1);
    CHECK(r3.os_star == testutil::approx_abs(1.0, 1e-15));
    reset_counters();
  }
}

TEST_CASE("evaluate predicts through the open-set classifier") {
  // Bias-only C': class 1 always wins -> every target predicted class 1.
  const ModelDims dims{3, 2, 4, 5, 3, 2};
  ModelParams p = init_params(dims, 3);
  for (int k = 0; k <= dims.K; ++k) {
    for (int f = 0; f < dims.F; ++f) p.open_w.at(k, f) = 0.0;
    p.open_b[k] = k == 1 ? 10.0 : 0.0;
  }
  Rng rng(4);
  std::vector<VideoSample> samples;
  samples.push_back(testutil::random_sample(rng, Domain::target, 0, dims.c, dims.D));
  samples.push_back(testutil::random_sample(rng, Domain::target, 1, dims.c, dims.D));
  samples.push_back(testutil::random_sample(rng, Domain::target, 2, dims.c, dims.D));
  const Dataset target(std::move(samples), dims.K, dims.D, dims.c);

  const MetricsReport r = evaluate(p, target);
  CHECK(r.all_acc == testutil::approx_abs(1.0 / 3.0, 1e-15));
  CHECK(r.per_class_acc[1] == 1.0);
  CHECK(r.unk == 0.0);
  CHECK(r.hos == 0.0);

  // infer agrees with the argmax rule
  for (const VideoSample& s : target.samples()) CHECK(infer(p, s) == 1);
}

TEST_CASE("pseudo_label_all_accuracy: forced regimes") {
  SynthConfig cfg;
  cfg.K = 3;
  cfg.num_private = 1;
  cfg.D = 6;
  cfg.c = 2;
  cfg.samples_per_class = 10;
  cfg.domain_shift = 0.0;
  cfg.cluster_std = 0.05;
  cfg.seed = 17;
  const SynthPair pair = synth_dataset(cfg);

  // identity-like aggregator as in the openset tests
  ModelDims dims;
  dims.D = cfg.D;
  dims.c = cfg.c;
  dims.H = cfg.D * cfg.c;
  dims.F = cfg.D * cfg.c;
  dims.P = 2;
  dims.K = cfg.K;
  ModelParams p = init_params(dims, 0);
  const double lift = 1000.0;
  for (int i = 0; i < dims.H; ++i) {
    for (int j = 0; j < dims.H; ++j) {
      p.agg_w1.at(i, j) = i == j ? 1.0 : 0.0;
      p.agg_w2.at(i, j) = i == j ? 1.0 : 0.0;
    }
    p.agg_b1[i] = lift;
    p.agg_b2[i] = -lift;
  }
  // nearest-prototype-like closed-set classifier: rows = class prototypes
  const Prototypes protos = compute_prototypes(p, pair.source);
  for (int k = 0; k < dims.K; ++k) {
    double norm = 0.0;
    for (double v : protos.mu[k]) norm += v * v;
    norm = std::sqrt(norm);
    for (int f = 0; f < dims.F; ++f) p.cls_w.at(k, f) = protos.mu[k][f] / norm;
    p.cls_b[k] = 0.0;
  }

  EvaluationScope gate;
  const double n_private =
      static_cast<double>(cfg.num_private) / (cfg.K + cfg.num_private);

  SUBCASE("gamma = 1 rejects everything: accuracy = private fraction") {
    const double acc =
        pseudo_label_all_accuracy(p, pair.target, &protos, 1.0, RejectionMode::prototype);
    CHECK(acc == testutil::approx_abs(n_private, 1e-12));
  }

  SUBCASE("gamma = -1 accepts everything: accuracy = closed-set accuracy over all") {
    const double acc =
        pseudo_label_all_accuracy(p, pair.target, &protos, -1.0, RejectionMode::prototype);
    long correct = 0;
    for (const VideoSample& s : pair.target.samples()) {
      const int pred = pseudo_label(p, aggregate(p, s));
      if (pred == s.ground_truth_label()) correct++;
    }
    CHECK(acc == testutil::approx_abs(static_cast<double>(correct) / pair.target.size(), 1e-12));
  }

  SUBCASE("matched gamma on separable data reaches accuracy 1") {
    // private samples sit near orthogonal clusters; sweep gamma to find a
    // separating threshold and verify perfect protocol labels
    double best = 0.0;
    for (double gamma = -0.95; gamma < 1.0; gamma += 0.05) {
      best = std::max(best, pseudo_label_all_accuracy(p, pair.target, &protos, gamma,
                                                      RejectionMode::prototype));
    }
    CHECK(best == testutil::approx_abs(1.0, 1e-12));
  }
}

TEST_CASE("evaluate_rejection: gamma endpoints drive UNK to 0 and 1") {
  SynthConfig cfg;
  cfg.K = 2;
  cfg.num_private = 1;
  cfg.D = 5;
  cfg.c = 2;
  cfg.samples_per_class = 8;
  cfg.seed = 23;
  const SynthPair pair = synth_dataset(cfg);
  const ModelParams p = init_params(ModelDims{cfg.D, cfg.c, 6, 7, 4, cfg.K}, 9);
  const Prototypes protos = compute_prototypes(p, pair.source);

  const MetricsReport all_rejected = evaluate_rejection(p, pair.target, protos, 1.0);
  CHECK(all_rejected.unk == 1.0);
  CHECK(all_rejected.os_star == 0.0);
  CHECK(all_rejected.hos == 0.0);

  const MetricsReport none_rejected = evaluate_rejection(p, pair.target, protos, -1.0);
  CHECK(none_rejected.unk == 0.0);
}

TEST_CASE("metrics serialize to json") {
  const std::vector<int> gt{0, 1, 2};
  const std::vector<int> pred{0, 1, 2};
  MetricsReport r = metrics_from_predictions(gt, pred, 2);
  r.pseudo_all_acc = 0.5;
  const std::string js = metrics_to_json(r);
  CHECK(js.find("\"hos\"") != std::string::npos);
  CHECK(js.find("\"confusion\"") != std::string::npos);
  CHECK(js.find("\"pseudo_all_acc\"") != std::string::npos);
}
