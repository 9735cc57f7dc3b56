#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "coloseo/diagnostics.hpp"
#include "coloseo/losses.hpp"
#include "oracles.hpp"
#include "test_helpers.hpp"

using namespace coloseo;
using testutil::random_vec;

namespace {

constexpr double kTau = 0.1;

struct RandomBatch {
  std::vector<Vec> z_views;  // 2b views
  std::vector<int> labels;
};

RandomBatch random_sup_batch(Rng& rng, int b, int dim, int num_classes) {
  RandomBatch batch;
  std::vector<int> base(b);
  for (int i = 0; i < b; ++i) base[i] = rng.uniform_int(num_classes);
  for (int v = 0; v < 2; ++v) {
    for (int i = 0; i < b; ++i) {
      batch.z_views.push_back(random_vec(rng, dim));
      batch.labels.push_back(base[i]);
    }
  }
  return batch;
}

}  // namespace

TEST_CASE("cosine_sim: analytic values and zero-norm convention") {
  CHECK(cosine_sim(Vec{3.0, 4.0}, Vec{3.0, 4.0}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(cosine_sim(Vec{1.0, 0.0}, Vec{0.0, 1.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(cosine_sim(Vec{1.0, 0.0}, Vec{1.0, 1.0}) ==
        doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));

  reset_counters();
  CHECK(cosine_sim(Vec{0.0, 0.0}, Vec{1.0, 2.0}) == 0.0);
  CHECK(counters().zero_norm_cosine == 1);
  reset_counters();
}

TEST_CASE("loss_sup matches the brute-force oracle on 50 random batches") {
  Rng rng(101);
  for (int iter = 0; iter < 50; ++iter) {
    const int b = 2 + rng.uniform_int(6);
    const RandomBatch batch = random_sup_batch(rng, b, 5, 1 + rng.uniform_int(3));
    const double ours = loss_sup(batch.z_views, batch.labels, kTau);
    const double ref = oracle::lsup(batch.z_views, batch.labels, kTau);
    CHECK(ours == testutil::approx_abs(ref, 1e-9));
  }
}

TEST_CASE("loss_sup: four identical same-label views score ln 3 per anchor") {
  const Vec u{0.4, -0.2, 0.9};
  const std::vector<Vec> views{u, u, u, u};
  const std::vector<int> labels{0, 0, 0, 0};
  const double ref = oracle::lsup(views, labels, kTau);
  CHECK(ref == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(loss_sup(views, labels, kTau) == testutil::approx_abs(ref, 1e-9));
}

TEST_CASE("loss_sup: tight opposite clusters at tau 0.1 give near-zero loss") {
  const Vec u{1.0, 0.0, 0.0};
  Vec neg = u;
  for (double& v : neg) v = -v;
  const std::vector<Vec> views{u, neg, u, neg};
  const std::vector<int> labels{0, 1, 0, 1};
  const double value = loss_sup(views, labels, kTau);
  CHECK(std::abs(value) < 1e-3);
  CHECK(value == testutil::approx_abs(oracle::lsup(views, labels, kTau), 1e-9));
}

TEST_CASE("loss_sup: anchors without positives are skipped, <2 views error") {
  reset_counters();
  Rng rng(7);
  const std::vector<Vec> views{random_vec(rng, 4), random_vec(rng, 4), random_vec(rng, 4)};
  const std::vector<int> labels{0, 0, 1};  // the label-1 anchor has no positive
  const double ours = loss_sup(views, labels, kTau);
  CHECK(counters().skipped_anchors == 1);
  CHECK(ours == testutil::approx_abs(oracle::lsup(views, labels, kTau), 1e-9));

  CHECK_THROWS_AS(loss_sup(std::vector<Vec>{views[0]}, std::vector<int>{0}, kTau),
                  std::invalid_argument);
  reset_counters();
}

TEST_CASE("loss_aug matches the oracle; b=1 is exactly zero") {
  Rng rng(202);
  for (int iter = 0; iter < 50; ++iter) {
    const int b = 1 + rng.uniform_int(7);
    std::vector<Vec> z, zt;
    for (int i = 0; i < b; ++i) {
      z.push_back(random_vec(rng, 6));
      zt.push_back(random_vec(rng, 6));
    }
    const double ours = loss_aug(z, zt, kTau);
    const double ref = oracle::laug(z, zt, kTau);
    CHECK(ours == testutil::approx_abs(ref, 1e-9));
    if (b == 1) CHECK(ours == 0.0);
  }
  Rng r2(5);
  const std::vector<Vec> z{random_vec(r2, 4)};
  const std::vector<Vec> zt{random_vec(r2, 4)};
  CHECK(loss_aug(z, zt, kTau) == 0.0);
}

TEST_CASE("contrastive losses are scale and rotation invariant") {
  Rng rng(303);
  const int b = 4, dim = 6;
  const RandomBatch sup = random_sup_batch(rng, b, dim, 3);
  std::vector<Vec> z, zt;
  for (int i = 0; i < b; ++i) {
    z.push_back(random_vec(rng, dim));
    zt.push_back(random_vec(rng, dim));
  }
  std::vector<Vec> cross_t{random_vec(rng, dim), random_vec(rng, dim)};
  const std::vector<int> cross_y{sup.labels[0], sup.labels[1]};

  const double sup0 = loss_sup(sup.z_views, sup.labels, kTau);
  const double aug0 = loss_aug(z, zt, kTau);
  const double cross0 = loss_cross(cross_t, cross_y, sup.z_views, sup.labels, kTau);

  SUBCASE("common positive rescaling") {
    auto scaled = [](std::vector<Vec> vs, double k) {
      for (Vec& v : vs) {
        for (double& x : v) x *= k;
      }
      return vs;
    };
    const double k = 37.5;
    CHECK(loss_sup(scaled(sup.z_views, k), sup.labels, kTau) ==
          testutil::approx_abs(sup0, 1e-9));
    CHECK(loss_aug(scaled(z, k), scaled(zt, k), kTau) == testutil::approx_abs(aug0, 1e-9));
    CHECK(loss_cross(scaled(cross_t, k), cross_y, scaled(sup.z_views, k), sup.labels, kTau) ==
          testutil::approx_abs(cross0, 1e-9));
  }

  SUBCASE("common orthogonal rotation") {
    Rng qr(99);
    const auto q = testutil::random_rotation(qr, dim);
    auto rotated = [&q](std::vector<Vec> vs) {
      for (Vec& v : vs) v = testutil::rotate(q, v);
      return vs;
    };
    CHECK(loss_sup(rotated(sup.z_views), sup.labels, kTau) ==
          testutil::approx_abs(sup0, 1e-9));
    CHECK(loss_aug(rotated(z), rotated(zt), kTau) == testutil::approx_abs(aug0, 1e-9));
    CHECK(loss_cross(rotated(cross_t), cross_y, rotated(sup.z_views), sup.labels, kTau) ==
          testutil::approx_abs(cross0, 1e-9));
  }
}

TEST_CASE("loss_temp: analytic triplet cases and nonnegativity") {
  // d(h,h~)=0.2, d(h,h-)=1.5, alpha=1 -> 0
  const Vec a{0.0, 0.0};
  const Vec p1{0.2, 0.0};
  const Vec n1{1.5, 0.0};
  CHECK(loss_temp(a, p1, n1, 1.0) == 0.0);

  // d(h,h~)=2.0, d(h,h-)=0.5, alpha=1 -> 2.5
  const Vec p2{2.0, 0.0};
  const Vec n2{0.5, 0.0};
  CHECK(loss_temp(a, p2, n2, 1.0) == doctest::Approx(2.5).epsilon(1e-12));

  // degenerate triplet: both distances zero -> alpha
  CHECK(loss_temp(a, a, a, 1.0) == doctest::Approx(1.0).epsilon(1e-15));

  Rng rng(404);
  for (int i = 0; i < 200; ++i) {
    const Vec x = random_vec(rng, 5);
    const Vec y = random_vec(rng, 5);
    const Vec z = random_vec(rng, 5);
    const double v = loss_temp(x, y, z, 1.0);
    CHECK(v >= 0.0);
    CHECK(v == testutil::approx_abs(oracle::triplet(x, y, z, 1.0), 1e-12));
  }

  // zero whenever the negative is farther than the positive by >= alpha
  const Vec far{10.0, 0.0};
  CHECK(loss_temp(a, p1, far, 1.0) == 0.0);
}

TEST_CASE("loss_cross matches the oracle; empty accepted set returns 0") {
  Rng rng(505);
  for (int iter = 0; iter < 50; ++iter) {
    const int b = 2 + rng.uniform_int(5);
    const RandomBatch src = random_sup_batch(rng, b, 5, 3);
    const int n_t = 1 + rng.uniform_int(4);
    std::vector<Vec> zt;
    std::vector<int> yhat;
    for (int i = 0; i < n_t; ++i) {
      zt.push_back(random_vec(rng, 5));
      yhat.push_back(src.labels[rng.uniform_int(2 * b)]);  // always present in source
    }
    const double ours = loss_cross(zt, yhat, src.z_views, src.labels, kTau);
    const double ref = oracle::lcross(zt, yhat, src.z_views, src.labels, kTau);
    CHECK(ours == testutil::approx_abs(ref, 1e-9));
  }

  reset_counters();
  const RandomBatch src = random_sup_batch(rng, 2, 4, 2);
  CHECK(loss_cross({}, {}, src.z_views, src.labels, kTau) == 0.0);
  CHECK(counters().empty_cross_batches == 1);
  reset_counters();
}

TEST_CASE("single cross anchor equals the matching sup-con term") {
  // One target anchor whose pseudo-label matches one source class: the value
  // must agree with the oracle term computed over the same candidate set.
  Rng rng(606);
  const RandomBatch src = random_sup_batch(rng, 3, 5, 2);
  const std::vector<Vec> zt{random_vec(rng, 5)};
  const std::vector<int> yhat{src.labels[0]};
  const double ours = loss_cross(zt, yhat, src.z_views, src.labels, kTau);
  const double ref = oracle::lcross(zt, yhat, src.z_views, src.labels, kTau);
  CHECK(ours == testutil::approx_abs(ref, 1e-9));
}

TEST_CASE("loss_open: analytic and oracle checks") {
  const int K = 6;

  SUBCASE("uniform logits over K+1 = 7 classes give ln 7") {
    const std::vector<Vec> rows{Vec(7, 0.0)};
    const std::vector<int> labels{3};
    const std::vector<RowRole> roles{RowRole::known};
    CHECK(loss_open(rows, labels, roles, K) ==
          doctest::Approx(std::log(7.0)).epsilon(1e-12));
  }

  SUBCASE("confident logit saturates to zero loss") {
    Vec row(7, 0.0);
    row[0] = 60.0;
    const std::vector<Vec> rows{row};
    CHECK(loss_open(rows, std::vector<int>{0}, std::vector<RowRole>{RowRole::known}, K) ==
          testutil::approx_abs(0.0, 1e-12));
  }

  SUBCASE("matches oracle on random rows within 1e-12") {
    Rng rng(707);
    for (int iter = 0; iter < 50; ++iter) {
      const int n = 1 + rng.uniform_int(6);
      std::vector<Vec> rows;
      std::vector<int> labels;
      std::vector<RowRole> roles;
      for (int i = 0; i < n; ++i) {
        rows.push_back(random_vec(rng, K + 1));
        const bool unknown = rng.uniform() < 0.3;
        labels.push_back(unknown ? K : rng.uniform_int(K));
        roles.push_back(unknown ? RowRole::unknown : RowRole::known);
      }
      CHECK(loss_open(rows, labels, roles, K) ==
            testutil::approx_abs(oracle::lopen(rows, labels), 1e-12));
    }
  }

  SUBCASE("label/role mismatches are errors") {
    const std::vector<Vec> rows{Vec(7, 0.0)};
    CHECK_THROWS_AS(loss_open(rows, std::vector<int>{6}, std::vector<RowRole>{RowRole::known}, K),
                    std::out_of_range);
    CHECK_THROWS_AS(
        loss_open(rows, std::vector<int>{2}, std::vector<RowRole>{RowRole::unknown}, K),
        std::out_of_range);
    CHECK_THROWS_AS(loss_open(std::vector<Vec>{Vec(5, 0.0)}, std::vector<int>{0},
                              std::vector<RowRole>{RowRole::known}, K),
                    std::invalid_argument);
  }
}

TEST_CASE("total_loss: weighting and finiteness errors") {
  LossParts parts{1.0, 1.0, 1.0, 1.0, 1.0};
  CHECK(total_loss(parts, 0.1) == doctest::Approx(4.1).epsilon(1e-15));
  CHECK(total_loss(parts, 0.0) == doctest::Approx(4.0).epsilon(1e-15));

  parts.temp = 5.0;
  CHECK(total_loss(parts, 0.0) == doctest::Approx(4.0).epsilon(1e-15));

  parts.cross = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_WITH_AS(total_loss(parts, 0.1), doctest::Contains("cross"),
                       std::runtime_error);
}
