#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>

#include "dofs/elasticnet.hpp"
#include "dofs/rng.hpp"
#include "oracles.hpp"

using namespace dofs;

namespace {

FeatureMatrix random_matrix(int n, int p, Rng& rng) {
  FeatureMatrix x(n, p);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) x(i, j) = rng.normal();
  }
  return x;
}

// exactly orthogonal columns with ||x_j||^2 = n that are also orthogonal to
// the all-ones vector, so the unpenalized intercept stays decoupled and the
// coordinate problems separate: QR of [1 | A], dropping the ones direction
FeatureMatrix orthonormal_design(int n, int p, Rng& rng) {
  Eigen::MatrixXd a(n, p + 1);
  a.col(0).setOnes();
  a.rightCols(p) = random_matrix(n, p, rng);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, p + 1);
  return std::sqrt(static_cast<double>(n)) * q.rightCols(p);
}

double soft(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

Vector pm_one_labels(int n, Rng& rng, double flip = 0.0) {
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = rng.uniform01() < 0.5 ? -1.0 : 1.0;
  for (int i = 0; i < n; ++i) {
    if (rng.uniform01() < flip) y(i) = -y(i);
  }
  return y;
}

}  // namespace

TEST_CASE("lambda = 0 squared loss recovers least squares") {
  Rng rng(61);
  const int n = 50;
  const int p = 4;
  const FeatureMatrix x = random_matrix(n, p, rng);
  Vector beta_true(p);
  beta_true << 1.0, -2.0, 0.5, 3.0;
  Vector y = x * beta_true;
  for (int i = 0; i < n; ++i) y(i) += 0.01 * rng.normal();

  ElasticNetConfig cfg;
  cfg.lambda = 0.0;
  cfg.loss = Loss::squared;
  cfg.tol = 1e-10;
  const FittedModel m = fit_elasticnet(x, y, cfg);
  REQUIRE(m.converged);

  // least squares with intercept via the normal equations
  Eigen::MatrixXd xa(n, p + 1);
  xa.col(0).setOnes();
  xa.rightCols(p) = x;
  const Vector ols = (xa.transpose() * xa).ldlt().solve(xa.transpose() * y);
  CHECK(m.intercept == Catch::Approx(ols(0)).margin(1e-8));
  for (int j = 0; j < p; ++j) {
    CHECK(m.coefficients(j) == Catch::Approx(ols(j + 1)).margin(1e-8));
  }
}

TEST_CASE("orthonormal design with l1 penalty soft-thresholds the OLS solution") {
  Rng rng(67);
  for (int trial = 0; trial < 20; ++trial) {
    const int n = 40 + 10 * (trial % 3);
    const int p = 3 + trial % 3;
    const FeatureMatrix x = orthonormal_design(n, p, rng);
    Vector y(n);
    for (int i = 0; i < n; ++i) y(i) = rng.normal() * 2.0;
    y = (y.array() - y.mean()).matrix();  // centered: intercept stays 0

    ElasticNetConfig cfg;
    cfg.lambda = 0.05 + 0.2 * rng.uniform01();
    cfg.alpha1 = 1.0;
    cfg.loss = Loss::squared;
    cfg.tol = 1e-12;
    const FittedModel m = fit_elasticnet(x, y, cfg);

    // with X^T X / n = I the coordinate problems decouple:
    // beta_j = soft(x_j . y / n, lambda)
    for (int j = 0; j < p; ++j) {
      const double b_ols = x.col(j).dot(y) / static_cast<double>(n);
      CHECK(m.coefficients(j) == Catch::Approx(soft(b_ols, cfg.lambda)).margin(1e-8));
    }
  }
}

TEST_CASE("orthonormal design with the elasticnet mix shrinks by 1/(1 + lambda*l2)") {
  Rng rng(71);
  const int n = 60;
  const int p = 4;
  const FeatureMatrix x = orthonormal_design(n, p, rng);
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = rng.normal() * 1.5;
  y = (y.array() - y.mean()).matrix();

  ElasticNetConfig cfg;
  cfg.lambda = 0.15;
  cfg.alpha1 = 0.5;
  cfg.loss = Loss::squared;
  cfg.tol = 1e-12;
  const FittedModel m = fit_elasticnet(x, y, cfg);
  for (int j = 0; j < p; ++j) {
    const double b_ols = x.col(j).dot(y) / static_cast<double>(n);
    const double expect =
        soft(b_ols, cfg.lambda * cfg.alpha1) / (1.0 + cfg.lambda * (1.0 - cfg.alpha1));
    CHECK(m.coefficients(j) == Catch::Approx(expect).margin(1e-8));
  }
}

TEST_CASE("logistic fits satisfy the KKT conditions within 1e-6") {
  Rng rng(73);
  for (int trial = 0; trial < 25; ++trial) {
    const int n = 20 + 5 * (trial % 4);
    const int p = 5;
    const FeatureMatrix x = random_matrix(n, p, rng);
    const Vector y = pm_one_labels(n, rng);

    ElasticNetConfig cfg;
    cfg.lambda = 0.02 + 0.2 * rng.uniform01();
    cfg.alpha1 = 0.25 + 0.5 * rng.uniform01();
    cfg.loss = Loss::logistic;
    cfg.tol = 1e-9;
    const FittedModel m = fit_elasticnet(x, y, cfg);
    REQUIRE(m.converged);
    CHECK(oracle::kkt_violation(x, y, m.coefficients, m.intercept, cfg.lambda * cfg.alpha1,
                                cfg.lambda * (1.0 - cfg.alpha1)) <= 1e-6);
  }
}

TEST_CASE("objective trace never increases") {
  Rng rng(79);
  const FeatureMatrix x = random_matrix(60, 6, rng);
  const Vector y = pm_one_labels(60, rng);
  ElasticNetConfig cfg;
  cfg.lambda = 0.05;
  const FittedModel m = fit_elasticnet(x, y, cfg);
  REQUIRE(m.objective_trace.size() >= 2);
  for (std::size_t i = 1; i < m.objective_trace.size(); ++i) {
    CHECK(m.objective_trace[i] <= m.objective_trace[i - 1] + 1e-12);
  }
  CHECK(m.objective == Catch::Approx(m.objective_trace.back()));
}

TEST_CASE("growing lambda never revives a zeroed coefficient") {
  Rng rng(83);
  const int n = 80;
  const int p = 6;
  const FeatureMatrix x = random_matrix(n, p, rng);
  Vector beta_true(p);
  beta_true << 2.0, -1.0, 0.5, 0.0, 0.0, 0.25;
  const Vector margin = x * beta_true;
  Vector y(n);
  for (int i = 0; i < n; ++i) y(i) = margin(i) + 0.5 * rng.normal() > 0.0 ? 1.0 : -1.0;

  std::vector<int> prev_support;
  bool first = true;
  for (double lambda : {0.01, 0.05, 0.1, 0.2, 0.4, 0.8}) {
    ElasticNetConfig cfg;
    cfg.lambda = lambda;
    cfg.alpha1 = 1.0;  // pure l1 so the monotone-support property is exact
    const FittedModel m = fit_elasticnet(x, y, cfg);
    std::vector<int> support;
    for (int j = 0; j < p; ++j) {
      if (m.coefficients(j) != 0.0) support.push_back(j);
    }
    if (!first) {
      // support at larger lambda is a subset of the previous support
      CHECK(std::includes(prev_support.begin(), prev_support.end(), support.begin(),
                          support.end()));
    }
    prev_support = support;
    first = false;
  }
}

TEST_CASE("permuting columns permutes the coefficients identically") {
  Rng rng(89);
  const int n = 50;
  const int p = 5;
  const FeatureMatrix x = random_matrix(n, p, rng);
  const Vector y = pm_one_labels(n, rng);
  ElasticNetConfig cfg;
  cfg.lambda = 0.08;
  const FittedModel base = fit_elasticnet(x, y, cfg);

  const std::vector<int> perm = {3, 0, 4, 1, 2};
  FeatureMatrix xp(n, p);
  for (int j = 0; j < p; ++j) xp.col(j) = x.col(perm[j]);
  const FittedModel permuted = fit_elasticnet(xp, y, cfg);
  for (int j = 0; j < p; ++j) {
    CHECK(permuted.coefficients(j) == Catch::Approx(base.coefficients(perm[j])).margin(1e-7));
  }
  CHECK(permuted.intercept == Catch::Approx(base.intercept).margin(1e-7));
}

TEST_CASE("logistic targets must be encoded as +/-1") {
  Rng rng(97);
  const FeatureMatrix x = random_matrix(10, 2, rng);
  Vector y = pm_one_labels(10, rng);
  y(3) = 0.0;
  ElasticNetConfig cfg;
  REQUIRE_THROWS(fit_elasticnet(x, y, cfg));
}

TEST_CASE("kkt_residual exposes the stationarity gap of a perturbed solution") {
  Rng rng(101);
  const FeatureMatrix x = random_matrix(40, 4, rng);
  const Vector y = pm_one_labels(40, rng);
  ElasticNetConfig cfg;
  cfg.lambda = 0.1;
  cfg.tol = 1e-10;
  const FittedModel m = fit_elasticnet(x, y, cfg);

  const detail::Penalty pen{cfg.lambda * cfg.alpha1, cfg.lambda * (1.0 - cfg.alpha1)};
  const Vector grad = oracle::logistic_smooth_grad(x, y, m.coefficients, m.intercept);
  const double at_optimum = detail::kkt_residual(grad, m.coefficients, pen);
  CHECK(at_optimum <= 1e-6);

  Vector kicked = m.coefficients;
  kicked(0) += 0.5;
  const Vector grad2 = oracle::logistic_smooth_grad(x, y, kicked, m.intercept);
  CHECK(detail::kkt_residual(grad2, kicked, pen) > 10.0 * at_optimum);
}

TEST_CASE("prune keeps exactly the coefficients reaching the threshold") {
  // beta = (0.3, 0.05, -0.2), lambda = 0.15 -> keep features 0 and 2.
  // Engineer the coefficients through an orthonormal design where the
  // solution is the soft-threshold formula, then check prune_selected's
  // retention line.
  Rng rng(103);
  const int n = 300;
  const FeatureMatrix x = orthonormal_design(n, 3, rng);
  ElasticNetConfig cfg;
  cfg.lambda = 0.15;
  cfg.alpha1 = 1.0;
  cfg.loss = Loss::squared;
  cfg.tol = 1e-12;

  // want soft(b_ols_j, 0.15) = (0.3, 0.05, -0.2): set b_ols = (0.45, 0.2, -0.35)
  Vector target(3);
  target << 0.45, 0.2, -0.35;
  const Vector y = x * target;  // exactly b_ols_j = x_j . y / n = target_j

  const FittedModel m = fit_elasticnet(x, y, cfg);
  CHECK(m.coefficients(0) == Catch::Approx(0.3).margin(1e-6));
  CHECK(m.coefficients(1) == Catch::Approx(0.05).margin(1e-6));
  CHECK(m.coefficients(2) == Catch::Approx(-0.2).margin(1e-6));

  // direct threshold comparison on the magnitudes
  std::vector<int> kept;
  for (int j = 0; j < 3; ++j) {
    if (std::abs(m.coefficients(j)) >= cfg.lambda) kept.push_back(j);
  }
  CHECK(kept == std::vector<int>{0, 2});
}

TEST_CASE("prune_selected end-to-end on labeled data") {
  Rng rng(107);
  const int n = 200;
  FeatureMatrix x(n, 3);
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % 2;
  for (int i = 0; i < n; ++i) {
    x(i, 0) = (labels[i] == 0 ? -1.5 : 1.5) + rng.normal();  // informative
    x(i, 1) = rng.normal();                                  // noise
    x(i, 2) = (labels[i] == 0 ? -1.2 : 1.2) + rng.normal();  // informative
  }
  ElasticNetConfig cfg;
  cfg.lambda = 0.15;
  const std::vector<int> ids = {10, 20, 30};
  const PruneResult pr = prune_selected(x, ids, labels, cfg);
  CHECK(pr.kept == std::vector<int>{10, 30});
  CHECK(pr.dropped == std::vector<int>{20});
  REQUIRE(pr.magnitude.size() == 3);
  CHECK(pr.magnitude(0) >= cfg.lambda);
  CHECK(pr.magnitude(1) < cfg.lambda);

  SECTION("identity retention when every coefficient clears the threshold") {
    ElasticNetConfig tiny = cfg;
    tiny.lambda = 1e-6;
    const PruneResult all = prune_selected(x, ids, labels, tiny);
    CHECK(all.kept == ids);
    CHECK(all.dropped.empty());
  }

  SECTION("id count must match the column count") {
    REQUIRE_THROWS(prune_selected(x, {1, 2}, labels, cfg));
  }
}

TEST_CASE("one-vs-rest handles binary and multiclass problems") {
  Rng rng(109);
  const int n = 240;

  SECTION("binary: single fit, prediction works") {
    FeatureMatrix x(n, 2);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = i % 2;
      x(i, 0) = (labels[i] == 0 ? -2.0 : 2.0) + 0.5 * rng.normal();
      x(i, 1) = rng.normal();
    }
    ElasticNetConfig cfg;
    cfg.lambda = 0.01;
    const OneVsRestModel m = fit_one_vs_rest(x, labels, cfg);
    CHECK(m.per_class.size() == 1);
    CHECK(m.class_labels == std::vector<int>{0, 1});
    const std::vector<int> pred = m.predict(x);
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += pred[i] == labels[i];
    CHECK(correct >= n * 95 / 100);
    // magnitude aggregates |beta| per feature: informative beats noise
    CHECK(m.magnitude(0) > m.magnitude(1));
  }

  SECTION("three classes: one model per class, softmax probabilities sum to 1") {
    FeatureMatrix x(n, 2);
    std::vector<int> labels(n);
    for (int i = 0; i < n; ++i) {
      labels[i] = i % 3;
      const double angle = 2.0 * M_PI * labels[i] / 3.0;
      x(i, 0) = 3.0 * std::cos(angle) + 0.5 * rng.normal();
      x(i, 1) = 3.0 * std::sin(angle) + 0.5 * rng.normal();
    }
    ElasticNetConfig cfg;
    cfg.lambda = 0.01;
    const OneVsRestModel m = fit_one_vs_rest(x, labels, cfg);
    CHECK(m.per_class.size() == 3);
    const std::vector<int> pred = m.predict(x);
    int correct = 0;
    for (int i = 0; i < n; ++i) correct += pred[i] == labels[i];
    CHECK(correct >= n * 90 / 100);
    const Eigen::MatrixXd probs = m.probabilities(x);
    for (int i = 0; i < 5; ++i) {
      CHECK(probs.row(i).sum() == Catch::Approx(1.0).margin(1e-12));
    }
  }
}
