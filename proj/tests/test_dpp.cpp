#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <map>

#include "dofs/dpp.hpp"
#include "dofs/rng.hpp"
#include "oracles.hpp"

using namespace dofs;

namespace {

// random PSD matrix with unit-scale entries: A A^T / size, optionally scaled
Eigen::MatrixXd random_psd(int m, Rng& rng, double scale = 1.0) {
  Eigen::MatrixXd a(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) a(i, j) = rng.normal();
  }
  return scale * (a * a.transpose()) / static_cast<double>(m);
}

}  // namespace

TEST_CASE("build_similarity rbf hits the hand-evaluated kernel values") {
  // identical columns: squared distance 0 -> similarity 1
  FeatureMatrix f(4, 2);
  f.col(0) << 1.0, 2.0, 3.0, 4.0;
  f.col(1) = f.col(0);
  const LEnsemble same = build_similarity(f);
  CHECK(same.matrix()(0, 1) == Catch::Approx(1.0).margin(1e-12));

  // single column -> L = [[1]]
  const LEnsemble one = build_similarity(f.leftCols(1));
  REQUIRE(one.size() == 1);
  CHECK(one.matrix()(0, 0) == Catch::Approx(1.0).margin(1e-12));

  // standardized columns with squared distance 2 at gamma = 0.5 -> exp(-1).
  // Two columns that standardize to orthogonal unit-variance vectors have
  // ||z1 - z2||^2 = 2n, so gamma = 0.5 needs distance scaled: use n = 1
  // normalization via explicit gamma = 0.5 / n to keep the target exp(-1).
  FeatureMatrix g(4, 2);
  g.col(0) << 1.0, -1.0, 1.0, -1.0;
  g.col(1) << 1.0, 1.0, -1.0, -1.0;  // orthogonal after standardization
  KernelConfig kc;
  kc.type = KernelType::rbf;
  kc.gamma = 0.5 / 4.0;  // squared distance is 2n = 8; gamma*d2 = 1
  const LEnsemble l = build_similarity(g, kc);
  CHECK(l.matrix()(0, 1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-9));
}

TEST_CASE("build_similarity rejects non-finite input") {
  FeatureMatrix f(3, 1);
  f << 1.0, std::nan(""), 2.0;
  REQUIRE_THROWS(build_similarity(f));
}

TEST_CASE("marginal kernel maps eigenvalues lambda/(1+lambda)") {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(2, 2);
  const MarginalKernel k1 = marginal_kernel(LEnsemble::from_matrix(eye));
  CHECK(k1.K(0, 0) == Catch::Approx(0.5).margin(1e-12));
  CHECK(k1.K(1, 1) == Catch::Approx(0.5).margin(1e-12));

  const MarginalKernel k2 = marginal_kernel(LEnsemble::from_matrix(2.0 * eye));
  CHECK(k2.K(0, 0) == Catch::Approx(2.0 / 3.0).margin(1e-12));

  // random PSD: diag(K) equals enumeration inclusion probabilities
  Rng rng(3);
  const Eigen::MatrixXd l = random_psd(3, rng);
  const MarginalKernel k = marginal_kernel(LEnsemble::from_matrix(l));
  for (int i = 0; i < 3; ++i) {
    CHECK(k.K(i, i) == Catch::Approx(oracle::inclusion_probability(l, i)).margin(1e-10));
  }
}

TEST_CASE("subset_log_prob matches hand-derived determinant ratios") {
  const Eigen::MatrixXd l = 2.0 * Eigen::MatrixXd::Identity(2, 2);
  const LEnsemble e = LEnsemble::from_matrix(l, {1, 2});
  CHECK(subset_log_prob(e, {1, 2}) == Catch::Approx(std::log(4.0 / 9.0)).margin(1e-12));
  CHECK(subset_log_prob(e, {}) == Catch::Approx(std::log(1.0 / 9.0)).margin(1e-12));
}

TEST_CASE("subset probabilities normalize and match enumeration on random PSD L") {
  Rng rng(17);
  for (int trial = 0; trial < 25; ++trial) {
    const int m = 2 + static_cast<int>(rng.uniform01() * 3.0);  // 2..4
    const Eigen::MatrixXd l = random_psd(m, rng, 0.5 + 2.0 * rng.uniform01());
    const LEnsemble e = LEnsemble::from_matrix(l);
    double total = 0.0;
    for (const auto& s : oracle::all_subsets(m)) {
      const double p = std::exp(subset_log_prob(e, s));
      total += p;
      CHECK(p == Catch::Approx(oracle::subset_probability(l, s)).margin(1e-10));
    }
    CHECK(total == Catch::Approx(1.0).margin(1e-10));
  }
}

TEST_CASE("diversity: higher off-diagonal similarity lowers the pair probability") {
  double prev = 1.0;
  for (double rho : {0.0, 0.3, 0.6, 0.9}) {
    Eigen::MatrixXd l(2, 2);
    l << 1.0, rho, rho, 1.0;
    const double p = std::exp(subset_log_prob(LEnsemble::from_matrix(l), {0, 1}));
    CHECK(p < prev);
    prev = p;
  }
}

TEST_CASE("condition_on reproduces enumeration conditionals") {
  // L = 2I, condition on {1}: the other item appears with probability 2/3
  const LEnsemble e2 =
      LEnsemble::from_matrix(2.0 * Eigen::MatrixXd::Identity(2, 2), {1, 2});
  const LEnsemble c = condition_on(e2, {1});
  REQUIRE(c.size() == 1);
  REQUIRE(c.item_ids() == std::vector<int>{2});
  CHECK(std::exp(subset_log_prob(c, {2})) == Catch::Approx(2.0 / 3.0).margin(1e-10));

  // random 4x4: all 8 conditional subset probabilities match enumeration
  Rng rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::MatrixXd l = random_psd(4, rng, 1.5);
    const LEnsemble e = LEnsemble::from_matrix(l);
    const LEnsemble cond = condition_on(e, {2});
    for (const auto& rest : oracle::all_subsets(4)) {
      if (std::find(rest.begin(), rest.end(), 2) != rest.end()) continue;
      const double lib = std::exp(subset_log_prob(cond, rest));
      const double ora = oracle::conditional_subset_probability(l, {2}, rest);
      CHECK(lib == Catch::Approx(ora).margin(1e-8));
    }
  }
}

TEST_CASE("condition_on with the empty set changes nothing") {
  Rng rng(5);
  const Eigen::MatrixXd l = random_psd(3, rng);
  const LEnsemble e = LEnsemble::from_matrix(l);
  const LEnsemble c = condition_on(e, {});
  for (const auto& s : oracle::all_subsets(3)) {
    CHECK(subset_log_prob(c, s) == Catch::Approx(subset_log_prob(e, s)).margin(1e-10));
  }
}

TEST_CASE("condition_on rejects zero-probability conditioning events") {
  // a duplicated item makes {both} impossible: det of the 2x2 minor is 0
  Eigen::MatrixXd l(2, 2);
  l << 1.0, 1.0, 1.0, 1.0;
  REQUIRE_THROWS(condition_on(LEnsemble::from_matrix(l), {0, 1}));
}

TEST_CASE("sample: zero matrix always yields the empty set") {
  const LEnsemble e = LEnsemble::from_matrix(Eigen::MatrixXd::Zero(3, 3));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) CHECK(sample(e, rng).items.empty());
}

TEST_CASE("sample frequencies match the enumeration distribution on 2I") {
  const LEnsemble e = LEnsemble::from_matrix(2.0 * Eigen::MatrixXd::Identity(2, 2), {1, 2});
  Rng rng(7);
  const int n = 100000;
  int pair = 0;
  long card = 0;
  for (int i = 0; i < n; ++i) {
    const SubsetSample s = sample(e, rng);
    card += static_cast<long>(s.items.size());
    if (s.items.size() == 2) ++pair;
  }
  CHECK(static_cast<double>(pair) / n == Catch::Approx(4.0 / 9.0).margin(0.01));
  CHECK(static_cast<double>(card) / n == Catch::Approx(4.0 / 3.0).margin(0.01));
}

TEST_CASE("sample is deterministic under the seed") {
  Rng mat_rng(99);
  const LEnsemble e = LEnsemble::from_matrix(random_psd(4, mat_rng));
  Rng s1(11);
  Rng s2(11);
  for (int i = 0; i < 50; ++i) {
    CHECK(sample(e, s1).items == sample(e, s2).items);
  }
}

TEST_CASE("sample_truncated caps cardinality and falls back to k-DPP") {
  Rng rng(31);
  const LEnsemble e = LEnsemble::from_matrix(random_psd(5, rng, 3.0));
  SECTION("k_max = 0 gives the empty set") {
    Rng s(1);
    CHECK(sample_truncated(e, 0, s).items.empty());
  }
  SECTION("cap respected over many draws") {
    Rng s(2);
    for (int i = 0; i < 2000; ++i) {
      CHECK(sample_truncated(e, 2, s).items.size() <= 2);
    }
  }
  SECTION("k_max = M matches open sampling exactly under the same seed") {
    Rng s1(3);
    Rng s2(3);
    for (int i = 0; i < 200; ++i) {
      CHECK(sample_truncated(e, 5, s1).items == sample(e, s2).items);
    }
  }
}

TEST_CASE("k-DPP at k=1 on diag(1,3) prefers the larger eigenvalue 3:1") {
  Eigen::MatrixXd l(2, 2);
  l << 1.0, 0.0, 0.0, 3.0;
  const LEnsemble e = LEnsemble::from_matrix(l, {1, 2});
  Rng rng(13);
  int first = 0;
  int second = 0;
  for (int i = 0; i < 100000; ++i) {
    const SubsetSample s = sample_kdpp(e, 1, rng);
    REQUIRE(s.items.size() == 1);
    (s.items[0] == 1 ? first : second)++;
  }
  CHECK(static_cast<double>(second) / static_cast<double>(first) == Catch::Approx(3.0).margin(0.1));
}

TEST_CASE("k-DPP cardinality is exact and its distribution matches enumeration") {
  Rng rng(41);
  const Eigen::MatrixXd l = random_psd(4, rng, 2.0);
  const LEnsemble e = LEnsemble::from_matrix(l);

  // conditional-on-size distribution from the enumeration oracle
  std::map<std::vector<int>, double> within;
  double mass = 0.0;
  const int k = 2;
  for (const auto& s : oracle::all_subsets(4)) {
    if (static_cast<int>(s.size()) == k) {
      const double p = oracle::subset_probability(l, s);
      within[s] = p;
      mass += p;
    }
  }

  Rng srng(8);
  const int n = 100000;
  std::map<std::vector<int>, int> freq;
  for (int i = 0; i < n; ++i) {
    const SubsetSample s = sample_kdpp(e, k, srng);
    REQUIRE(static_cast<int>(s.items.size()) == k);
    freq[s.items]++;
  }
  for (const auto& [subset, p] : within) {
    const double expect = p / mass;
    const double got = static_cast<double>(freq[subset]) / n;
    const double se = std::sqrt(expect * (1.0 - expect) / n);
    CHECK(std::abs(got - expect) <= 4.0 * se + 1e-4);
  }
}

TEST_CASE("LEnsemble validation enforces symmetry and PSD tolerance") {
  Eigen::MatrixXd asym(2, 2);
  asym << 1.0, 0.5, -0.5, 1.0;
  REQUIRE_THROWS(LEnsemble::from_matrix(asym));

  Eigen::MatrixXd indef(2, 2);
  indef << 0.0, 1.0, 1.0, 0.0;  // eigenvalues +1, -1
  REQUIRE_THROWS(LEnsemble::from_matrix(indef));

  // tiny negative eigenvalues are clamped to zero, not errors
  Eigen::MatrixXd nearly = Eigen::MatrixXd::Identity(2, 2);
  nearly(0, 0) = -1e-10;
  nearly(1, 1) = 1.0;
  const LEnsemble e = LEnsemble::from_matrix(nearly);
  CHECK(e.eigenvalues().minCoeff() >= 0.0);
}

TEST_CASE("log_prob of a sample is the determinant ratio of its own items") {
  Rng rng(53);
  const Eigen::MatrixXd l = random_psd(4, rng, 2.0);
  const LEnsemble e = LEnsemble::from_matrix(l);
  Rng s(4);
  for (int i = 0; i < 100; ++i) {
    const SubsetSample smp = sample(e, s);
    const double expect = std::log(oracle::subset_probability(l, smp.items));
    CHECK(smp.log_prob == Catch::Approx(expect).margin(1e-6));
  }
}
