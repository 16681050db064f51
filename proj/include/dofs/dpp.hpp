#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "dofs/common.hpp"
#include "dofs/rng.hpp"

namespace dofs {

enum class KernelType { rbf, linear, correlation };

struct KernelConfig {
  KernelType type = KernelType::rbf;
  // rbf bandwidth; 0 means auto (1/n on standardized features)
  double gamma = 0.0;
};

inline std::string kernel_name(KernelType t) {
  switch (t) {
    case KernelType::rbf: return "rbf";
    case KernelType::linear: return "linear";
    case KernelType::correlation: return "correlation";
  }
  return "?";
}

inline KernelType kernel_from_name(const std::string& s) {
  if (s == "rbf") return KernelType::rbf;
  if (s == "linear") return KernelType::linear;
  if (s == "correlation") return KernelType::correlation;
  throw std::invalid_argument("unknown kernel '" + s + "' (rbf|linear|correlation)");
}

struct MarginalKernel {
  Eigen::MatrixXd K;
};

struct SubsetSample {
  std::vector<int> items;  // sorted item ids
  double log_prob = 0.0;
};

// Symmetric PSD similarity matrix with cached eigendecomposition. Subset
// probabilities are det(L_Y)/det(L+I); rows map to global feature indices
// through item_ids.
class LEnsemble {
 public:
  // Validates symmetry (1e-10 relative), clamps eigenvalues in
  // [-tol, 0) to 0 where tol = 1e-8 * max(1, |lambda|_max), rejects
  // anything below, and checks the decomposition reconstructs L.
  static LEnsemble from_matrix(Eigen::MatrixXd L, std::vector<int> item_ids = {}) {
    const Eigen::Index m = L.rows();
    if (m != L.cols()) throw std::invalid_argument("LEnsemble: matrix must be square");
    require_finite(L, "LEnsemble");
    const double scale = L.cwiseAbs().maxCoeff();
    if ((L - L.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, scale)) {
      throw std::invalid_argument("LEnsemble: matrix is not symmetric");
    }
    L = ((L + L.transpose()) / 2.0).eval();

    LEnsemble e;
    e.L_ = std::move(L);
    if (item_ids.empty()) {
      e.item_ids_.resize(m);
      for (Eigen::Index i = 0; i < m; ++i) e.item_ids_[i] = static_cast<int>(i);
    } else {
      if (static_cast<Eigen::Index>(item_ids.size()) != m) {
        throw std::invalid_argument("LEnsemble: item_ids size mismatch");
      }
      e.item_ids_ = std::move(item_ids);
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(e.L_);
    if (solver.info() != Eigen::Success) throw std::runtime_error("LEnsemble: eigendecomposition failed");
    e.eigenvalues_ = solver.eigenvalues();
    e.eigenvectors_ = solver.eigenvectors();

    const double lmax = e.eigenvalues_.cwiseAbs().maxCoeff();
    const double tol = 1e-8 * std::max(1.0, lmax);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (e.eigenvalues_(i) < -tol) {
        throw std::runtime_error("LEnsemble: matrix is not positive semidefinite (eigenvalue " +
                                 std::to_string(e.eigenvalues_(i)) + ")");
      }
      if (e.eigenvalues_(i) < 0.0) e.eigenvalues_(i) = 0.0;
    }

    const Eigen::MatrixXd recon =
        e.eigenvectors_ * e.eigenvalues_.asDiagonal() * e.eigenvectors_.transpose();
    const double fro = e.L_.norm();
    if ((recon - e.L_).norm() > 1e-8 * std::max(1.0, fro)) {
      throw std::runtime_error("LEnsemble: eigendecomposition reconstruction error too large");
    }
    for (std::size_t i = 0; i < e.item_ids_.size(); ++i) e.row_of_[e.item_ids_[i]] = static_cast<int>(i);
    return e;
  }

  Eigen::Index size() const { return L_.rows(); }
  const Eigen::MatrixXd& matrix() const { return L_; }
  const Eigen::VectorXd& eigenvalues() const { return eigenvalues_; }
  const Eigen::MatrixXd& eigenvectors() const { return eigenvectors_; }
  const std::vector<int>& item_ids() const { return item_ids_; }

  int row_of(int item_id) const {
    auto it = row_of_.find(item_id);
    if (it == row_of_.end()) {
      throw std::invalid_argument("LEnsemble: unknown item id " + std::to_string(item_id));
    }
    return it->second;
  }

  double log_det_l_plus_i() const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) s += std::log1p(eigenvalues_(i));
    return s;
  }

 private:
  Eigen::MatrixXd L_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  std::vector<int> item_ids_;
  std::unordered_map<int, int> row_of_;
};

// Similarity ensemble over feature columns. Columns are standardized
// internally before kernel evaluation; constant columns get similarity 1 to
// themselves and 0 to everything else.
inline LEnsemble build_similarity(const FeatureMatrix& features, const KernelConfig& cfg = {},
                                  std::vector<int> item_ids = {}) {
  if (features.cols() < 1) throw std::invalid_argument("build_similarity: need at least one feature");
  require_finite(features, "build_similarity");

  const Eigen::Index n = features.rows();
  const Eigen::Index m = features.cols();
  FeatureMatrix z(n, m);
  std::vector<bool> constant(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    constant[j] = is_constant_column(features.col(j));
    z.col(j) = constant[j] ? Vector::Zero(n).eval() : standardize_column(features.col(j));
  }

  const double gamma = cfg.gamma > 0.0 ? cfg.gamma : 1.0 / static_cast<double>(n);

  Eigen::MatrixXd L(m, m);
  for (Eigen::Index i = 0; i < m; ++i) {
    L(i, i) = 1.0;
    for (Eigen::Index j = i + 1; j < m; ++j) {
      double v;
      if (constant[i] || constant[j]) {
        v = 0.0;
      } else {
        switch (cfg.type) {
          case KernelType::rbf:
            v = std::exp(-gamma * (z.col(i) - z.col(j)).squaredNorm());
            break;
          case KernelType::linear:
            v = z.col(i).dot(z.col(j)) / static_cast<double>(n);
            break;
          case KernelType::correlation:
            v = std::abs(z.col(i).dot(z.col(j))) / static_cast<double>(n);
            break;
          default:
            v = 0.0;
        }
      }
      L(i, j) = v;
      L(j, i) = v;
    }
  }
  return LEnsemble::from_matrix(std::move(L), std::move(item_ids));
}

// K = (L+I)^-1 L: same eigenvectors, eigenvalues lambda/(1+lambda).
inline MarginalKernel marginal_kernel(const LEnsemble& e) {
  Eigen::VectorXd k = e.eigenvalues();
  for (Eigen::Index i = 0; i < k.size(); ++i) k(i) = k(i) / (1.0 + k(i));
  MarginalKernel mk;
  mk.K = e.eigenvectors() * k.asDiagonal() * e.eigenvectors().transpose();
  mk.K = ((mk.K + mk.K.transpose()) / 2.0).eval();
  return mk;
}

// log P(Y = items) = log det(L_items) - log det(L+I); -inf for singular
// minors. items are item ids.
inline double subset_log_prob(const LEnsemble& e, const std::vector<int>& items) {
  const double norm = e.log_det_l_plus_i();
  if (items.empty()) return -norm;

  std::vector<int> rows(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) rows[i] = e.row_of(items[i]);
  {
    std::vector<int> sorted(rows);
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
      throw std::invalid_argument("subset_log_prob: duplicate items");
    }
  }

  const Eigen::Index k = static_cast<Eigen::Index>(rows.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a) {
    for (Eigen::Index b = 0; b < k; ++b) sub(a, b) = e.matrix()(rows[a], rows[b]);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sub);
  double logdet = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double lam = solver.eigenvalues()(i);
    if (lam <= 1e-12) return -std::numeric_limits<double>::infinity();
    logdet += std::log(lam);
  }
  return logdet - norm;
}

// Conditional ensemble over item_ids \ included whose subset probabilities
// equal P(Y = included u B | included subset of Y). Uses the closed form
// L^A = ([(L + I_Abar)^-1]_Abar)^-1 - I.
inline LEnsemble condition_on(const LEnsemble& e, const std::vector<int>& included) {
  if (included.empty()) return e;
  const Eigen::Index m = e.size();

  std::vector<int> in_rows(included.size());
  for (std::size_t i = 0; i < included.size(); ++i) in_rows[i] = e.row_of(included[i]);
  std::vector<bool> is_in(m, false);
  for (int r : in_rows) {
    if (is_in[r]) throw std::invalid_argument("condition_on: duplicate items in included set");
    is_in[r] = true;
  }

  // feasibility: P(included in Y) = det(K_included) must be positive
  {
    const MarginalKernel mk = marginal_kernel(e);
    const Eigen::Index a = static_cast<Eigen::Index>(in_rows.size());
    Eigen::MatrixXd ka(a, a);
    for (Eigen::Index i = 0; i < a; ++i) {
      for (Eigen::Index j = 0; j < a; ++j) ka(i, j) = mk.K(in_rows[i], in_rows[j]);
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> s(ka);
    if (s.eigenvalues().minCoeff() <= 1e-12) {
      throw std::runtime_error("condition_on: conditioning event has probability 0");
    }
  }

  std::vector<int> comp_rows;
  comp_rows.reserve(m - in_rows.size());
  std::vector<int> comp_ids;
  for (Eigen::Index r = 0; r < m; ++r) {
    if (!is_in[r]) {
      comp_rows.push_back(static_cast<int>(r));
      comp_ids.push_back(e.item_ids()[r]);
    }
  }
  if (comp_rows.empty()) {
    return LEnsemble::from_matrix(Eigen::MatrixXd::Zero(0, 0), {});
  }

  Eigen::MatrixXd m1 = e.matrix();
  for (int r : comp_rows) m1(r, r) += 1.0;  // L + I_Abar

  Eigen::LDLT<Eigen::MatrixXd> ldlt(m1);
  if (ldlt.info() != Eigen::Success) {
    throw std::runtime_error("condition_on: L + I_complement is numerically singular");
  }
  const Eigen::MatrixXd inv = ldlt.solve(Eigen::MatrixXd::Identity(m, m));

  const Eigen::Index c = static_cast<Eigen::Index>(comp_rows.size());
  Eigen::MatrixXd restricted(c, c);
  for (Eigen::Index i = 0; i < c; ++i) {
    for (Eigen::Index j = 0; j < c; ++j) restricted(i, j) = inv(comp_rows[i], comp_rows[j]);
  }
  Eigen::LDLT<Eigen::MatrixXd> ldlt2(restricted);
  if (ldlt2.info() != Eigen::Success) {
    throw std::runtime_error("condition_on: restricted inverse is numerically singular");
  }
  Eigen::MatrixXd cond = ldlt2.solve(Eigen::MatrixXd::Identity(c, c));
  cond -= Eigen::MatrixXd::Identity(c, c);
  cond = ((cond + cond.transpose()) / 2.0).eval();
  return LEnsemble::from_matrix(std::move(cond), std::move(comp_ids));
}

namespace detail {

// Phase 2 of spectral DPP sampling: given selected eigenvectors, pick one
// item per step from the squared-row-norm distribution and project the
// basis onto the complement of the picked coordinate.
inline std::vector<int> sample_from_eigenbasis(const LEnsemble& e, std::vector<int> v_idx, Rng& rng) {
  const Eigen::Index m = e.size();
  std::vector<int> picked_rows;
  Eigen::Index k = static_cast<Eigen::Index>(v_idx.size());
  if (k == 0) return picked_rows;

  Eigen::MatrixXd v(m, k);
  for (Eigen::Index j = 0; j < k; ++j) v.col(j) = e.eigenvectors().col(v_idx[j]);

  while (v.cols() > 0) {
    const Eigen::Index cols = v.cols();
    Eigen::VectorXd prob = v.array().square().rowwise().sum();
    const double total = prob.sum();  // equals cols for an orthonormal basis
    const double r = rng.uniform01() * total;
    double csum = 0.0;
    Eigen::Index pick = m - 1;
    for (Eigen::Index a = 0; a < m; ++a) {
      csum += prob(a);
      if (r <= csum) {
        pick = a;
        break;
      }
    }
    picked_rows.push_back(static_cast<int>(pick));
    if (cols == 1) break;

    // eliminate the picked coordinate: subtract the column with the largest
    // entry at `pick`, scaled so every remaining column has a zero there
    Eigen::Index jstar = 0;
    v.row(pick).cwiseAbs().maxCoeff(&jstar);
    const Eigen::VectorXd vj = v.col(jstar);
    const double pivot = vj(pick);
    Eigen::MatrixXd w(m, cols - 1);
    Eigen::Index out = 0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      if (j == jstar) continue;
      w.col(out++) = v.col(j) - vj * (v(pick, j) / pivot);
    }
    // re-orthonormalize the remaining basis
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(w);
    Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(m, cols - 1);
    v = std::move(q);
  }
  return picked_rows;
}

// elementary symmetric polynomials: E(r, j) = e_r(lambda_0..lambda_{j-1})
inline Eigen::MatrixXd esym_table(const Eigen::VectorXd& lambda, int k) {
  const int n = static_cast<int>(lambda.size());
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(k + 1, n + 1);
  e.row(0).setOnes();
  for (int r = 1; r <= k; ++r) {
    for (int j = 1; j <= n; ++j) {
      e(r, j) = e(r, j - 1) + lambda(j - 1) * e(r - 1, j - 1);
    }
  }
  return e;
}

}  // namespace detail

// Exact DPP sample via the two-phase spectral algorithm: Bernoulli
// eigenvalue selection with probability lambda/(1+lambda), then iterative
// projection selection. Deterministic under the caller's rng.
inline SubsetSample sample(const LEnsemble& e, Rng& rng) {
  std::vector<int> v_idx;
  for (Eigen::Index i = 0; i < e.eigenvalues().size(); ++i) {
    const double lam = e.eigenvalues()(i);
    if (rng.uniform01() < lam / (1.0 + lam)) v_idx.push_back(static_cast<int>(i));
  }
  std::vector<int> rows = detail::sample_from_eigenbasis(e, std::move(v_idx), rng);
  SubsetSample s;
  for (int r : rows) s.items.push_back(e.item_ids()[r]);
  std::sort(s.items.begin(), s.items.end());
  s.log_prob = subset_log_prob(e, s.items);
  return s;
}

// Exact k-DPP sample: eigenvalue selection through the elementary symmetric
// polynomial recursion, then the same projection phase.
inline SubsetSample sample_kdpp(const LEnsemble& e, int k, Rng& rng) {
  const int m = static_cast<int>(e.size());
  if (k < 0 || k > m) throw std::invalid_argument("sample_kdpp: k out of range");
  SubsetSample s;
  if (k == 0) {
    s.log_prob = subset_log_prob(e, {});
    return s;
  }
  int rank = 0;
  for (Eigen::Index i = 0; i < e.eigenvalues().size(); ++i) {
    if (e.eigenvalues()(i) > 1e-12) ++rank;
  }
  k = std::min(k, rank);
  if (k == 0) {
    s.log_prob = subset_log_prob(e, {});
    return s;
  }

  const Eigen::MatrixXd etab = detail::esym_table(e.eigenvalues(), k);
  std::vector<int> v_idx;
  int rem = k;
  int i = m;
  while (rem > 0 && i > 0) {
    double marg;
    if (i == rem || etab(rem, i) <= 0.0) {
      marg = 1.0;
    } else {
      marg = e.eigenvalues()(i - 1) * etab(rem - 1, i - 1) / etab(rem, i);
    }
    if (marg >= 1.0 || rng.uniform01() < marg) {
      v_idx.push_back(i - 1);
      --rem;
    }
    --i;
  }
  std::vector<int> rows = detail::sample_from_eigenbasis(e, std::move(v_idx), rng);
  for (int r : rows) s.items.push_back(e.item_ids()[r]);
  std::sort(s.items.begin(), s.items.end());
  s.log_prob = subset_log_prob(e, s.items);
  return s;
}

// DPP sample conditioned on cardinality <= k_max: rejection from the exact
// sampler, falling back to a k-DPP at k = k_max after 50 rejections.
inline SubsetSample sample_truncated(const LEnsemble& e, int k_max, Rng& rng) {
  if (k_max < 0 || k_max > e.size()) throw std::invalid_argument("sample_truncated: k_max out of range");
  if (k_max == 0) {
    SubsetSample s;
    s.log_prob = subset_log_prob(e, {});
    return s;
  }
  constexpr int kMaxRejections = 50;
  for (int attempt = 0; attempt < kMaxRejections; ++attempt) {
    SubsetSample s = sample(e, rng);
    if (static_cast<int>(s.items.size()) <= k_max) return s;
  }
  return sample_kdpp(e, k_max, rng);
}

}  // namespace dofs
