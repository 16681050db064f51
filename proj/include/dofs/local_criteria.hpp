#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "dofs/common.hpp"

namespace dofs {

// score reported when within-class scatter vanishes but between-class
// scatter does not; never enters the Criterion-2 running statistics
constexpr double kLargeScoreSentinel = 1e12;

// ---------------------------------------------------------------------------
// Wilcoxon signed-rank test (unsupervised redundancy criterion)
// ---------------------------------------------------------------------------

struct WilcoxonResult {
  double w = 0.0;       // signed rank statistic
  double z = 0.0;       // w / sqrt(N(N+1)(2N+1)/6)
  double p_value = 1.0;  // two-sided
  int n_effective = 0;   // pairs surviving zero-difference removal
};

namespace detail {

// midranks of |d|, ascending
inline std::vector<double> midranks(const std::vector<double>& abs_d) {
  const std::size_t n = abs_d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return abs_d[a] < abs_d[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && abs_d[order[j + 1]] == abs_d[order[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
    i = j + 1;
  }
  return ranks;
}

inline double normal_two_sided_p(double z) {
  return std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
}

// exact two-sided p over all 2^N sign assignments of the observed ranks
inline double exact_permutation_p(const std::vector<double>& ranks, double w_obs) {
  const int n = static_cast<int>(ranks.size());
  const double total = std::accumulate(ranks.begin(), ranks.end(), 0.0);
  const double target = std::abs(w_obs) - 1e-9;
  const std::uint64_t combos = std::uint64_t{1} << n;
  std::uint64_t count = 0;
  for (std::uint64_t mask = 0; mask < combos; ++mask) {
    double pos = 0.0;
    for (int i = 0; i < n; ++i) {
      if (mask & (std::uint64_t{1} << i)) pos += ranks[i];
    }
    const double w = 2.0 * pos - total;
    if (std::abs(w) >= target) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(combos);
}

}  // namespace detail

// Paired signed-rank test. Zero differences are dropped, ties get midranks.
// Exact permutation p for n_effective <= 12, normal approximation above;
// inputs shorter than 5 give a degenerate p = 1.
inline WilcoxonResult wilcoxon_test(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw std::invalid_argument("wilcoxon_test: length mismatch");
  require_finite(x, "wilcoxon_test");
  require_finite(y, "wilcoxon_test");

  std::vector<double> diffs;
  diffs.reserve(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const double d = x(i) - y(i);
    if (d != 0.0) diffs.push_back(d);
  }

  WilcoxonResult r;
  r.n_effective = static_cast<int>(diffs.size());
  if (r.n_effective == 0) return r;  // w = 0, z = 0, p = 1

  std::vector<double> abs_d(diffs.size());
  std::transform(diffs.begin(), diffs.end(), abs_d.begin(), [](double d) { return std::abs(d); });
  const std::vector<double> ranks = detail::midranks(abs_d);

  for (std::size_t i = 0; i < diffs.size(); ++i) {
    r.w += (diffs[i] > 0.0 ? ranks[i] : -ranks[i]);
  }
  const double n = static_cast<double>(r.n_effective);
  r.z = r.w / std::sqrt(n * (n + 1.0) * (2.0 * n + 1.0) / 6.0);

  if (x.size() < 5) {
    r.p_value = 1.0;  // degenerate, too few pairs for the test
  } else if (r.n_effective <= 12) {
    r.p_value = detail::exact_permutation_p(ranks, r.w);
  } else {
    r.p_value = detail::normal_two_sided_p(r.z);
  }
  return r;
}

// Keep f only if it differs significantly (p <= alpha) from every already
// selected feature; the first p > alpha marks it redundant.
inline bool wilcoxon_filter(const FeatureMatrix& selected, const Vector& f, double alpha) {
  for (Eigen::Index j = 0; j < selected.cols(); ++j) {
    if (wilcoxon_test(selected.col(j), f).p_value > alpha) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Class-separability scatter constructions (supervised criterion)
// ---------------------------------------------------------------------------

enum class ScatterVariant { mean_variance, kernel, label };

inline std::string scatter_variant_name(ScatterVariant v) {
  switch (v) {
    case ScatterVariant::mean_variance: return "mean_variance";
    case ScatterVariant::kernel: return "kernel";
    case ScatterVariant::label: return "label";
  }
  return "?";
}

inline ScatterVariant scatter_variant_from_name(const std::string& s) {
  if (s == "mean_variance") return ScatterVariant::mean_variance;
  if (s == "kernel") return ScatterVariant::kernel;
  if (s == "label") return ScatterVariant::label;
  throw std::invalid_argument("unknown scatter variant '" + s + "' (mean_variance|kernel|label)");
}

struct ClassStat {
  int label = 0;
  int count = 0;
  double prior = 0.0;
  Vector mean;          // per-class mean over the columns of U
  Eigen::MatrixXd cov;  // population covariance (mean_variance variant)
};

struct ScatterPair {
  ScatterVariant variant = ScatterVariant::mean_variance;
  Eigen::MatrixXd s_w;  // p x p, 1 x 1 (kernel) or n x n (label)
  Eigen::MatrixXd s_b;
  Vector pooled_mean;  // M_o (mean_variance variant)
  std::vector<ClassStat> classes;
  int n_classes = 0;
};

namespace detail {

struct ClassIndex {
  std::vector<int> labels_sorted;            // distinct labels ascending
  std::vector<std::vector<int>> members;     // instance rows per class
  std::vector<int> class_of;                 // per-instance class position
};

inline ClassIndex index_classes(const std::vector<int>& labels, Eigen::Index n_rows) {
  if (static_cast<Eigen::Index>(labels.size()) != n_rows) {
    throw std::invalid_argument("scatter: label count does not match instance count");
  }
  std::map<int, int> pos;
  ClassIndex ci;
  for (int l : labels) {
    if (pos.find(l) == pos.end()) {
      pos[l] = 0;
      ci.labels_sorted.push_back(l);
    }
  }
  std::sort(ci.labels_sorted.begin(), ci.labels_sorted.end());
  for (std::size_t i = 0; i < ci.labels_sorted.size(); ++i) pos[ci.labels_sorted[i]] = static_cast<int>(i);
  ci.members.resize(ci.labels_sorted.size());
  ci.class_of.resize(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int c = pos[labels[i]];
    ci.class_of[i] = c;
    ci.members[c].push_back(static_cast<int>(i));
  }
  return ci;
}

}  // namespace detail

// Within/between class scatter of the columns of u under one of three
// constructions. mean_variance: S_w = sum_j pi_j Sigma_j and
// S_b = sum_j (mu_j - M_o)(mu_j - M_o)^T. kernel: scalar pairwise
// squared-distance sums with 1/c and 2/(c(c-1)) prefactors. label: n x n
// matrices built from the label agreement pattern alone.
inline ScatterPair scatter(const FeatureMatrix& u, const std::vector<int>& labels,
                           ScatterVariant variant) {
  const Eigen::Index n = u.rows();
  const Eigen::Index p = u.cols();
  const detail::ClassIndex ci = detail::index_classes(labels, n);
  const int c = static_cast<int>(ci.labels_sorted.size());
  if (c < 2) throw std::invalid_argument("scatter: need at least 2 classes");
  for (const auto& m : ci.members) {
    if (m.empty()) throw std::invalid_argument("scatter: empty class");
  }

  ScatterPair sp;
  sp.variant = variant;
  sp.n_classes = c;
  for (int j = 0; j < c; ++j) {
    ClassStat st;
    st.label = ci.labels_sorted[j];
    st.count = static_cast<int>(ci.members[j].size());
    st.prior = static_cast<double>(st.count) / static_cast<double>(n);
    if (p > 0) {
      st.mean = Vector::Zero(p);
      for (int row : ci.members[j]) st.mean += u.row(row).transpose();
      st.mean /= static_cast<double>(st.count);
    }
    sp.classes.push_back(std::move(st));
  }

  switch (variant) {
    case ScatterVariant::mean_variance: {
      sp.pooled_mean = Vector::Zero(p);
      for (const auto& st : sp.classes) sp.pooled_mean += st.prior * st.mean;
      sp.s_w = Eigen::MatrixXd::Zero(p, p);
      sp.s_b = Eigen::MatrixXd::Zero(p, p);
      for (int j = 0; j < c; ++j) {
        ClassStat& st = sp.classes[j];
        Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
        for (int row : ci.members[j]) {
          const Vector d = u.row(row).transpose() - st.mean;
          cov += d * d.transpose();
        }
        cov /= static_cast<double>(st.count);
        st.cov = cov;
        sp.s_w += st.prior * cov;
        const Vector d = st.mean - sp.pooled_mean;
        sp.s_b += d * d.transpose();
      }
      break;
    }
    case ScatterVariant::kernel: {
      // identities: sum_{k,l in j} ||x_k - x_l||^2 = 2 N_j Q_j - 2 ||s_j||^2,
      // sum_{k in i, l in j} ||x_k - x_l||^2 = N_j Q_i + N_i Q_j - 2 s_i . s_j
      std::vector<double> q(c, 0.0);
      std::vector<Vector> s(c, Vector::Zero(p));
      for (int j = 0; j < c; ++j) {
        for (int row : ci.members[j]) {
          q[j] += u.row(row).squaredNorm();
          s[j] += u.row(row).transpose();
        }
      }
      double sw = 0.0;
      for (int j = 0; j < c; ++j) {
        const double nj = static_cast<double>(ci.members[j].size());
        sw += (2.0 * nj * q[j] - 2.0 * s[j].squaredNorm()) / (nj * nj);
      }
      sw /= static_cast<double>(c);
      double sb = 0.0;
      for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) {
          if (i == j) continue;
          const double ni = static_cast<double>(ci.members[i].size());
          const double nj = static_cast<double>(ci.members[j].size());
          sb += (nj * q[i] + ni * q[j] - 2.0 * s[i].dot(s[j])) / (ni * nj);
        }
      }
      sb *= 2.0 / (static_cast<double>(c) * static_cast<double>(c - 1));
      sp.s_w = Eigen::MatrixXd::Constant(1, 1, sw);
      sp.s_b = Eigen::MatrixXd::Constant(1, 1, sb);
      break;
    }
    case ScatterVariant::label: {
      sp.s_w = Eigen::MatrixXd::Zero(n, n);
      sp.s_b = Eigen::MatrixXd::Zero(n, n);
      const double inv_n = 1.0 / static_cast<double>(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
          if (ci.class_of[i] == ci.class_of[j]) {
            const double nc = static_cast<double>(ci.members[ci.class_of[i]].size());
            sp.s_w(i, j) = inv_n - 1.0 / nc;
            sp.s_b(i, j) = 1.0 / nc;
          } else {
            sp.s_w(i, j) = inv_n;
            sp.s_b(i, j) = 0.0;
          }
        }
      }
      break;
    }
  }
  return sp;
}

namespace detail {

// scalar within/between pair for one or more columns, avoiding the n x n
// label matrices via f^T S_b f = sum_l S_l^2 / n_l and
// f^T S_w f = (sum f)^2 / n - f^T S_b f
struct ScalarScatter {
  double s_w = 0.0;
  double s_b = 0.0;
};

inline ScalarScatter scalar_scatter(const FeatureMatrix& u, const ClassIndex& ci,
                                    ScatterVariant variant) {
  const Eigen::Index n = u.rows();
  const int c = static_cast<int>(ci.labels_sorted.size());
  ScalarScatter out;
  switch (variant) {
    case ScatterVariant::mean_variance: {
      for (Eigen::Index col = 0; col < u.cols(); ++col) {
        double pooled = 0.0;
        std::vector<double> mu(c);
        for (int j = 0; j < c; ++j) {
          double s = 0.0;
          for (int row : ci.members[j]) s += u(row, col);
          mu[j] = s / static_cast<double>(ci.members[j].size());
          pooled += (static_cast<double>(ci.members[j].size()) / static_cast<double>(n)) * mu[j];
        }
        for (int j = 0; j < c; ++j) {
          const double nj = static_cast<double>(ci.members[j].size());
          double var = 0.0;
          for (int row : ci.members[j]) var += (u(row, col) - mu[j]) * (u(row, col) - mu[j]);
          var /= nj;
          out.s_w += (nj / static_cast<double>(n)) * var;
          out.s_b += (mu[j] - pooled) * (mu[j] - pooled);
        }
      }
      break;
    }
    case ScatterVariant::kernel: {
      std::vector<double> q(c, 0.0);
      std::vector<Vector> s(c, Vector::Zero(u.cols()));
      for (int j = 0; j < c; ++j) {
        for (int row : ci.members[j]) {
          q[j] += u.row(row).squaredNorm();
          s[j] += u.row(row).transpose();
        }
      }
      for (int j = 0; j < c; ++j) {
        const double nj = static_cast<double>(ci.members[j].size());
        out.s_w += (2.0 * nj * q[j] - 2.0 * s[j].squaredNorm()) / (nj * nj);
      }
      out.s_w /= static_cast<double>(c);
      for (int i = 0; i < c; ++i) {
        for (int j = 0; j < c; ++j) {
          if (i == j) continue;
          const double ni = static_cast<double>(ci.members[i].size());
          const double nj = static_cast<double>(ci.members[j].size());
          out.s_b += (nj * q[i] + ni * q[j] - 2.0 * s[i].dot(s[j])) / (ni * nj);
        }
      }
      out.s_b *= 2.0 / (static_cast<double>(c) * static_cast<double>(c - 1));
      break;
    }
    case ScatterVariant::label: {
      for (Eigen::Index col = 0; col < u.cols(); ++col) {
        double total = 0.0;
        double between = 0.0;
        for (int j = 0; j < c; ++j) {
          double class_sum = 0.0;
          for (int row : ci.members[j]) class_sum += u(row, col);
          between += class_sum * class_sum / static_cast<double>(ci.members[j].size());
          total += class_sum;
        }
        out.s_b += between;
        out.s_w += total * total / static_cast<double>(n) - between;
      }
      break;
    }
  }
  return out;
}

inline double ratio_with_sentinel(double s_b, double s_w, bool abs_denominator) {
  const double denom_gate = abs_denominator ? std::abs(s_w) : s_w;
  if (denom_gate <= 1e-12) {
    return s_b > 0.0 ? kLargeScoreSentinel : 0.0;
  }
  return s_b / s_w;
}

}  // namespace detail

// s(f) = S_b(f) / S_w(f) on the standardized column. Vanishing within-class
// scatter maps to the large-score sentinel (S_b > 0) or 0.
inline double feature_score(const Vector& f, const std::vector<int>& labels, ScatterVariant variant) {
  require_finite(f, "feature_score");
  const detail::ClassIndex ci = detail::index_classes(labels, f.size());
  if (ci.labels_sorted.size() < 2) throw std::invalid_argument("feature_score: need at least 2 classes");
  FeatureMatrix z(f.size(), 1);
  z.col(0) = standardize_column(f);
  const detail::ScalarScatter ss = detail::scalar_scatter(z, ci, variant);
  return detail::ratio_with_sentinel(ss.s_b, ss.s_w, /*abs_denominator=*/false);
}

// F(U) = tr(S_b(U)) / tr(S_w(U)) on standardized columns; scalar variants
// treat the scalar as a 1x1 trace.
inline double subset_score(const FeatureMatrix& u, const std::vector<int>& labels,
                           ScatterVariant variant) {
  if (u.cols() < 1) throw std::invalid_argument("subset_score: empty feature set");
  require_finite(u, "subset_score");
  const detail::ClassIndex ci = detail::index_classes(labels, u.rows());
  if (ci.labels_sorted.size() < 2) throw std::invalid_argument("subset_score: need at least 2 classes");
  const FeatureMatrix z = standardize_columns(u);
  const detail::ScalarScatter ss = detail::scalar_scatter(z, ci, variant);
  return detail::ratio_with_sentinel(ss.s_b, ss.s_w, /*abs_denominator=*/true);
}

struct SupervisedConfig {
  double epsilon = 0.01;  // Criterion-1 gain threshold
  double alpha = 0.05;    // Criterion-2 significance level
  ScatterVariant variant = ScatterVariant::mean_variance;
  // paper-literal t = (mu_hat - s(f)) / se instead of the corrected
  // s(f)-exceeds-history direction
  bool paper_sign_t = false;
  // Sweep order over the sorted candidates. Ascending is the default: the
  // trace ratio of a feature set is a weighted average of per-feature
  // ratios, so a candidate scored below F(growing set) can never clear
  // Criterion 1 — a descending sweep therefore stalls after the first
  // acceptance whenever the growing set starts empty, while an ascending
  // sweep keeps F below each next candidate and admits every feature whose
  // margin exceeds epsilon.
  bool sort_ascending = true;
};

// Criterion 1: accept f iff F(U u f) - F(U) > epsilon, with F(empty) = 0.
inline bool criterion1(const FeatureMatrix& u, const Vector& f, const std::vector<int>& labels,
                       double epsilon, ScatterVariant variant) {
  const double f_u = u.cols() == 0 ? 0.0 : subset_score(u, labels, variant);
  FeatureMatrix uf(f.size(), u.cols() + 1);
  if (u.cols() > 0) uf.leftCols(u.cols()) = u;
  uf.col(u.cols()) = f;
  const double f_uf = subset_score(uf, labels, variant);
  return f_uf - f_u > epsilon;
}

struct Criterion2Result {
  bool accepted = false;
  double t = 0.0;
  double p = 1.0;
  std::string reason;
};

// Criterion 2: one-sided t-test of s(f) against the score history of U.
// Sentinel scores never enter the history.
inline Criterion2Result criterion2(const FeatureMatrix& u, const Vector& f,
                                   const std::vector<int>& labels, double alpha,
                                   ScatterVariant variant, bool paper_sign_t = false) {
  Criterion2Result res;
  std::vector<double> scores;
  for (Eigen::Index j = 0; j < u.cols(); ++j) {
    const double s = feature_score(u.col(j), labels, variant);
    if (s < kLargeScoreSentinel) scores.push_back(s);
  }
  const int n = static_cast<int>(scores.size());
  if (n < 2) {
    res.reason = "insufficient history";
    return res;
  }
  const double mu = std::accumulate(scores.begin(), scores.end(), 0.0) / n;
  double ss = 0.0;
  for (double s : scores) ss += (s - mu) * (s - mu);
  const double sigma = std::sqrt(ss / (n - 1));
  if (!(sigma > 0.0)) {
    res.reason = "insufficient history";
    return res;
  }
  const double sf = feature_score(f, labels, variant);
  const double raw = paper_sign_t ? (mu - sf) : (sf - mu);
  res.t = raw / (sigma / std::sqrt(static_cast<double>(n)));
  boost::math::students_t_distribution<double> dist(static_cast<double>(n - 1));
  res.p = boost::math::cdf(boost::math::complement(dist, res.t));
  res.accepted = res.p <= alpha;
  if (!res.accepted) res.reason = "not significant";
  return res;
}

// Algorithm: sort incoming by s(f) (ascending by default, see
// SupervisedConfig::sort_ascending; ties by ascending index) and sweep once,
// accepting a feature when Criterion 1 or Criterion 2 passes; accepted
// features join the growing set before the next candidate.
// Returns accepted column indices into `incoming`, ascending.
inline std::vector<int> supervised_select(const FeatureMatrix& incoming, const FeatureMatrix& u,
                                          const std::vector<int>& labels,
                                          const SupervisedConfig& cfg) {
  if (incoming.cols() == 0) return {};
  if (u.cols() > 0 && u.rows() != incoming.rows()) {
    throw std::invalid_argument("supervised_select: instance count mismatch");
  }

  std::vector<std::pair<double, int>> order;
  order.reserve(incoming.cols());
  for (Eigen::Index j = 0; j < incoming.cols(); ++j) {
    order.emplace_back(feature_score(incoming.col(j), labels, cfg.variant), static_cast<int>(j));
  }
  std::sort(order.begin(), order.end(), [&](const auto& a, const auto& b) {
    if (a.first != b.first) return cfg.sort_ascending ? a.first < b.first : a.first > b.first;
    return a.second < b.second;
  });

  FeatureMatrix grow = u;
  std::vector<int> accepted;
  for (const auto& [score, idx] : order) {
    const Vector f = incoming.col(idx);
    const bool c1 = criterion1(grow, f, labels, cfg.epsilon, cfg.variant);
    const bool c2 =
        c1 ? false
           : criterion2(grow, f, labels, cfg.alpha, cfg.variant, cfg.paper_sign_t).accepted;
    if (c1 || c2) {
      FeatureMatrix next(incoming.rows(), grow.cols() + 1);
      if (grow.cols() > 0) next.leftCols(grow.cols()) = grow;
      next.col(grow.cols()) = f;
      grow = std::move(next);
      accepted.push_back(idx);
    }
  }
  std::sort(accepted.begin(), accepted.end());
  return accepted;
}

}  // namespace dofs
