#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace dofs {

// Features are stored as columns over a fixed instance set: an n x p matrix
// holds p feature vectors of length n.
using FeatureMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace detail {
constexpr double kConstantSigmaTol = 1e-12;
}

inline double column_mean(const Vector& x) { return x.mean(); }

// population standard deviation (divide by n)
inline double column_stddev(const Vector& x, double mean) {
  const double var = (x.array() - mean).square().sum() / static_cast<double>(x.size());
  return std::sqrt(var);
}

inline bool is_constant_column(const Vector& x) {
  const double mu = column_mean(x);
  return column_stddev(x, mu) <= detail::kConstantSigmaTol * std::max(1.0, std::abs(mu));
}

// Zero-mean unit-variance transform; constant columns map to the zero vector.
inline Vector standardize_column(const Vector& x) {
  const double mu = column_mean(x);
  const double sigma = column_stddev(x, mu);
  if (sigma <= detail::kConstantSigmaTol * std::max(1.0, std::abs(mu))) {
    return Vector::Zero(x.size());
  }
  return (x.array() - mu) / sigma;
}

inline FeatureMatrix standardize_columns(const FeatureMatrix& m) {
  FeatureMatrix out(m.rows(), m.cols());
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    out.col(j) = standardize_column(m.col(j));
  }
  return out;
}

inline void require_finite(const Eigen::Ref<const Eigen::MatrixXd>& m, const std::string& what) {
  if (!m.allFinite()) {
    throw std::invalid_argument(what + ": non-finite values");
  }
}

inline std::string join_ints(const std::vector<int>& v, const std::string& sep = ",") {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace dofs
