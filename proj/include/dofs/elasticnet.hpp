#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "dofs/common.hpp"

namespace dofs {

enum class Loss { squared, logistic };

inline std::string loss_name(Loss l) { return l == Loss::squared ? "squared" : "logistic"; }

inline Loss loss_from_name(const std::string& s) {
  if (s == "squared") return Loss::squared;
  if (s == "logistic") return Loss::logistic;
  throw std::invalid_argument("unknown loss '" + s + "' (squared|logistic)");
}

struct ElasticNetConfig {
  double lambda = 0.15;  // overall penalty strength
  double alpha1 = 0.5;   // l1 weight; l2 weight is 1 - alpha1
  Loss loss = Loss::logistic;
  int max_iter = 10000;  // coordinate-descent sweeps
  double tol = 1e-7;     // max coefficient change per sweep
};

struct FittedModel {
  Vector coefficients;
  double intercept = 0.0;
  bool converged = false;
  int iterations = 0;
  double objective = 0.0;
  std::vector<double> objective_trace;  // objective after each sweep
};

namespace detail {

inline double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

inline double softplus(double u) {  // log(1 + exp(u)), overflow-safe
  if (u > 30.0) return u;
  return std::log1p(std::exp(u));
}

inline double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

struct Penalty {
  double l1 = 0.0;  // lambda * alpha1
  double l2 = 0.0;  // lambda * (1 - alpha1)
};

inline double penalty_value(const Vector& beta, const Penalty& pen) {
  return pen.l1 * beta.lpNorm<1>() + 0.5 * pen.l2 * beta.squaredNorm();
}

// largest KKT stationarity violation over the coefficients:
// beta_j != 0 -> |grad_j + l2 beta_j + l1 sign(beta_j)|
// beta_j == 0 -> max(0, |grad_j| - l1)
inline double kkt_residual(const Vector& grad, const Vector& beta, const Penalty& pen) {
  double worst = 0.0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    double v;
    if (beta(j) != 0.0) {
      v = std::abs(grad(j) + pen.l2 * beta(j) + pen.l1 * (beta(j) > 0.0 ? 1.0 : -1.0));
    } else {
      v = std::max(0.0, std::abs(grad(j)) - pen.l1);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

}  // namespace detail

// Mean-loss elasticnet fit by cyclic coordinate descent with an unpenalized
// intercept. Squared loss is (1/(2n)) ||y - b - X beta||^2; logistic loss is
// (1/n) sum log(1 + exp(-y_i eta_i)) with y in {-1, +1}, descended through
// the curvature upper bound h_j = ||x_j||^2 / (4n) so every sweep decreases
// the objective. Converged means both the largest coefficient change and the
// KKT stationarity residual are small.
inline FittedModel fit_elasticnet(const FeatureMatrix& x, const Vector& y,
                                  const ElasticNetConfig& cfg) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  if (y.size() != n) throw std::invalid_argument("fit_elasticnet: target length mismatch");
  if (n == 0) throw std::invalid_argument("fit_elasticnet: empty design");
  require_finite(x, "fit_elasticnet");
  require_finite(y, "fit_elasticnet");
  if (cfg.loss == Loss::logistic) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (y(i) != 1.0 && y(i) != -1.0) {
        throw std::invalid_argument("fit_elasticnet: logistic targets must be +/-1");
      }
    }
  }

  const detail::Penalty pen{cfg.lambda * cfg.alpha1, cfg.lambda * (1.0 - cfg.alpha1)};
  const double inv_n = 1.0 / static_cast<double>(n);

  // per-coordinate curvature: ||x_j||^2 / n (squared), ||x_j||^2 / (4n) (logistic)
  Vector h(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    const double sq = x.col(j).squaredNorm() * inv_n;
    h(j) = cfg.loss == Loss::squared ? sq : sq / 4.0;
  }

  FittedModel m;
  m.coefficients = Vector::Zero(p);
  Vector eta = Vector::Constant(n, 0.0);  // X beta + b

  const auto data_loss = [&](const Vector& eta_cur) {
    if (cfg.loss == Loss::squared) {
      return 0.5 * inv_n * (y - eta_cur).squaredNorm();
    }
    double s = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) s += detail::softplus(-y(i) * eta_cur(i));
    return s * inv_n;
  };
  // gradient of the smooth loss at the current eta, one coordinate
  const auto grad_j = [&](Eigen::Index j) {
    if (cfg.loss == Loss::squared) {
      return inv_n * x.col(j).dot(eta - y);
    }
    double g = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      g -= y(i) * x(i, j) * detail::sigmoid(-y(i) * eta(i));
    }
    return g * inv_n;
  };
  const auto grad_intercept = [&]() {
    if (cfg.loss == Loss::squared) return inv_n * (eta - y).sum();
    double g = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) g -= y(i) * detail::sigmoid(-y(i) * eta(i));
    return g * inv_n;
  };

  for (int it = 0; it < cfg.max_iter; ++it) {
    double max_change = 0.0;

    // intercept first: exact mean-residual for squared loss, curvature-bound
    // step (h = 1/4) for logistic
    {
      double new_b;
      if (cfg.loss == Loss::squared) {
        new_b = m.intercept - grad_intercept();
      } else {
        new_b = m.intercept - grad_intercept() / 0.25;
      }
      const double d = new_b - m.intercept;
      if (d != 0.0) {
        eta.array() += d;
        m.intercept = new_b;
        max_change = std::max(max_change, std::abs(d));
      }
    }

    for (Eigen::Index j = 0; j < p; ++j) {
      if (h(j) <= 0.0) continue;  // all-zero column stays at beta_j = 0
      const double old = m.coefficients(j);
      const double rho = h(j) * old - grad_j(j);
      const double updated = detail::soft_threshold(rho, pen.l1) / (h(j) + pen.l2);
      const double d = updated - old;
      if (d != 0.0) {
        m.coefficients(j) = updated;
        eta += d * x.col(j);
      }
      max_change = std::max(max_change, std::abs(d));
    }

    m.iterations = it + 1;
    m.objective = data_loss(eta) + detail::penalty_value(m.coefficients, pen);
    m.objective_trace.push_back(m.objective);

    if (max_change <= cfg.tol) {
      Vector grad(p);
      for (Eigen::Index j = 0; j < p; ++j) grad(j) = grad_j(j);
      if (detail::kkt_residual(grad, m.coefficients, pen) <= 10.0 * cfg.tol) {
        m.converged = true;
        break;
      }
    }
  }
  return m;
}

// decision scores b + X beta
inline Vector decision_scores(const FittedModel& m, const FeatureMatrix& x) {
  return (x * m.coefficients).array() + m.intercept;
}

// One-vs-rest wrapper for multiclass logistic fits. Binary problems use a
// single fit (larger class code maps to +1); the per-feature magnitude is
// the max |beta| across the per-class models.
struct OneVsRestModel {
  std::vector<int> class_labels;       // ascending distinct codes
  std::vector<FittedModel> per_class;  // one entry for binary, c entries otherwise
  Vector magnitude;                    // max |beta_f| across fits
  bool converged = true;

  std::vector<int> predict(const FeatureMatrix& x) const {
    const Eigen::Index n = x.rows();
    std::vector<int> out(n);
    if (class_labels.size() == 2) {
      const Vector s = decision_scores(per_class[0], x);
      for (Eigen::Index i = 0; i < n; ++i) out[i] = s(i) >= 0.0 ? class_labels[1] : class_labels[0];
      return out;
    }
    Eigen::MatrixXd scores(n, static_cast<Eigen::Index>(per_class.size()));
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      scores.col(static_cast<Eigen::Index>(c)) = decision_scores(per_class[c], x);
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index best;
      scores.row(i).maxCoeff(&best);
      out[i] = class_labels[static_cast<std::size_t>(best)];
    }
    return out;
  }

  // per-class probabilities: binary sigma(s); multiclass softmax over the
  // one-vs-rest decision scores
  Eigen::MatrixXd probabilities(const FeatureMatrix& x) const {
    const Eigen::Index n = x.rows();
    if (class_labels.size() == 2) {
      Eigen::MatrixXd probs(n, 2);
      const Vector s = decision_scores(per_class[0], x);
      for (Eigen::Index i = 0; i < n; ++i) {
        probs(i, 1) = detail::sigmoid(s(i));
        probs(i, 0) = 1.0 - probs(i, 1);
      }
      return probs;
    }
    Eigen::MatrixXd scores(n, static_cast<Eigen::Index>(per_class.size()));
    for (std::size_t c = 0; c < per_class.size(); ++c) {
      scores.col(static_cast<Eigen::Index>(c)) = decision_scores(per_class[c], x);
    }
    Eigen::MatrixXd probs(n, scores.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
      const double mx = scores.row(i).maxCoeff();
      Eigen::ArrayXd e = (scores.row(i).array() - mx).exp();
      probs.row(i) = e / e.sum();
    }
    return probs;
  }
};

inline OneVsRestModel fit_one_vs_rest(const FeatureMatrix& x, const std::vector<int>& labels,
                                      const ElasticNetConfig& cfg) {
  if (static_cast<Eigen::Index>(labels.size()) != x.rows()) {
    throw std::invalid_argument("fit_one_vs_rest: label count mismatch");
  }
  const std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2) throw std::invalid_argument("fit_one_vs_rest: need at least 2 classes");

  OneVsRestModel ovr;
  ovr.class_labels.assign(distinct.begin(), distinct.end());
  ovr.magnitude = Vector::Zero(x.cols());

  const auto fit_against = [&](int positive) {
    Vector y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      y(i) = labels[static_cast<std::size_t>(i)] == positive ? 1.0 : -1.0;
    }
    return fit_elasticnet(x, y, cfg);
  };

  if (ovr.class_labels.size() == 2) {
    ovr.per_class.push_back(fit_against(ovr.class_labels[1]));
  } else {
    for (int c : ovr.class_labels) ovr.per_class.push_back(fit_against(c));
  }
  for (const auto& m : ovr.per_class) {
    ovr.converged = ovr.converged && m.converged;
    ovr.magnitude = ovr.magnitude.cwiseMax(m.coefficients.cwiseAbs());
  }
  return ovr;
}

// ---------------------------------------------------------------------------
// Global pruning of the selected set
// ---------------------------------------------------------------------------

struct PruneResult {
  std::vector<int> kept;     // feature ids with |beta_f| >= lambda
  std::vector<int> dropped;  // complement, same universe
  Vector magnitude;          // per-column aggregated |beta|
  bool converged = true;
};

// Fit the penalized model on the standardized selected columns and retain
// features whose aggregated coefficient magnitude reaches lambda. Squared
// loss regresses on the class codes directly; logistic uses one-vs-rest.
inline PruneResult prune_selected(const FeatureMatrix& x_selected, const std::vector<int>& ids,
                                  const std::vector<int>& labels, const ElasticNetConfig& cfg) {
  if (x_selected.cols() != static_cast<Eigen::Index>(ids.size())) {
    throw std::invalid_argument("prune_selected: id count does not match columns");
  }
  PruneResult out;
  out.magnitude = Vector::Zero(x_selected.cols());
  if (ids.empty()) return out;

  const FeatureMatrix z = standardize_columns(x_selected);
  if (cfg.loss == Loss::squared) {
    Vector y(z.rows());
    for (Eigen::Index i = 0; i < z.rows(); ++i) y(i) = static_cast<double>(labels[static_cast<std::size_t>(i)]);
    const FittedModel m = fit_elasticnet(z, y, cfg);
    out.magnitude = m.coefficients.cwiseAbs();
    out.converged = m.converged;
  } else {
    const OneVsRestModel ovr = fit_one_vs_rest(z, labels, cfg);
    out.magnitude = ovr.magnitude;
    out.converged = ovr.converged;
  }

  for (std::size_t j = 0; j < ids.size(); ++j) {
    if (out.magnitude(static_cast<Eigen::Index>(j)) >= cfg.lambda) {
      out.kept.push_back(ids[j]);
    } else {
      out.dropped.push_back(ids[j]);
    }
  }
  return out;
}

}  // namespace dofs
