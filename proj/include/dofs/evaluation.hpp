#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "dofs/common.hpp"
#include "dofs/dataset.hpp"
#include "dofs/elasticnet.hpp"
#include "dofs/rng.hpp"
#include "json.hpp"

namespace dofs {

struct FoldMetric {
  int fold = 0;
  double knn_accuracy = 0.0;       // fraction in [0, 1]
  double logistic_accuracy = 0.0;  // fraction in [0, 1]
  double log_loss = 0.0;
};

struct SelectionReport {
  std::string dataset;
  std::string mode;  // pipeline mode, or "manual" for externally chosen sets
  int n_selected = 0;
  std::vector<int> selected;
  double accuracy = 0.0;      // headline: logistic, percent
  double knn_accuracy = 0.0;  // percent
  double log_loss = 0.0;
  int folds = 0;
  std::uint64_t seed = 0;
  double seconds = 0.0;  // wall clock of the evaluation
  std::vector<FoldMetric> per_fold;
  nlohmann::json config_echo;  // filled by the caller with its run settings

  // include_timings=false drops the wall-clock field so two runs of the same
  // seed serialize byte-identically
  nlohmann::json to_json(bool include_timings = true) const {
    nlohmann::json j;
    j["dataset"] = dataset;
    j["mode"] = mode;
    j["n_selected"] = n_selected;
    j["selected"] = selected;
    j["accuracy"] = accuracy;
    j["knn_accuracy"] = knn_accuracy;
    j["log_loss"] = log_loss;
    j["folds"] = folds;
    j["seed"] = seed;
    if (include_timings) j["seconds"] = seconds;
    nlohmann::json pf = nlohmann::json::array();
    for (const auto& m : per_fold) {
      pf.push_back({{"fold", m.fold},
                    {"knn_accuracy", m.knn_accuracy},
                    {"logistic_accuracy", m.logistic_accuracy},
                    {"log_loss", m.log_loss}});
    }
    j["per_fold"] = pf;
    j["config"] = config_echo.is_null() ? nlohmann::json::object() : config_echo;
    return j;
  }
};

// ---------------------------------------------------------------------------
// Stratified folds
// ---------------------------------------------------------------------------

namespace detail {

// shuffle within each class, then deal round-robin with a fold cursor that
// carries across classes so overall fold sizes differ by at most one
inline std::vector<int> deal_stratified(const std::vector<int>& labels, int k, Rng& rng) {
  std::map<int, std::vector<int>> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));
  std::vector<int> assign(labels.size(), -1);
  int cursor = 0;
  for (auto& [label, rows] : by_class) {
    rng.shuffle(rows);
    for (int row : rows) {
      assign[static_cast<std::size_t>(row)] = cursor;
      cursor = (cursor + 1) % k;
    }
  }
  return assign;
}

inline bool every_fold_has_every_class(const std::vector<int>& labels,
                                       const std::vector<int>& assign, int k) {
  const std::set<int> classes(labels.begin(), labels.end());
  std::map<int, std::set<int>> folds_of_class;
  for (std::size_t i = 0; i < labels.size(); ++i) folds_of_class[labels[i]].insert(assign[i]);
  for (int c : classes) {
    if (static_cast<int>(folds_of_class[c].size()) != k) return false;
  }
  return true;
}

}  // namespace detail

// Per-instance fold assignment in [0, k). Re-stratifies with a fresh seed
// when any fold misses a class, erroring after 5 attempts.
inline std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
  if (k < 2) throw std::invalid_argument("stratified_folds: need at least 2 folds");
  if (static_cast<std::size_t>(k) > labels.size()) {
    throw std::invalid_argument("stratified_folds: more folds than instances");
  }
  for (int attempt = 0; attempt < 5; ++attempt) {
    Rng rng(seed + static_cast<std::uint64_t>(attempt));
    std::vector<int> assign = detail::deal_stratified(labels, k, rng);
    if (detail::every_fold_has_every_class(labels, assign, k)) return assign;
  }
  throw std::runtime_error(
      "stratified_folds: could not stratify (a class has fewer members than folds)");
}

// ---------------------------------------------------------------------------
// Fold evaluators
// ---------------------------------------------------------------------------

namespace detail {

// 3-nearest-neighbor prediction; vote ties break by smaller summed distance,
// then smaller label code
inline std::vector<int> knn_predict(const FeatureMatrix& train, const std::vector<int>& train_labels,
                                    const FeatureMatrix& test, int k) {
  const Eigen::Index n_train = train.rows();
  const Eigen::Index n_test = test.rows();
  const int kk = static_cast<int>(std::min<Eigen::Index>(k, n_train));

  // squared distances via the Gram expansion ||a-b||^2 = ||a||^2 + ||b||^2 - 2 a.b
  const Vector train_sq = train.rowwise().squaredNorm();
  const Vector test_sq = test.rowwise().squaredNorm();
  Eigen::MatrixXd d2 = -2.0 * test * train.transpose();
  d2.colwise() += test_sq;
  d2.rowwise() += train_sq.transpose();

  std::vector<int> out(static_cast<std::size_t>(n_test));
  std::vector<int> order(static_cast<std::size_t>(n_train));
  for (Eigen::Index i = 0; i < n_test; ++i) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + kk, order.end(), [&](int a, int b) {
      if (d2(i, a) != d2(i, b)) return d2(i, a) < d2(i, b);
      return a < b;
    });
    std::map<int, std::pair<int, double>> votes;  // label -> (count, summed distance)
    for (int r = 0; r < kk; ++r) {
      auto& v = votes[train_labels[static_cast<std::size_t>(order[static_cast<std::size_t>(r)])]];
      v.first += 1;
      v.second += d2(i, order[static_cast<std::size_t>(r)]);
    }
    int best_label = 0;
    int best_count = -1;
    double best_dist = 0.0;
    for (const auto& [label, v] : votes) {
      const bool better = v.first > best_count ||
                          (v.first == best_count && (v.second < best_dist ||
                                                     (v.second == best_dist && label < best_label)));
      if (better) {
        best_label = label;
        best_count = v.first;
        best_dist = v.second;
      }
    }
    out[static_cast<std::size_t>(i)] = best_label;
  }
  return out;
}

inline double clip_prob(double p) { return std::min(1.0 - 1e-15, std::max(1e-15, p)); }

}  // namespace detail

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

// Stratified k-fold cross-validation of a chosen feature subset with two
// evaluators: 3-NN and L2-regularized logistic regression (ridge strength
// 1/n_train). Features are standardized with training-fold statistics only.
// Accuracy is the mean fold accuracy x100; the logistic evaluator is the
// headline and supplies the probabilities behind log_loss.
inline SelectionReport evaluate(const Dataset& d, const std::vector<int>& selected, int folds,
                                std::uint64_t seed) {
  const auto t0 = std::chrono::steady_clock::now();
  d.require_supervised();
  if (selected.empty()) throw std::invalid_argument("evaluate: refusing an empty feature set");
  if (folds < 2 || folds > d.values.rows()) {
    throw std::invalid_argument("evaluate: folds must lie in [2, n]");
  }
  for (int f : selected) {
    if (f < 0 || f >= d.values.cols()) throw std::invalid_argument("evaluate: feature id out of range");
  }
  const std::vector<int>& labels = *d.labels;

  FeatureMatrix x(d.values.rows(), static_cast<Eigen::Index>(selected.size()));
  for (std::size_t j = 0; j < selected.size(); ++j) {
    x.col(static_cast<Eigen::Index>(j)) = d.values.col(selected[j]);
  }

  const std::vector<int> assign = stratified_folds(labels, folds, seed);

  SelectionReport rep;
  rep.dataset = d.name;
  rep.mode = "manual";
  rep.n_selected = static_cast<int>(selected.size());
  rep.selected = selected;
  rep.folds = folds;
  rep.seed = seed;

  double acc_knn = 0.0;
  double acc_log = 0.0;
  double loss_sum = 0.0;

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows;
    std::vector<int> test_rows;
    for (std::size_t i = 0; i < assign.size(); ++i) {
      (assign[i] == f ? test_rows : train_rows).push_back(static_cast<int>(i));
    }

    FeatureMatrix xtr(static_cast<Eigen::Index>(train_rows.size()), x.cols());
    FeatureMatrix xte(static_cast<Eigen::Index>(test_rows.size()), x.cols());
    std::vector<int> ytr(train_rows.size());
    std::vector<int> yte(test_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      xtr.row(static_cast<Eigen::Index>(i)) = x.row(train_rows[i]);
      ytr[i] = labels[static_cast<std::size_t>(train_rows[i])];
    }
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      xte.row(static_cast<Eigen::Index>(i)) = x.row(test_rows[i]);
      yte[i] = labels[static_cast<std::size_t>(test_rows[i])];
    }

    // standardize with training statistics only
    for (Eigen::Index j = 0; j < xtr.cols(); ++j) {
      const double mu = column_mean(xtr.col(j));
      const double sigma = column_stddev(xtr.col(j), mu);
      if (sigma <= detail::kConstantSigmaTol) {
        xtr.col(j).setZero();
        xte.col(j).setZero();
      } else {
        xtr.col(j) = (xtr.col(j).array() - mu) / sigma;
        xte.col(j) = (xte.col(j).array() - mu) / sigma;
      }
    }

    const std::vector<int> knn_pred = detail::knn_predict(xtr, ytr, xte, 3);

    ElasticNetConfig ridge;
    ridge.lambda = 1.0 / static_cast<double>(xtr.rows());
    ridge.alpha1 = 0.0;
    ridge.loss = Loss::logistic;
    const OneVsRestModel model = fit_one_vs_rest(xtr, ytr, ridge);
    const std::vector<int> log_pred = model.predict(xte);
    const Eigen::MatrixXd probs = model.probabilities(xte);

    std::map<int, int> class_col;
    for (std::size_t c = 0; c < model.class_labels.size(); ++c) {
      class_col[model.class_labels[c]] = static_cast<int>(c);
    }

    FoldMetric fm;
    fm.fold = f;
    int knn_hits = 0;
    int log_hits = 0;
    double loss = 0.0;
    for (std::size_t i = 0; i < test_rows.size(); ++i) {
      knn_hits += knn_pred[i] == yte[i] ? 1 : 0;
      log_hits += log_pred[i] == yte[i] ? 1 : 0;
      loss -= std::log(detail::clip_prob(probs(static_cast<Eigen::Index>(i), class_col.at(yte[i]))));
    }
    fm.knn_accuracy = static_cast<double>(knn_hits) / static_cast<double>(test_rows.size());
    fm.logistic_accuracy = static_cast<double>(log_hits) / static_cast<double>(test_rows.size());
    fm.log_loss = loss / static_cast<double>(test_rows.size());
    rep.per_fold.push_back(fm);

    acc_knn += fm.knn_accuracy;
    acc_log += fm.logistic_accuracy;
    loss_sum += fm.log_loss;
  }

  rep.knn_accuracy = 100.0 * acc_knn / folds;
  rep.accuracy = 100.0 * acc_log / folds;
  rep.log_loss = loss_sum / folds;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

// ---------------------------------------------------------------------------
// Comparison table and results CSV
// ---------------------------------------------------------------------------

struct ComparisonTable {
  std::string csv;
  std::string text;
};

namespace detail {

inline std::string format_double(double v, const char* fmt) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

}  // namespace detail

// Dataset x mode grid with a (#dim, accuracy) column pair per mode, in both
// CSV and aligned-text renderings. Duplicate (dataset, mode) cells average.
inline ComparisonTable compare_runs(const std::vector<SelectionReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("compare_runs: no reports");

  std::vector<std::string> datasets;
  std::vector<std::string> modes;
  const std::vector<std::string> canonical = {"dpp_only", "unsupervised", "supervised", "combined"};
  for (const auto& r : reports) {
    if (std::find(datasets.begin(), datasets.end(), r.dataset) == datasets.end()) {
      datasets.push_back(r.dataset);
    }
    if (std::find(modes.begin(), modes.end(), r.mode) == modes.end()) modes.push_back(r.mode);
  }
  std::stable_sort(modes.begin(), modes.end(), [&](const std::string& a, const std::string& b) {
    const auto ia = std::find(canonical.begin(), canonical.end(), a) - canonical.begin();
    const auto ib = std::find(canonical.begin(), canonical.end(), b) - canonical.begin();
    return ia < ib;
  });

  struct Cell {
    double dim_sum = 0.0;
    double acc_sum = 0.0;
    int count = 0;
  };
  std::map<std::pair<std::string, std::string>, Cell> cells;
  for (const auto& r : reports) {
    Cell& c = cells[{r.dataset, r.mode}];
    c.dim_sum += r.n_selected;
    c.acc_sum += r.accuracy;
    c.count += 1;
  }

  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"dataset"};
  for (const auto& m : modes) {
    header.push_back(m + "_dim");
    header.push_back(m + "_acc");
  }
  rows.push_back(header);
  for (const auto& ds : datasets) {
    std::vector<std::string> row{ds};
    for (const auto& m : modes) {
      const auto it = cells.find({ds, m});
      if (it == cells.end()) {
        row.push_back("");
        row.push_back("");
      } else {
        const double dim = it->second.dim_sum / it->second.count;
        const double acc = it->second.acc_sum / it->second.count;
        row.push_back(detail::format_double(dim, "%g"));
        row.push_back(detail::format_double(acc, "%.2f"));
      }
    }
    rows.push_back(row);
  }

  ComparisonTable out;
  std::ostringstream csv;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) csv << ',';
      csv << row[i];
    }
    csv << '\n';
  }
  out.csv = csv.str();

  std::vector<std::size_t> widths(rows[0].size(), 0);
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  std::ostringstream text;
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) text << "  ";
      text << row[i] << std::string(widths[i] - row[i].size(), ' ');
    }
    text << '\n';
  }
  out.text = text.str();
  return out;
}

// Append a report row to a results CSV, replacing any existing row with the
// same (dataset, mode, seed) key; the header is written when absent.
inline void append_results_csv(const std::string& path, const SelectionReport& rep) {
  const std::string header = "dataset,mode,n_selected,accuracy,log_loss,seconds,seed";
  std::ostringstream row;
  row << rep.dataset << ',' << rep.mode << ',' << rep.n_selected << ','
      << detail::format_double(rep.accuracy, "%.4f") << ','
      << detail::format_double(rep.log_loss, "%.6f") << ','
      << detail::format_double(rep.seconds, "%.3f") << ',' << rep.seed;

  std::vector<std::string> lines;
  {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) lines.push_back(line);
    }
  }
  if (lines.empty()) lines.push_back(header);

  const std::string key = rep.dataset + "," + rep.mode;
  const std::string seed_str = std::to_string(rep.seed);
  bool replaced = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    std::vector<std::string> fields;
    std::stringstream ss(lines[i]);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (fields.size() >= 7 && fields[0] == rep.dataset && fields[1] == rep.mode &&
        fields[6] == seed_str) {
      lines[i] = row.str();
      replaced = true;
      break;
    }
  }
  if (!replaced) lines.push_back(row.str());

  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("append_results_csv: cannot write " + path);
  for (const auto& l : lines) out << l << '\n';
}

}  // namespace dofs
