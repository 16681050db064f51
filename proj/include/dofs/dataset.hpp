#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "dofs/common.hpp"
#include "dofs/rng.hpp"

namespace dofs {

// Labeled tabular dataset: n instances x D features, labels optional.
// Labels are remapped to contiguous codes 0..c-1 on load; the original
// class names are kept for reporting.
struct Dataset {
  std::string name;
  Eigen::MatrixXd values;                // n x D
  std::optional<std::vector<int>> labels;  // length n, codes 0..c-1
  std::vector<std::string> feature_names;  // length D
  std::vector<std::string> label_names;    // length c, original class names
  std::string label_column_name = "label";

  Eigen::Index n_instances() const { return values.rows(); }
  Eigen::Index n_features() const { return values.cols(); }
  bool has_labels() const { return labels.has_value(); }

  int n_classes() const {
    if (!labels) return 0;
    return static_cast<int>(label_names.size());
  }

  void validate() const {
    if (values.cols() < 1) throw std::invalid_argument("Dataset: needs at least one feature");
    if (values.rows() < 2) throw std::invalid_argument("Dataset: needs at least two instances");
    if (!values.allFinite()) throw std::invalid_argument("Dataset: non-finite values");
    if (labels && static_cast<Eigen::Index>(labels->size()) != values.rows()) {
      throw std::invalid_argument("Dataset: label vector length does not match instance count");
    }
    if (static_cast<Eigen::Index>(feature_names.size()) != values.cols()) {
      throw std::invalid_argument("Dataset: feature name count does not match feature count");
    }
  }

  void require_supervised() const {
    if (!labels) throw std::invalid_argument("Dataset: labels required for supervised run");
    if (n_classes() < 2) throw std::invalid_argument("Dataset: supervised run needs at least 2 classes");
  }

  // cheap content fingerprint used by checkpoint/resume validation
  std::uint64_t fingerprint() const {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 1099511628211ull;
    };
    mix(static_cast<std::uint64_t>(values.rows()));
    mix(static_cast<std::uint64_t>(values.cols()));
    for (Eigen::Index j = 0; j < values.cols(); ++j) {
      for (Eigen::Index i = 0; i < values.rows(); ++i) {
        std::uint64_t bits;
        const double d = values(i, j);
        static_assert(sizeof(bits) == sizeof(d));
        std::memcpy(&bits, &d, sizeof(bits));
        mix(bits);
      }
    }
    if (labels) {
      for (int l : *labels) mix(static_cast<std::uint64_t>(l) + 0x9e3779b97f4a7c15ull);
    }
    return h;
  }
};

// A batch of the feature stream: column indices into the dataset plus the
// corresponding column block.
struct FeatureGroup {
  std::vector<int> indices;
  Eigen::MatrixXd columns;  // n x |indices|
};

struct StreamConfig {
  int group_size = 5;
  std::uint64_t seed = 0;
  bool shuffle = false;
};

// Label column selector: none, by header name, or by 0-based column index.
struct LabelSpec {
  static LabelSpec none() { return LabelSpec{}; }
  static LabelSpec by_name(std::string n) {
    LabelSpec s;
    s.name = std::move(n);
    return s;
  }
  static LabelSpec by_index(int i) {
    LabelSpec s;
    s.index = i;
    return s;
  }
  std::optional<std::string> name;
  std::optional<int> index;
  bool is_none() const { return !name && !index; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  auto [p, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && p == end;
}

inline bool parse_long(const std::string& s, long& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  const char* begin = t.data();
  const char* end = t.data() + t.size();
  auto [p, ec] = std::from_chars(begin, end, out);
  return ec == std::errc() && p == end;
}

}  // namespace detail

// UTF-8 comma-delimited CSV with a mandatory header row. Every non-label
// cell must parse as a real; missing values are a hard error. Labels parse
// as integers or categorical strings and are remapped to dense codes in
// sorted order (numeric sort when all labels are integers, lexicographic
// otherwise).
inline Dataset load_csv(const std::string& path, const LabelSpec& label = LabelSpec::none()) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

  std::string header_line;
  if (!std::getline(in, header_line)) {
    throw std::runtime_error("load_csv: '" + path + "' is empty (header row required)");
  }
  if (header_line.size() >= 3 && header_line.compare(0, 3, "\xEF\xBB\xBF") == 0) {
    header_line.erase(0, 3);  // UTF-8 BOM
  }
  std::vector<std::string> header = detail::split_csv_line(header_line);
  for (auto& h : header) h = detail::trim(h);
  const int n_cols = static_cast<int>(header.size());

  int label_col = -1;
  if (label.name) {
    auto it = std::find(header.begin(), header.end(), *label.name);
    if (it == header.end()) {
      throw std::runtime_error("load_csv: label column '" + *label.name + "' not found in header");
    }
    label_col = static_cast<int>(it - header.begin());
  } else if (label.index) {
    if (*label.index < 0 || *label.index >= n_cols) {
      throw std::runtime_error("load_csv: label column index " + std::to_string(*label.index) +
                               " out of range (file has " + std::to_string(n_cols) + " columns)");
    }
    label_col = *label.index;
  }

  std::vector<std::vector<double>> rows;
  std::vector<std::string> raw_labels;
  std::string line;
  int line_no = 1;  // header was line 1
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    std::vector<std::string> cells = detail::split_csv_line(line);
    if (static_cast<int>(cells.size()) != n_cols) {
      throw std::runtime_error("load_csv: row " + std::to_string(line_no) + " has " +
                               std::to_string(cells.size()) + " cells, expected " +
                               std::to_string(n_cols));
    }
    std::vector<double> row;
    row.reserve(n_cols - (label_col >= 0 ? 1 : 0));
    for (int c = 0; c < n_cols; ++c) {
      if (c == label_col) {
        const std::string t = detail::trim(cells[c]);
        if (t.empty()) {
          throw std::runtime_error("load_csv: missing label at row " + std::to_string(line_no) +
                                   ", column '" + header[c] + "'");
        }
        raw_labels.push_back(t);
        continue;
      }
      const std::string t = detail::trim(cells[c]);
      if (t.empty()) {
        throw std::runtime_error("load_csv: missing value at row " + std::to_string(line_no) +
                                 ", column '" + header[c] + "' (no imputation)");
      }
      double v;
      if (!detail::parse_double(t, v)) {
        throw std::runtime_error("load_csv: cannot parse '" + t + "' as a real at row " +
                                 std::to_string(line_no) + ", column '" + header[c] + "'");
      }
      row.push_back(v);
    }
    rows.push_back(std::move(row));
  }

  const int n = static_cast<int>(rows.size());
  const int d = n_cols - (label_col >= 0 ? 1 : 0);
  if (d < 1) throw std::runtime_error("load_csv: no feature columns after removing label");
  if (n < 2) throw std::runtime_error("load_csv: fewer than 2 data rows");

  Dataset ds;
  ds.name = std::filesystem::path(path).stem().string();
  ds.values.resize(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) ds.values(i, j) = rows[i][j];
  }
  for (int c = 0; c < n_cols; ++c) {
    if (c != label_col) ds.feature_names.push_back(header[c]);
  }

  if (label_col >= 0) {
    ds.label_column_name = header[label_col];
    // decide integer vs categorical label space
    bool all_int = true;
    std::vector<long> as_long(raw_labels.size());
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
      if (!detail::parse_long(raw_labels[i], as_long[i])) {
        all_int = false;
        break;
      }
    }
    std::vector<std::string> classes;
    if (all_int) {
      std::vector<long> uniq(as_long);
      std::sort(uniq.begin(), uniq.end());
      uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
      for (long v : uniq) classes.push_back(std::to_string(v));
    } else {
      classes.assign(raw_labels.begin(), raw_labels.end());
      std::sort(classes.begin(), classes.end());
      classes.erase(std::unique(classes.begin(), classes.end()), classes.end());
    }
    std::map<std::string, int> code;
    for (std::size_t i = 0; i < classes.size(); ++i) code[classes[i]] = static_cast<int>(i);
    std::vector<int> labs(raw_labels.size());
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
      labs[i] = all_int ? code[std::to_string(as_long[i])] : code[raw_labels[i]];
    }
    ds.labels = std::move(labs);
    ds.label_names = std::move(classes);
  }

  ds.validate();
  return ds;
}

// Writes values with 17 significant digits so a reload is bit-exact.
inline void save_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_csv: cannot open '" + path + "' for writing");
  for (std::size_t j = 0; j < ds.feature_names.size(); ++j) {
    if (j) out << ',';
    out << ds.feature_names[j];
  }
  if (ds.labels) out << ',' << ds.label_column_name;
  out << '\n';
  char buf[64];
  for (Eigen::Index i = 0; i < ds.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.values.cols(); ++j) {
      if (j) out << ',';
      std::snprintf(buf, sizeof(buf), "%.17g", ds.values(i, j));
      out << buf;
    }
    if (ds.labels) out << ',' << ds.label_names[(*ds.labels)[i]];
    out << '\n';
  }
  if (!out) throw std::runtime_error("save_csv: write failed for '" + path + "'");
}

// Partition features {0..D-1} into consecutive groups of cfg.group_size
// (last group may be short). shuffle=true applies a seed-deterministic
// permutation before chunking.
inline std::vector<FeatureGroup> stream_groups(const Dataset& ds, const StreamConfig& cfg) {
  if (cfg.group_size < 1) throw std::invalid_argument("stream_groups: group size must be >= 1");
  const int d = static_cast<int>(ds.n_features());
  std::vector<int> order(d);
  std::iota(order.begin(), order.end(), 0);
  if (cfg.shuffle) {
    Rng rng(cfg.seed);
    rng.shuffle(order);
  }
  std::vector<FeatureGroup> groups;
  for (int start = 0; start < d; start += cfg.group_size) {
    const int len = std::min(cfg.group_size, d - start);
    FeatureGroup g;
    g.indices.assign(order.begin() + start, order.begin() + start + len);
    g.columns.resize(ds.values.rows(), len);
    for (int k = 0; k < len; ++k) g.columns.col(k) = ds.values.col(g.indices[k]);
    groups.push_back(std::move(g));
  }
  return groups;
}

// Binary-labeled Gaussian fixture: informative columns get a 2.5 sigma
// class-mean shift, noise columns are label-independent. Labels alternate
// 0,1 so every prefix is close to balanced.
inline Dataset make_synthetic(int n, int informative, int noise, std::uint64_t seed) {
  if (informative < 1) throw std::invalid_argument("make_synthetic: informative must be >= 1");
  if (n < 4) throw std::invalid_argument("make_synthetic: n must be >= 4");
  if (noise < 0) throw std::invalid_argument("make_synthetic: noise must be >= 0");
  constexpr double kShift = 2.5;

  Dataset ds;
  ds.name = "synthetic";
  std::vector<int> labels(n);
  for (int i = 0; i < n; ++i) labels[i] = i % 2;

  const int d = informative + noise;
  // Informative columns sit as one consecutive block in the middle of the
  // stream rather than up front, so group-wise consumers meet noise first
  // and the correlated block arrives together. Names, not positions, mark
  // which is which.
  const int block_start = noise / 2 / informative * informative;
  ds.values.resize(n, d);
  ds.feature_names.resize(static_cast<std::size_t>(d));
  Rng rng(seed);
  for (int j = 0; j < informative; ++j) {
    const int col = block_start + j;
    for (int i = 0; i < n; ++i) {
      ds.values(i, col) = rng.normal() + (labels[i] == 1 ? kShift : 0.0);
    }
    ds.feature_names[static_cast<std::size_t>(col)] = "inf_" + std::to_string(j);
  }
  for (int j = 0; j < noise; ++j) {
    const int col = j < block_start ? j : informative + j;
    for (int i = 0; i < n; ++i) {
      ds.values(i, col) = rng.normal();
    }
    ds.feature_names[static_cast<std::size_t>(col)] = "noise_" + std::to_string(j);
  }
  ds.labels = std::move(labels);
  ds.label_names = {"0", "1"};
  ds.validate();
  return ds;
}

}  // namespace dofs
