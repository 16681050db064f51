// Command-line front end: select features on a streaming dataset, evaluate a
// chosen subset, run the dataset x mode benchmark grid, poke the DPP sampler,
// or emit the synthetic fixture. Relative output paths resolve under
// $DOFS_OUT_DIR when that variable is set.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dofs/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string out_path(const std::string& p) {
  if (p.empty() || fs::path(p).is_absolute()) return p;
  const char* dir = std::getenv("DOFS_OUT_DIR");
  if (!dir || !*dir) return p;
  return (fs::path(dir) / p).string();
}

void write_text(const std::string& path, const std::string& content) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

// Shared pipeline/evaluation flags; every subcommand reuses the subset it
// needs so defaults stay in one place.
struct Flags {
  std::string dataset;
  std::string label = "label";
  int label_index = -1;
  bool no_label = false;

  std::string mode = "supervised";
  int m = 5;
  double alpha = 0.05;
  double epsilon = 0.01;
  double lambda = 0.15;
  double alpha1 = 0.5;
  std::string loss = "logistic";
  std::string kernel = "rbf";
  double gamma = 0.0;  // 0 = 1/n default
  int k_max = 0;
  std::string sample_policy = "truncated";
  std::string scatter = "mean_variance";
  bool sort_descending = false;
  bool paper_sign_t = false;
  bool per_feature_global = false;
  int folds = 10;
  int max_selected = 0;
  bool shuffle = false;
  std::uint64_t seed = 0;
  int verbosity = 0;

  dofs::Dataset load() const {
    dofs::LabelSpec spec = dofs::LabelSpec::none();
    if (!no_label) {
      spec = label_index >= 0 ? dofs::LabelSpec::by_index(label_index)
                              : dofs::LabelSpec::by_name(label);
    }
    dofs::Dataset ds = dofs::load_csv(dataset, spec);
    if (ds.name.empty()) ds.name = fs::path(dataset).stem().string();
    return ds;
  }

  dofs::PipelineConfig config() const {
    dofs::PipelineConfig cfg;
    cfg.mode = dofs::mode_from_name(mode);
    cfg.kernel.type = dofs::kernel_from_name(kernel);
    cfg.kernel.gamma = gamma;
    cfg.k_max = k_max;
    cfg.sample_policy = dofs::sample_policy_from_name(sample_policy);
    cfg.alpha = alpha;
    cfg.epsilon = epsilon;
    cfg.scatter = dofs::scatter_variant_from_name(scatter);
    cfg.paper_sign_t = paper_sign_t;
    cfg.sort_ascending = !sort_descending;
    cfg.elasticnet.lambda = lambda;
    cfg.elasticnet.alpha1 = alpha1;
    cfg.elasticnet.loss = dofs::loss_from_name(loss);
    cfg.group_size = m;
    cfg.seed = seed;
    cfg.shuffle_stream = shuffle;
    cfg.max_selected = max_selected;
    cfg.per_feature_global = per_feature_global;
    cfg.eval_folds = folds;
    return cfg;
  }
};

void add_dataset_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--dataset", f.dataset, "input CSV (header row required)")->required();
  cmd->add_option("--label", f.label, "label column name")->capture_default_str();
  cmd->add_option("--label-index", f.label_index, "label column by 0-based index (overrides --label)");
  cmd->add_flag("--no-label", f.no_label, "treat every column as a feature");
}

void add_pipeline_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--mode", f.mode, "dpp_only|unsupervised|supervised|combined")
      ->capture_default_str();
  cmd->add_option("--m", f.m, "feature-group size")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--alpha", f.alpha, "significance level for both local tests")
      ->check(CLI::Range(1e-12, 1.0 - 1e-12))->capture_default_str();
  cmd->add_option("--epsilon", f.epsilon, "Criterion-1 gain threshold")->capture_default_str();
  cmd->add_option("--lambda", f.lambda, "elastic-net penalty and |beta| retention threshold")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--alpha1", f.alpha1, "elastic-net L1 mix in [0,1]")
      ->check(CLI::Range(0.0, 1.0))->capture_default_str();
  cmd->add_option("--loss", f.loss, "global-fit loss: logistic|squared")->capture_default_str();
  cmd->add_option("--kernel", f.kernel, "similarity kernel: rbf|linear|correlation")
      ->capture_default_str();
  cmd->add_option("--gamma", f.gamma, "rbf bandwidth (0 = 1/n)")->capture_default_str();
  cmd->add_option("--k-max", f.k_max, "per-group sample-size cap (0 = open sampling)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_option("--sample-policy", f.sample_policy,
                  "cap behavior when --k-max > 0: truncated|kdpp (exact size)")
      ->capture_default_str();
  cmd->add_option("--scatter", f.scatter, "scatter variant: mean_variance|kernel|label")
      ->capture_default_str();
  cmd->add_flag("--sort-descending", f.sort_descending,
                "sweep supervised candidates best-first instead of worst-first");
  cmd->add_flag("--paper-sign-t", f.paper_sign_t, "flip the Criterion-2 t statistic sign");
  cmd->add_flag("--per-feature-global", f.per_feature_global,
                "run the global prune after every admission instead of per group");
  cmd->add_option("--max-selected", f.max_selected, "stop once this many features are selected (0 = never)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  cmd->add_flag("--shuffle", f.shuffle, "shuffle feature arrival order (seeded)");
}

void add_eval_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--folds", f.folds, "cross-validation folds (0 = skip evaluation)")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
}

std::vector<int> parse_id_list(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoi(tok));
  }
  return out;
}

double informative_recall(const dofs::Dataset& ds, const std::vector<int>& selected) {
  int total = 0;
  int hit = 0;
  for (const auto& n : ds.feature_names)
    if (n.rfind("inf_", 0) == 0) ++total;
  if (total == 0) return -1.0;
  for (int id : selected)
    if (ds.feature_names[static_cast<std::size_t>(id)].rfind("inf_", 0) == 0) ++hit;
  return static_cast<double>(hit) / static_cast<double>(total);
}

json report_json(const dofs::Dataset& ds, const dofs::SelectionReport& rep) {
  json j = rep.to_json();
  json names = json::array();
  for (int id : rep.selected) names.push_back(ds.feature_names[static_cast<std::size_t>(id)]);
  j["selected_names"] = names;
  const double recall = informative_recall(ds, rep.selected);
  if (recall >= 0.0) j["informative_recall"] = recall;
  return j;
}

void write_iteration_log(const std::string& path, const dofs::PipelineState& st) {
  std::ostringstream out;
  for (const auto& rec : st.log) out << rec.to_json().dump() << '\n';
  write_text(path, out.str());
}

// Selection repeated inside each training fold, evaluated on the held-out
// fold with the same ridge-logistic stack the standard evaluator uses.
json per_fold_selection(const dofs::Dataset& ds, const dofs::PipelineConfig& cfg, int folds) {
  ds.require_supervised();
  const std::vector<int> assign = dofs::stratified_folds(*ds.labels, folds, cfg.seed);
  std::vector<std::vector<int>> fold_sets(static_cast<std::size_t>(folds));
  for (std::size_t r = 0; r < assign.size(); ++r)
    fold_sets[static_cast<std::size_t>(assign[r])].push_back(static_cast<int>(r));
  json out = json::array();
  for (std::size_t f = 0; f < fold_sets.size(); ++f) {
    std::vector<char> in_test(static_cast<std::size_t>(ds.values.rows()), 0);
    for (int r : fold_sets[f]) in_test[static_cast<std::size_t>(r)] = 1;
    std::vector<int> train_rows;
    for (int r = 0; r < ds.values.rows(); ++r)
      if (!in_test[static_cast<std::size_t>(r)]) train_rows.push_back(r);

    dofs::Dataset train;
    train.name = ds.name + "#train";
    train.feature_names = ds.feature_names;
    train.label_names = ds.label_names;
    train.values.resize(static_cast<Eigen::Index>(train_rows.size()), ds.values.cols());
    std::vector<int> train_labels(train_rows.size());
    for (std::size_t i = 0; i < train_rows.size(); ++i) {
      train.values.row(static_cast<Eigen::Index>(i)) = ds.values.row(train_rows[i]);
      train_labels[i] = (*ds.labels)[static_cast<std::size_t>(train_rows[i])];
    }
    train.labels = std::move(train_labels);

    dofs::PipelineConfig fold_cfg = cfg;
    fold_cfg.eval_folds = 0;
    const dofs::RunResult rr = dofs::run(train, fold_cfg);
    const std::vector<int> sel = rr.state.selected_ids();

    json fold;
    fold["fold"] = f;
    fold["n_selected"] = sel.size();
    fold["selected"] = sel;
    if (sel.empty()) {
      fold["accuracy"] = nullptr;
      out.push_back(fold);
      continue;
    }

    // standardize on training rows, fit ridge logistic, score the held-out fold
    dofs::FeatureMatrix xtr(train.values.rows(), static_cast<Eigen::Index>(sel.size()));
    dofs::FeatureMatrix xte(static_cast<Eigen::Index>(fold_sets[f].size()),
                            static_cast<Eigen::Index>(sel.size()));
    for (std::size_t c = 0; c < sel.size(); ++c) {
      const auto col = ds.values.col(sel[c]);
      double mean = 0.0;
      for (int r : train_rows) mean += col(r);
      mean /= static_cast<double>(train_rows.size());
      double var = 0.0;
      for (int r : train_rows) var += (col(r) - mean) * (col(r) - mean);
      double sd = std::sqrt(var / static_cast<double>(train_rows.size()));
      if (sd <= dofs::detail::kConstantSigmaTol) sd = 1.0;
      for (std::size_t i = 0; i < train_rows.size(); ++i)
        xtr(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            (col(train_rows[i]) - mean) / sd;
      for (std::size_t i = 0; i < fold_sets[f].size(); ++i)
        xte(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) =
            (col(fold_sets[f][i]) - mean) / sd;
    }
    dofs::ElasticNetConfig ridge;
    ridge.loss = dofs::Loss::logistic;
    ridge.alpha1 = 0.0;
    ridge.lambda = 1.0 / static_cast<double>(train_rows.size());
    const dofs::OneVsRestModel model = dofs::fit_one_vs_rest(xtr, *train.labels, ridge);
    const std::vector<int> pred = model.predict(xte);
    int correct = 0;
    for (std::size_t i = 0; i < fold_sets[f].size(); ++i)
      if (pred[i] == (*ds.labels)[static_cast<std::size_t>(fold_sets[f][i])]) ++correct;
    fold["accuracy"] = 100.0 * static_cast<double>(correct) / static_cast<double>(fold_sets[f].size());
    out.push_back(fold);
  }
  return out;
}

int cmd_select(const Flags& f, const std::string& out, const std::string& selected_out,
               const std::string& log_path, const std::string& results_csv,
               const std::string& checkpoint, const std::string& resume_from,
               bool per_fold_sel) {
  const dofs::Dataset ds = f.load();
  const dofs::PipelineConfig cfg = f.config();
  const auto t0 = std::chrono::steady_clock::now();

  dofs::StreamConfig sc;
  sc.group_size = cfg.group_size;
  sc.seed = cfg.seed;
  sc.shuffle = cfg.shuffle_stream;
  const std::vector<dofs::FeatureGroup> groups = dofs::stream_groups(ds, sc);

  std::optional<dofs::Pipeline> pipe;
  std::size_t start_group = 0;
  if (!resume_from.empty()) {
    const dofs::PipelineState st = dofs::load_checkpoint(resume_from);
    start_group = static_cast<std::size_t>(st.groups_processed);
    pipe.emplace(ds, cfg, st);
    if (f.verbosity > 0)
      std::cerr << "resumed after group " << st.groups_processed << " with "
                << st.selected.size() << " features\n";
  } else {
    pipe.emplace(ds, cfg);
  }

  try {
    for (std::size_t g = start_group; g < groups.size(); ++g) {
      if (pipe->stopped()) break;
      pipe->process_group(groups[g]);
      if (f.verbosity > 0) {
        const auto& rec = pipe->state().log.back();
        std::cerr << "group " << rec.group << ": sampled " << rec.sampled.size() << "/"
                  << rec.arrived.size() << ", accepted " << rec.accepted.size() << ", pruned "
                  << rec.pruned.size() << ", selected " << rec.n_selected_after << "\n";
      }
      if (!checkpoint.empty()) dofs::save_checkpoint(pipe->state(), out_path(checkpoint));
    }
  } catch (const dofs::PipelineError& e) {
    if (!checkpoint.empty()) dofs::save_checkpoint(e.state, out_path(checkpoint));
    if (!log_path.empty()) write_iteration_log(out_path(log_path), e.state);
    std::cerr << "pipeline aborted: " << e.what() << "\n";
    return 1;
  }

  const dofs::PipelineState& st = pipe->state();
  dofs::SelectionReport rep = dofs::report_for(ds, cfg, st);
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  json j = report_json(ds, rep);
  if (per_fold_sel && ds.labels && cfg.eval_folds >= 2) {
    j["per_fold_selection"] = per_fold_selection(ds, cfg, cfg.eval_folds);
  }

  const std::string report_path = out_path(
      out.empty() ? ds.name + "_" + dofs::mode_name(cfg.mode) + "_seed" + std::to_string(cfg.seed) +
                        ".report.json"
                  : out);
  write_text(report_path, j.dump(2) + "\n");

  if (!selected_out.empty()) {
    std::ostringstream body;
    for (int id : st.selected_ids())
      body << id << "," << ds.feature_names[static_cast<std::size_t>(id)] << "\n";
    write_text(out_path(selected_out), body.str());
  }
  if (!log_path.empty()) write_iteration_log(out_path(log_path), st);
  if (!results_csv.empty()) dofs::append_results_csv(out_path(results_csv), rep);

  std::cout << "selected " << st.selected.size() << " of " << ds.values.cols() << " features";
  if (ds.labels && cfg.eval_folds >= 2 && !st.selected.empty()) {
    std::cout << std::fixed << std::setprecision(2) << " | accuracy " << rep.accuracy << " (3-NN "
              << rep.knn_accuracy << ")";
  }
  std::cout << " | report " << report_path << "\n";
  return 0;
}

int cmd_evaluate(const Flags& f, const std::string& features, const std::string& features_file,
                 const std::string& out, const std::string& results_csv) {
  const dofs::Dataset ds = f.load();
  std::vector<int> ids;
  if (!features.empty()) ids = parse_id_list(features);
  if (!features_file.empty()) {
    std::ifstream in(features_file);
    if (!in) throw std::runtime_error("cannot read '" + features_file + "'");
    std::string line;
    while (std::getline(in, line)) {
      const std::string tok = line.substr(0, line.find(','));
      if (tok.empty()) continue;
      if (tok.find_first_not_of("0123456789") == std::string::npos) {
        ids.push_back(std::stoi(tok));
      } else {  // feature name
        const auto it = std::find(ds.feature_names.begin(), ds.feature_names.end(), tok);
        if (it == ds.feature_names.end())
          throw std::runtime_error("unknown feature '" + tok + "'");
        ids.push_back(static_cast<int>(it - ds.feature_names.begin()));
      }
    }
  }
  if (ids.empty()) ids.resize(static_cast<std::size_t>(ds.values.cols())), std::iota(ids.begin(), ids.end(), 0);

  dofs::SelectionReport rep = dofs::evaluate(ds, ids, f.folds, f.seed);
  std::cout << std::fixed << std::setprecision(2) << ds.name << ": accuracy " << rep.accuracy
            << " (3-NN " << rep.knn_accuracy << "), log-loss " << std::setprecision(4)
            << rep.log_loss << " over " << ids.size() << " features\n";
  if (!out.empty()) write_text(out_path(out), report_json(ds, rep).dump(2) + "\n");
  if (!results_csv.empty()) dofs::append_results_csv(out_path(results_csv), rep);
  return 0;
}

int cmd_bench(Flags f, const std::string& manifest, const std::string& modes_csv,
              const std::string& results_csv) {
  std::ifstream in(manifest);
  if (!in) throw std::runtime_error("cannot read manifest '" + manifest + "'");
  std::vector<std::pair<std::string, std::string>> entries;  // path, label column
  std::string line;
  while (std::getline(in, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    while (!line.empty() && (line.back() == ' ' || line.back() == '\r' || line.back() == '\t'))
      line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    std::string path = comma == std::string::npos ? line : line.substr(0, comma);
    std::string label = comma == std::string::npos ? "label" : line.substr(comma + 1);
    const fs::path base = fs::path(manifest).parent_path();
    if (!fs::path(path).is_absolute() && !base.empty()) path = (base / path).string();
    entries.emplace_back(path, label);
  }
  if (entries.empty()) throw std::runtime_error("manifest lists no datasets");

  std::vector<std::string> modes;
  {
    std::stringstream ss(modes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) modes.push_back(tok);
    }
  }

  std::vector<dofs::SelectionReport> reports;
  int failures = 0;
  for (const auto& [path, label] : entries) {
    for (const std::string& mode : modes) {
      f.dataset = path;
      f.label = label;
      f.mode = mode;
      const std::string name = fs::path(path).stem().string();
      try {
        const dofs::Dataset ds = f.load();
        const auto t0 = std::chrono::steady_clock::now();
        dofs::RunResult rr = dofs::run(ds, f.config());
        rr.report.seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        dofs::append_results_csv(out_path(results_csv), rr.report);
        reports.push_back(rr.report);
        std::cout << std::fixed << std::setprecision(2) << "[ok]   " << name << " " << mode
                  << ": #dim " << rr.report.n_selected << ", accuracy " << rr.report.accuracy
                  << "\n";
      } catch (const std::exception& e) {
        ++failures;
        std::cout << "[fail] " << name << " " << mode << ": " << e.what() << "\n";
      }
    }
  }
  if (!reports.empty()) {
    std::cout << "\n" << dofs::compare_runs(reports).text;
    std::cout << "results CSV: " << out_path(results_csv) << "\n";
  }
  if (failures > 0) {
    std::cout << failures << " grid cell(s) failed\n";
    return 1;
  }
  return 0;
}

Eigen::MatrixXd load_matrix_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(std::stod(tok));
    if (!rows.empty() && row.size() != rows.front().size())
      throw std::runtime_error("ragged matrix CSV");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.size() != rows.front().size())
    throw std::runtime_error("matrix CSV must be square");
  Eigen::MatrixXd m(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j)
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

int cmd_sample_dpp(const Flags& f, const std::string& l_csv, int n_samples, int k,
                   const std::string& condition, bool dump_l, bool dump_k) {
  dofs::LEnsemble ensemble = [&] {
    if (!l_csv.empty()) return dofs::LEnsemble::from_matrix(load_matrix_csv(l_csv));
    const dofs::Dataset ds = f.load();
    dofs::KernelConfig kc;
    kc.type = dofs::kernel_from_name(f.kernel);
    kc.gamma = f.gamma;
    return dofs::build_similarity(ds.values, kc);
  }();
  if (!condition.empty()) {
    ensemble = dofs::condition_on(ensemble, parse_id_list(condition));
  }

  const auto fmt_matrix = [](const Eigen::MatrixXd& m) {
    std::ostringstream out;
    out << std::setprecision(12) << m << "\n";
    return out.str();
  };
  if (dump_l) std::cout << "L:\n" << fmt_matrix(ensemble.matrix());
  if (dump_k) std::cout << "K:\n" << fmt_matrix(dofs::marginal_kernel(ensemble).K);

  dofs::Rng rng(f.seed);
  for (int i = 0; i < n_samples; ++i) {
    const dofs::SubsetSample s = [&] {
      if (k >= 0) return dofs::sample_kdpp(ensemble, k, rng);
      if (f.k_max > 0) return dofs::sample_truncated(ensemble, f.k_max, rng);
      return dofs::sample(ensemble, rng);
    }();
    std::cout << "{";
    for (std::size_t j = 0; j < s.items.size(); ++j) std::cout << (j ? "," : "") << s.items[j];
    std::cout << "} log_prob=" << std::setprecision(12) << s.log_prob << "\n";
  }
  return 0;
}

int cmd_synth(int n, int informative, int noise, std::uint64_t seed, const std::string& out) {
  const dofs::Dataset ds = dofs::make_synthetic(n, informative, noise, seed);
  std::ostringstream body;
  body << std::setprecision(17);
  for (const auto& name : ds.feature_names) body << name << ",";
  body << "label\n";
  for (Eigen::Index i = 0; i < ds.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < ds.values.cols(); ++j) body << ds.values(i, j) << ",";
    body << (*ds.labels)[static_cast<std::size_t>(i)] << "\n";
  }
  const std::string path = out_path(out);
  write_text(path, body.str());
  std::cout << "wrote " << path << " (" << ds.values.rows() << " rows, " << ds.values.cols()
            << " features, " << informative << " informative)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "dofs — diverse online feature selection over streaming feature groups\n"
      "Relative output paths resolve under $DOFS_OUT_DIR when set."};
  app.require_subcommand(1);

  Flags f;

  // select
  auto* select = app.add_subcommand("select", "run the selection pipeline over a dataset stream");
  add_dataset_flags(select, f);
  add_pipeline_flags(select, f);
  add_eval_flags(select, f);
  select->add_option("--seed", f.seed, "seed for every random choice")->capture_default_str();
  select->add_flag("-v,--verbose", f.verbosity, "per-group progress on stderr");
  std::string sel_out, sel_selected_out, sel_log, sel_results, sel_checkpoint, sel_resume;
  bool sel_per_fold = false;
  select->add_option("--out", sel_out, "report JSON path (default <dataset>_<mode>_seed<seed>.report.json)");
  select->add_option("--selected-out", sel_selected_out, "write 'id,name' lines for the final set");
  select->add_option("--log", sel_log, "write per-group iteration records as JSON lines");
  select->add_option("--results-csv", sel_results, "append the run to a results CSV");
  select->add_option("--checkpoint", sel_checkpoint, "save resumable state after every group");
  select->add_option("--resume", sel_resume, "continue from a checkpoint file");
  select->add_flag("--per-fold-selection", sel_per_fold,
                   "additionally rerun selection inside each training fold");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "cross-validate a feature subset");
  add_dataset_flags(eval, f);
  add_eval_flags(eval, f);
  eval->add_option("--seed", f.seed, "fold-assignment seed")->capture_default_str();
  std::string ev_features, ev_features_file, ev_out, ev_results;
  eval->add_option("--features", ev_features, "comma-separated feature ids (default: all)");
  eval->add_option("--features-file", ev_features_file,
                   "file with one feature id or name per line (e.g. --selected-out output)");
  eval->add_option("--out", ev_out, "report JSON path");
  eval->add_option("--results-csv", ev_results, "append the run to a results CSV");

  // bench
  auto* bench = app.add_subcommand("bench", "run the dataset x mode grid from a manifest");
  std::string bench_manifest, bench_modes = "dpp_only,unsupervised,supervised";
  std::string bench_results = "results.csv";
  bench->add_option("--manifest", bench_manifest,
                    "file with one 'path,label_column' line per dataset (# comments allowed; "
                    "relative paths resolve against the manifest)")
      ->required();
  bench->add_option("--modes", bench_modes, "comma-separated mode list")->capture_default_str();
  bench->add_option("--results-csv", bench_results, "results CSV (appends, keyed by dataset/mode/seed)")
      ->capture_default_str();
  add_pipeline_flags(bench, f);
  add_eval_flags(bench, f);
  bench->add_option("--seed", f.seed, "seed for every random choice")->capture_default_str();

  // sample-dpp
  auto* sdpp = app.add_subcommand("sample-dpp", "draw subsets from a similarity DPP");
  std::string sd_lcsv, sd_condition;
  int sd_samples = 10;
  int sd_k = -1;
  bool sd_dump_l = false, sd_dump_k = false;
  sdpp->add_option("--dataset", f.dataset, "build the kernel from this CSV's feature columns");
  sdpp->add_option("--label", f.label, "label column to exclude")->capture_default_str();
  sdpp->add_flag("--no-label", f.no_label, "treat every column as a feature");
  sdpp->add_option("--l-csv", sd_lcsv, "literal square L matrix as headerless CSV");
  sdpp->add_option("--kernel", f.kernel, "similarity kernel: rbf|linear|correlation")
      ->capture_default_str();
  sdpp->add_option("--gamma", f.gamma, "rbf bandwidth (0 = 1/n)")->capture_default_str();
  sdpp->add_option("--n-samples", sd_samples, "number of draws")->check(CLI::PositiveNumber)
      ->capture_default_str();
  sdpp->add_option("--k", sd_k, "draw exact-size k-DPP samples");
  sdpp->add_option("--k-max", f.k_max, "truncated sampling cap (0 = open)")->capture_default_str();
  sdpp->add_option("--condition", sd_condition, "comma-separated item ids to condition on");
  sdpp->add_flag("--dump-l", sd_dump_l, "print the (conditioned) L matrix");
  sdpp->add_flag("--dump-k", sd_dump_k, "print the marginal kernel K");
  sdpp->add_option("--seed", f.seed, "sampling seed")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "write the synthetic benchmark fixture as CSV");
  int sy_n = 400, sy_informative = 5, sy_noise = 95;
  std::string sy_out = "synthetic.csv";
  synth->add_option("--n", sy_n, "instances")->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--informative", sy_informative, "class-shifted feature count")
      ->check(CLI::PositiveNumber)->capture_default_str();
  synth->add_option("--noise", sy_noise, "pure-noise feature count")
      ->check(CLI::NonNegativeNumber)->capture_default_str();
  synth->add_option("--seed", f.seed, "generator seed")->capture_default_str();
  synth->add_option("--out", sy_out, "output CSV path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // usage problems exit 2; --help stays 0
  }

  try {
    if (select->parsed()) {
      return cmd_select(f, sel_out, sel_selected_out, sel_log, sel_results, sel_checkpoint,
                        sel_resume, sel_per_fold);
    }
    if (eval->parsed()) return cmd_evaluate(f, ev_features, ev_features_file, ev_out, ev_results);
    if (bench->parsed()) return cmd_bench(f, bench_manifest, bench_modes, bench_results);
    if (sdpp->parsed()) {
      if (f.dataset.empty() && sd_lcsv.empty())
        throw CLI::RequiredError("sample-dpp needs --dataset or --l-csv");
      return cmd_sample_dpp(f, sd_lcsv, sd_samples, sd_k, sd_condition, sd_dump_l, sd_dump_k);
    }
    if (synth->parsed()) return cmd_synth(sy_n, sy_informative, sy_noise, f.seed, sy_out);
  } catch (const CLI::Error& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
