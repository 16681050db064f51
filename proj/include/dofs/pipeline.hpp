#pragma once

#include <algorithm>
#include <chrono>
#include <fstream>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "dofs/common.hpp"
#include "dofs/dataset.hpp"
#include "dofs/dpp.hpp"
#include "dofs/elasticnet.hpp"
#include "dofs/evaluation.hpp"
#include "dofs/local_criteria.hpp"
#include "dofs/rng.hpp"
#include "json.hpp"

namespace dofs {

enum class Mode { dpp_only, unsupervised, supervised, combined };

// How the per-group DPP sample is drawn once k_max > 0. `truncated` rejects
// open samples larger than k_max and falls back to a k-DPP at k_max; `kdpp`
// always draws an exact-size sample at min(k_max, group size). Exact-size
// sampling sidesteps the cardinality ceiling of unit-diagonal kernels, where
// the open sample keeps each arrival with probability at most 1/2.
enum class SamplePolicy { truncated, kdpp };

inline std::string sample_policy_name(SamplePolicy p) {
  return p == SamplePolicy::kdpp ? "kdpp" : "truncated";
}

inline SamplePolicy sample_policy_from_name(const std::string& s) {
  if (s == "truncated") return SamplePolicy::truncated;
  if (s == "kdpp") return SamplePolicy::kdpp;
  throw std::invalid_argument("unknown sample policy '" + s + "' (truncated|kdpp)");
}

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::dpp_only: return "dpp_only";
    case Mode::unsupervised: return "unsupervised";
    case Mode::supervised: return "supervised";
    case Mode::combined: return "combined";
  }
  return "?";
}

inline Mode mode_from_name(const std::string& s) {
  if (s == "dpp_only") return Mode::dpp_only;
  if (s == "unsupervised") return Mode::unsupervised;
  if (s == "supervised") return Mode::supervised;
  if (s == "combined") return Mode::combined;
  throw std::invalid_argument("unknown mode '" + s + "' (dpp_only|unsupervised|supervised|combined)");
}

struct PipelineConfig {
  Mode mode = Mode::supervised;
  KernelConfig kernel;  // similarity for the DPP stage
  int k_max = 0;        // per-group cardinality cap; 0 = uncapped
  SamplePolicy sample_policy = SamplePolicy::truncated;  // applies when k_max > 0
  double alpha = 0.05;  // shared significance level (Wilcoxon and t-test)
  double epsilon = 0.01;
  ScatterVariant scatter = ScatterVariant::mean_variance;
  bool paper_sign_t = false;
  bool sort_ascending = true;  // supervised sweep order; see SupervisedConfig
  ElasticNetConfig elasticnet;  // global pruning fit
  int group_size = 5;           // m
  std::uint64_t seed = 0;
  bool shuffle_stream = false;
  int max_selected = 0;  // stop once reached; 0 = stream exhaustion only
  int anchor_cap = 500;  // conditioning-set bound
  bool per_feature_global = false;  // prune after every admission, not per group
  int eval_folds = 10;              // 0 skips the final evaluation

  nlohmann::json to_json() const {
    return {{"mode", mode_name(mode)},
            {"kernel", kernel_name(kernel.type)},
            {"gamma", kernel.gamma},
            {"k_max", k_max},
            {"sample_policy", sample_policy_name(sample_policy)},
            {"alpha", alpha},
            {"epsilon", epsilon},
            {"scatter", scatter_variant_name(scatter)},
            {"paper_sign_t", paper_sign_t},
            {"sort_ascending", sort_ascending},
            {"lambda", elasticnet.lambda},
            {"alpha1", elasticnet.alpha1},
            {"loss", loss_name(elasticnet.loss)},
            {"en_max_iter", elasticnet.max_iter},
            {"en_tol", elasticnet.tol},
            {"group_size", group_size},
            {"seed", seed},
            {"shuffle_stream", shuffle_stream},
            {"max_selected", max_selected},
            {"anchor_cap", anchor_cap},
            {"per_feature_global", per_feature_global},
            {"eval_folds", eval_folds}};
  }

  static PipelineConfig from_json(const nlohmann::json& j) {
    PipelineConfig c;
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    c.kernel.type = kernel_from_name(j.at("kernel").get<std::string>());
    c.kernel.gamma = j.at("gamma").get<double>();
    c.k_max = j.at("k_max").get<int>();
    c.sample_policy = sample_policy_from_name(j.at("sample_policy").get<std::string>());
    c.alpha = j.at("alpha").get<double>();
    c.epsilon = j.at("epsilon").get<double>();
    c.scatter = scatter_variant_from_name(j.at("scatter").get<std::string>());
    c.paper_sign_t = j.at("paper_sign_t").get<bool>();
    c.sort_ascending = j.at("sort_ascending").get<bool>();
    c.elasticnet.lambda = j.at("lambda").get<double>();
    c.elasticnet.alpha1 = j.at("alpha1").get<double>();
    c.elasticnet.loss = loss_from_name(j.at("loss").get<std::string>());
    c.elasticnet.max_iter = j.at("en_max_iter").get<int>();
    c.elasticnet.tol = j.at("en_tol").get<double>();
    c.group_size = j.at("group_size").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.shuffle_stream = j.at("shuffle_stream").get<bool>();
    c.max_selected = j.at("max_selected").get<int>();
    c.anchor_cap = j.at("anchor_cap").get<int>();
    c.per_feature_global = j.at("per_feature_global").get<bool>();
    c.eval_folds = j.at("eval_folds").get<int>();
    return c;
  }
};

struct SelectedFeature {
  int id = 0;
  int group = 0;       // group in which the feature arrived
  std::string stage;   // dpp | local_unsup | local_sup | survived_global
};

struct IterationRecord {
  int group = 0;
  std::vector<int> arrived;
  std::vector<int> sampled;
  double sample_log_prob = 0.0;
  std::vector<int> accepted;             // admitted by the local stage
  std::vector<int> pruned;               // dropped by the global stage
  std::vector<std::string> stages;       // executed stages, in order
  int n_selected_after = 0;
  double seconds = 0.0;
  std::string error;  // nonempty when this iteration aborted the run

  nlohmann::json to_json(bool include_timings = true) const {
    nlohmann::json j{{"group", group},
                     {"arrived", arrived},
                     {"sampled", sampled},
                     {"sample_log_prob", sample_log_prob},
                     {"accepted", accepted},
                     {"pruned", pruned},
                     {"stages", stages},
                     {"n_selected_after", n_selected_after}};
    if (include_timings) j["seconds"] = seconds;
    if (!error.empty()) j["error"] = error;
    return j;
  }
};

struct PipelineState {
  std::vector<SelectedFeature> selected;  // admission order
  std::vector<IterationRecord> log;       // append-only
  int groups_processed = 0;
  std::string rng_state;
  std::uint64_t dataset_fingerprint = 0;
  nlohmann::json config_echo;

  std::vector<int> selected_ids() const {
    std::vector<int> ids;
    ids.reserve(selected.size());
    for (const auto& s : selected) ids.push_back(s.id);
    return ids;
  }
};

// carries the state (iteration log intact) out of an aborted run
class PipelineError : public std::runtime_error {
 public:
  PipelineError(const std::string& what, PipelineState state)
      : std::runtime_error(what), state(std::move(state)) {}
  PipelineState state;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

inline nlohmann::json checkpoint_to_json(const PipelineState& st) {
  nlohmann::json j;
  j["version"] = 1;
  j["config"] = st.config_echo;
  j["dataset_fingerprint"] = st.dataset_fingerprint;
  j["groups_processed"] = st.groups_processed;
  j["rng_state"] = st.rng_state;
  nlohmann::json sel = nlohmann::json::array();
  for (const auto& s : st.selected) {
    sel.push_back({{"id", s.id}, {"group", s.group}, {"stage", s.stage}});
  }
  j["selected"] = sel;
  nlohmann::json log = nlohmann::json::array();
  for (const auto& r : st.log) log.push_back(r.to_json());
  j["log"] = log;
  return j;
}

inline PipelineState checkpoint_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != 1) {
    throw std::runtime_error("checkpoint: unsupported version");
  }
  PipelineState st;
  st.config_echo = j.at("config");
  st.dataset_fingerprint = j.at("dataset_fingerprint").get<std::uint64_t>();
  st.groups_processed = j.at("groups_processed").get<int>();
  st.rng_state = j.at("rng_state").get<std::string>();
  for (const auto& s : j.at("selected")) {
    st.selected.push_back({s.at("id").get<int>(), s.at("group").get<int>(),
                           s.at("stage").get<std::string>()});
  }
  for (const auto& r : j.at("log")) {
    IterationRecord rec;
    rec.group = r.at("group").get<int>();
    rec.arrived = r.at("arrived").get<std::vector<int>>();
    rec.sampled = r.at("sampled").get<std::vector<int>>();
    rec.sample_log_prob = r.at("sample_log_prob").get<double>();
    rec.accepted = r.at("accepted").get<std::vector<int>>();
    rec.pruned = r.at("pruned").get<std::vector<int>>();
    rec.stages = r.at("stages").get<std::vector<std::string>>();
    rec.n_selected_after = r.at("n_selected_after").get<int>();
    if (r.contains("seconds")) rec.seconds = r.at("seconds").get<double>();
    if (r.contains("error")) rec.error = r.at("error").get<std::string>();
    st.log.push_back(std::move(rec));
  }
  return st;
}

inline void save_checkpoint(const PipelineState& st, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("save_checkpoint: cannot write " + path);
  out << checkpoint_to_json(st).dump(2) << '\n';
}

inline PipelineState load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot read " + path);
  nlohmann::json j;
  in >> j;
  return checkpoint_from_json(j);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

// Streaming selection loop: per arriving group, (1) condition the similarity
// L-ensemble on the current selected set and sample a diverse subset, (2)
// apply the mode's local criteria, (3) run the global elasticnet prune over
// the whole selected set (skipped when labels are absent). The state is
// checkpointable; continuing from a checkpoint replays the identical
// random-source sequence.
class Pipeline {
 public:
  Pipeline(const Dataset& d, const PipelineConfig& cfg) : data_(&d), cfg_(cfg), rng_(cfg.seed) {
    validate(d, cfg);
    state_.dataset_fingerprint = d.fingerprint();
    state_.config_echo = cfg.to_json();
    state_.rng_state = rng_.state();
  }

  // continue from a checkpointed state; config and dataset must match
  Pipeline(const Dataset& d, const PipelineConfig& cfg, const PipelineState& st)
      : data_(&d), cfg_(cfg), rng_(cfg.seed) {
    validate(d, cfg);
    if (st.config_echo != cfg.to_json()) {
      throw std::invalid_argument("pipeline resume: config does not match checkpoint");
    }
    if (st.dataset_fingerprint != d.fingerprint()) {
      throw std::invalid_argument("pipeline resume: dataset does not match checkpoint");
    }
    state_ = st;
    rng_.restore(st.rng_state);
  }

  const PipelineState& state() const { return state_; }

  bool stopped() const {
    return cfg_.max_selected > 0 &&
           static_cast<int>(state_.selected.size()) >= cfg_.max_selected;
  }

  void process_group(const FeatureGroup& g) {
    const auto t0 = std::chrono::steady_clock::now();
    IterationRecord rec;
    rec.group = state_.groups_processed;
    rec.arrived = g.indices;
    try {
      run_stages(g, rec);
    } catch (const std::exception& e) {
      rec.error = e.what();
      rec.n_selected_after = static_cast<int>(state_.selected.size());
      rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      state_.log.push_back(rec);
      state_.rng_state = rng_.state();
      throw PipelineError(std::string("pipeline: group ") + std::to_string(rec.group) +
                              " failed: " + e.what(),
                          state_);
    }
    rec.n_selected_after = static_cast<int>(state_.selected.size());
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    state_.log.push_back(rec);
    state_.groups_processed += 1;
    state_.rng_state = rng_.state();
  }

 private:
  static void validate(const Dataset& d, const PipelineConfig& cfg) {
    d.validate();
    if ((cfg.mode == Mode::supervised || cfg.mode == Mode::combined) && !d.labels) {
      throw std::invalid_argument("pipeline: mode " + mode_name(cfg.mode) + " requires labels");
    }
    if (cfg.group_size < 1) throw std::invalid_argument("pipeline: group size must be >= 1");
    if (cfg.alpha <= 0.0 || cfg.alpha >= 1.0) {
      throw std::invalid_argument("pipeline: alpha must lie in (0, 1)");
    }
  }

  FeatureMatrix columns_for(const std::vector<int>& ids) const {
    FeatureMatrix m(data_->values.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t j = 0; j < ids.size(); ++j) {
      m.col(static_cast<Eigen::Index>(j)) = data_->values.col(ids[j]);
    }
    return m;
  }

  // selected ids capped to anchor_cap by uniform subsampling, with exact
  // duplicate columns (after standardization) dropped so the conditioning
  // event keeps positive probability
  std::vector<int> anchor_ids() {
    std::vector<int> ids = state_.selected_ids();
    if (cfg_.anchor_cap > 0 && static_cast<int>(ids.size()) > cfg_.anchor_cap) {
      rng_.shuffle(ids);
      ids.resize(static_cast<std::size_t>(cfg_.anchor_cap));
      std::sort(ids.begin(), ids.end());
    }
    if (ids.size() > 1) {
      const FeatureMatrix z = standardize_columns(columns_for(ids));
      std::vector<std::size_t> kept_pos;
      for (std::size_t j = 0; j < ids.size(); ++j) {
        bool dup = false;
        for (std::size_t k : kept_pos) {
          if ((z.col(static_cast<Eigen::Index>(j)) - z.col(static_cast<Eigen::Index>(k)))
                  .lpNorm<Eigen::Infinity>() == 0.0) {
            dup = true;
            break;
          }
        }
        if (!dup) kept_pos.push_back(j);
      }
      if (kept_pos.size() < ids.size()) {
        std::vector<int> kept;
        for (std::size_t k : kept_pos) kept.push_back(ids[k]);
        ids = std::move(kept);
      }
    }
    return ids;
  }

  void run_stages(const FeatureGroup& g, IterationRecord& rec) {
    // drop anything already selected (defensive; streams are disjoint)
    std::set<int> have;
    for (const auto& s : state_.selected) have.insert(s.id);
    std::vector<int> incoming;
    for (int id : g.indices) {
      if (have.find(id) == have.end()) incoming.push_back(id);
    }
    if (incoming.empty()) {
      rec.stages.push_back("sample");
      return;
    }

    // ---- stage 1: conditional DPP sample ----
    rec.stages.push_back("sample");
    const std::vector<int> anchors = anchor_ids();
    std::vector<int> universe = anchors;
    universe.insert(universe.end(), incoming.begin(), incoming.end());

    const LEnsemble ensemble = build_similarity(columns_for(universe), cfg_.kernel, universe);
    const LEnsemble cond = condition_on(ensemble, anchors);
    SubsetSample sample;
    if (cfg_.k_max <= 0) {
      sample = dofs::sample(cond, rng_);
    } else {
      const int k = std::min<int>(cfg_.k_max, static_cast<int>(incoming.size()));
      sample = cfg_.sample_policy == SamplePolicy::kdpp ? sample_kdpp(cond, k, rng_)
                                                        : sample_truncated(cond, k, rng_);
    }
    rec.sampled = sample.items;
    rec.sample_log_prob = sample.log_prob;

    // ---- stage 2: local criteria ----
    rec.stages.push_back("local");
    std::vector<std::pair<int, std::string>> admitted;  // id, stage tag
    switch (cfg_.mode) {
      case Mode::dpp_only: {
        for (int id : sample.items) admitted.emplace_back(id, "dpp");
        break;
      }
      case Mode::unsupervised: {
        FeatureMatrix current = columns_for(state_.selected_ids());
        for (int id : sample.items) {
          const Vector f = data_->values.col(id);
          if (wilcoxon_filter(current, f, cfg_.alpha)) {
            admitted.emplace_back(id, "local_unsup");
            FeatureMatrix next(current.rows(), current.cols() + 1);
            if (current.cols() > 0) next.leftCols(current.cols()) = current;
            next.col(current.cols()) = f;
            current = std::move(next);
          }
        }
        break;
      }
      case Mode::supervised:
      case Mode::combined: {
        std::vector<int> candidates = sample.items;
        if (cfg_.mode == Mode::combined) {
          FeatureMatrix current = columns_for(state_.selected_ids());
          std::vector<int> survivors;
          for (int id : candidates) {
            const Vector f = data_->values.col(id);
            if (wilcoxon_filter(current, f, cfg_.alpha)) {
              survivors.push_back(id);
              FeatureMatrix next(current.rows(), current.cols() + 1);
              if (current.cols() > 0) next.leftCols(current.cols()) = current;
              next.col(current.cols()) = f;
              current = std::move(next);
            }
          }
          candidates = std::move(survivors);
        }
        if (!candidates.empty()) {
          SupervisedConfig sc;
          sc.epsilon = cfg_.epsilon;
          sc.alpha = cfg_.alpha;
          sc.variant = cfg_.scatter;
          sc.paper_sign_t = cfg_.paper_sign_t;
          sc.sort_ascending = cfg_.sort_ascending;
          // The growing set starts empty each group (Algorithm 3 initializes
          // G = {}): the local stage judges the batch on its own merits, and
          // redundancy against previously selected features is the global
          // criterion's job.
          const FeatureMatrix fresh(data_->values.rows(), 0);
          const std::vector<int> local =
              supervised_select(columns_for(candidates), fresh, *data_->labels, sc);
          for (int pos : local) {
            admitted.emplace_back(candidates[static_cast<std::size_t>(pos)], "local_sup");
          }
        }
        break;
      }
    }

    const bool do_global = data_->labels.has_value();
    const auto append_one = [&](const std::pair<int, std::string>& a) {
      state_.selected.push_back({a.first, rec.group, a.second});
      rec.accepted.push_back(a.first);
    };
    const auto global_prune = [&]() {
      if (!do_global || state_.selected.empty()) return;
      const std::vector<int> ids = state_.selected_ids();
      const PruneResult pr =
          prune_selected(columns_for(ids), ids, *data_->labels, cfg_.elasticnet);
      const std::set<int> kept(pr.kept.begin(), pr.kept.end());
      std::vector<SelectedFeature> next;
      for (auto& s : state_.selected) {
        if (kept.count(s.id)) {
          s.stage = "survived_global";
          next.push_back(s);
        }
      }
      for (int id : pr.dropped) rec.pruned.push_back(id);
      state_.selected = std::move(next);
    };

    // ---- stage 3: global prune ----
    if (cfg_.per_feature_global) {
      for (const auto& a : admitted) {
        append_one(a);
        if (do_global) {
          rec.stages.push_back("global");
          global_prune();
        }
      }
    } else {
      for (const auto& a : admitted) append_one(a);
      if (do_global) {
        rec.stages.push_back("global");
        global_prune();
      }
    }
  }

  const Dataset* data_;
  PipelineConfig cfg_;
  Rng rng_;
  PipelineState state_;
};

struct RunResult {
  PipelineState state;
  SelectionReport report;
};

// assemble the report for a finished state, evaluating when possible
inline SelectionReport report_for(const Dataset& d, const PipelineConfig& cfg,
                                  const PipelineState& st) {
  SelectionReport rep;
  const std::vector<int> ids = st.selected_ids();
  if (d.labels && !ids.empty() && cfg.eval_folds >= 2) {
    rep = evaluate(d, ids, cfg.eval_folds, cfg.seed);
  } else {
    rep.dataset = d.name;
    rep.n_selected = static_cast<int>(ids.size());
    rep.selected = ids;
    rep.seed = cfg.seed;
  }
  rep.mode = mode_name(cfg.mode);
  rep.config_echo = cfg.to_json();
  return rep;
}

// run the full stream for a dataset under one config
inline RunResult run(const Dataset& d, const PipelineConfig& cfg) {
  Pipeline p(d, cfg);
  StreamConfig sc;
  sc.group_size = cfg.group_size;
  sc.seed = cfg.seed;
  sc.shuffle = cfg.shuffle_stream;
  const std::vector<FeatureGroup> groups = stream_groups(d, sc);
  for (const auto& g : groups) {
    if (p.stopped()) break;
    p.process_group(g);
  }
  RunResult out;
  out.state = p.state();
  out.report = report_for(d, cfg, out.state);
  return out;
}

// continue a checkpointed run over further groups
inline PipelineState resume(const Dataset& d, const PipelineState& st,
                            const std::vector<FeatureGroup>& more_groups,
                            const PipelineConfig& cfg) {
  Pipeline p(d, cfg, st);
  for (const auto& g : more_groups) {
    if (p.stopped()) break;
    p.process_group(g);
  }
  return p.state();
}

}  // namespace dofs
