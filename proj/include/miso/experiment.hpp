#pragma once

// Experiment driver: multi-trial policy comparisons with optional sensitivity
// sweeps, per-trial normalization against nopart, CSV rows plus a JSON
// summary, and a bounded worker pool for independent trials.

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "miso/common.hpp"
#include "miso/sim.hpp"
#include "miso/workload.hpp"

namespace miso {

struct ExperimentConfig {
  int cluster_size = 8;
  int trials = 1;
  uint64_t base_seed = 0;
  std::vector<Policy> policies = {Policy::nopart, Policy::optsta, Policy::oracle, Policy::miso};
  std::string trace_path;  // when set, one fixed trace replaces generation
  TraceSpec trace_spec;
  OverheadSpec overheads;
  PredictorSpec predictor;  // rng_seed is overridden with each trial's seed
  std::string sweep_param;  // "", or checkpoint_restart_s | target_mae | lambda_s
  std::vector<double> sweep_values;
  double reprofile_drift_threshold = 0;
  int workers = 0;  // 0 = hardware concurrency
  std::string csv_path = "results.csv";
  std::string json_path = "summary.json";
};

inline void validate_experiment_config(const ExperimentConfig& c) {
  if (c.trials < 1) throw ConfigError("trials must be >= 1");
  if (c.cluster_size < 1) throw ConfigError("cluster_size must be >= 1");
  if (c.policies.empty()) throw ConfigError("at least one policy is required");
  if (!c.sweep_param.empty()) {
    if (c.sweep_param != "checkpoint_restart_s" && c.sweep_param != "target_mae" &&
        c.sweep_param != "lambda_s")
      throw ConfigError("sweep_param must be checkpoint_restart_s, target_mae, or lambda_s");
    if (c.sweep_values.empty()) throw ConfigError("sweep_values must be non-empty");
    if (c.sweep_param == "lambda_s" && !c.trace_path.empty())
      throw ConfigError("lambda_s sweeps need generated traces, not a fixed trace_path");
  }
  if (c.trace_path.empty()) validate_trace_spec(c.trace_spec);
  validate_overheads(c.overheads);
  validate_predictor_spec(c.predictor);
}

// ---------------------------------------------------------------------------
// Config files: flat `key = value` lines, '#' comments. Unknown keys are
// collected and reported together.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : s) {
    if (ch == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += ch;
    }
  }
  out.push_back(trim(cur));
  return out;
}

inline double config_double(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("bad numeric value '" + v + "' for key '" + key + "'");
  }
}

inline int config_int(const std::string& v, const std::string& key) {
  try {
    size_t used = 0;
    int i = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError("bad integer value '" + v + "' for key '" + key + "'");
  }
}

}  // namespace detail

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  std::vector<std::string> unknown;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    line = detail::trim(line);
    if (line.empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value'");
    std::string key = detail::trim(line.substr(0, eq));
    std::string val = detail::trim(line.substr(eq + 1));
    if (key == "cluster_size") c.cluster_size = detail::config_int(val, key);
    else if (key == "trials") c.trials = detail::config_int(val, key);
    else if (key == "base_seed") c.base_seed = static_cast<uint64_t>(std::stoull(val));
    else if (key == "workers") c.workers = detail::config_int(val, key);
    else if (key == "policies") {
      c.policies.clear();
      for (const auto& name : detail::split_list(val)) c.policies.push_back(policy_from_name(name));
    } else if (key == "trace_path") c.trace_path = val;
    else if (key == "job_count") c.trace_spec.job_count = detail::config_int(val, key);
    else if (key == "lambda_s") c.trace_spec.lambda_s = detail::config_double(val, key);
    else if (key == "max_duration_s") c.trace_spec.max_duration_s = detail::config_double(val, key);
    else if (key == "duration_dist") c.trace_spec.duration_dist.kind = detail::dist_kind_from(val, lineno);
    else if (key == "sigma") c.trace_spec.duration_dist.sigma = detail::config_double(val, key);
    else if (key == "fixed_s") c.trace_spec.duration_dist.fixed_s = detail::config_double(val, key);
    else if (key == "lo_s") c.trace_spec.duration_dist.lo_s = detail::config_double(val, key);
    else if (key == "hi_s") c.trace_spec.duration_dist.hi_s = detail::config_double(val, key);
    else if (key == "mig_reconfig_s") c.overheads.mig_reconfig_s = detail::config_double(val, key);
    else if (key == "checkpoint_restart_s") c.overheads.checkpoint_restart_s = detail::config_double(val, key);
    else if (key == "mps_window_s") c.overheads.mps_window_s = detail::config_double(val, key);
    else if (key == "interference") c.overheads.interference = detail::config_double(val, key);
    else if (key == "predictor_mode") {
      if (val == "oracle") c.predictor.mode = PredictorSpec::Mode::oracle;
      else if (val == "noisy") c.predictor.mode = PredictorSpec::Mode::noisy;
      else throw ConfigError("predictor_mode must be oracle or noisy, got '" + val + "'");
    } else if (key == "target_mae") c.predictor.target_mae = detail::config_double(val, key);
    else if (key == "reprofile_drift_threshold") c.reprofile_drift_threshold = detail::config_double(val, key);
    else if (key == "sweep_param") c.sweep_param = val;
    else if (key == "sweep_values") {
      c.sweep_values.clear();
      for (const auto& tok : detail::split_list(val)) c.sweep_values.push_back(detail::config_double(tok, key));
    } else if (key == "csv_path") c.csv_path = val;
    else if (key == "json_path") c.json_path = val;
    else unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string msg = "unknown config key(s):";
    for (const auto& k : unknown) msg += " '" + k + "'";
    throw ConfigError(msg);
  }
  validate_experiment_config(c);
  return c;
}

inline ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  return parse_config(in);
}

// ---------------------------------------------------------------------------
// Results.
// ---------------------------------------------------------------------------

struct TrialRow {
  std::string sweep_param;  // "none" when no sweep
  double sweep_value = 0;
  int trial = 0;
  uint64_t seed = 0;
  MetricsReport report;
  double jct_norm = 1, makespan_norm = 1, stp_norm = 1;  // vs same-trial nopart
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<TrialRow> rows;  // sorted by (sweep point index, trial, policy order)
};

inline constexpr const char* kCsvHeader =
    "sweep_param,sweep_value,trial,seed,policy,completed,avg_jct_s,makespan_s,stp_avg,"
    "queue_frac,mps_frac,checkpoint_frac,run_frac,idle_frac,"
    "repartitions,migrations,mps_sessions,jct_norm,makespan_norm,stp_norm";

inline void write_csv(const ExperimentResult& res, std::ostream& out) {
  out << kCsvHeader << '\n';
  for (const auto& r : res.rows) {
    const MetricsReport& m = r.report;
    out << r.sweep_param << ',' << fmt_g(r.sweep_value) << ',' << r.trial << ',' << r.seed << ','
        << m.policy << ',' << (m.completed ? 1 : 0) << ',' << fmt_g(m.avg_jct_s) << ','
        << fmt_g(m.makespan_s) << ',' << fmt_g(m.stp_time_avg) << ',' << fmt_g(m.queue_frac)
        << ',' << fmt_g(m.mps_frac) << ',' << fmt_g(m.checkpoint_frac) << ','
        << fmt_g(m.run_frac) << ',' << fmt_g(m.idle_frac) << ',' << m.repartitions << ','
        << m.migrations << ',' << m.mps_sessions << ',' << fmt_g(r.jct_norm) << ','
        << fmt_g(r.makespan_norm) << ',' << fmt_g(r.stp_norm) << '\n';
  }
  if (!out) throw IoError("csv write failed");
}

namespace detail {

// Linear-interpolated quantile of an ascending vector.
inline double quantile_sorted(const std::vector<double>& v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double pos = q * static_cast<double>(v.size() - 1);
  size_t lo = static_cast<size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  double w = pos - static_cast<double>(lo);
  return v[lo] + w * (v[lo + 1] - v[lo]);
}

inline nlohmann::ordered_json stats_json(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  nlohmann::ordered_json j;
  j["median"] = quantile_sorted(v, 0.5);
  j["q1"] = quantile_sorted(v, 0.25);
  j["q3"] = quantile_sorted(v, 0.75);
  j["min"] = v.empty() ? std::numeric_limits<double>::quiet_NaN() : v.front();
  j["max"] = v.empty() ? std::numeric_limits<double>::quiet_NaN() : v.back();
  return j;
}

}  // namespace detail

inline nlohmann::ordered_json summarize(const ExperimentResult& res) {
  const ExperimentConfig& c = res.config;
  nlohmann::ordered_json root;
  root["cluster_size"] = c.cluster_size;
  root["trials"] = c.trials;
  root["base_seed"] = c.base_seed;
  root["sweep_param"] = c.sweep_param.empty() ? "none" : c.sweep_param;
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  std::vector<double> values = c.sweep_param.empty() ? std::vector<double>{0} : c.sweep_values;
  for (double value : values) {
    nlohmann::ordered_json point;
    point["sweep_value"] = value;
    nlohmann::ordered_json pols;
    for (Policy p : c.policies) {
      std::map<std::string, std::vector<double>> cols;
      int n = 0, completed = 0;
      for (const auto& r : res.rows) {
        if (r.report.policy != policy_label(p) || r.sweep_value != value) continue;
        if (!c.sweep_param.empty() && r.sweep_param != c.sweep_param) continue;
        ++n;
        if (r.report.completed) ++completed;
        cols["avg_jct_s"].push_back(r.report.avg_jct_s);
        cols["jct_norm"].push_back(r.jct_norm);
        cols["makespan_s"].push_back(r.report.makespan_s);
        cols["makespan_norm"].push_back(r.makespan_norm);
        cols["stp_avg"].push_back(r.report.stp_time_avg);
        cols["stp_norm"].push_back(r.stp_norm);
      }
      nlohmann::ordered_json pj;
      pj["trials"] = n;
      pj["completed"] = completed;
      for (const char* key :
           {"avg_jct_s", "jct_norm", "makespan_s", "makespan_norm", "stp_avg", "stp_norm"})
        pj[key] = detail::stats_json(cols[key]);
      pols[policy_label(p)] = std::move(pj);
    }
    point["policies"] = std::move(pols);
    points.push_back(std::move(point));
  }
  root["points"] = std::move(points);
  return root;
}

// ---------------------------------------------------------------------------
// Runner.
// ---------------------------------------------------------------------------

namespace detail {

struct TrialTask {
  int point_index = 0;
  double sweep_value = 0;
  int trial = 0;
};

// One (sweep point, trial) unit: build the trace, find the static partition
// if optsta runs, simulate every policy, normalize against nopart.
inline std::vector<TrialRow> run_trial_unit(const ExperimentConfig& c, const JobTrace* fixed_trace,
                                            const TrialTask& task) {
  uint64_t seed = c.base_seed + static_cast<uint64_t>(task.trial);

  OverheadSpec overheads = c.overheads;
  PredictorSpec predictor = c.predictor;
  predictor.rng_seed = seed;
  TraceSpec spec = c.trace_spec;
  spec.seed = seed;
  if (!c.sweep_param.empty()) {
    if (c.sweep_param == "checkpoint_restart_s") overheads.checkpoint_restart_s = task.sweep_value;
    else if (c.sweep_param == "target_mae") predictor.target_mae = task.sweep_value;
    else spec.lambda_s = task.sweep_value;
  }

  JobTrace generated;
  const JobTrace* trace = fixed_trace;
  if (!trace) {
    generated = generate_trace(spec);
    trace = &generated;
  }

  std::vector<Policy> policies = c.policies;
  bool had_nopart = false;
  for (Policy p : policies) had_nopart |= (p == Policy::nopart);
  if (!had_nopart) policies.insert(policies.begin(), Policy::nopart);  // normalization baseline

  std::optional<PartitionConfig> static_part;
  std::map<std::string, MetricsReport> reports;
  for (Policy p : policies) {
    SimOptions opt;
    opt.policy = p;
    opt.cluster_size = c.cluster_size;
    opt.overheads = overheads;
    opt.predictor = predictor;
    opt.reprofile_drift_threshold = c.reprofile_drift_threshold;
    if (p == Policy::optsta) {
      if (!static_part)
        static_part = best_static_partition(*trace, c.cluster_size, overheads).chosen;
      opt.static_partition = static_part;
    }
    MetricsReport rep = run_simulation(*trace, opt);
    rep.seed = seed;  // loaded traces carry their own seed; report the trial's
    reports[policy_label(p)] = std::move(rep);
  }

  const MetricsReport& base = reports.at("nopart");
  std::vector<TrialRow> rows;
  for (Policy p : c.policies) {
    TrialRow row;
    row.sweep_param = c.sweep_param.empty() ? "none" : c.sweep_param;
    row.sweep_value = task.sweep_value;
    row.trial = task.trial;
    row.seed = seed;
    row.report = reports.at(policy_label(p));
    row.jct_norm = row.report.avg_jct_s / base.avg_jct_s;
    row.makespan_norm = row.report.makespan_s / base.makespan_s;
    row.stp_norm = base.stp_time_avg > 0 ? row.report.stp_time_avg / base.stp_time_avg : 0;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace detail

inline ExperimentResult run_experiment_in_memory(const ExperimentConfig& config) {
  validate_experiment_config(config);
  JobTrace fixed;
  const JobTrace* fixed_ptr = nullptr;
  if (!config.trace_path.empty()) {
    fixed = load_trace(config.trace_path);
    fixed_ptr = &fixed;
  }

  std::vector<detail::TrialTask> tasks;
  std::vector<double> values = config.sweep_param.empty() ? std::vector<double>{0} : config.sweep_values;
  for (size_t pi = 0; pi < values.size(); ++pi)
    for (int t = 0; t < config.trials; ++t)
      tasks.push_back({static_cast<int>(pi), values[pi], t});

  std::vector<std::vector<TrialRow>> slots(tasks.size());
  unsigned workers = config.workers > 0 ? static_cast<unsigned>(config.workers)
                                        : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min<unsigned>(workers, static_cast<unsigned>(tasks.size()));

  if (workers <= 1) {
    for (size_t i = 0; i < tasks.size(); ++i)
      slots[i] = detail::run_trial_unit(config, fixed_ptr, tasks[i]);
  } else {
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto worker = [&]() {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        try {
          slots[i] = detail::run_trial_unit(config, fixed_ptr, tasks[i]);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  ExperimentResult res;
  res.config = config;
  for (auto& slot : slots)
    for (auto& row : slot) res.rows.push_back(std::move(row));
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult res = run_experiment_in_memory(config);
  {
    std::ofstream out(config.csv_path);
    if (!out) throw IoError("cannot open csv output: " + config.csv_path);
    write_csv(res, out);
  }
  {
    std::ofstream out(config.json_path);
    if (!out) throw IoError("cannot open json output: " + config.json_path);
    out << summarize(res).dump(2) << '\n';
    if (!out) throw IoError("json write failed");
  }
  return res;
}

// Offline static-partition search on the experiment's trace (trial 0 seed).
inline StaticSearchResult optsta_search(const ExperimentConfig& config) {
  validate_experiment_config(config);
  JobTrace trace;
  if (!config.trace_path.empty()) {
    trace = load_trace(config.trace_path);
  } else {
    TraceSpec spec = config.trace_spec;
    spec.seed = config.base_seed;
    trace = generate_trace(spec);
  }
  return best_static_partition(trace, config.cluster_size, config.overheads);
}

}  // namespace miso
