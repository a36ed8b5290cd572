// Command-line front end: experiment runs, one-shot optimization, trace
// generation, and static-partition search.
//
// Exit codes: 0 success, 1 unexpected error, 2 bad configuration or flags,
// 3 I/O or malformed input file, 4 infeasible request.

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <miso.hpp>

namespace {

struct SimulateArgs {
  std::string config_path;
  std::string single_policy;
  std::string event_log_path;
  // Overrides; count()-checked against the CLI option before applying.
  int trials = 0, cluster_size = 0, job_count = 0, workers = 0;
  double lambda_s = 0, max_duration_s = 0, target_mae = 0;
  double mig_reconfig_s = 0, checkpoint_restart_s = 0, mps_window_s = 0, interference = 0;
  std::uint64_t base_seed = 0;
  std::string policies, trace_path, csv_path, json_path, sweep_param, sweep_values;
  std::string predictor_mode;
};

int run_simulate(const SimulateArgs& a, const CLI::App* cmd) {
  miso::ExperimentConfig cfg;
  if (!a.config_path.empty()) cfg = miso::parse_config_file(a.config_path);
  auto given = [&](const std::string& flag) { return cmd->count(flag) > 0; };
  if (given("--trials")) cfg.trials = a.trials;
  if (given("--cluster-size")) cfg.cluster_size = a.cluster_size;
  if (given("--base-seed")) cfg.base_seed = a.base_seed;
  if (given("--workers")) cfg.workers = a.workers;
  if (given("--jobs")) cfg.trace_spec.job_count = a.job_count;
  if (given("--lambda")) cfg.trace_spec.lambda_s = a.lambda_s;
  if (given("--max-duration")) cfg.trace_spec.max_duration_s = a.max_duration_s;
  if (given("--trace")) cfg.trace_path = a.trace_path;
  if (given("--csv")) cfg.csv_path = a.csv_path;
  if (given("--json")) cfg.json_path = a.json_path;
  if (given("--reconfig")) cfg.overheads.mig_reconfig_s = a.mig_reconfig_s;
  if (given("--ckpt")) cfg.overheads.checkpoint_restart_s = a.checkpoint_restart_s;
  if (given("--mps-window")) cfg.overheads.mps_window_s = a.mps_window_s;
  if (given("--interference")) cfg.overheads.interference = a.interference;
  if (given("--target-mae")) cfg.predictor.target_mae = a.target_mae;
  if (given("--predictor-mode")) {
    if (a.predictor_mode == "oracle") cfg.predictor.mode = miso::PredictorSpec::Mode::oracle;
    else if (a.predictor_mode == "noisy") cfg.predictor.mode = miso::PredictorSpec::Mode::noisy;
    else throw miso::ConfigError("predictor mode must be oracle or noisy");
  }
  if (given("--policies")) {
    cfg.policies.clear();
    for (const auto& name : miso::detail::split_list(a.policies))
      cfg.policies.push_back(miso::policy_from_name(name));
  }
  if (given("--sweep-param")) cfg.sweep_param = a.sweep_param;
  if (given("--sweep-values")) {
    cfg.sweep_values.clear();
    for (const auto& tok : miso::detail::split_list(a.sweep_values))
      cfg.sweep_values.push_back(miso::detail::config_double(tok, "sweep-values"));
  }

  if (!a.single_policy.empty() || !a.event_log_path.empty()) {
    // Single-run mode: one simulation, report to stdout, optional event log.
    miso::validate_experiment_config(cfg);
    miso::Policy policy =
        a.single_policy.empty() ? cfg.policies.front() : miso::policy_from_name(a.single_policy);
    miso::JobTrace trace;
    if (!cfg.trace_path.empty()) {
      trace = miso::load_trace(cfg.trace_path);
    } else {
      miso::TraceSpec spec = cfg.trace_spec;
      spec.seed = cfg.base_seed;
      trace = miso::generate_trace(spec);
    }
    miso::SimOptions opt;
    opt.policy = policy;
    opt.cluster_size = cfg.cluster_size;
    opt.overheads = cfg.overheads;
    opt.predictor = cfg.predictor;
    opt.predictor.rng_seed = cfg.base_seed;
    opt.reprofile_drift_threshold = cfg.reprofile_drift_threshold;
    if (policy == miso::Policy::optsta)
      opt.static_partition =
          miso::best_static_partition(trace, cfg.cluster_size, cfg.overheads).chosen;
    std::ofstream log_file;
    if (!a.event_log_path.empty()) {
      log_file.open(a.event_log_path);
      if (!log_file) throw miso::IoError("cannot open event log: " + a.event_log_path);
      opt.event_log = &log_file;
    }
    miso::MetricsReport report = miso::run_simulation(trace, opt);
    std::cout << miso::format_report(report);
    return 0;
  }

  miso::ExperimentResult res = miso::run_experiment(cfg);
  std::cout << "wrote " << cfg.csv_path << " (" << res.rows.size() << " rows) and "
            << cfg.json_path << "\n";
  return 0;
}

int run_optimize(const std::string& jobs_path) {
  std::ifstream in(jobs_path);
  if (!in) throw miso::IoError("cannot open profile file: " + jobs_path);
  std::vector<miso::JobSpeeds> jobs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    if (miso::detail::trim(line).empty()) continue;
    miso::JobProfile p = miso::parse_profile_record(miso::detail::trim(line), lineno);
    miso::JobSpeeds s;
    s.job_id = p.job_id;
    for (miso::Slice k : miso::kAllSlices)
      s.speeds[k] = miso::effective_speed(p.speed_table[k], k, p.mem_demand_gb, p.qos_min_slice);
    jobs.push_back(std::move(s));
  }
  if (jobs.empty()) throw miso::ConfigError("profile file has no jobs");
  auto result = miso::optimize_partition(jobs, miso::default_catalog());
  if (!result) throw miso::InfeasibleError("no valid partition can host these jobs");
  std::cout << "partition " << result->partition.name() << " objective "
            << miso::fmt_g(result->objective) << "\n";
  for (const auto& asg : result->assignments)
    std::cout << asg.job_id << " " << miso::slice_name(asg.slice) << " " << miso::fmt_g(asg.speed)
              << "\n";
  return 0;
}

struct GenTraceArgs {
  std::string out_path;
  miso::TraceSpec spec;
  std::string dist = "lognormal";
};

int run_gen_trace(const GenTraceArgs& a) {
  miso::TraceSpec spec = a.spec;
  if (a.dist == "lognormal") spec.duration_dist.kind = miso::DurationDist::Kind::lognormal;
  else if (a.dist == "fixed") spec.duration_dist.kind = miso::DurationDist::Kind::fixed;
  else if (a.dist == "uniform") spec.duration_dist.kind = miso::DurationDist::Kind::uniform;
  else throw miso::ConfigError("duration dist must be lognormal, fixed, or uniform");
  miso::JobTrace trace = miso::generate_trace(spec);
  miso::save_trace(trace, a.out_path);
  std::cout << "wrote " << a.out_path << " (" << trace.jobs.size() << " jobs)\n";
  return 0;
}

int run_optsta_search(const std::string& config_path, const std::string& out_path) {
  miso::ExperimentConfig cfg;
  if (!config_path.empty()) cfg = miso::parse_config_file(config_path);
  miso::StaticSearchResult res = miso::optsta_search(cfg);
  std::string text = "chosen " + res.chosen.name() + "\n";
  for (const auto& [cand, jct] : res.table)
    text += cand.name() + " " + miso::fmt_g(jct) + "\n";
  std::cout << text;
  if (!out_path.empty()) {
    std::ofstream out(out_path);
    if (!out) throw miso::IoError("cannot open output file: " + out_path);
    out << text;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIG-aware multi-tenant GPU scheduling simulator"};
  app.require_subcommand(1);

  SimulateArgs sim;
  CLI::App* simulate = app.add_subcommand("simulate", "run a policy-comparison experiment");
  simulate->add_option("--config", sim.config_path, "experiment config file");
  simulate->add_option("--trials", sim.trials, "number of trials");
  simulate->add_option("--cluster-size", sim.cluster_size, "GPUs in the cluster");
  simulate->add_option("--base-seed", sim.base_seed, "seed of trial 0");
  simulate->add_option("--workers", sim.workers, "worker threads (0 = auto)");
  simulate->add_option("--jobs", sim.job_count, "jobs per generated trace");
  simulate->add_option("--lambda", sim.lambda_s, "mean inter-arrival seconds");
  simulate->add_option("--max-duration", sim.max_duration_s, "duration cap seconds");
  simulate->add_option("--trace", sim.trace_path, "fixed trace file (skips generation)");
  simulate->add_option("--policies", sim.policies, "comma list: nopart,optsta,oracle,miso");
  simulate->add_option("--csv", sim.csv_path, "per-trial CSV output path");
  simulate->add_option("--json", sim.json_path, "summary JSON output path");
  simulate->add_option("--reconfig", sim.mig_reconfig_s, "MIG reconfiguration seconds");
  simulate->add_option("--ckpt", sim.checkpoint_restart_s, "checkpoint-restart seconds");
  simulate->add_option("--mps-window", sim.mps_window_s, "profiling window seconds per level");
  simulate->add_option("--interference", sim.interference, "MPS co-location factor (0,1]");
  simulate->add_option("--predictor-mode", sim.predictor_mode, "oracle or noisy");
  simulate->add_option("--target-mae", sim.target_mae, "predictor mean absolute error target");
  simulate->add_option("--sweep-param", sim.sweep_param,
                       "checkpoint_restart_s, target_mae, or lambda_s");
  simulate->add_option("--sweep-values", sim.sweep_values, "comma list of sweep values");
  simulate->add_option("--single", sim.single_policy,
                       "run one simulation of this policy and print its report");
  simulate->add_option("--event-log", sim.event_log_path,
                       "event log path (implies single-run mode)");

  std::string optimize_jobs;
  CLI::App* optimize = app.add_subcommand("optimize", "one-shot partition optimization");
  optimize->add_option("--jobs", optimize_jobs, "profile records, one job per line")->required();

  GenTraceArgs gen;
  CLI::App* gen_trace = app.add_subcommand("gen-trace", "generate a workload trace file");
  gen_trace->add_option("--out", gen.out_path, "output trace path")->required();
  gen_trace->add_option("--jobs", gen.spec.job_count, "number of jobs");
  gen_trace->add_option("--lambda", gen.spec.lambda_s, "mean inter-arrival seconds");
  gen_trace->add_option("--max-duration", gen.spec.max_duration_s, "duration cap seconds");
  gen_trace->add_option("--dist", gen.dist, "lognormal, fixed, or uniform");
  gen_trace->add_option("--sigma", gen.spec.duration_dist.sigma, "lognormal spread");
  gen_trace->add_option("--fixed", gen.spec.duration_dist.fixed_s, "fixed duration seconds");
  gen_trace->add_option("--lo", gen.spec.duration_dist.lo_s, "uniform lower bound");
  gen_trace->add_option("--hi", gen.spec.duration_dist.hi_s, "uniform upper bound");
  gen_trace->add_option("--seed", gen.spec.seed, "generation seed");

  std::string search_config, search_out;
  CLI::App* search = app.add_subcommand("optsta-search", "exhaustive static-partition search");
  search->add_option("--config", search_config, "experiment config file");
  search->add_option("--out", search_out, "also write the table to this file");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (simulate->parsed()) return run_simulate(sim, simulate);
    if (optimize->parsed()) return run_optimize(optimize_jobs);
    if (gen_trace->parsed()) return run_gen_trace(gen);
    if (search->parsed()) return run_optsta_search(search_config, search_out);
    return 2;
  } catch (const miso::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const miso::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return 3;
  } catch (const miso::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 3;
  } catch (const miso::InfeasibleError& e) {
    std::cerr << "infeasible: " << e.what() << "\n";
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
