#pragma once

// Workload generation and trace files: Poisson arrivals, capped log-normal
// durations, synthetic per-job profiles, and a line-oriented trace format
// with exact floating-point round-trip.

#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "miso/common.hpp"
#include "miso/profiles.hpp"

namespace miso {

struct DurationDist {
  enum class Kind { lognormal, fixed, uniform };
  Kind kind = Kind::lognormal;
  double sigma = 1.5;     // lognormal: log-space spread
  double fixed_s = 600;   // fixed: every job's duration
  double lo_s = 60;       // uniform: bounds
  double hi_s = 7200;
};

struct TraceSpec {
  int job_count = 100;
  double lambda_s = 60;         // mean inter-arrival gap
  double max_duration_s = 7200; // hard duration cap; also the lognormal P90 target
  DurationDist duration_dist;
  uint64_t seed = 0;
};

inline void validate_trace_spec(const TraceSpec& s) {
  if (s.job_count < 1) throw std::invalid_argument("job_count must be >= 1");
  if (!(s.lambda_s > 0)) throw std::invalid_argument("lambda_s must be positive");
  if (!(s.max_duration_s > 0)) throw std::invalid_argument("max_duration_s must be positive");
  if (s.duration_dist.kind == DurationDist::Kind::lognormal && !(s.duration_dist.sigma > 0))
    throw std::invalid_argument("lognormal sigma must be positive");
  if (s.duration_dist.kind == DurationDist::Kind::uniform &&
      !(s.duration_dist.lo_s > 0 && s.duration_dist.lo_s <= s.duration_dist.hi_s))
    throw std::invalid_argument("uniform bounds must satisfy 0 < lo_s <= hi_s");
}

struct TraceJob {
  JobProfile profile;
  double arrival_s = 0;
  bool operator==(const TraceJob& o) const {
    return profile.job_id == o.profile.job_id && arrival_s == o.arrival_s &&
           profile.base_duration_s == o.profile.base_duration_s &&
           profile.speed_table == o.profile.speed_table &&
           profile.mem_demand_gb == o.profile.mem_demand_gb &&
           profile.qos_min_slice == o.profile.qos_min_slice &&
           profile.mps_rates == o.profile.mps_rates;
  }
};

struct JobTrace {
  TraceSpec spec;
  std::vector<TraceJob> jobs;
};

// Standard normal 90th percentile; places the untruncated lognormal P90 at
// the cap so the capped distribution keeps its 90th percentile there.
inline constexpr double kZ90 = 1.2815515655446004;

namespace detail {

inline double draw_duration(const TraceSpec& spec, DetRng& rng) {
  const DurationDist& d = spec.duration_dist;
  double v = 0;
  switch (d.kind) {
    case DurationDist::Kind::lognormal: {
      double mu = std::log(spec.max_duration_s) - kZ90 * d.sigma;
      v = rng.lognormal(mu, d.sigma);
      break;
    }
    case DurationDist::Kind::fixed:
      v = d.fixed_s;
      break;
    case DurationDist::Kind::uniform:
      v = rng.uniform(d.lo_s, d.hi_s);
      break;
  }
  return std::clamp(v, 1.0, spec.max_duration_s);
}

}  // namespace detail

// First arrival at t=0, then i.i.d. exponential gaps with mean lambda_s.
// Arrivals and profiles use split streams, and gaps are drawn as unit
// exponentials scaled by lambda_s, so traces generated from the same seed at
// different lambda values share identical job mixes and durations.
inline JobTrace generate_trace(const TraceSpec& spec) {
  validate_trace_spec(spec);
  DetRng rng_arrivals(mix_seed(spec.seed, 0x41));  // 'A'
  DetRng rng_profiles(mix_seed(spec.seed, 0x50));  // 'P'
  JobTrace trace;
  trace.spec = spec;
  trace.jobs.reserve(spec.job_count);
  double arrival = 0;
  for (int i = 0; i < spec.job_count; ++i) {
    if (i > 0) arrival += spec.lambda_s * rng_arrivals.exponential(1.0);
    TraceJob job;
    job.arrival_s = arrival;
    job.profile = make_synthetic_profile(rng_profiles, "j" + std::to_string(i));
    job.profile.base_duration_s = detail::draw_duration(spec, rng_profiles);
    trace.jobs.push_back(std::move(job));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Trace files.
// Line 1: magic+version. Line 2: generation spec. Line 3: column header.
// Then one record per job. All doubles use round-trip-exact formatting.
// ---------------------------------------------------------------------------

inline constexpr const char* kTraceMagic = "miso-trace v1";
inline constexpr const char* kTraceHeader =
    "job_id,arrival_s,base_duration_s,mem_demand_gb,qos_min_gpc,"
    "f7,f4,f3,f2,f1,mps100,mps50,mps14";

namespace detail {

inline const char* dist_kind_name(DurationDist::Kind k) {
  switch (k) {
    case DurationDist::Kind::lognormal: return "lognormal";
    case DurationDist::Kind::fixed: return "fixed";
    case DurationDist::Kind::uniform: return "uniform";
  }
  return "lognormal";
}

inline DurationDist::Kind dist_kind_from(const std::string& name, int lineno) {
  if (name == "lognormal") return DurationDist::Kind::lognormal;
  if (name == "fixed") return DurationDist::Kind::fixed;
  if (name == "uniform") return DurationDist::Kind::uniform;
  throw ParseError("unknown duration distribution '" + name + "'", lineno);
}

}  // namespace detail

inline void save_trace(const JobTrace& trace, std::ostream& out) {
  const TraceSpec& s = trace.spec;
  out << kTraceMagic << '\n';
  out << "spec job_count=" << s.job_count << " lambda_s=" << fmt_exact(s.lambda_s)
      << " max_duration_s=" << fmt_exact(s.max_duration_s)
      << " dist=" << detail::dist_kind_name(s.duration_dist.kind)
      << " sigma=" << fmt_exact(s.duration_dist.sigma)
      << " fixed_s=" << fmt_exact(s.duration_dist.fixed_s)
      << " lo_s=" << fmt_exact(s.duration_dist.lo_s)
      << " hi_s=" << fmt_exact(s.duration_dist.hi_s) << " seed=" << s.seed << '\n';
  out << kTraceHeader << '\n';
  for (const auto& j : trace.jobs)
    out << j.profile.job_id << ',' << fmt_exact(j.arrival_s) << ','
        << format_profile_body(j.profile) << '\n';
  if (!out) throw IoError("trace write failed");
}

inline void save_trace(const JobTrace& trace, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open trace file for writing: " + path);
  save_trace(trace, out);
}

inline JobTrace load_trace(std::istream& in) {
  std::string line;
  int lineno = 0;
  auto next_line = [&]() -> bool {
    if (!std::getline(in, line)) return false;
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return true;
  };

  if (!next_line() || line != kTraceMagic)
    throw ParseError(std::string("expected '") + kTraceMagic + "'", 1);

  if (!next_line() || line.rfind("spec ", 0) != 0) throw ParseError("expected spec line", 2);
  JobTrace trace;
  TraceSpec& s = trace.spec;
  std::istringstream spec_stream(line.substr(5));
  std::string kv;
  while (spec_stream >> kv) {
    auto eq = kv.find('=');
    if (eq == std::string::npos) throw ParseError("bad spec token '" + kv + "'", lineno);
    std::string key = kv.substr(0, eq), val = kv.substr(eq + 1);
    if (key == "job_count") s.job_count = detail::parse_int(val, "job_count", lineno);
    else if (key == "lambda_s") s.lambda_s = detail::parse_double(val, "lambda_s", lineno);
    else if (key == "max_duration_s") s.max_duration_s = detail::parse_double(val, "max_duration_s", lineno);
    else if (key == "dist") s.duration_dist.kind = detail::dist_kind_from(val, lineno);
    else if (key == "sigma") s.duration_dist.sigma = detail::parse_double(val, "sigma", lineno);
    else if (key == "fixed_s") s.duration_dist.fixed_s = detail::parse_double(val, "fixed_s", lineno);
    else if (key == "lo_s") s.duration_dist.lo_s = detail::parse_double(val, "lo_s", lineno);
    else if (key == "hi_s") s.duration_dist.hi_s = detail::parse_double(val, "hi_s", lineno);
    else if (key == "seed") s.seed = static_cast<uint64_t>(std::stoull(val));
    else throw ParseError("unknown spec key '" + key + "'", lineno);
  }
  try {
    validate_trace_spec(s);
  } catch (const std::invalid_argument& e) {
    throw ParseError(e.what(), lineno);
  }

  if (!next_line()) throw ParseError("expected column header", lineno + 1);
  if (line != kTraceHeader) throw ParseError("expected column header", lineno);

  double prev_arrival = 0;
  std::set<std::string> seen_ids;
  while (next_line()) {
    if (line.empty()) continue;
    auto tokens = detail::split_csv(line);
    if (tokens.size() != 13)
      throw ParseError("expected 13 fields, got " + std::to_string(tokens.size()), lineno);
    TraceJob job;
    job.arrival_s = detail::parse_double(tokens[1], "arrival", lineno);
    job.profile = parse_profile_body(tokens[0], tokens, 2, lineno);
    if (!seen_ids.insert(job.profile.job_id).second)
      throw ParseError("duplicate job id '" + job.profile.job_id + "'", lineno);
    if (trace.jobs.empty()) {
      if (job.arrival_s != 0) throw ParseError("first arrival must be at t=0", lineno);
    } else if (job.arrival_s < prev_arrival) {
      throw ParseError("arrival time regresses", lineno);
    }
    if (job.profile.base_duration_s > s.max_duration_s)
      throw ParseError("duration exceeds max_duration_s cap", lineno);
    prev_arrival = job.arrival_s;
    trace.jobs.push_back(std::move(job));
  }
  if (static_cast<int>(trace.jobs.size()) != s.job_count)
    throw ParseError("spec says " + std::to_string(s.job_count) + " jobs, file has " +
                         std::to_string(trace.jobs.size()),
                     lineno);
  return trace;
}

inline JobTrace load_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open trace file: " + path);
  return load_trace(in);
}

}  // namespace miso
