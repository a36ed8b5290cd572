#pragma once

// Per-job performance ground truth, the MPS profiling matrix contract, the
// pluggable MPS-to-MIG predictor, and small-slice extrapolation.
//
// The neural predictor of the original system is out of scope; its effect is
// modeled by PredictorSpec: either a perfect oracle or a calibrated-error
// stand-in whose empirical mean absolute error converges to target_mae.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "miso/common.hpp"
#include "miso/topology.hpp"

namespace miso {

inline constexpr std::array<int, 3> kMpsLevels = {100, 50, 14};

inline int mps_level_index(int level) {
  for (int i = 0; i < 3; ++i)
    if (kMpsLevels[i] == level) return i;
  throw std::invalid_argument("mps level must be one of 100/50/14, got " + std::to_string(level));
}

// Smallest representable speed: tables live in (0,1], so clamps use this
// instead of 0.
inline constexpr double kSpeedFloor = 1e-9;

// ---------------------------------------------------------------------------
// JobProfile.
// ---------------------------------------------------------------------------

// Normalized speeds indexed by Slice (speed[k7g] is the anchor, exactly 1).
struct SpeedTable {
  std::array<double, kSliceKinds> v{};
  double operator[](Slice s) const { return v[slice_index(s)]; }
  double& operator[](Slice s) { return v[slice_index(s)]; }
  bool operator==(const SpeedTable& o) const { return v == o.v; }
};

struct JobProfile {
  std::string job_id;
  double base_duration_s = 0;         // execution time on exclusive 7g
  SpeedTable speed_table;             // ground-truth normalized speeds
  int mem_demand_gb = 0;
  std::optional<Slice> qos_min_slice; // user-specified minimum slice
  std::array<double, 3> mps_rates{};  // last measured rate per knob level
  bool is_dummy = false;              // profiling pad, never scheduled
  int instance_count = 1;             // multi-instance spawn count (API-only)
};

// Effective speed as consumers see it: zero when the slice cannot satisfy the
// job's memory demand or QoS minimum.
inline double effective_speed(double speed, Slice s, int mem_demand_gb,
                              const std::optional<Slice>& qos_min_slice) {
  if (memory_gb(s) < mem_demand_gb) return 0.0;
  if (qos_min_slice && gpc_count(s) < gpc_count(*qos_min_slice)) return 0.0;
  return speed;
}

inline void validate_profile(const JobProfile& p, int lineno = 0) {
  auto fail = [&](const std::string& msg) -> void {
    if (lineno > 0) throw ParseError("job '" + p.job_id + "': " + msg, lineno);
    throw std::invalid_argument("job '" + p.job_id + "': " + msg);
  };
  if (p.job_id.empty()) fail("empty job id");
  if (p.job_id.find(',') != std::string::npos) fail("job id contains a comma");
  if (!(p.base_duration_s > 0)) fail("base duration must be positive");
  if (!p.is_dummy && (p.mem_demand_gb <= 0 || p.mem_demand_gb > memory_gb(Slice::k7g)))
    fail("memory demand must be in (0, 40] GB");
  for (Slice s : kAllSlices) {
    double f = p.speed_table[s];
    if (!(f > 0.0 && f <= 1.0)) fail(std::string("speed on ") + slice_name(s) + " outside (0,1]");
  }
  if (p.speed_table[Slice::k7g] != 1.0) fail("speed on 7g must be exactly 1");
  for (int i = 1; i < kSliceKinds; ++i)
    if (p.speed_table.v[i] < p.speed_table.v[i - 1]) fail("speed table not monotone in gpc count");
  for (double r : p.mps_rates)
    if (!(r > 0.0 && r <= 1.0)) fail("mps rate outside (0,1]");
  if (p.instance_count < 1) fail("instance count must be >= 1");
}

// ---------------------------------------------------------------------------
// Dummy padding.
// ---------------------------------------------------------------------------

// Lightweight pad workload: insensitive to resources (constant speed 1),
// negligible memory. Only ever a matrix column, never a scheduled job.
inline JobProfile make_dummy_profile(int index) {
  JobProfile d;
  d.job_id = "dummy-" + std::to_string(index);
  d.base_duration_s = 1.0;
  for (Slice s : kAllSlices) d.speed_table[s] = 1.0;
  d.mem_demand_gb = 0;
  d.mps_rates = {1.0, 1.0, 1.0};
  d.is_dummy = true;
  return d;
}

inline std::vector<JobProfile> pad_to_seven(const std::vector<JobProfile>& jobs) {
  if (jobs.empty() || jobs.size() > 7)
    throw std::invalid_argument("pad_to_seven needs 1..7 jobs, got " + std::to_string(jobs.size()));
  std::vector<JobProfile> out = jobs;
  int k = 0;
  while (out.size() < 7) out.push_back(make_dummy_profile(k++));
  return out;
}

inline std::vector<JobProfile> drop_dummies(const std::vector<JobProfile>& jobs) {
  std::vector<JobProfile> out;
  for (const auto& j : jobs)
    if (!j.is_dummy) out.push_back(j);
  return out;
}

// ---------------------------------------------------------------------------
// ProfileMatrix: the 3x7 per-column-normalized speed matrices.
// ---------------------------------------------------------------------------

struct ProfileMatrix {
  enum class Kind { mps, mig };
  Kind kind = Kind::mps;
  // mps rows: knob levels 100/50/14. mig rows: slices 7g/4g/3g.
  std::array<std::array<double, 7>, 3> values{};
  std::array<std::string, 7> job_ids;
  std::array<bool, 7> dummy{};
};

inline void validate_matrix(const ProfileMatrix& m) {
  for (int c = 0; c < 7; ++c) {
    double mx = 0;
    for (int r = 0; r < 3; ++r) {
      double v = m.values[r][c];
      if (!(v > 0.0 && v <= 1.0))
        throw std::invalid_argument("matrix entry outside (0,1] in column " + std::to_string(c));
      mx = std::max(mx, v);
    }
    if (std::abs(mx - 1.0) > 1e-9)
      throw std::invalid_argument("column " + std::to_string(c) + " max is not 1");
  }
}

// Builds the MPS matrix from measured per-level rates (columns already padded
// to 7 profiles); each column is normalized so its maximum is exactly 1.
inline ProfileMatrix build_mps_matrix(const std::vector<JobProfile>& padded) {
  if (padded.size() != 7) throw std::invalid_argument("mps matrix needs exactly 7 columns");
  ProfileMatrix m;
  m.kind = ProfileMatrix::Kind::mps;
  for (int c = 0; c < 7; ++c) {
    m.job_ids[c] = padded[c].job_id;
    m.dummy[c] = padded[c].is_dummy;
    double mx = 0;
    for (int r = 0; r < 3; ++r) mx = std::max(mx, padded[c].mps_rates[r]);
    if (!(mx > 0)) throw std::invalid_argument("column " + std::to_string(c) + " has no positive rate");
    for (int r = 0; r < 3; ++r) {
      double v = padded[c].mps_rates[r] / mx;
      m.values[r][c] = std::clamp(v, kSpeedFloor, 1.0);
    }
  }
  return m;
}

// ---------------------------------------------------------------------------
// Predictor.
// ---------------------------------------------------------------------------

struct PredictorSpec {
  enum class Mode { oracle, noisy };
  Mode mode = Mode::oracle;
  double target_mae = 0.017;
  uint64_t rng_seed = 0;
};

inline void validate_predictor_spec(const PredictorSpec& s) {
  if (!(s.target_mae >= 0.0 && s.target_mae <= 0.5))
    throw std::invalid_argument("target_mae must be in [0, 0.5]");
}

namespace detail {

// One noisy entry. The magnitude is half-normal with sigma chosen so
// E|noise| = target_mae; the sign is symmetric in the interior and forced
// inward when one direction would leave (0,1], which preserves |error| and
// keeps the empirical MAE on target after clamping. Only when the magnitude
// exceeds both headrooms (vanishingly rare at our targets) does a clamp
// shrink the error.
inline double perturb_speed(double truth, double target_mae, uint64_t entry_seed) {
  if (target_mae <= 0.0) return truth;
  DetRng rng(entry_seed);
  const double sigma = target_mae * std::sqrt(3.14159265358979323846 / 2.0);
  const double mag = std::abs(rng.normal01()) * sigma;
  const bool up_ok = truth + mag <= 1.0;
  const bool dn_ok = truth - mag >= kSpeedFloor;
  const bool coin = rng.uniform01() < 0.5;
  if (up_ok && dn_ok) return coin ? truth + mag : truth - mag;
  if (up_ok) return truth + mag;
  if (dn_ok) return truth - mag;
  return (1.0 - truth >= truth - kSpeedFloor) ? 1.0 : kSpeedFloor;
}

}  // namespace detail

// Translates the MPS matrix into predicted MIG speeds over (7g, 4g, 3g).
// Oracle mode returns the true rows; noisy mode perturbs the 4g/3g entries
// (the 7g row is the per-column normalization anchor, exactly 1 in truth and
// prediction) and re-anchors each column's max to 1. Deterministic given
// (rng_seed, call_nonce); distinct nonces decorrelate repeated calls.
inline ProfileMatrix predict_mig_speeds(const ProfileMatrix& mps,
                                        const std::vector<JobProfile>& truth,
                                        const PredictorSpec& spec, uint64_t call_nonce = 0) {
  if (mps.kind != ProfileMatrix::Kind::mps)
    throw std::invalid_argument("predict_mig_speeds expects an mps-kind matrix");
  validate_predictor_spec(spec);
  ProfileMatrix out;
  out.kind = ProfileMatrix::Kind::mig;
  out.job_ids = mps.job_ids;
  out.dummy = mps.dummy;
  const std::array<Slice, 3> row_slices = {Slice::k7g, Slice::k4g, Slice::k3g};
  size_t t = 0;
  for (int c = 0; c < 7; ++c) {
    if (mps.dummy[c]) {
      for (int r = 0; r < 3; ++r) out.values[r][c] = 1.0;
      continue;
    }
    if (t >= truth.size() || truth[t].job_id != mps.job_ids[c])
      throw std::invalid_argument("truth profiles misaligned with mps matrix columns");
    const JobProfile& job = truth[t++];
    for (int r = 0; r < 3; ++r) {
      double tv = job.speed_table[row_slices[r]];
      if (spec.mode == PredictorSpec::Mode::oracle || r == 0) {
        out.values[r][c] = tv;
      } else {
        uint64_t entry_seed = mix_seed(spec.rng_seed, call_nonce, static_cast<uint64_t>(c) * 8 + r);
        out.values[r][c] = detail::perturb_speed(tv, spec.target_mae, entry_seed);
      }
    }
    // Re-anchor: column max must be 1. Rows are clamped to <= 1 and row 0
    // (7g) is exactly 1, so dividing by the max is exact in oracle mode and
    // a no-op unless numeric drift occurs.
    double mx = std::max({out.values[0][c], out.values[1][c], out.values[2][c]});
    for (int r = 0; r < 3; ++r)
      out.values[r][c] = std::clamp(out.values[r][c] / mx, kSpeedFloor, 1.0);
  }
  if (t != truth.size())
    throw std::invalid_argument("truth profiles misaligned with mps matrix columns");
  return out;
}

// ---------------------------------------------------------------------------
// Small-slice extrapolation: linear map (f7, f4, f3, 1) -> (f2, f1).
// ---------------------------------------------------------------------------

struct LinearMap {
  bool fitted = false;
  // Weights over (f7, f4, f3, 1). f7 is identically 1 in any normalized
  // table (collinear with the intercept), so the fit runs on the reduced
  // basis (f4, f3, 1) and reports w[0] = 0.
  std::array<double, 4> w_2g{};
  std::array<double, 4> w_1g{};

  double predict_2g(double f7, double f4, double f3) const {
    return w_2g[0] * f7 + w_2g[1] * f4 + w_2g[2] * f3 + w_2g[3];
  }
  double predict_1g(double f7, double f4, double f3) const {
    return w_1g[0] * f7 + w_1g[1] * f4 + w_1g[2] * f3 + w_1g[3];
  }
};

namespace detail {

// Eigen-decomposition of a symmetric 3x3 matrix by cyclic Jacobi rotations.
// Returns eigenvalues in `vals` and matching orthonormal columns in `vecs`.
inline void jacobi_eigen3(std::array<std::array<double, 3>, 3> a, std::array<double, 3>& vals,
                          std::array<std::array<double, 3>, 3>& vecs) {
  vecs = {{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}}};
  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::abs(a[0][1]) + std::abs(a[0][2]) + std::abs(a[1][2]);
    if (off < 1e-300) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        double sgn = theta >= 0 ? 1.0 : -1.0;
        double tgt = sgn / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        double c = 1.0 / std::sqrt(tgt * tgt + 1.0);
        double s = tgt * c;
        for (int k = 0; k < 3; ++k) {
          double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {
          double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        for (int k = 0; k < 3; ++k) {
          double vkp = vecs[k][p], vkq = vecs[k][q];
          vecs[k][p] = c * vkp - s * vkq;
          vecs[k][q] = s * vkp + c * vkq;
        }
      }
    }
  }
  for (int i = 0; i < 3; ++i) vals[i] = a[i][i];
}

// Minimum-norm least squares for the 3-feature design via the pseudo-inverse
// of the normal matrix: w = pinv(A^T A) A^T y.
inline std::array<double, 3> solve_min_norm(const std::array<std::array<double, 3>, 3>& ata,
                                            const std::array<double, 3>& aty) {
  std::array<double, 3> vals;
  std::array<std::array<double, 3>, 3> vecs;
  jacobi_eigen3(ata, vals, vecs);
  double lmax = std::max({std::abs(vals[0]), std::abs(vals[1]), std::abs(vals[2])});
  double tol = lmax * 1e-12;
  std::array<double, 3> w{};
  for (int e = 0; e < 3; ++e) {
    if (std::abs(vals[e]) <= tol) continue;  // null direction: min-norm drops it
    double proj = 0;
    for (int k = 0; k < 3; ++k) proj += vecs[k][e] * aty[k];
    proj /= vals[e];
    for (int k = 0; k < 3; ++k) w[k] += vecs[k][e] * proj;
  }
  return w;
}

}  // namespace detail

// Least-squares fit of the 2g/1g speeds from (f7, f4, f3, 1) over a training
// corpus with known small-slice truth. Rank deficiency is handled by the
// minimum-norm solution (the f7 column is always collinear with the
// intercept); only an undersized training set is an error.
inline LinearMap fit_small_slice_model(const std::vector<JobProfile>& training) {
  if (training.size() < 10)
    throw FitError("small-slice fit needs at least 10 training profiles, got " +
                   std::to_string(training.size()));
  std::array<std::array<double, 3>, 3> ata{};
  std::array<double, 3> aty2{}, aty1{};
  for (const auto& p : training) {
    std::array<double, 3> x = {p.speed_table[Slice::k4g], p.speed_table[Slice::k3g], 1.0};
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) ata[i][j] += x[i] * x[j];
      aty2[i] += x[i] * p.speed_table[Slice::k2g];
      aty1[i] += x[i] * p.speed_table[Slice::k1g];
    }
  }
  std::array<double, 3> w2 = detail::solve_min_norm(ata, aty2);
  std::array<double, 3> w1 = detail::solve_min_norm(ata, aty1);
  LinearMap m;
  m.fitted = true;
  m.w_2g = {0.0, w2[0], w2[1], w2[2]};
  m.w_1g = {0.0, w1[0], w1[1], w1[2]};
  return m;
}

struct SmallSliceSpeeds {
  double f2 = 0;
  double f1 = 0;
};

// Predicted 2g/1g speeds per matrix column, clamped into (0, f3] with
// monotonicity enforced (f1 <= f2 <= f3).
inline std::map<std::string, SmallSliceSpeeds> extrapolate_small_slices(const ProfileMatrix& mig,
                                                                        const LinearMap& model) {
  if (mig.kind != ProfileMatrix::Kind::mig)
    throw std::invalid_argument("extrapolate_small_slices expects a mig-kind matrix");
  if (!model.fitted) throw std::logic_error("small-slice model is not fitted");
  std::map<std::string, SmallSliceSpeeds> out;
  for (int c = 0; c < 7; ++c) {
    double f7 = mig.values[0][c], f4 = mig.values[1][c], f3 = mig.values[2][c];
    SmallSliceSpeeds s;
    s.f2 = std::clamp(model.predict_2g(f7, f4, f3), kSpeedFloor, f3);
    s.f1 = std::clamp(model.predict_1g(f7, f4, f3), kSpeedFloor, s.f2);
    out[mig.job_ids[c]] = s;
  }
  return out;
}

// ---------------------------------------------------------------------------
// MPS rate stand-in.
// ---------------------------------------------------------------------------

// Piecewise-linear interpolation of a speed table at a fractional gpc share.
inline double interp_speed(const SpeedTable& t, double gpc) {
  static constexpr std::array<double, kSliceKinds> knots = {1, 2, 3, 4, 7};
  if (gpc <= knots.front()) return t.v.front();
  if (gpc >= knots.back()) return t.v.back();
  for (int i = 1; i < kSliceKinds; ++i) {
    if (gpc <= knots[i]) {
      double w = (gpc - knots[i - 1]) / (knots[i] - knots[i - 1]);
      return t.v[i - 1] + w * (t.v[i] - t.v[i - 1]);
    }
  }
  return t.v.back();
}

// Stand-in for real MPS measurement: each job runs at `interference` times
// its speed at the gpc share min(level%, 100/|jobs|%) of 7 GPCs. Rates are
// also written back into each profile's mps_rates slot for the level.
inline std::map<std::string, double> simulate_mps_rates(std::vector<JobProfile*>& jobs, int level,
                                                        double interference) {
  int row = mps_level_index(level);
  if (!(interference > 0.0 && interference <= 1.0))
    throw std::invalid_argument("interference must be in (0, 1]");
  if (jobs.empty()) throw std::invalid_argument("no jobs to rate");
  double share_pct = std::min(static_cast<double>(level), 100.0 / static_cast<double>(jobs.size()));
  double gpc = std::clamp(share_pct / 100.0 * 7.0, 1.0, 7.0);
  std::map<std::string, double> out;
  for (JobProfile* j : jobs) {
    double rate = interference * interp_speed(j->speed_table, gpc);
    rate = std::clamp(rate, kSpeedFloor, 1.0);
    j->mps_rates[row] = rate;
    out[j->job_id] = rate;
  }
  return out;
}

inline std::map<std::string, double> simulate_mps_rates(std::vector<JobProfile>& jobs, int level,
                                                        double interference) {
  std::vector<JobProfile*> ptrs;
  ptrs.reserve(jobs.size());
  for (auto& j : jobs) ptrs.push_back(&j);
  return simulate_mps_rates(ptrs, level, interference);
}

// ---------------------------------------------------------------------------
// Synthetic ground truth.
// ---------------------------------------------------------------------------

// Power-law speed table f(g) = (g/7)^alpha with alpha ~ U[0.1, 1.0], +-3%
// multiplicative jitter, re-anchored to f(7g) = 1 and monotone-repaired.
// Spans memory-bound (alpha near 0.1) to compute-bound (alpha near 1) jobs.
// Memory demand is drawn from {5, 10, 20} GB with weights {4,3,2}/9 — the
// 40 GB class is excluded (it deadlocks every static partition under strict
// FCFS), and the remaining classes keep their relative proportions.
inline JobProfile make_synthetic_profile(DetRng& rng, const std::string& job_id) {
  JobProfile p;
  p.job_id = job_id;
  p.base_duration_s = 1.0;  // callers set the real duration
  double alpha = rng.uniform(0.1, 1.0);
  for (Slice s : kAllSlices) {
    double base = std::pow(gpc_count(s) / 7.0, alpha);
    p.speed_table[s] = base * (1.0 + rng.uniform(-0.03, 0.03));
  }
  double anchor = p.speed_table[Slice::k7g];
  for (Slice s : kAllSlices) p.speed_table[s] /= anchor;
  p.speed_table[Slice::k7g] = 1.0;
  for (int i = kSliceKinds - 2; i >= 0; --i)
    p.speed_table.v[i] = std::clamp(p.speed_table.v[i], 1e-6, p.speed_table.v[i + 1]);
  double u = rng.uniform01();
  p.mem_demand_gb = u < 4.0 / 9.0 ? 5 : (u < 7.0 / 9.0 ? 10 : 20);
  // Placeholder solo-run rates (interference-free); the simulator re-measures
  // in co-location context.
  p.mps_rates[0] = 1.0;
  p.mps_rates[1] = std::clamp(interp_speed(p.speed_table, 3.5), kSpeedFloor, 1.0);
  p.mps_rates[2] = p.speed_table[Slice::k1g];
  return p;
}

// Fixed-seed corpus used to train the small-slice regression (the real system
// trains its regressor offline once; every simulation shares one model).
inline std::vector<JobProfile> make_training_corpus(int n, uint64_t seed) {
  std::vector<JobProfile> out;
  out.reserve(n);
  DetRng rng(mix_seed(seed, 0x7261696eull));  // "rain" tag: training stream
  for (int i = 0; i < n; ++i) out.push_back(make_synthetic_profile(rng, "train-" + std::to_string(i)));
  return out;
}

// ---------------------------------------------------------------------------
// Profile records: one line per job, comma-separated.
// job_id, base_duration_s, mem_demand_gb, qos_min_gpc (0 = none),
// f7, f4, f3, f2, f1, mps100, mps50, mps14
// ---------------------------------------------------------------------------

// The 11 fields after the id: base, mem, qos, five speeds, three mps rates.
inline std::string format_profile_body(const JobProfile& p) {
  std::string out = fmt_exact(p.base_duration_s);
  out += ',' + std::to_string(p.mem_demand_gb);
  out += ',' + std::to_string(p.qos_min_slice ? gpc_count(*p.qos_min_slice) : 0);
  for (int i = kSliceKinds - 1; i >= 0; --i) out += ',' + fmt_exact(p.speed_table.v[i]);
  for (int r = 0; r < 3; ++r) out += ',' + fmt_exact(p.mps_rates[r]);
  return out;
}

inline std::string format_profile_record(const JobProfile& p) {
  return p.job_id + ',' + format_profile_body(p);
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_double(const std::string& tok, const char* what, int lineno) {
  try {
    size_t used = 0;
    double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " '" + tok + "'", lineno);
  }
}

inline int parse_int(const std::string& tok, const char* what, int lineno) {
  try {
    size_t used = 0;
    int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError(std::string("bad ") + what + " '" + tok + "'", lineno);
  }
}

}  // namespace detail

// Parses the 11 post-id profile fields starting at tokens[offset].
inline JobProfile parse_profile_body(const std::string& job_id,
                                     const std::vector<std::string>& tokens, size_t offset,
                                     int lineno) {
  if (tokens.size() != offset + 11)
    throw ParseError("expected " + std::to_string(offset + 11) + " fields, got " +
                         std::to_string(tokens.size()),
                     lineno);
  JobProfile p;
  size_t i = offset;
  p.job_id = job_id;
  p.base_duration_s = detail::parse_double(tokens[i++], "duration", lineno);
  p.mem_demand_gb = detail::parse_int(tokens[i++], "memory demand", lineno);
  int qos_gpc = detail::parse_int(tokens[i++], "qos gpc", lineno);
  if (qos_gpc != 0) {
    auto s = slice_from_gpc(qos_gpc);
    if (!s) throw ParseError("qos gpc " + std::to_string(qos_gpc) + " is not a slice size", lineno);
    p.qos_min_slice = *s;
  }
  for (int k = kSliceKinds - 1; k >= 0; --k)
    p.speed_table.v[k] = detail::parse_double(tokens[i++], "speed", lineno);
  for (int r = 0; r < 3; ++r) p.mps_rates[r] = detail::parse_double(tokens[i++], "mps rate", lineno);
  validate_profile(p, lineno);
  return p;
}

inline JobProfile parse_profile_record(const std::string& line, int lineno = 0) {
  auto tokens = detail::split_csv(line);
  if (tokens.empty() || tokens[0].empty()) throw ParseError("missing job id", lineno);
  return parse_profile_body(tokens[0], tokens, 1, lineno);
}

}  // namespace miso
