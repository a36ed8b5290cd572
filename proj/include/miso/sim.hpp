#pragma once

// Deterministic discrete-event simulator of a MIG-capable GPU cluster running
// a job trace under one of four policies:
//
//   nopart  - FCFS, one whole GPU per job, no partitioning.
//   optsta  - all GPUs fixed at one static partition; FCFS into the largest
//             free feasible slice; small-to-large migration on availability.
//   miso    - MPS profiling on admission, predicted slice speedups, per-GPU
//             partition optimization on admission and completion.
//   oracle  - miso with the profiling phase skipped entirely and ground-truth
//             speed tables fed to the optimizer; repartition costs remain.
//
// The clock is integer microseconds: event ties are exact, logs are
// byte-stable, and per-job phase accounting closes exactly against JCT.
// Work progress integrates in double precision (rates are normalized
// work-seconds per second), so the only work-conservation slack is the
// sub-microsecond rounding of completion times, far below the 1e-6 relative
// tolerance asserted at every completion.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "miso/common.hpp"
#include "miso/optimizer.hpp"
#include "miso/profiles.hpp"
#include "miso/topology.hpp"
#include "miso/workload.hpp"

namespace miso {

enum class Policy { nopart, optsta, oracle, miso };

inline const char* policy_label(Policy p) {
  switch (p) {
    case Policy::nopart: return "nopart";
    case Policy::optsta: return "optsta";
    case Policy::oracle: return "oracle";
    case Policy::miso: return "miso";
  }
  return "?";
}

inline Policy policy_from_name(const std::string& name) {
  if (name == "nopart") return Policy::nopart;
  if (name == "optsta") return Policy::optsta;
  if (name == "oracle") return Policy::oracle;
  if (name == "miso") return Policy::miso;
  throw ConfigError("unknown policy '" + name + "'");
}

struct OverheadSpec {
  double mig_reconfig_s = 4;       // one MIG reconfiguration
  double checkpoint_restart_s = 30;  // checkpoint+restart a job (paid in parallel)
  double mps_window_s = 10;        // one profiling window per knob level
  double interference = 0.8;       // MPS co-location efficiency factor
};

inline void validate_overheads(const OverheadSpec& o) {
  if (o.mig_reconfig_s < 0 || o.checkpoint_restart_s < 0 || o.mps_window_s < 0)
    throw std::invalid_argument("overhead durations must be >= 0");
  if (!(o.interference > 0.0 && o.interference <= 1.0))
    throw std::invalid_argument("interference must be in (0, 1]");
}

// admission_retry is a legal event kind but the engine retries queued jobs
// inline after every processed event, which subsumes explicit retry events.
enum class EventKind { arrival, mps_phase_end, reconfig_done, checkpoint_done, completion,
                       admission_retry };

struct SimOptions {
  Policy policy = Policy::miso;
  int cluster_size = 8;
  OverheadSpec overheads;
  PredictorSpec predictor;
  std::optional<PartitionConfig> static_partition;  // required for optsta
  PartitionCatalog catalog = default_catalog();
  LinearMap small_slice_model;   // unfitted -> a shared default model is used
  bool check_invariants = true;  // throw SimInvariantError on violations
  std::ostream* event_log = nullptr;
  // When > 0 (miso only): at a completion, if any survivor's observed true
  // rate differs relatively from its cached estimate by more than this, the
  // GPU is re-profiled before re-optimizing. Off by default.
  double reprofile_drift_threshold = 0;
  uint64_t max_events = 100000000;  // runaway guard
};

struct JobMetrics {
  std::string job_id;
  double arrival_s = 0;
  double completion_s = -1;  // -1 when the job never finished
  double jct_s = std::numeric_limits<double>::infinity();
  double queue_s = 0, mps_s = 0, checkpoint_s = 0, run_s = 0, idle_s = 0;
};

struct MetricsReport {
  std::string policy;
  uint64_t seed = 0;
  bool completed = false;
  int job_count = 0;
  int completed_count = 0;
  double avg_jct_s = std::numeric_limits<double>::infinity();
  double makespan_s = std::numeric_limits<double>::infinity();
  double stp_time_avg = 0;
  std::vector<double> jct_sorted;                      // completed jobs, ascending
  std::vector<JobMetrics> per_job;                     // trace order, spawns appended
  double queue_frac = 0, mps_frac = 0, checkpoint_frac = 0, run_frac = 0, idle_frac = 0;
  std::vector<std::pair<double, double>> stp_series;   // (t_s, stp) at changes
  int repartitions = 0;
  int migrations = 0;
  int mps_sessions = 0;
};

// Aggregate system throughput over currently running jobs: sum of q_i / p_i.
inline double compute_stp(const std::vector<std::pair<double, double>>& running) {
  double s = 0;
  for (const auto& [q, p] : running) {
    if (!(p > 0)) throw std::invalid_argument("solo speed p must be positive");
    s += q / p;
  }
  return s;
}

namespace detail {

inline int64_t us_from_s(double s) { return static_cast<int64_t>(std::llround(s * 1e6)); }
inline double s_from_us(int64_t us) { return static_cast<double>(us) * 1e-6; }

enum class JobPhase { queued = 0, mps = 1, checkpointing = 2, running = 3, idle = 4, done = 5 };

inline bool progressing(JobPhase p) { return p == JobPhase::mps || p == JobPhase::running; }

struct SimJob {
  JobProfile profile;
  int idx = -1;
  int entry_seq = 0;          // FCFS tiebreak within one arrival instant
  int64_t arrival_us = 0;
  double remaining = 0;       // normalized work left (seconds at rate 1)
  double consumed = 0;        // integral of rate dt, for conservation checks
  JobPhase phase = JobPhase::queued;
  double rate = 0;
  int gpu = -1;
  int slot = -1;              // optsta slot index on its GPU
  Slice slice = Slice::k7g;
  int64_t last_update_us = 0;
  std::array<int64_t, 5> acc{};  // per-phase microseconds, indexed by JobPhase
  uint64_t epoch = 0;            // invalidates stale scheduled events
  bool has_run_state = false;    // has progressed at least once (restart cost)
  bool done = false;
  bool has_est = false;
  bool spawned = false;
  SpeedTable est;                // cached predicted speeds (miso/oracle)
  int64_t first_progress_us = -1;
  int64_t completion_us = -1;
};

struct OptStaSlot {
  Slice kind = Slice::k7g;
  int job = -1;
};

enum class GpuMode { idle, mig, mps, reconfig };

struct SimGpu {
  int id = 0;
  GpuMode mode = GpuMode::idle;
  PartitionConfig partition;      // empty when idle / profiling
  std::vector<int> roster;        // job indices in admission order
  std::vector<OptStaSlot> slots;  // optsta only
  uint64_t epoch = 0;             // invalidates stale GPU-scoped events
  int mps_level = 0;              // index into kMpsLevels during a session
  double objective = 0;           // estimated objective of the live assignment
  std::optional<AssignmentVector> planned;  // pending assignment during reconfig
};

struct Ev {
  int64_t t = 0;
  int prio = 2;  // completion=0 < arrival=1 < others=2
  uint64_t seq = 0;
  EventKind kind = EventKind::arrival;
  int job = -1;
  int gpu = -1;
  uint64_t epoch = 0;
};

struct EvAfter {
  bool operator()(const Ev& a, const Ev& b) const {
    return std::tie(a.t, a.prio, a.seq) > std::tie(b.t, b.prio, b.seq);
  }
};

class SimEngine {
 public:
  SimEngine(const JobTrace& trace, const SimOptions& opt) : opt_(opt), trace_(trace) {
    validate_overheads(opt.overheads);
    validate_predictor_spec(opt.predictor);
    if (opt.cluster_size < 1) throw std::invalid_argument("cluster_size must be >= 1");
    if (opt.policy == Policy::optsta && !opt.static_partition)
      throw std::invalid_argument("optsta requires a static partition");
    if (trace.jobs.empty()) throw std::invalid_argument("trace has no jobs");
    window_us_ = us_from_s(opt.overheads.mps_window_s);
    reconfig_us_ = us_from_s(opt.overheads.mig_reconfig_s);
    ckpt_us_ = us_from_s(opt.overheads.checkpoint_restart_s);
  }

  MetricsReport run() {
    init_jobs();
    init_gpus();
    for (const auto& j : jobs_) push_event(j.arrival_us, 1, EventKind::arrival, j.idx, -1, 0);
    uint64_t processed = 0;
    while (!events_.empty()) {
      Ev ev = events_.top();
      events_.pop();
      if (++processed > opt_.max_events) throw SimInvariantError("event budget exhausted");
      if (stale(ev)) continue;
      // STP was constant since the previous processed event.
      stp_integral_ += stp_cur_ * s_from_us(ev.t - stp_last_us_);
      stp_last_us_ = ev.t;
      now_ = ev.t;
      dispatch(ev);
      drain_queue();
      refresh_stp();
    }
    return finalize();
  }

 private:
  // --- setup ---------------------------------------------------------------

  void init_jobs() {
    size_t cap = 0;
    for (const auto& t : trace_.jobs) cap += static_cast<size_t>(std::max(1, t.profile.instance_count));
    jobs_.reserve(cap);
    std::set<std::string> ids;
    int64_t prev = 0;
    for (size_t i = 0; i < trace_.jobs.size(); ++i) {
      const TraceJob& t = trace_.jobs[i];
      validate_profile(t.profile);
      if (!ids.insert(t.profile.job_id).second)
        throw std::invalid_argument("duplicate job id '" + t.profile.job_id + "'");
      int64_t a = us_from_s(t.arrival_s);
      if (i == 0 && a != 0) throw std::invalid_argument("first arrival must be at t=0");
      if (a < prev) throw std::invalid_argument("arrival times must be non-decreasing");
      prev = a;
      SimJob j;
      j.profile = t.profile;
      j.idx = static_cast<int>(jobs_.size());
      j.entry_seq = next_entry_seq_++;
      j.arrival_us = a;
      j.last_update_us = a;
      j.remaining = t.profile.base_duration_s;
      jobs_.push_back(std::move(j));
    }
  }

  void init_gpus() {
    gpus_.resize(opt_.cluster_size);
    for (int g = 0; g < opt_.cluster_size; ++g) {
      gpus_[g].id = g;
      if (opt_.policy == Policy::optsta) {
        for (Slice s : opt_.static_partition->slices_desc()) gpus_[g].slots.push_back({s, -1});
        gpus_[g].partition = *opt_.static_partition;
        gpus_[g].mode = GpuMode::mig;
      }
    }
  }

  // --- event plumbing ------------------------------------------------------

  void push_event(int64_t t, int prio, EventKind kind, int job, int gpu, uint64_t epoch) {
    events_.push(Ev{t, prio, event_seq_++, kind, job, gpu, epoch});
  }

  bool stale(const Ev& ev) const {
    switch (ev.kind) {
      case EventKind::arrival:
      case EventKind::admission_retry:
        return false;
      case EventKind::completion:
        return jobs_[ev.job].done || jobs_[ev.job].epoch != ev.epoch;
      case EventKind::checkpoint_done:
        if (ev.job >= 0) return jobs_[ev.job].done || jobs_[ev.job].epoch != ev.epoch;
        [[fallthrough]];
      case EventKind::mps_phase_end:
      case EventKind::reconfig_done:
        return gpus_[ev.gpu].epoch != ev.epoch;
    }
    return false;
  }

  void dispatch(const Ev& ev) {
    switch (ev.kind) {
      case EventKind::arrival: on_arrival(jobs_[ev.job]); break;
      case EventKind::completion: on_completion(jobs_[ev.job]); break;
      case EventKind::mps_phase_end: on_mps_phase_end(gpus_[ev.gpu]); break;
      case EventKind::reconfig_done: apply_assignment(gpus_[ev.gpu]); break;
      case EventKind::checkpoint_done:
        if (ev.job >= 0) on_migration_restart(jobs_[ev.job]);
        else begin_mps_windows(gpus_[ev.gpu]);
        break;
      case EventKind::admission_retry: break;  // drain_queue covers retries
    }
  }

  // --- time accounting -----------------------------------------------------

  static int bucket(JobPhase p) { return static_cast<int>(p); }

  void advance_job(SimJob& j) {
    int64_t dt = now_ - j.last_update_us;
    j.last_update_us = now_;
    if (dt <= 0 || j.done) return;
    j.acc[bucket(j.phase)] += dt;
    if (progressing(j.phase)) {
      double w = j.rate * s_from_us(dt);
      j.remaining -= w;
      j.consumed += w;
    }
  }

  // Every phase or rate change flows through here; bumping the epoch retires
  // any completion event scheduled under the old rate.
  void set_phase(SimJob& j, JobPhase phase, double rate) {
    advance_job(j);
    j.phase = phase;
    j.rate = progressing(phase) ? rate : 0.0;
    ++j.epoch;
    if (progressing(phase)) {
      j.has_run_state = true;
      if (j.first_progress_us < 0) j.first_progress_us = now_;
      if (first_progress_us_ < 0) first_progress_us_ = now_;
    }
  }

  void schedule_completion(SimJob& j) {
    if (j.done || !(j.rate > 0)) return;
    double dt_s = std::max(0.0, j.remaining) / j.rate;
    int64_t dt = us_from_s(dt_s);
    if (dt < 0) dt = 0;
    push_event(now_ + dt, 0, EventKind::completion, j.idx, j.gpu, j.epoch);
  }

  void refresh_stp() {
    double s = 0;
    for (const auto& j : jobs_)
      if (!j.done && progressing(j.phase)) s += j.rate;
    if (s != stp_cur_) {
      stp_cur_ = s;
      stp_series_.emplace_back(s_from_us(now_), s);
    }
  }

  // --- logging -------------------------------------------------------------

  void log(const std::string& text) {
    if (opt_.event_log) (*opt_.event_log) << now_ << ' ' << text << '\n';
  }

  // --- truth helpers -------------------------------------------------------

  double true_rate(const SimJob& j, Slice s) const {
    return effective_speed(j.profile.speed_table[s], s, j.profile.mem_demand_gb,
                           j.profile.qos_min_slice);
  }
  double est_rate(const SimJob& j, Slice s) const {
    return effective_speed(j.est[s], s, j.profile.mem_demand_gb, j.profile.qos_min_slice);
  }
  Slice min_kind(const SimJob& j) const {
    auto k = min_slice_for(j.profile.mem_demand_gb,
                           j.profile.qos_min_slice ? gpc_count(*j.profile.qos_min_slice) : 0);
    if (!k) throw SimInvariantError("job '" + j.profile.job_id + "' fits no slice kind");
    return *k;
  }

  // --- queueing ------------------------------------------------------------

  void enqueue(SimJob& j) { queue_.insert({j.arrival_us, j.entry_seq, j.idx}); }

  void on_arrival(SimJob& j) {
    log("arrival job=" + j.profile.job_id);
    enqueue(j);
  }

  // Strict FCFS: only the head may admit; a blocked head blocks the queue.
  // Dynamic policies place every admissible head first and then settle each
  // touched GPU once, so same-instant admissions share one profiling session
  // and one reconfiguration instead of paying per job.
  void drain_queue() {
    if (opt_.policy == Policy::miso || opt_.policy == Policy::oracle) {
      for (;;) {
        std::vector<int> touched;  // first-touch order
        while (!queue_.empty()) {
          int idx = std::get<2>(*queue_.begin());
          int gi = place_dynamic(jobs_[idx]);
          if (gi < 0) break;
          if (std::find(touched.begin(), touched.end(), gi) == touched.end())
            touched.push_back(gi);
        }
        if (touched.empty()) return;
        // Settling can spawn multi-instance clones into the queue; loop again.
        for (int gi : touched) settle_admissions(gpus_[gi]);
      }
    }
    while (!queue_.empty()) {
      int idx = std::get<2>(*queue_.begin());
      if (!try_admit(jobs_[idx])) break;
    }
  }

  bool try_admit(SimJob& j) {
    switch (opt_.policy) {
      case Policy::nopart: return admit_nopart(j);
      case Policy::optsta: return admit_optsta(j);
      case Policy::oracle:
      case Policy::miso: break;  // handled by drain_queue's batch path
    }
    return false;
  }

  void pop_queue(const SimJob& j) { queue_.erase({j.arrival_us, j.entry_seq, j.idx}); }

  // --- multi-instance spawning ---------------------------------------------

  void spawn_instances(SimJob& parent) {
    if (parent.spawned || parent.profile.instance_count <= 1) return;
    parent.spawned = true;
    for (int k = 1; k < parent.profile.instance_count; ++k) {
      SimJob j;
      j.profile = parent.profile;
      j.profile.job_id += "#" + std::to_string(k);
      j.profile.instance_count = 1;
      j.idx = static_cast<int>(jobs_.size());
      j.entry_seq = next_entry_seq_++;
      j.arrival_us = parent.arrival_us;  // FCFS position and JCT baseline
      j.last_update_us = parent.arrival_us;
      j.remaining = j.profile.base_duration_s;
      j.est = parent.est;
      j.has_est = parent.has_est;
      j.spawned = true;
      jobs_.push_back(std::move(j));
      SimJob& added = jobs_.back();
      log("spawn job=" + added.profile.job_id + " parent=" + parent.profile.job_id);
      enqueue(added);
    }
  }

  void cache_estimates(SimJob& j, const SpeedTable& est) {
    j.est = est;
    j.has_est = true;
    spawn_instances(j);
  }

  // --- nopart --------------------------------------------------------------

  bool admit_nopart(SimJob& j) {
    for (auto& g : gpus_) {
      if (g.mode != GpuMode::idle) continue;
      pop_queue(j);
      g.mode = GpuMode::mig;
      g.roster.push_back(j.idx);
      j.gpu = g.id;
      log("admit gpu=" + std::to_string(g.id) + " job=" + j.profile.job_id);
      start_running(j, Slice::k7g);
      spawn_instances(j);
      return true;
    }
    return false;
  }

  void start_running(SimJob& j, Slice s) {
    double r = true_rate(j, s);
    if (opt_.check_invariants && !(r > 0))
      throw SimInvariantError("job '" + j.profile.job_id + "' placed on infeasible slice");
    j.slice = s;
    set_phase(j, JobPhase::running, r);
    schedule_completion(j);
    log("start job=" + j.profile.job_id + " gpu=" + std::to_string(j.gpu) + " slice=" +
        slice_name(s) + " rate=" + fmt_g(r));
  }

  // --- optsta --------------------------------------------------------------

  bool feasible_on(const SimJob& j, Slice s) const { return true_rate(j, s) > 0; }

  bool admit_optsta(SimJob& j) {
    int best_g = -1, best_i = -1, best_gpc = -1;
    for (auto& g : gpus_) {
      for (size_t i = 0; i < g.slots.size(); ++i) {
        const auto& slot = g.slots[i];
        if (slot.job != -1 || !feasible_on(j, slot.kind)) continue;
        if (gpc_count(slot.kind) > best_gpc) {
          best_gpc = gpc_count(slot.kind);
          best_g = g.id;
          best_i = static_cast<int>(i);
        }
      }
    }
    if (best_g < 0) return false;
    pop_queue(j);
    auto& g = gpus_[best_g];
    g.slots[best_i].job = j.idx;
    g.roster.push_back(j.idx);
    j.gpu = best_g;
    j.slot = best_i;
    log("admit gpu=" + std::to_string(best_g) + " job=" + j.profile.job_id + " slot=" +
        std::to_string(best_i));
    start_running(j, g.slots[best_i].kind);
    spawn_instances(j);
    return true;
  }

  // One migration per freed slot: the strictly-upgrading running job with the
  // largest true-speed gain moves in (ties: earliest arrival, then entry
  // order), holding the target slot while it checkpoint-restarts; its old
  // slot joins the worklist, and queued jobs get first claim at every step.
  void process_freed_slots(std::vector<std::pair<int, int>> worklist) {
    while (!worklist.empty()) {
      auto [gi, si] = worklist.back();
      worklist.pop_back();
      drain_queue();
      auto& slot = gpus_[gi].slots[si];
      if (slot.job != -1) continue;
      int best = -1;
      double best_gain = 0;
      for (const auto& m : jobs_) {
        if (m.done || m.phase != JobPhase::running) continue;
        if (gpc_count(m.slice) >= gpc_count(slot.kind)) continue;
        double ns = true_rate(m, slot.kind);
        if (!(ns > 0)) continue;
        double gain = ns - m.rate;
        if (gain <= 0) continue;
        if (best >= 0) {
          const auto& b = jobs_[best];
          auto cand = std::make_tuple(-gain, m.arrival_us, m.entry_seq);
          auto cur = std::make_tuple(-best_gain, b.arrival_us, b.entry_seq);
          if (cand >= cur) continue;
        }
        best = m.idx;
        best_gain = gain;
      }
      if (best < 0) continue;
      SimJob& m = jobs_[best];
      gpus_[m.gpu].slots[m.slot].job = -1;
      worklist.emplace_back(m.gpu, m.slot);
      auto& old_roster = gpus_[m.gpu].roster;
      old_roster.erase(std::find(old_roster.begin(), old_roster.end(), m.idx));
      gpus_[gi].roster.push_back(m.idx);
      slot.job = m.idx;
      m.gpu = gi;
      m.slot = si;
      m.slice = slot.kind;
      ++migrations_;
      log("migrate job=" + m.profile.job_id + " gpu=" + std::to_string(gi) + " slot=" +
          std::to_string(si) + " slice=" + slice_name(slot.kind));
      if (ckpt_us_ > 0) {
        set_phase(m, JobPhase::checkpointing, 0);
        push_event(now_ + ckpt_us_, 2, EventKind::checkpoint_done, m.idx, gi, m.epoch);
      } else {
        start_running(m, m.slice);
      }
    }
  }

  void on_migration_restart(SimJob& j) { start_running(j, j.slice); }

  // --- miso / oracle -------------------------------------------------------

  // Places the job on the least-loaded GPU whose spare slice covers its
  // memory/QoS minimum (ties: lowest id). Returns the GPU id, or -1 when no
  // GPU qualifies. Placement alone; the caller settles the GPU afterwards.
  int place_dynamic(SimJob& j) {
    Slice need = min_kind(j);
    int best = -1;
    size_t best_count = 0;
    for (auto& g : gpus_) {
      if (g.mode != GpuMode::idle && g.mode != GpuMode::mig)
        continue;  // profiling or reconfiguring GPUs accept no admissions
      if (g.roster.size() >= 7) continue;
      if (!g.roster.empty()) {
        std::vector<Slice> pinned;
        pinned.reserve(g.roster.size());
        for (int ji : g.roster) pinned.push_back(min_kind(jobs_[ji]));
        auto spare = max_spare_slice_for(opt_.catalog, std::move(pinned));
        if (!spare || slice_index(*spare) < slice_index(need)) continue;
      }  // empty GPU: spare is a whole 7g
      if (best < 0 || g.roster.size() < best_count) {
        best = g.id;
        best_count = g.roster.size();
      }
    }
    if (best < 0) return -1;
    pop_queue(j);
    gpus_[best].roster.push_back(j.idx);
    j.gpu = best;
    log("admit gpu=" + std::to_string(best) + " job=" + j.profile.job_id);
    return best;
  }

  // After a placement pass: one profiling session covers every newcomer; when
  // every resident already has estimates (oracle policy, spawned clones), the
  // optimizer runs directly.
  void settle_admissions(SimGpu& g) {
    if (opt_.policy == Policy::oracle)
      for (int ji : g.roster)
        if (!jobs_[ji].has_est) cache_estimates(jobs_[ji], jobs_[ji].profile.speed_table);
    bool all_est = true;
    for (int ji : g.roster) all_est = all_est && jobs_[ji].has_est;
    if (all_est) {
      reopt_and_apply(g, /*force=*/true);
    } else {
      start_profiling_session(g);
    }
  }

  void start_profiling_session(SimGpu& g) {
    g.mode = GpuMode::mps;
    g.partition = PartitionConfig();
    g.objective = 0;
    if (window_us_ == 0) {
      // Zero-length profiling collapses synchronously: no events, no log
      // lines, no session counted — indistinguishable from oracle admission.
      finish_profiling(g);
      return;
    }
    ++mps_sessions_;
    bool need_ckpt = false;
    if (ckpt_us_ > 0)
      for (int ji : g.roster)
        if (jobs_[ji].has_run_state) need_ckpt = true;
    if (need_ckpt) {
      // All residents checkpoint in parallel to move from MIG to MPS.
      for (int ji : g.roster) {
        SimJob& j = jobs_[ji];
        set_phase(j, j.has_run_state ? JobPhase::checkpointing : JobPhase::queued, 0);
      }
      ++g.epoch;
      push_event(now_ + ckpt_us_, 2, EventKind::checkpoint_done, -1, g.id, g.epoch);
      log("ckpt_start gpu=" + std::to_string(g.id) + " jobs=" + std::to_string(g.roster.size()));
    } else {
      begin_mps_windows(g);
    }
  }

  void begin_mps_windows(SimGpu& g) {
    g.mps_level = 0;
    log("mps_start gpu=" + std::to_string(g.id) + " jobs=" + std::to_string(g.roster.size()));
    start_mps_window(g);
  }

  void start_mps_window(SimGpu& g) {
    int level = kMpsLevels[g.mps_level];
    rate_roster_mps(g, level);
    ++g.epoch;
    push_event(now_ + window_us_, 2, EventKind::mps_phase_end, -1, g.id, g.epoch);
    log("mps_window gpu=" + std::to_string(g.id) + " level=" + std::to_string(level));
  }

  // (Re)measure the roster's shared-GPU rates at one knob level; measured
  // rates land in each profile's mps_rates row, and jobs progress at them.
  void rate_roster_mps(SimGpu& g, int level) {
    std::vector<JobProfile*> profs;
    profs.reserve(g.roster.size());
    for (int ji : g.roster) profs.push_back(&jobs_[ji].profile);
    auto rates = simulate_mps_rates(profs, level, opt_.overheads.interference);
    for (int ji : g.roster) {
      SimJob& j = jobs_[ji];
      set_phase(j, JobPhase::mps, rates.at(j.profile.job_id));
      schedule_completion(j);
    }
  }

  void on_mps_phase_end(SimGpu& g) {
    if (++g.mps_level < 3) {
      start_mps_window(g);
    } else {
      log("mps_end gpu=" + std::to_string(g.id));
      finish_profiling(g);
    }
  }

  void finish_profiling(SimGpu& g) {
    if (opt_.predictor.mode == PredictorSpec::Mode::oracle) {
      for (int ji : g.roster) cache_estimates(jobs_[ji], jobs_[ji].profile.speed_table);
    } else {
      std::vector<JobProfile> profs;
      profs.reserve(g.roster.size());
      for (int ji : g.roster) profs.push_back(jobs_[ji].profile);
      auto matrix = build_mps_matrix(pad_to_seven(profs));
      auto mig = predict_mig_speeds(matrix, profs, opt_.predictor, ++predictor_nonce_);
      auto small = extrapolate_small_slices(mig, model());
      for (size_t c = 0; c < g.roster.size(); ++c) {
        SimJob& j = jobs_[g.roster[c]];
        SpeedTable est;
        est[Slice::k7g] = mig.values[0][c];
        est[Slice::k4g] = mig.values[1][c];
        est[Slice::k3g] = mig.values[2][c];
        const auto& s = small.at(j.profile.job_id);
        est[Slice::k2g] = s.f2;
        est[Slice::k1g] = s.f1;
        cache_estimates(j, est);
      }
    }
    reopt_and_apply(g, /*force=*/true);
  }

  void reopt_and_apply(SimGpu& g, bool force) {
    std::vector<JobSpeeds> speeds;
    speeds.reserve(g.roster.size());
    for (int ji : g.roster) {
      const SimJob& j = jobs_[ji];
      JobSpeeds s;
      s.job_id = j.profile.job_id;
      for (Slice k : kAllSlices) s.speeds[k] = est_rate(j, k);
      speeds.push_back(std::move(s));
    }
    auto plan = optimize_partition(speeds, opt_.catalog);
    if (!plan)
      throw SimInvariantError("no feasible partition for admitted roster on gpu " +
                              std::to_string(g.id));
    if (!force && !(plan->objective > g.objective + 1e-12)) return;
    ++repartitions_;
    begin_reconfig(g, std::move(*plan));
  }

  // Carving only disturbs instances being destroyed or created: a job already
  // running on the slice kind the plan assigns keeps running through the
  // reconfiguration. Everyone else — newcomers, resized jobs, jobs coming out
  // of MPS — pauses for the carve plus one checkpoint/restore cycle.
  void begin_reconfig(SimGpu& g, AssignmentVector plan) {
    bool any_affected = false;
    bool restart = false;
    for (size_t i = 0; i < g.roster.size(); ++i) {
      const SimJob& j = jobs_[g.roster[i]];
      if (j.phase == JobPhase::running && j.slice == plan.assignments[i].slice) continue;
      any_affected = true;
      if (j.has_run_state) restart = true;
    }
    int64_t pause = reconfig_us_ + (restart ? ckpt_us_ : 0);
    g.planned = std::move(plan);
    if (!any_affected || pause == 0) {
      apply_assignment(g);
      return;
    }
    g.mode = GpuMode::reconfig;
    for (size_t i = 0; i < g.roster.size(); ++i) {
      SimJob& j = jobs_[g.roster[i]];
      if (j.phase == JobPhase::running && j.slice == g.planned->assignments[i].slice) continue;
      set_phase(j, j.has_run_state ? JobPhase::checkpointing : JobPhase::queued, 0);
    }
    ++g.epoch;
    push_event(now_ + pause, 2, EventKind::reconfig_done, -1, g.id, g.epoch);
    log("reconfig_start gpu=" + std::to_string(g.id) + " pause_us=" + std::to_string(pause));
  }

  void apply_assignment(SimGpu& g) {
    if (!g.planned) throw SimInvariantError("reconfig finished with no planned assignment");
    AssignmentVector plan = std::move(*g.planned);
    g.planned.reset();
    if (plan.assignments.size() != g.roster.size())
      throw SimInvariantError("planned assignment does not match roster");
    g.partition = plan.partition;
    g.objective = plan.objective;
    g.mode = GpuMode::mig;
    if (opt_.check_invariants && plan.partition.slice_count() != static_cast<int>(g.roster.size()))
      throw SimInvariantError("partition leaves an unused slice on gpu " + std::to_string(g.id));
    std::string assign;
    for (size_t i = 0; i < g.roster.size(); ++i) {
      SimJob& j = jobs_[g.roster[i]];
      if (plan.assignments[i].job_id != j.profile.job_id)
        throw SimInvariantError("assignment order diverged from roster");
      if (!assign.empty()) assign += ',';
      assign += j.profile.job_id;
      assign += '@';
      assign += slice_name(plan.assignments[i].slice);
    }
    log("partition gpu=" + std::to_string(g.id) + " shape=" + plan.partition.name() +
        " assign=" + assign);
    for (size_t i = 0; i < g.roster.size(); ++i) {
      SimJob& j = jobs_[g.roster[i]];
      // Untouched jobs ran straight through the carve; leave them alone.
      if (j.phase == JobPhase::running && j.slice == plan.assignments[i].slice) continue;
      start_running(j, plan.assignments[i].slice);
    }
  }

  // --- completion ----------------------------------------------------------

  void on_completion(SimJob& j) {
    advance_job(j);
    if (opt_.check_invariants) {
      double base = j.profile.base_duration_s;
      if (std::abs(j.consumed - base) > 1e-6 * base + 1e-9)
        throw SimInvariantError("work conservation violated for job '" + j.profile.job_id + "'");
    }
    j.remaining = 0;
    j.done = true;
    ++j.epoch;
    j.completion_us = now_;
    ++done_count_;
    last_completion_us_ = std::max(last_completion_us_, now_);
    if (opt_.check_invariants) {
      int64_t total = 0;
      for (int64_t a : j.acc) total += a;
      if (total != now_ - j.arrival_us)
        throw SimInvariantError("phase accounting does not close for job '" + j.profile.job_id +
                                "'");
    }
    log("complete job=" + j.profile.job_id + " jct_us=" + std::to_string(now_ - j.arrival_us));

    SimGpu& g = gpus_[j.gpu];
    g.roster.erase(std::find(g.roster.begin(), g.roster.end(), j.idx));
    switch (opt_.policy) {
      case Policy::nopart:
        g.mode = GpuMode::idle;
        break;
      case Policy::optsta:
        g.slots[j.slot].job = -1;
        process_freed_slots({{j.gpu, j.slot}});
        break;
      case Policy::oracle:
      case Policy::miso:
        complete_dynamic(g, j);
        break;
    }
  }

  void complete_dynamic(SimGpu& g, SimJob& j) {
    if (g.mode == GpuMode::mps) {
      // Mid-profiling completion: the session continues for the remaining
      // roster with rates re-measured at the current knob level.
      if (g.roster.empty()) {
        ++g.epoch;  // retire the pending window event
        g.mode = GpuMode::idle;
        return;
      }
      rate_roster_mps(g, kMpsLevels[g.mps_level]);
      return;
    }
    if (g.mode == GpuMode::reconfig) {
      // An untouched job ran through the carve and finished before it landed:
      // drop it from the in-flight plan (a sub-multiset of a feasible
      // partition is feasible) and let the carve land on the survivors.
      auto& plan = *g.planned;
      for (size_t i = 0; i < plan.assignments.size(); ++i) {
        if (plan.assignments[i].job_id != j.profile.job_id) continue;
        plan.objective -= plan.assignments[i].speed;
        plan.partition = plan.partition.without(plan.assignments[i].slice);
        plan.assignments.erase(plan.assignments.begin() + static_cast<long>(i));
        break;
      }
      g.partition = g.partition.without(j.slice);
      log("shrink gpu=" + std::to_string(g.id) + " shape=" + g.partition.name());
      return;
    }
    // MIG mode: the freed slice is dropped free of charge (any sub-multiset
    // of a feasible partition is feasible), survivors keep their slices.
    g.partition = g.partition.without(j.slice);
    if (g.roster.empty()) {
      g.mode = GpuMode::idle;
      g.partition = PartitionConfig();
      g.objective = 0;
      return;
    }
    log("shrink gpu=" + std::to_string(g.id) + " shape=" + g.partition.name());
    double obj = 0;
    for (int ji : g.roster) obj += est_rate(jobs_[ji], jobs_[ji].slice);
    g.objective = obj;
    if (opt_.reprofile_drift_threshold > 0 && opt_.policy == Policy::miso && window_us_ > 0) {
      for (int ji : g.roster) {
        const SimJob& s = jobs_[ji];
        double est = est_rate(s, s.slice);
        double truth = true_rate(s, s.slice);
        if (est > 0 && std::abs(truth - est) / est > opt_.reprofile_drift_threshold) {
          start_profiling_session(g);
          return;
        }
      }
    }
    reopt_and_apply(g, /*force=*/false);
  }

  // --- shared small-slice model ---------------------------------------------

  const LinearMap& model() {
    if (opt_.small_slice_model.fitted) return opt_.small_slice_model;
    static const LinearMap shared = fit_small_slice_model(make_training_corpus(3000, 0x5eedull));
    return shared;
  }

  // --- finalize --------------------------------------------------------------

  MetricsReport finalize() {
    MetricsReport r;
    r.policy = policy_label(opt_.policy);
    r.seed = trace_.spec.seed;
    r.job_count = static_cast<int>(jobs_.size());
    r.completed_count = done_count_;
    r.completed = done_count_ == static_cast<int>(jobs_.size());
    r.repartitions = repartitions_;
    r.migrations = migrations_;
    r.mps_sessions = mps_sessions_;
    r.stp_series = std::move(stp_series_);

    std::array<double, 5> totals{};
    double jct_sum = 0;
    for (const auto& j : jobs_) {
      JobMetrics m;
      m.job_id = j.profile.job_id;
      m.arrival_s = s_from_us(j.arrival_us);
      m.queue_s = s_from_us(j.acc[0]);
      m.mps_s = s_from_us(j.acc[1]);
      m.checkpoint_s = s_from_us(j.acc[2]);
      m.run_s = s_from_us(j.acc[3]);
      m.idle_s = s_from_us(j.acc[4]);
      if (j.done) {
        m.completion_s = s_from_us(j.completion_us);
        m.jct_s = s_from_us(j.completion_us - j.arrival_us);
        r.jct_sorted.push_back(m.jct_s);
        jct_sum += m.jct_s;
        for (int b = 0; b < 5; ++b) totals[b] += s_from_us(j.acc[b]);
      }
      r.per_job.push_back(std::move(m));
    }
    std::sort(r.jct_sorted.begin(), r.jct_sorted.end());
    if (jct_sum > 0) {
      r.queue_frac = totals[0] / jct_sum;
      r.mps_frac = totals[1] / jct_sum;
      r.checkpoint_frac = totals[2] / jct_sum;
      r.run_frac = totals[3] / jct_sum;
      r.idle_frac = totals[4] / jct_sum;
    }
    if (r.completed) {
      r.avg_jct_s = jct_sum / static_cast<double>(jobs_.size());
      r.makespan_s = s_from_us(last_completion_us_ - first_progress_us_);
      if (last_completion_us_ > first_progress_us_)
        r.stp_time_avg = stp_integral_ / s_from_us(last_completion_us_ - first_progress_us_);
    }
    return r;
  }

  // --- members -------------------------------------------------------------

  const SimOptions& opt_;
  const JobTrace& trace_;
  int64_t window_us_ = 0, reconfig_us_ = 0, ckpt_us_ = 0;

  std::vector<SimJob> jobs_;
  std::vector<SimGpu> gpus_;
  std::set<std::tuple<int64_t, int, int>> queue_;  // (arrival_us, entry_seq, idx)
  std::priority_queue<Ev, std::vector<Ev>, EvAfter> events_;
  uint64_t event_seq_ = 0;
  int next_entry_seq_ = 0;
  uint64_t predictor_nonce_ = 0;
  int64_t now_ = 0;

  double stp_cur_ = 0, stp_integral_ = 0;
  int64_t stp_last_us_ = 0;
  std::vector<std::pair<double, double>> stp_series_;

  int repartitions_ = 0, migrations_ = 0, mps_sessions_ = 0, done_count_ = 0;
  int64_t first_progress_us_ = -1, last_completion_us_ = -1;
};

}  // namespace detail

inline MetricsReport run_simulation(const JobTrace& trace, const SimOptions& options) {
  detail::SimEngine engine(trace, options);
  return engine.run();
}

inline MetricsReport run_simulation(const JobTrace& trace, int cluster_size, Policy policy,
                                    const OverheadSpec& overheads, const PredictorSpec& predictor,
                                    const std::optional<PartitionConfig>& static_partition =
                                        std::nullopt) {
  SimOptions opt;
  opt.policy = policy;
  opt.cluster_size = cluster_size;
  opt.overheads = overheads;
  opt.predictor = predictor;
  opt.static_partition = static_partition;
  return run_simulation(trace, opt);
}

// Deterministic flat text dump of a report; equal reports produce equal text.
inline std::string format_report(const MetricsReport& r) {
  std::string out;
  out += "policy=" + r.policy + " seed=" + std::to_string(r.seed) +
         " completed=" + (r.completed ? std::string("1") : std::string("0")) +
         " jobs=" + std::to_string(r.job_count) + " done=" + std::to_string(r.completed_count) +
         "\n";
  out += "avg_jct_s=" + fmt_g(r.avg_jct_s) + " makespan_s=" + fmt_g(r.makespan_s) +
         " stp_avg=" + fmt_g(r.stp_time_avg) + "\n";
  out += "fracs queue=" + fmt_g(r.queue_frac) + " mps=" + fmt_g(r.mps_frac) +
         " ckpt=" + fmt_g(r.checkpoint_frac) + " run=" + fmt_g(r.run_frac) +
         " idle=" + fmt_g(r.idle_frac) + "\n";
  out += "counts repartitions=" + std::to_string(r.repartitions) +
         " migrations=" + std::to_string(r.migrations) +
         " mps_sessions=" + std::to_string(r.mps_sessions) + "\n";
  for (const auto& p : r.stp_series)
    out += "stp " + fmt_g(p.first) + " " + fmt_g(p.second) + "\n";
  for (const auto& j : r.per_job)
    out += "job " + j.job_id + " arrival=" + fmt_g(j.arrival_s) +
           " completion=" + fmt_g(j.completion_s) + " jct=" + fmt_g(j.jct_s) +
           " queue=" + fmt_g(j.queue_s) + " mps=" + fmt_g(j.mps_s) +
           " ckpt=" + fmt_g(j.checkpoint_s) + " run=" + fmt_g(j.run_s) +
           " idle=" + fmt_g(j.idle_s) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Static-partition search (the "optimal static" baseline's offline step).
// ---------------------------------------------------------------------------

struct StaticSearchResult {
  PartitionConfig chosen;
  // (candidate, avg JCT) in catalog order; inf marks candidates that cannot
  // host every job (skipped) or whose simulation never completed.
  std::vector<std::pair<PartitionConfig, double>> table;
};

inline StaticSearchResult best_static_partition(const JobTrace& trace, int cluster_size,
                                                const OverheadSpec& overheads,
                                                const PartitionCatalog& catalog =
                                                    default_catalog()) {
  int need = 0;  // largest minimal slice kind over all jobs
  for (const auto& t : trace.jobs) {
    auto k = min_slice_for(t.profile.mem_demand_gb,
                           t.profile.qos_min_slice ? gpc_count(*t.profile.qos_min_slice) : 0);
    if (!k) throw InfeasibleError("job '" + t.profile.job_id + "' fits no slice kind");
    need = std::max(need, slice_index(*k));
  }
  StaticSearchResult res;
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& cand : catalog.entries) {
    int largest = slice_index(cand.slices_desc().front());
    double jct = std::numeric_limits<double>::infinity();
    if (largest >= need) {
      SimOptions opt;
      opt.policy = Policy::optsta;
      opt.cluster_size = cluster_size;
      opt.overheads = overheads;
      opt.static_partition = cand;
      opt.catalog = catalog;
      jct = run_simulation(trace, opt).avg_jct_s;
    }
    res.table.emplace_back(cand, jct);
    if (jct < best) {
      best = jct;
      res.chosen = cand;
      found = true;
    }
  }
  if (!found) throw InfeasibleError("no static partition can host this trace");
  return res;
}

}  // namespace miso
