#pragma once

// Per-GPU partition optimizer: pick the valid MIG partition and job-to-slice
// assignment maximizing aggregate normalized throughput.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "miso/common.hpp"
#include "miso/profiles.hpp"
#include "miso/topology.hpp"

namespace miso {

// Per-job effective speeds: entries must already be zeroed for slices the job
// cannot use (insufficient memory, QoS floor); see effective_speed().
struct JobSpeeds {
  std::string job_id;
  SpeedTable speeds;
};

struct Assignment {
  std::string job_id;
  Slice slice = Slice::k7g;
  double speed = 0;
};

struct AssignmentVector {
  PartitionConfig partition;
  std::vector<Assignment> assignments;  // aligned with the input job order
  double objective = 0;
};

namespace detail {

struct OptKey {
  double objective = -1;
  int total_gpc = 0;
  std::vector<int> shape;      // gpc multiset, descending
  std::vector<int> placement;  // per-job slice index

  // True when this key beats `o`: higher objective first, then fewer GPCs,
  // then lexicographically smaller descending shape, then smaller placement.
  bool beats(const OptKey& o) const {
    if (objective != o.objective) return objective > o.objective;
    if (total_gpc != o.total_gpc) return total_gpc < o.total_gpc;
    if (shape != o.shape) return shape < o.shape;
    return placement < o.placement;
  }
};

}  // namespace detail

// Exhaustive search over size-m catalog entries and distinct slice
// permutations. An assignment is valid only if every job's speed on its slice
// is positive; if no candidate is valid the result is empty (the caller's
// infeasibility signal). Deterministic tie-breaking: maximal objective, then
// fewest total GPCs, then lexicographically smallest descending shape, then
// smallest per-job placement vector.
inline std::optional<AssignmentVector> optimize_partition(const std::vector<JobSpeeds>& jobs,
                                                          const PartitionCatalog& catalog) {
  const size_t m = jobs.size();
  if (m < 1 || m > 7)
    throw std::invalid_argument("optimize_partition needs 1..7 jobs, got " + std::to_string(m));

  detail::OptKey best;
  std::optional<PartitionConfig> best_part;
  bool found = false;

  for (const auto& entry : catalog.entries) {
    if (entry.slice_count() != m) continue;
    auto desc = entry.slices_desc();
    std::vector<int> perm(m);
    for (size_t i = 0; i < m; ++i) perm[i] = slice_index(desc[m - 1 - i]);  // ascending start
    do {
      double obj = 0;
      bool valid = true;
      for (size_t i = 0; i < m; ++i) {
        double v = jobs[i].speeds.v[perm[i]];
        if (!(v > 0)) {
          valid = false;
          break;
        }
        obj += v;
      }
      if (!valid) continue;
      detail::OptKey key;
      key.objective = obj;
      key.total_gpc = entry.total_gpc();
      key.shape = entry.gpc_vector();
      key.placement = perm;
      if (!found || key.beats(best)) {
        best = std::move(key);
        best_part = entry;
        found = true;
      }
    } while (std::next_permutation(perm.begin(), perm.end()));
  }

  if (!found) return std::nullopt;
  AssignmentVector out;
  out.partition = *best_part;
  out.objective = best.objective;
  out.assignments.reserve(m);
  for (size_t i = 0; i < m; ++i) {
    Assignment a;
    a.job_id = jobs[i].job_id;
    a.slice = kAllSlices[best.placement[i]];
    a.speed = jobs[i].speeds.v[best.placement[i]];
    out.assignments.push_back(std::move(a));
  }
  return out;
}

}  // namespace miso
