#pragma once

// MIG slice vocabulary and the feasibility model for single-GPU partitions.
//
// A partition is a multiset over the five A100 slice kinds. Feasibility rules:
//   1. total GPC count <= 7
//   2. total memory units <= 8   (1g=1, 2g=2, 3g=4, 4g=4, 7g=8)
//   3. per-kind count <= the kind's max count
//   4. 4g and 3g never co-exist
// plus non-emptiness. The rule-generated catalog is the canonical feasibility
// model; a file loader lets a hardware-exact list override it.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "miso/common.hpp"

namespace miso {

enum class Slice : uint8_t { k1g = 0, k2g = 1, k3g = 2, k4g = 3, k7g = 4 };

inline constexpr int kSliceKinds = 5;

struct SliceTraits {
  int gpc;             // compute slices (GPCs)
  int memory_gb;       // dedicated memory
  int cache_eighths;   // L2 share in eighths (also the memory-unit weight)
  int max_count;       // max instances of this kind on one GPU
  const char* name;
};

inline constexpr std::array<SliceTraits, kSliceKinds> kSliceTable = {{
    {1, 5, 1, 7, "1g"},
    {2, 10, 2, 3, "2g"},
    {3, 20, 4, 2, "3g"},
    {4, 20, 4, 1, "4g"},
    {7, 40, 8, 1, "7g"},
}};

inline constexpr std::array<Slice, kSliceKinds> kAllSlices = {
    Slice::k1g, Slice::k2g, Slice::k3g, Slice::k4g, Slice::k7g};

inline int slice_index(Slice s) { return static_cast<int>(s); }
inline int gpc_count(Slice s) { return kSliceTable[slice_index(s)].gpc; }
inline int memory_gb(Slice s) { return kSliceTable[slice_index(s)].memory_gb; }
inline int cache_eighths(Slice s) { return kSliceTable[slice_index(s)].cache_eighths; }
inline int memory_units(Slice s) { return kSliceTable[slice_index(s)].cache_eighths; }
inline int max_count(Slice s) { return kSliceTable[slice_index(s)].max_count; }
inline const char* slice_name(Slice s) { return kSliceTable[slice_index(s)].name; }

inline std::optional<Slice> slice_from_gpc(int gpc) {
  for (Slice s : kAllSlices)
    if (gpc_count(s) == gpc) return s;
  return std::nullopt;
}

// Smallest kind whose memory and GPC both meet the given minimums. Because
// memory is non-decreasing in GPC count across kinds, the feasible kinds for
// any (memory, qos) pair form an upward-closed suffix of the kind order, so a
// single threshold captures both constraints.
inline std::optional<Slice> min_slice_for(int mem_demand_gb, int qos_min_gpc = 0) {
  for (Slice s : kAllSlices)
    if (memory_gb(s) >= mem_demand_gb && gpc_count(s) >= qos_min_gpc) return s;
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// PartitionConfig: a feasible multiset of slices.
// ---------------------------------------------------------------------------

class PartitionConfig {
 public:
  PartitionConfig() : counts_{} {}

  // Returns the violated rule as text, or nullopt when the multiset is a
  // feasible, non-empty partition.
  static std::optional<std::string> violation(const std::array<uint8_t, kSliceKinds>& counts) {
    int total = 0, gpc = 0, mem = 0;
    for (Slice s : kAllSlices) {
      int c = counts[slice_index(s)];
      if (c > max_count(s))
        return std::string(slice_name(s)) + " count " + std::to_string(c) + " exceeds max " +
               std::to_string(max_count(s));
      total += c;
      gpc += c * gpc_count(s);
      mem += c * memory_units(s);
    }
    if (total == 0) return "empty partition";
    if (gpc > 7) return "gpc total " + std::to_string(gpc) + " exceeds 7";
    if (mem > 8) return "memory units " + std::to_string(mem) + " exceed 8";
    if (counts[slice_index(Slice::k4g)] > 0 && counts[slice_index(Slice::k3g)] > 0)
      return "4g and 3g cannot co-exist";
    return std::nullopt;
  }

  static PartitionConfig from_counts(const std::array<uint8_t, kSliceKinds>& counts) {
    if (auto why = violation(counts))
      throw std::invalid_argument("invalid partition: " + *why);
    PartitionConfig p;
    p.counts_ = counts;
    return p;
  }

  static PartitionConfig from_slices(const std::vector<Slice>& slices) {
    std::array<uint8_t, kSliceKinds> c{};
    for (Slice s : slices) ++c[slice_index(s)];
    return from_counts(c);
  }

  int count(Slice s) const { return counts_[slice_index(s)]; }
  const std::array<uint8_t, kSliceKinds>& counts() const { return counts_; }

  int slice_count() const {
    int n = 0;
    for (int c : counts_) n += c;
    return n;
  }
  int total_gpc() const {
    int g = 0;
    for (Slice s : kAllSlices) g += count(s) * gpc_count(s);
    return g;
  }
  int total_memory_units() const {
    int m = 0;
    for (Slice s : kAllSlices) m += count(s) * memory_units(s);
    return m;
  }

  // Slices in descending GPC order, e.g. {4g,1g,1g} -> [4,1,1].
  std::vector<Slice> slices_desc() const {
    std::vector<Slice> out;
    for (int i = kSliceKinds - 1; i >= 0; --i)
      for (int c = 0; c < counts_[i]; ++c) out.push_back(static_cast<Slice>(i));
    return out;
  }
  std::vector<int> gpc_vector() const {
    std::vector<int> v;
    for (Slice s : slices_desc()) v.push_back(gpc_count(s));
    return v;
  }

  std::string name() const {
    std::string out;
    for (Slice s : slices_desc()) {
      if (!out.empty()) out += '+';
      out += slice_name(s);
    }
    return out;
  }

  // Drop one instance of kind s (used when a completed job frees its slice;
  // downward closure guarantees the remainder is feasible unless empty).
  PartitionConfig without(Slice s) const {
    if (counts_[slice_index(s)] == 0)
      throw std::invalid_argument("partition has no " + std::string(slice_name(s)) + " slice");
    PartitionConfig p = *this;
    --p.counts_[slice_index(s)];
    return p;  // may be empty; callers treat empty as "no partition"
  }
  bool empty() const { return slice_count() == 0; }

  bool operator==(const PartitionConfig& o) const { return counts_ == o.counts_; }
  bool operator!=(const PartitionConfig& o) const { return !(*this == o); }

 private:
  std::array<uint8_t, kSliceKinds> counts_;  // multiset as per-kind counts
};

// Catalog listing order: descending lexicographic gpc vectors, so {7g} sorts
// first and {1g*7} last. Reproducible across runs and platforms.
inline bool catalog_order(const PartitionConfig& a, const PartitionConfig& b) {
  return a.gpc_vector() > b.gpc_vector();
}

enum class CatalogSource { rule_generated, file_loaded };

struct PartitionCatalog {
  std::vector<PartitionConfig> entries;  // deduplicated, catalog_order-sorted
  CatalogSource source = CatalogSource::rule_generated;
};

inline PartitionCatalog build_catalog() {
  PartitionCatalog cat;
  std::array<uint8_t, kSliceKinds> c{};
  // Nested count loops over the five kinds; validity delegated to the rules.
  for (c[4] = 0; c[4] <= 1; ++c[4])
    for (c[3] = 0; c[3] <= 1; ++c[3])
      for (c[2] = 0; c[2] <= 2; ++c[2])
        for (c[1] = 0; c[1] <= 3; ++c[1])
          for (c[0] = 0; c[0] <= 7; ++c[0])
            if (!PartitionConfig::violation(c)) cat.entries.push_back(PartitionConfig::from_counts(c));
  std::sort(cat.entries.begin(), cat.entries.end(), catalog_order);
  cat.source = CatalogSource::rule_generated;
  return cat;
}

// Shared immutable default catalog (safe: constructed once, read-only after).
inline const PartitionCatalog& default_catalog() {
  static const PartitionCatalog cat = build_catalog();
  return cat;
}

inline std::vector<PartitionConfig> valid_partitions_of_size(const PartitionCatalog& catalog, int m) {
  if (m < 1 || m > 7)
    throw std::invalid_argument("partition size " + std::to_string(m) + " out of range 1..7");
  std::vector<PartitionConfig> out;
  for (const auto& p : catalog.entries)
    if (p.slice_count() == m) out.push_back(p);
  return out;
}

// ---------------------------------------------------------------------------
// Maximum spare slice.
// ---------------------------------------------------------------------------

// Pinned jobs are reduced to minimal-kind thresholds (see min_slice_for).
// A candidate entry must supply one slice >= each job's threshold plus the
// spare slice itself; with upward-closed per-job feasibility sets, matching
// the sorted thresholds against the sorted remaining slices greedily is exact.
inline std::optional<Slice> max_spare_slice_for(const PartitionCatalog& catalog,
                                                std::vector<Slice> pinned_min_kinds) {
  const int m = static_cast<int>(pinned_min_kinds.size());
  if (m >= 7) return std::nullopt;  // no entry has m+1 > 7 slices
  std::sort(pinned_min_kinds.begin(), pinned_min_kinds.end(),
            [](Slice a, Slice b) { return slice_index(a) > slice_index(b); });
  std::optional<Slice> best;
  for (const auto& entry : catalog.entries) {
    if (entry.slice_count() != m + 1) continue;
    std::vector<Slice> slices = entry.slices_desc();
    for (size_t spare = 0; spare < slices.size(); ++spare) {
      // Skip duplicate spare kinds within one entry.
      if (spare > 0 && slices[spare] == slices[spare - 1]) continue;
      if (best && slice_index(slices[spare]) <= slice_index(*best)) continue;
      bool ok = true;
      int j = 0;
      for (size_t i = 0; i < slices.size() && ok; ++i) {
        if (i == spare) continue;
        if (slice_index(slices[i]) < slice_index(pinned_min_kinds[j])) ok = false;
        ++j;
      }
      if (ok) best = slices[spare];
    }
  }
  return best;
}

// Spec-shaped call: pinned jobs given as memory demands only. The current
// partition does not constrain the answer (admission always repartitions),
// so it is accepted for interface completeness and ignored.
inline std::optional<Slice> max_spare_slice(const PartitionCatalog& catalog,
                                            const std::optional<PartitionConfig>& /*current*/,
                                            const std::vector<int>& pinned_memory_gb) {
  std::vector<Slice> mins;
  mins.reserve(pinned_memory_gb.size());
  for (int mem : pinned_memory_gb) {
    auto k = min_slice_for(mem);
    if (!k) return std::nullopt;  // a pinned job no slice can hold
    mins.push_back(*k);
  }
  return max_spare_slice_for(catalog, std::move(mins));
}

// ---------------------------------------------------------------------------
// Catalog override file: one partition per line as comma-separated gpc sizes
// (e.g. "4,2,1"); '#' starts a comment. Any rule violation or duplicate
// rejects the whole file.
// ---------------------------------------------------------------------------

inline PartitionCatalog load_catalog(std::istream& in) {
  PartitionCatalog cat;
  cat.source = CatalogSource::file_loaded;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    // Trim whitespace.
    auto is_space = [](char ch) { return ch == ' ' || ch == '\t' || ch == '\r'; };
    while (!line.empty() && is_space(line.back())) line.pop_back();
    size_t start = 0;
    while (start < line.size() && is_space(line[start])) ++start;
    line.erase(0, start);
    if (line.empty()) continue;

    std::vector<Slice> slices;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      int gpc = 0;
      try {
        size_t used = 0;
        gpc = std::stoi(tok, &used);
        while (used < tok.size() && is_space(tok[used])) ++used;
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw ParseError("bad gpc size '" + tok + "'", lineno);
      }
      auto s = slice_from_gpc(gpc);
      if (!s) throw ParseError("no slice kind with gpc count " + std::to_string(gpc), lineno);
      slices.push_back(*s);
    }
    std::array<uint8_t, kSliceKinds> counts{};
    for (Slice s : slices) ++counts[slice_index(s)];
    if (auto why = PartitionConfig::violation(counts)) throw ParseError(*why, lineno);
    PartitionConfig p = PartitionConfig::from_counts(counts);
    for (const auto& e : cat.entries)
      if (e == p) throw ParseError("duplicate partition " + p.name(), lineno);
    cat.entries.push_back(p);
  }
  if (cat.entries.empty()) throw ParseError("catalog file has no partitions", 0);
  std::sort(cat.entries.begin(), cat.entries.end(), catalog_order);
  return cat;
}

inline PartitionCatalog load_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog file: " + path);
  return load_catalog(in);
}

}  // namespace miso
