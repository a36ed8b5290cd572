#pragma once

// Shared error types, deterministic RNG helpers, and formatting utilities.
//
// All randomness in the library flows through DetRng (mt19937_64 plus
// hand-rolled transforms). The std:: distribution objects are avoided on
// purpose: their output sequences are implementation-defined, and we promise
// byte-identical results for identical seeds.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>

namespace miso {

// ---------------------------------------------------------------------------
// Error taxonomy. Exit-code mapping lives in the CLI.
// ---------------------------------------------------------------------------

// Bad configuration values or unknown config keys.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed file content; carries a 1-based line number when known.
class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& msg, int line)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + msg : msg),
        line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

// Filesystem-level failures (missing file, unwritable path).
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// Regression fit cannot be performed (undersized/degenerate training set).
class FitError : public std::runtime_error {
 public:
  explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

// A simulation self-check failed. Indicates a scheduler bug, not bad input.
class SimInvariantError : public std::logic_error {
 public:
  explicit SimInvariantError(const std::string& msg) : std::logic_error(msg) {}
};

// The request has no feasible answer (e.g. a job no slice can host).
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Deterministic RNG.
// ---------------------------------------------------------------------------

// splitmix64: used to derive decorrelated child seeds from (seed, tag) pairs.
inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

inline uint64_t mix_seed(uint64_t seed, uint64_t tag) {
  return splitmix64(splitmix64(seed) ^ splitmix64(tag));
}

inline uint64_t mix_seed(uint64_t seed, uint64_t tag1, uint64_t tag2) {
  return mix_seed(mix_seed(seed, tag1), tag2);
}

class DetRng {
 public:
  explicit DetRng(uint64_t seed) : eng_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Exponential with the given mean (inverse CDF; never returns inf).
  double exponential(double mean) {
    double u = uniform01();
    return -mean * std::log1p(-u);
  }

  // Standard normal via Box-Muller (one value per two uniforms; the second
  // branch is discarded to keep the draw count predictable).
  double normal01() {
    double u1 = uniform01();
    double u2 = uniform01();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

  double lognormal(double mu, double sigma) { return std::exp(mu + sigma * normal01()); }

  // Index in [0, n) -- rejection-free modulo is fine for our small n.
  int index(int n) { return static_cast<int>(eng_() % static_cast<uint64_t>(n)); }

  uint64_t raw() { return eng_(); }

 private:
  std::mt19937_64 eng_;
};

// ---------------------------------------------------------------------------
// Formatting helpers (stable across reruns; used for all emitted numbers).
// ---------------------------------------------------------------------------

// Shortest-ish general format used in CSV/JSON/report output.
inline std::string fmt_g(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

// Exact round-trip format for persisted doubles (trace files).
inline std::string fmt_exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace miso
