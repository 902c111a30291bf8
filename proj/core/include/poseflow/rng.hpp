#pragma once

#include <cstdint>
#include <string_view>

namespace poseflow {

/// Deterministic counter-free PRNG built on SplitMix64. Substreams are
/// derived by hashing a label or index into the seed, so adding a new
/// consumer never shifts the values another consumer sees. The same seed
/// and call sequence produce the same bits on every run.
class RngState {
 public:
  explicit RngState(uint64_t seed) : state_(seed) {}

  /// Child stream keyed by a label ("data", "vae", "flow", "sample", ...).
  RngState substream(std::string_view name) const;
  /// Child stream keyed by an index (pair index, step, batch slot, ...).
  RngState substream(uint64_t index) const;

  uint64_t seed() const { return state_; }

  uint64_t next_u64();
  /// Uniform in [0, 1).
  double next_double();
  float next_float() { return static_cast<float>(next_double()); }
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }
  /// Uniform integer in [0, n).
  uint64_t next_below(uint64_t n);
  /// Standard normal via Box-Muller (two uniforms per draw, no caching).
  double normal();
  float normal_f32() { return static_cast<float>(normal()); }
  /// Normal truncated to |z| <= 2 by resampling, scaled by std.
  float trunc_normal(float stddev);
  bool coin(double p) { return next_double() < p; }

 private:
  uint64_t state_;
};

uint64_t fnv1a64(std::string_view s);

}  // namespace poseflow
