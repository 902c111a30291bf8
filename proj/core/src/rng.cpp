#include "poseflow/rng.hpp"

#include <cmath>
#include <numbers>

namespace poseflow {

uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

static uint64_t splitmix64(uint64_t& x) {
  x += 0x9e3779b97f4a7c15ull;
  uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

static uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  return splitmix64(x);
}

RngState RngState::substream(std::string_view name) const {
  return RngState(mix(state_, fnv1a64(name)));
}

RngState RngState::substream(uint64_t index) const {
  return RngState(mix(state_, 0x517cc1b727220a95ull ^ index));
}

uint64_t RngState::next_u64() { return splitmix64(state_); }

double RngState::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngState::next_below(uint64_t n) {
  // Rejection-free modulo; bias is negligible for n << 2^64 and this stays
  // a fixed one-draw-per-call sequence.
  return n ? next_u64() % n : 0;
}

double RngState::normal() {
  double u1 = next_double();
  double u2 = next_double();
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

float RngState::trunc_normal(float stddev) {
  for (int i = 0; i < 64; ++i) {
    double z = normal();
    if (std::abs(z) <= 2.0) return static_cast<float>(z * stddev);
  }
  return 0.0f;
}

}  // namespace poseflow
