#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "poseflow/skeleton.hpp"

namespace poseflow {

/// Capsule: all points within `r` of segment [a, b]. Coordinates use the
/// first `dim` entries (dim = 2 or 3).
struct Capsule {
  std::array<double, 3> a{0, 0, 0};
  std::array<double, 3> b{0, 0, 0};
  double r = 0.1;
};

std::vector<Capsule> character_capsules(const PosedCharacter& ch);

double capsule_sdf(const Capsule& c, const double* p, int dim);
/// min over capsules of (distance to segment - radius); negative inside.
double capsule_union_sdf(const std::vector<Capsule>& caps, const double* p, int dim);
/// Two smallest per-capsule signed distances (d1 <= d2). d2 is +inf for a
/// single capsule.
void capsule_two_smallest(const std::vector<Capsule>& caps, const double* p, int dim, double* d1,
                          double* d2);
/// Gradient of the union SDF (direction away from the closest capsule axis).
std::array<double, 2> capsule_union_grad2(const std::vector<Capsule>& caps, const double* p);

/// Point samples of one posed character: surface points on the zero level
/// set, sharp points at capsule junctions, and signed-distance supervision
/// pairs. Coordinates and values are stored as f32 exactly as persisted;
/// every sdf value is the union SDF evaluated at the f32-rounded query.
struct ShapeSample {
  int dim = 2;
  std::vector<float> surface;  // n_s * dim
  std::vector<float> sharp;    // n_k * dim
  std::vector<float> queries;  // n_q * dim
  std::vector<float> sdf;      // n_q
  bool sharp_fallback = false;

  int n_surface() const { return dim ? static_cast<int>(surface.size()) / dim : 0; }
  int n_sharp() const { return dim ? static_cast<int>(sharp.size()) / dim : 0; }
  int n_queries() const { return dim ? static_cast<int>(queries.size()) / dim : 0; }
};

struct SampleOptions {
  int max_project_iters = 32;
  double surface_tol = 1e-4;     // projection stop threshold
  double junction_eps = 0.01;    // |d2 - d1| bound for sharp points
  double near_sigma = 0.05;      // stddev of near-surface query offsets
  double max_failure_rate = 0.10;
  double project_damping = 0.8;
};

/// Surface + sharp points via damped gradient projection of near-surface
/// seeds. Throws if more than max_failure_rate of projections fail.
ShapeSample sample_surface(const PosedCharacter& ch, int n_s, int n_k, RngState rng,
                           const SampleOptions& opts = {});

/// Full sample: surface, sharp, and n_q SDF queries (half uniform in the
/// box, half Gaussian offsets from surface points, clamped to the box).
ShapeSample sample_shape(const PosedCharacter& ch, int n_s, int n_k, int n_q, RngState rng,
                         const SampleOptions& opts = {});

/// Occupancy raster over [-1,1]^2: pixel = 1 iff sdf(center) <= 0.
/// Bit-packed rows, LSB-first, stride (w+7)/8 bytes.
std::vector<uint8_t> rasterize_fn(const std::function<double(double, double)>& sdf, int w, int h);
std::vector<uint8_t> rasterize(const PosedCharacter& ch, int w, int h);
int raster_popcount(const std::vector<uint8_t>& bits);
bool raster_get(const std::vector<uint8_t>& bits, int w, int x, int y);
/// Unpack to a w*h float grid (row-major, row 0 at y = -1).
std::vector<float> raster_to_floats(const std::vector<uint8_t>& bits, int w, int h);

}  // namespace poseflow
