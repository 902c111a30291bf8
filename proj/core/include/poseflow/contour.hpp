#pragma once

#include <array>
#include <functional>
#include <vector>

#include "poseflow/shapevae.hpp"

namespace poseflow {

/// Closed zero-isocontour polyline. Signed area follows the orientation
/// convention: the interior (negative SDF) lies on the left of traversal,
/// so outer boundaries are counterclockwise (positive area) and holes are
/// clockwise (negative area).
struct Polyline {
  std::vector<std::array<double, 2>> pts;
  double signed_area = 0.0;
};

/// Values at grid_res x grid_res lattice points spanning [-1,1]^2
/// (row-major, row 0 at y=-1).
std::vector<float> sdf_grid_fn(const std::function<double(double, double)>& sdf, int grid_res);

/// Decoded SDF lattice from a latent set (chunked decode).
std::vector<float> decode_sdf_grid(const ParameterStore& vae_store, const Tensor& latents,
                                   const VaeConfig& cfg, int grid_res);

/// Marching squares with linear edge interpolation. Returns closed
/// polylines ordered by |area| descending; empty when the grid has no sign
/// changes.
std::vector<Polyline> marching_squares(const std::vector<float>& grid, int grid_res);

/// Shape extraction: decode on a lattice, then contour it.
struct ExtractedShape {
  std::vector<float> grid;  // grid_res^2 SDF values
  int grid_res = 0;
  std::vector<Polyline> contours;
};
ExtractedShape extract_shape(const Tensor& latents, const ParameterStore& vae_store,
                             const VaeConfig& cfg, int grid_res);

/// n points distributed over all polylines proportionally to length, evenly
/// spaced by arc length along each. Returns a flattened n x 2 array.
std::vector<double> resample_contours(const std::vector<Polyline>& contours, int n);

double polyline_length(const Polyline& p);

}  // namespace poseflow
