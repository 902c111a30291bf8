#include "poseflow/contour.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace poseflow {

std::vector<float> sdf_grid_fn(const std::function<double(double, double)>& sdf, int grid_res) {
  if (grid_res < 16) throw Error("sdf grid: resolution must be >= 16");
  std::vector<float> grid(static_cast<size_t>(grid_res) * grid_res);
  for (int i = 0; i < grid_res; ++i) {
    const double y = -1.0 + 2.0 * i / (grid_res - 1);
    for (int j = 0; j < grid_res; ++j) {
      const double x = -1.0 + 2.0 * j / (grid_res - 1);
      grid[static_cast<size_t>(i) * grid_res + j] = static_cast<float>(sdf(x, y));
    }
  }
  return grid;
}

std::vector<float> decode_sdf_grid(const ParameterStore& vae_store, const Tensor& latents,
                                   const VaeConfig& cfg, int grid_res) {
  if (grid_res < 16) throw Error("decode_sdf_grid: resolution must be >= 16");
  std::vector<float> grid(static_cast<size_t>(grid_res) * grid_res);
  const int chunk = 2048;
  int done = 0;
  const int total = grid_res * grid_res;
  while (done < total) {
    const int n = std::min(chunk, total - done);
    Tensor q = Tensor::zeros({n, 2});
    for (int k = 0; k < n; ++k) {
      const int idx = done + k;
      const int i = idx / grid_res, j = idx % grid_res;
      q.at(k, 0) = static_cast<float>(-1.0 + 2.0 * j / (grid_res - 1));
      q.at(k, 1) = static_cast<float>(-1.0 + 2.0 * i / (grid_res - 1));
    }
    Tensor vals = decode_sdf_values(vae_store, latents, q, cfg);
    for (int k = 0; k < n; ++k) grid[static_cast<size_t>(done + k)] = vals.v[static_cast<size_t>(k)];
    done += n;
  }
  return grid;
}

namespace {

struct EdgeKey {
  // orientation (0=horizontal, 1=vertical), lattice row, lattice col
  uint64_t packed;
  bool operator==(const EdgeKey& o) const { return packed == o.packed; }
};
struct EdgeKeyHash {
  size_t operator()(const EdgeKey& k) const { return std::hash<uint64_t>()(k.packed); }
};
EdgeKey hkey(int i, int j) { return {(static_cast<uint64_t>(i) << 21) | static_cast<uint64_t>(j)}; }
EdgeKey vkey(int i, int j) {
  return {(1ull << 63) | (static_cast<uint64_t>(i) << 21) | static_cast<uint64_t>(j)};
}

struct Segment {
  EdgeKey from, to;
};

}  // namespace

std::vector<Polyline> marching_squares(const std::vector<float>& grid, int grid_res) {
  if (static_cast<int>(grid.size()) != grid_res * grid_res)
    throw ShapeError("marching_squares: grid size does not match resolution");
  auto val = [&](int i, int j) { return grid[static_cast<size_t>(i) * grid_res + j]; };
  auto inside = [&](int i, int j) { return val(i, j) <= 0.0f; };
  auto coord = [&](int k) { return -1.0 + 2.0 * k / (grid_res - 1); };
  // crossing point on an edge, linear interpolation
  auto hpoint = [&](int i, int j) -> std::array<double, 2> {
    const double v0 = val(i, j), v1 = val(i, j + 1);
    const double s = v0 / (v0 - v1);
    return {coord(j) + s * (coord(j + 1) - coord(j)), coord(i)};
  };
  auto vpoint = [&](int i, int j) -> std::array<double, 2> {
    const double v0 = val(i, j), v1 = val(i + 1, j);
    const double s = v0 / (v0 - v1);
    return {coord(j), coord(i) + s * (coord(i + 1) - coord(i))};
  };

  std::vector<Segment> segs;
  std::unordered_map<EdgeKey, std::array<double, 2>, EdgeKeyHash> points;
  for (int i = 0; i + 1 < grid_res; ++i) {
    for (int j = 0; j + 1 < grid_res; ++j) {
      const int c = (inside(i, j) ? 1 : 0) | (inside(i, j + 1) ? 2 : 0) |
                    (inside(i + 1, j + 1) ? 4 : 0) | (inside(i + 1, j) ? 8 : 0);
      if (c == 0 || c == 15) continue;
      const EdgeKey bo = hkey(i, j), top = hkey(i + 1, j), left = vkey(i, j), right = vkey(i, j + 1);
      auto emit = [&](EdgeKey from, EdgeKey to) { segs.push_back({from, to}); };
      // register crossing points for the cell's cut edges
      const bool cut_bottom = inside(i, j) != inside(i, j + 1);
      const bool cut_top = inside(i + 1, j) != inside(i + 1, j + 1);
      const bool cut_left = inside(i, j) != inside(i + 1, j);
      const bool cut_right = inside(i, j + 1) != inside(i + 1, j + 1);
      if (cut_bottom) points.emplace(bo, hpoint(i, j));
      if (cut_top) points.emplace(top, hpoint(i + 1, j));
      if (cut_left) points.emplace(left, vpoint(i, j));
      if (cut_right) points.emplace(right, vpoint(i, j + 1));
      // directed so the interior (<= 0) lies on the left of travel
      switch (c) {
        case 1: emit(bo, left); break;
        case 2: emit(right, bo); break;
        case 3: emit(right, left); break;
        case 4: emit(top, right); break;
        case 5: {
          const float m = (val(i, j) + val(i, j + 1) + val(i + 1, j + 1) + val(i + 1, j)) * 0.25f;
          if (m <= 0.0f) {
            emit(bo, right);
            emit(top, left);
          } else {
            emit(bo, left);
            emit(top, right);
          }
          break;
        }
        case 6: emit(top, bo); break;
        case 7: emit(top, left); break;
        case 8: emit(left, top); break;
        case 9: emit(bo, top); break;
        case 10: {
          const float m = (val(i, j) + val(i, j + 1) + val(i + 1, j + 1) + val(i + 1, j)) * 0.25f;
          if (m <= 0.0f) {
            emit(right, top);
            emit(left, bo);
          } else {
            emit(right, bo);
            emit(left, top);
          }
          break;
        }
        case 11: emit(right, top); break;
        case 12: emit(left, right); break;
        case 13: emit(bo, right); break;
        case 14: emit(left, bo); break;
        default: break;
      }
    }
  }

  std::unordered_map<EdgeKey, size_t, EdgeKeyHash> by_from;
  by_from.reserve(segs.size());
  for (size_t s = 0; s < segs.size(); ++s) by_from.emplace(segs[s].from, s);

  std::vector<bool> used(segs.size(), false);
  std::vector<Polyline> loops;
  for (size_t s0 = 0; s0 < segs.size(); ++s0) {
    if (used[s0]) continue;
    Polyline poly;
    size_t s = s0;
    bool closed = false;
    while (!used[s]) {
      used[s] = true;
      poly.pts.push_back(points.at(segs[s].from));
      auto next = by_from.find(segs[s].to);
      if (next == by_from.end()) break;  // open chain (shape clipped by grid); drop below
      if (next->second == s0) {
        closed = true;
        break;
      }
      s = next->second;
    }
    if (!closed || poly.pts.size() < 3) continue;
    double area2 = 0.0;
    for (size_t k = 0; k < poly.pts.size(); ++k) {
      const auto& p = poly.pts[k];
      const auto& q = poly.pts[(k + 1) % poly.pts.size()];
      area2 += p[0] * q[1] - q[0] * p[1];
    }
    poly.signed_area = 0.5 * area2;
    loops.push_back(std::move(poly));
  }
  std::sort(loops.begin(), loops.end(), [](const Polyline& a, const Polyline& b) {
    return std::abs(a.signed_area) > std::abs(b.signed_area);
  });
  return loops;
}

ExtractedShape extract_shape(const Tensor& latents, const ParameterStore& vae_store,
                             const VaeConfig& cfg, int grid_res) {
  ExtractedShape out;
  out.grid_res = grid_res;
  out.grid = decode_sdf_grid(vae_store, latents, cfg, grid_res);
  out.contours = marching_squares(out.grid, grid_res);
  return out;
}

double polyline_length(const Polyline& p) {
  double len = 0.0;
  for (size_t k = 0; k < p.pts.size(); ++k) {
    const auto& a = p.pts[k];
    const auto& b = p.pts[(k + 1) % p.pts.size()];
    len += std::hypot(b[0] - a[0], b[1] - a[1]);
  }
  return len;
}

std::vector<double> resample_contours(const std::vector<Polyline>& contours, int n) {
  std::vector<double> out;
  if (contours.empty() || n < 1) return out;
  std::vector<double> lengths;
  double total = 0.0;
  for (const auto& c : contours) {
    lengths.push_back(polyline_length(c));
    total += lengths.back();
  }
  if (total <= 0.0) return out;
  // allocate counts proportionally, remainder to the largest fractions
  std::vector<int> counts(contours.size(), 0);
  std::vector<std::pair<double, size_t>> fracs;
  int assigned = 0;
  for (size_t i = 0; i < contours.size(); ++i) {
    const double exact = n * lengths[i] / total;
    counts[i] = static_cast<int>(exact);
    assigned += counts[i];
    fracs.push_back({exact - counts[i], i});
  }
  std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int k = 0; k < n - assigned; ++k) counts[fracs[static_cast<size_t>(k) % fracs.size()].second]++;

  out.reserve(static_cast<size_t>(n) * 2);
  for (size_t i = 0; i < contours.size(); ++i) {
    const int m = counts[i];
    if (m < 1) continue;
    const auto& pts = contours[i].pts;
    const double step = lengths[i] / m;
    double want = 0.0;
    double walked = 0.0;
    size_t k = 0;
    int emitted = 0;
    while (emitted < m && k < pts.size()) {
      const auto& a = pts[k];
      const auto& b = pts[(k + 1) % pts.size()];
      const double seg = std::hypot(b[0] - a[0], b[1] - a[1]);
      while (emitted < m && want <= walked + seg) {
        const double s = seg > 0.0 ? (want - walked) / seg : 0.0;
        out.push_back(a[0] + s * (b[0] - a[0]));
        out.push_back(a[1] + s * (b[1] - a[1]));
        ++emitted;
        want += step;
      }
      walked += seg;
      ++k;
    }
    while (emitted < m) {  // numeric leftovers land on the first vertex
      out.push_back(pts[0][0]);
      out.push_back(pts[0][1]);
      ++emitted;
    }
  }
  return out;
}

}  // namespace poseflow
