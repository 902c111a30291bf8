#include "poseflow/sdf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>

namespace poseflow {

std::vector<Capsule> character_capsules(const PosedCharacter& ch) {
  std::vector<Capsule> caps(static_cast<size_t>(ch.skel.bone_count()));
  for (int b = 0; b < ch.skel.bone_count(); ++b) {
    Capsule& c = caps[static_cast<size_t>(b)];
    for (int k = 0; k < ch.skel.dim; ++k) {
      c.a[static_cast<size_t>(k)] = ch.skel.start(b)[k];
      c.b[static_cast<size_t>(k)] = ch.skel.end(b)[k];
    }
    c.r = ch.radius[static_cast<size_t>(b)];
  }
  return caps;
}

double capsule_sdf(const Capsule& c, const double* p, int dim) {
  double ab2 = 0.0, ap_ab = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double ab = c.b[static_cast<size_t>(k)] - c.a[static_cast<size_t>(k)];
    const double ap = p[k] - c.a[static_cast<size_t>(k)];
    ab2 += ab * ab;
    ap_ab += ap * ab;
  }
  const double t = ab2 > 0.0 ? std::clamp(ap_ab / ab2, 0.0, 1.0) : 0.0;
  double d2 = 0.0;
  for (int k = 0; k < dim; ++k) {
    const double closest =
        c.a[static_cast<size_t>(k)] + t * (c.b[static_cast<size_t>(k)] - c.a[static_cast<size_t>(k)]);
    const double d = p[k] - closest;
    d2 += d * d;
  }
  return std::sqrt(d2) - c.r;
}

double capsule_union_sdf(const std::vector<Capsule>& caps, const double* p, int dim) {
  double best = std::numeric_limits<double>::infinity();
  for (const Capsule& c : caps) best = std::min(best, capsule_sdf(c, p, dim));
  return best;
}

void capsule_two_smallest(const std::vector<Capsule>& caps, const double* p, int dim, double* d1,
                          double* d2) {
  double a = std::numeric_limits<double>::infinity();
  double b = std::numeric_limits<double>::infinity();
  for (const Capsule& c : caps) {
    const double d = capsule_sdf(c, p, dim);
    if (d < a) {
      b = a;
      a = d;
    } else if (d < b) {
      b = d;
    }
  }
  *d1 = a;
  *d2 = b;
}

std::array<double, 2> capsule_union_grad2(const std::vector<Capsule>& caps, const double* p) {
  double best = std::numeric_limits<double>::infinity();
  const Capsule* bc = nullptr;
  for (const Capsule& c : caps) {
    const double d = capsule_sdf(c, p, 2);
    if (d < best) {
      best = d;
      bc = &c;
    }
  }
  if (!bc) return {0.0, 0.0};
  const double abx = bc->b[0] - bc->a[0], aby = bc->b[1] - bc->a[1];
  const double ab2 = abx * abx + aby * aby;
  const double t = ab2 > 0.0 ? std::clamp(((p[0] - bc->a[0]) * abx + (p[1] - bc->a[1]) * aby) / ab2, 0.0, 1.0) : 0.0;
  const double cx = bc->a[0] + t * abx, cy = bc->a[1] + t * aby;
  double dx = p[0] - cx, dy = p[1] - cy;
  const double n = std::sqrt(dx * dx + dy * dy);
  if (n < 1e-12) return {1.0, 0.0};  // on the axis; any direction works
  return {dx / n, dy / n};
}

namespace {

// Uniform point on a capsule boundary (two straight sides + two caps),
// weighted by arc length.
std::array<double, 2> capsule_boundary_point(const Capsule& c, double u) {
  const double abx = c.b[0] - c.a[0], aby = c.b[1] - c.a[1];
  const double len = std::sqrt(abx * abx + aby * aby);
  const double dx = len > 0.0 ? abx / len : 1.0, dy = len > 0.0 ? aby / len : 0.0;
  const double nx = -dy, ny = dx;
  const double cap = std::numbers::pi * c.r;
  const double total = 2.0 * len + 2.0 * cap;
  double s = u * total;
  if (s < len)  // side +n
    return {c.a[0] + dx * s + nx * c.r, c.a[1] + dy * s + ny * c.r};
  s -= len;
  if (s < cap) {  // cap around b, from +n to -n
    const double th = s / c.r;
    const double vx = nx * std::cos(th) + dx * std::sin(th);
    const double vy = ny * std::cos(th) + dy * std::sin(th);
    return {c.b[0] + vx * c.r, c.b[1] + vy * c.r};
  }
  s -= cap;
  if (s < len)  // side -n, reversed
    return {c.b[0] - dx * s - nx * c.r, c.b[1] - dy * s - ny * c.r};
  s -= len;
  const double th = std::min(s / c.r, std::numbers::pi);  // cap around a
  const double vx = -nx * std::cos(th) - dx * std::sin(th);
  const double vy = -ny * std::cos(th) - dy * std::sin(th);
  return {c.a[0] + vx * c.r, c.a[1] + vy * c.r};
}

struct SeedPicker {
  const std::vector<Capsule>& caps;
  std::vector<double> cum;  // cumulative perimeter
  explicit SeedPicker(const std::vector<Capsule>& cs) : caps(cs) {
    double acc = 0.0;
    for (const Capsule& c : caps) {
      const double abx = c.b[0] - c.a[0], aby = c.b[1] - c.a[1];
      acc += 2.0 * std::sqrt(abx * abx + aby * aby) + 2.0 * std::numbers::pi * c.r;
      cum.push_back(acc);
    }
  }
  std::array<double, 2> draw(RngState& rng) const {
    const double u = rng.next_double() * cum.back();
    size_t i = static_cast<size_t>(std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    if (i >= caps.size()) i = caps.size() - 1;
    return capsule_boundary_point(caps[i], rng.next_double());
  }
};

// Project to the zero level set; returns true on success.
bool project_to_surface(const std::vector<Capsule>& caps, std::array<double, 2>& p,
                        const SampleOptions& opts) {
  for (int it = 0; it < opts.max_project_iters; ++it) {
    const double d = capsule_union_sdf(caps, p.data(), 2);
    if (std::abs(d) < opts.surface_tol) return true;
    const auto g = capsule_union_grad2(caps, p.data());
    p[0] -= opts.project_damping * d * g[0];
    p[1] -= opts.project_damping * d * g[1];
  }
  return std::abs(capsule_union_sdf(caps, p.data(), 2)) < opts.surface_tol;
}

}  // namespace

ShapeSample sample_surface(const PosedCharacter& ch, int n_s, int n_k, RngState rng,
                           const SampleOptions& opts) {
  if (n_s < 1 || n_k < 1) throw Error("sample_surface: n_s and n_k must be >= 1");
  const auto caps = character_capsules(ch);
  const SeedPicker picker(caps);
  ShapeSample out;
  out.dim = 2;
  out.surface.reserve(static_cast<size_t>(n_s) * 2);

  RngState srng = rng.substream("surface");
  int64_t failures = 0, attempts = 0;
  auto draw_surface_point = [&](RngState& r) {
    while (true) {
      ++attempts;
      auto p = picker.draw(r);
      if (project_to_surface(caps, p, opts)) return p;
      ++failures;
      if (attempts >= 16 && failures > opts.max_failure_rate * attempts)
        throw Error("sample_surface: projection failure rate " + std::to_string(failures) + "/" +
                    std::to_string(attempts) + " exceeds limit");
    }
  };

  for (int i = 0; i < n_s; ++i) {
    const auto p = draw_surface_point(srng);
    out.surface.push_back(static_cast<float>(p[0]));
    out.surface.push_back(static_cast<float>(p[1]));
  }

  // Sharp points: surface loci where the two closest capsules nearly tie.
  // Seed near joints first (junctions live there), fall back to global
  // surface rejection, and finally re-draw from the surface set when the
  // character has no junctions at all (single capsule).
  RngState krng = rng.substream("sharp");
  out.sharp.reserve(static_cast<size_t>(n_k) * 2);
  const auto joints = ch.skel.joints();
  const int nj = static_cast<int>(joints.size() / 2);
  auto is_sharp = [&](const std::array<double, 2>& p) {
    double d1, d2;
    capsule_two_smallest(caps, p.data(), 2, &d1, &d2);
    return std::isfinite(d2) && (d2 - d1) < opts.junction_eps;
  };
  const int64_t budget = static_cast<int64_t>(n_k) * 64 + 4096;
  int64_t tries = 0;
  int found = 0;
  while (found < n_k && tries < budget) {
    ++tries;
    std::array<double, 2> p;
    if (caps.size() > 1 && (tries & 1)) {
      const int j = static_cast<int>(krng.next_below(static_cast<uint64_t>(nj)));
      const double r0 = ch.radius[krng.next_below(ch.radius.size())];
      p = {joints[static_cast<size_t>(j) * 2] + krng.normal() * r0,
           joints[static_cast<size_t>(j) * 2 + 1] + krng.normal() * r0};
      if (!project_to_surface(caps, p, opts)) continue;
    } else {
      p = picker.draw(krng);
      if (!project_to_surface(caps, p, opts)) continue;
    }
    if (!is_sharp(p)) continue;
    out.sharp.push_back(static_cast<float>(p[0]));
    out.sharp.push_back(static_cast<float>(p[1]));
    ++found;
  }
  if (found == 0) {
    out.sharp_fallback = true;
    RngState frng = rng.substream("sharp_fallback");
    for (int i = 0; i < n_k; ++i) {
      const size_t j = frng.next_below(static_cast<uint64_t>(n_s));
      out.sharp.push_back(out.surface[j * 2]);
      out.sharp.push_back(out.surface[j * 2 + 1]);
    }
  } else if (found < n_k) {
    // junction loci exist but are tiny; reuse found points to fill
    RngState frng = rng.substream("sharp_fill");
    while (found < n_k) {
      const size_t j = frng.next_below(static_cast<uint64_t>(found));
      out.sharp.push_back(out.sharp[j * 2]);
      out.sharp.push_back(out.sharp[j * 2 + 1]);
      ++found;
    }
  }
  return out;
}

ShapeSample sample_shape(const PosedCharacter& ch, int n_s, int n_k, int n_q, RngState rng,
                         const SampleOptions& opts) {
  ShapeSample out = sample_surface(ch, n_s, n_k, rng, opts);
  const auto caps = character_capsules(ch);
  RngState qrng = rng.substream("queries");
  out.queries.reserve(static_cast<size_t>(n_q) * 2);
  out.sdf.reserve(static_cast<size_t>(n_q));
  const int n_uniform = n_q / 2;
  for (int i = 0; i < n_q; ++i) {
    double x, y;
    if (i < n_uniform) {
      x = qrng.uniform(-1.0, 1.0);
      y = qrng.uniform(-1.0, 1.0);
    } else {
      const size_t j = qrng.next_below(static_cast<uint64_t>(out.n_surface()));
      x = std::clamp(out.surface[j * 2] + qrng.normal() * opts.near_sigma, -1.0, 1.0);
      y = std::clamp(out.surface[j * 2 + 1] + qrng.normal() * opts.near_sigma, -1.0, 1.0);
    }
    // round coordinates to f32 first so stored sdf matches recomputation
    const float fx = static_cast<float>(x), fy = static_cast<float>(y);
    const double q[2] = {static_cast<double>(fx), static_cast<double>(fy)};
    out.queries.push_back(fx);
    out.queries.push_back(fy);
    out.sdf.push_back(static_cast<float>(capsule_union_sdf(caps, q, 2)));
  }
  return out;
}

std::vector<uint8_t> rasterize_fn(const std::function<double(double, double)>& sdf, int w, int h) {
  if (w < 8 || h < 8) throw Error("rasterize: raster must be at least 8x8");
  const int stride = (w + 7) / 8;
  std::vector<uint8_t> bits(static_cast<size_t>(stride) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double cx = -1.0 + (x + 0.5) * 2.0 / w;
      const double cy = -1.0 + (y + 0.5) * 2.0 / h;
      if (sdf(cx, cy) <= 0.0)
        bits[static_cast<size_t>(y) * stride + x / 8] |= static_cast<uint8_t>(1u << (x % 8));
    }
  }
  return bits;
}

std::vector<uint8_t> rasterize(const PosedCharacter& ch, int w, int h) {
  const auto caps = character_capsules(ch);
  return rasterize_fn(
      [&caps](double x, double y) {
        const double p[2] = {x, y};
        return capsule_union_sdf(caps, p, 2);
      },
      w, h);
}

int raster_popcount(const std::vector<uint8_t>& bits) {
  int n = 0;
  for (uint8_t b : bits) n += std::popcount(static_cast<unsigned>(b));
  return n;
}

bool raster_get(const std::vector<uint8_t>& bits, int w, int x, int y) {
  const int stride = (w + 7) / 8;
  return (bits[static_cast<size_t>(y) * stride + x / 8] >> (x % 8)) & 1u;
}

std::vector<float> raster_to_floats(const std::vector<uint8_t>& bits, int w, int h) {
  std::vector<float> out(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out[static_cast<size_t>(y) * w + x] = raster_get(bits, w, x, y) ? 1.0f : 0.0f;
  return out;
}

}  // namespace poseflow
