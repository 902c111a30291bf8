#include "poseflow/skeleton.hpp"

#include <cmath>
#include <numbers>

namespace poseflow {

namespace {
constexpr double kDeg = std::numbers::pi / 180.0;

std::array<double, 2> rot(double angle, const std::array<double, 2>& v) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * v[0] - s * v[1], s * v[0] + c * v[1]};
}
}  // namespace

SkeletonTopology SkeletonTopology::humanoid10() {
  SkeletonTopology t;
  const double limb = 120.0 * kDeg;
  const double axial = 30.0 * kDeg;
  const double thigh_splay = 0.18;
  const double tn = std::sqrt(1.0 + thigh_splay * thigh_splay);
  // joints: 0 pelvis, 1 chest, 2 head top, 3 elbow L, 4 wrist L,
  //         5 elbow R, 6 wrist R, 7 knee L, 8 ankle L, 9 knee R, 10 ankle R
  t.bones = {
      {"spine", 0, 1, {0.0, 1.0}, 0.30, axial},
      {"head", 1, 2, {0.0, 1.0}, 0.18, axial},
      {"upper_arm_l", 1, 3, {-1.0, 0.0}, 0.22, limb},
      {"forearm_l", 3, 4, {-1.0, 0.0}, 0.20, limb},
      {"upper_arm_r", 1, 5, {1.0, 0.0}, 0.22, limb},
      {"forearm_r", 5, 6, {1.0, 0.0}, 0.20, limb},
      {"thigh_l", 0, 7, {-thigh_splay / tn, -1.0 / tn}, 0.30, limb},
      {"shin_l", 7, 8, {0.0, -1.0}, 0.28, limb},
      {"thigh_r", 0, 9, {thigh_splay / tn, -1.0 / tn}, 0.30, limb},
      {"shin_r", 9, 10, {0.0, -1.0}, 0.28, limb},
  };
  t.spine_bone = 0;
  t.head_bone = 1;
  t.upper_arm_bones = {2, 4};
  return t;
}

double CharacterIdentity::radius_of(const SkeletonTopology& topo, int bone) const {
  if (bone == topo.head_bone) return head_radius;
  double r = bone_radius[static_cast<size_t>(bone)];
  if (bone == topo.spine_bone) r *= torso_width_mult;
  return r;
}

CharacterIdentity sample_identity(const SkeletonTopology& topo, uint64_t seed) {
  CharacterIdentity id;
  id.seed = seed;
  RngState rng = RngState(seed).substream("identity");
  const double base = rng.uniform(0.045, 0.085);
  id.bone_radius.resize(topo.bones.size());
  for (auto& r : id.bone_radius) r = base * rng.uniform(0.8, 1.25);
  id.torso_width_mult = rng.uniform(1.3, 2.0);
  id.head_radius = rng.uniform(0.10, 0.17);
  return id;
}

Pose rest_pose(const SkeletonTopology& topo) {
  Pose p;
  p.angle.assign(topo.bones.size(), 0.0);
  return p;
}

Pose make_apose(const SkeletonTopology& topo, double arm_angle_rad) {
  Pose p = rest_pose(topo);
  for (int b : topo.upper_arm_bones) {
    const auto& rest = topo.bones[static_cast<size_t>(b)].rest_dir;
    // target: downward torso axis rotated outward by arm_angle
    const double side = rest[0] < 0.0 ? -1.0 : 1.0;
    const std::array<double, 2> target{side * std::sin(arm_angle_rad), -std::cos(arm_angle_rad)};
    p.angle[static_cast<size_t>(b)] =
        std::atan2(rest[0] * target[1] - rest[1] * target[0], rest[0] * target[0] + rest[1] * target[1]);
  }
  return p;
}

Pose sample_pose(const SkeletonTopology& topo, RngState rng, double limit_scale) {
  Pose p;
  p.angle.resize(topo.bones.size());
  for (size_t i = 0; i < topo.bones.size(); ++i) {
    const double lim = topo.bones[i].angle_limit * limit_scale;
    p.angle[i] = rng.uniform(-lim, lim);
  }
  p.root_translation = {rng.uniform(-0.1, 0.1), rng.uniform(-0.1, 0.1)};
  p.root_rotation = rng.uniform(-0.25, 0.25);
  return p;
}

std::vector<double> Skeleton::joints() const {
  std::vector<double> out;
  out.reserve(static_cast<size_t>(bone_count() + 1) * dim);
  for (int c = 0; c < dim; ++c) out.push_back(ps[static_cast<size_t>(c)]);
  for (int b = 0; b < bone_count(); ++b)
    for (int c = 0; c < dim; ++c) out.push_back(end(b)[c]);
  return out;
}

Skeleton pose_skeleton_raw(const SkeletonTopology& topo, const Pose& pose) {
  if (pose.angle.size() != topo.bones.size())
    throw Error("pose_skeleton: pose has " + std::to_string(pose.angle.size()) + " angles for " +
                std::to_string(topo.bones.size()) + " bones");
  for (size_t i = 0; i < topo.bones.size(); ++i) {
    if (std::abs(pose.angle[i]) > topo.bones[i].angle_limit + 1e-12)
      throw Error("pose_skeleton: angle for bone '" + topo.bones[i].name + "' exceeds limit");
  }
  const int nj = topo.joint_count();
  std::vector<std::array<double, 2>> jpos(static_cast<size_t>(nj));
  std::vector<double> jrot(static_cast<size_t>(nj), 0.0);
  jpos[0] = pose.root_translation;
  jrot[0] = pose.root_rotation;

  Skeleton s;
  s.dim = 2;
  s.ps.resize(topo.bones.size() * 2);
  s.pe.resize(topo.bones.size() * 2);
  // bones are listed parent-first, so one pass suffices
  for (size_t b = 0; b < topo.bones.size(); ++b) {
    const BoneSpec& spec = topo.bones[b];
    const double a = jrot[static_cast<size_t>(spec.parent_joint)] + pose.angle[b];
    const auto d = rot(a, spec.rest_dir);
    const auto& p0 = jpos[static_cast<size_t>(spec.parent_joint)];
    std::array<double, 2> p1{p0[0] + d[0] * spec.length, p0[1] + d[1] * spec.length};
    jpos[static_cast<size_t>(spec.child_joint)] = p1;
    jrot[static_cast<size_t>(spec.child_joint)] = a;
    s.ps[b * 2] = p0[0];
    s.ps[b * 2 + 1] = p0[1];
    s.pe[b * 2] = p1[0];
    s.pe[b * 2 + 1] = p1[1];
  }
  return s;
}

PosedCharacter pose_character(const SkeletonTopology& topo, const CharacterIdentity& identity,
                              const Pose& pose, double margin) {
  Skeleton s = pose_skeleton_raw(topo, pose);
  const int n = s.bone_count();
  double lo[2] = {1e30, 1e30}, hi[2] = {-1e30, -1e30};
  for (int b = 0; b < n; ++b) {
    const double r = identity.radius_of(topo, b);
    for (int c = 0; c < 2; ++c) {
      lo[c] = std::min({lo[c], s.start(b)[c] - r, s.end(b)[c] - r});
      hi[c] = std::max({hi[c], s.start(b)[c] + r, s.end(b)[c] + r});
    }
  }
  const double extent = std::max(hi[0] - lo[0], hi[1] - lo[1]);
  if (!(extent > 0.0)) throw Error("pose_skeleton: degenerate character bounds");
  const double scale = 2.0 * margin / extent;
  const std::array<double, 2> center{(lo[0] + hi[0]) * 0.5, (lo[1] + hi[1]) * 0.5};

  PosedCharacter out;
  out.skel.dim = 2;
  out.skel.canon_scale = scale;
  out.skel.canon_offset = {-center[0] * scale, -center[1] * scale};
  out.skel.ps.resize(s.ps.size());
  out.skel.pe.resize(s.pe.size());
  for (size_t i = 0; i < s.ps.size(); ++i) {
    const int c = static_cast<int>(i % 2);
    out.skel.ps[i] = (s.ps[i] - center[c]) * scale;
    out.skel.pe[i] = (s.pe[i] - center[c]) * scale;
  }
  out.radius.resize(static_cast<size_t>(n));
  for (int b = 0; b < n; ++b) {
    out.radius[static_cast<size_t>(b)] = identity.radius_of(topo, b) * scale;
    double len2 = 0.0;
    for (int c = 0; c < 2; ++c) {
      const double d = out.skel.end(b)[c] - out.skel.start(b)[c];
      len2 += d * d;
    }
    if (!(len2 > 0.0))
      throw Error("pose_skeleton: zero-length bone '" + topo.bones[static_cast<size_t>(b)].name +
                  "' after scaling");
  }
  return out;
}

}  // namespace poseflow
