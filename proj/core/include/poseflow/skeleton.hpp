#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "poseflow/common.hpp"
#include "poseflow/rng.hpp"

namespace poseflow {

struct BoneSpec {
  std::string name;
  int parent_joint = 0;
  int child_joint = 0;
  std::array<double, 2> rest_dir{0.0, 1.0};  // unit, world frame at rest
  double length = 0.1;                       // fraction of character height
  double angle_limit = 2.0;                  // |pose angle| bound, radians
};

/// Bone tree rooted at the pelvis joint (joint 0). Joint count is always
/// bone count + 1; bone i's child joint is i + 1.
struct SkeletonTopology {
  std::vector<BoneSpec> bones;
  int spine_bone = 0;
  int head_bone = 1;
  std::vector<int> upper_arm_bones;  // for A-pose construction

  int bone_count() const { return static_cast<int>(bones.size()); }
  int joint_count() const { return bone_count() + 1; }

  /// Default 10-bone biped: pelvis->chest, chest->head, two arms with
  /// forearms, two legs with shins.
  static SkeletonTopology humanoid10();
};

struct CharacterIdentity {
  uint64_t seed = 0;
  std::vector<double> bone_radius;  // per bone, model units
  double torso_width_mult = 1.5;    // applied to the spine bone
  double head_radius = 0.12;        // replaces the head bone radius

  /// Effective capsule radius of a bone after the torso/head rules.
  double radius_of(const SkeletonTopology& topo, int bone) const;
};

CharacterIdentity sample_identity(const SkeletonTopology& topo, uint64_t seed);

struct Pose {
  std::vector<double> angle;  // per bone, relative to parent frame
  std::array<double, 2> root_translation{0.0, 0.0};
  double root_rotation = 0.0;
};

Pose rest_pose(const SkeletonTopology& topo);
/// Arms lowered `arm_angle_rad` away from the downward torso axis, all other
/// joints at rest.
Pose make_apose(const SkeletonTopology& topo, double arm_angle_rad);
/// Uniform angles within limit_scale * per-bone limits, small root motion.
Pose sample_pose(const SkeletonTopology& topo, RngState rng, double limit_scale = 0.8);

/// Bone endpoints: P_s row i and P_e row i are the start/end of bone i,
/// flattened row-major with `dim` coordinates per row.
struct Skeleton {
  int dim = 2;
  std::vector<double> ps, pe;
  // similarity transform that produced canonical coordinates: x' = scale*x + offset
  double canon_scale = 1.0;
  std::array<double, 2> canon_offset{0.0, 0.0};

  int bone_count() const { return dim ? static_cast<int>(ps.size()) / dim : 0; }
  const double* start(int bone) const { return ps.data() + static_cast<size_t>(bone) * dim; }
  const double* end(int bone) const { return pe.data() + static_cast<size_t>(bone) * dim; }
  /// Joint positions: root first, then each bone's child joint.
  std::vector<double> joints() const;
};

/// Canonicalized skeleton plus matching capsule radii (scaled by the same
/// similarity transform).
struct PosedCharacter {
  Skeleton skel;
  std::vector<double> radius;
};

/// Forward kinematics in model units, no canonicalization.
Skeleton pose_skeleton_raw(const SkeletonTopology& topo, const Pose& pose);

/// FK followed by fitting the capsule shape bounds into the canonical box
/// [-margin, margin]^2 with a uniform scale. Throws if any bone degenerates.
PosedCharacter pose_character(const SkeletonTopology& topo, const CharacterIdentity& identity,
                              const Pose& pose, double margin = 0.9);

inline Skeleton pose_skeleton(const SkeletonTopology& topo, const CharacterIdentity& identity,
                              const Pose& pose, double margin = 0.9) {
  return pose_character(topo, identity, pose, margin).skel;
}

}  // namespace poseflow
