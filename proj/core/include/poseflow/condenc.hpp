#pragma once

#include <string>

#include "poseflow/params.hpp"
#include "poseflow/skeleton.hpp"

namespace poseflow {

enum class PoseRepr { bones, joints };

std::string pose_repr_name(PoseRepr r);
PoseRepr pose_repr_from_name(const std::string& s, const std::string& pointer);

struct CondConfig {
  int raster_w = 32;
  int raster_h = 32;
  int patch = 4;
  int image_dim = 64;  // C_i
  int image_blocks = 2;
  int image_heads = 4;
  int pose_dim = 64;  // C_p
  int pose_heads = 4;
  int pose_freq_bands = 8;
  PoseRepr pose_repr = PoseRepr::bones;
  int bones = 10;  // N
  int dim = 2;

  int image_tokens() const { return (raster_w / patch) * (raster_h / patch); }  // M
  int pose_tokens() const { return pose_repr == PoseRepr::joints ? bones + 1 : bones; }
  /// PE([P_s, P_e]) width for bones, PE(joint) width for joints.
  int pose_feat_dim() const {
    const int coords = pose_repr == PoseRepr::joints ? dim : 2 * dim;
    return coords * 2 * pose_freq_bands;
  }
};

/// Registers the image encoder, pose encoder, and the learned null
/// embeddings under "cond.". Null embeddings train jointly with the flow.
void init_cond_params(ParameterStore& store, const CondConfig& cfg);

/// Non-overlapping patch flattening: [h/p * w/p, p*p], patches row-major,
/// pixels row-major within a patch.
Tensor patchify(const std::vector<float>& grid, int w, int h, int patch);

/// Patch projection + learned 2D positional embedding + self-attention
/// blocks. Returns [M, C_i].
Var encode_raster(Tape& tape, Binder& bind, const Tensor& patches, const CondConfig& cfg);

/// Frequency-embedded bone rows [P_s ++ P_e] for the pose encoder.
Tensor bone_features(const Skeleton& skel, const CondConfig& cfg);
/// Frequency-embedded joint rows (the ablation representation).
Tensor joint_features(const Skeleton& skel, const CondConfig& cfg);
/// Features matching cfg.pose_repr.
Tensor pose_features(const Skeleton& skel, const CondConfig& cfg);

/// MLP per token then one self-attention block, no index positions.
/// Accepts the output of bone_features/joint_features. Returns [N, C_p]
/// (or [J, C_p] in joints mode).
Var encode_pose(Tape& tape, Binder& bind, const Tensor& feats, const CondConfig& cfg);

enum class CondKind { image, pose };

/// The learned null embedding for a condition slot.
Var null_condition(Tape& tape, Binder& bind, CondKind kind);

}  // namespace poseflow
