#include "poseflow/condenc.hpp"

#include <cmath>

#include "poseflow/blocks.hpp"

namespace poseflow {

std::string pose_repr_name(PoseRepr r) { return r == PoseRepr::bones ? "bones" : "joints"; }

PoseRepr pose_repr_from_name(const std::string& s, const std::string& pointer) {
  if (s == "bones") return PoseRepr::bones;
  if (s == "joints") return PoseRepr::joints;
  throw ConfigError(pointer, "expected \"bones\" or \"joints\", got \"" + s + "\"");
}

void init_cond_params(ParameterStore& store, const CondConfig& cfg) {
  if (cfg.raster_w % cfg.patch != 0 || cfg.raster_h % cfg.patch != 0)
    throw Error("cond: patch size must divide the raster dimensions");
  init_linear(store, "cond.img.patch_proj", cfg.patch * cfg.patch, cfg.image_dim);
  store.create_trunc_normal("cond.img.pos", {cfg.image_tokens(), cfg.image_dim});
  for (int b = 0; b < cfg.image_blocks; ++b)
    init_sa_block(store, "cond.img.blk" + std::to_string(b), cfg.image_dim);

  init_mlp(store, "cond.pose.mlp", cfg.pose_feat_dim(), cfg.pose_dim, cfg.pose_dim);
  init_sa_block(store, "cond.pose.sa", cfg.pose_dim);

  store.create_trunc_normal("cond.null.image", {cfg.image_tokens(), cfg.image_dim});
  store.create_trunc_normal("cond.null.pose", {cfg.pose_tokens(), cfg.pose_dim});
}

Tensor patchify(const std::vector<float>& grid, int w, int h, int patch) {
  if (static_cast<int>(grid.size()) != w * h)
    throw ShapeError("patchify: grid size " + std::to_string(grid.size()) + " != " +
                     std::to_string(w) + "x" + std::to_string(h));
  if (w % patch != 0 || h % patch != 0)
    throw ShapeError("patchify: patch does not divide raster dims");
  const int gw = w / patch, gh = h / patch;
  Tensor out = Tensor::zeros({gw * gh, patch * patch});
  for (int py = 0; py < gh; ++py)
    for (int px = 0; px < gw; ++px) {
      float* dst = out.v.data() + (static_cast<size_t>(py) * gw + px) * patch * patch;
      for (int iy = 0; iy < patch; ++iy)
        for (int ix = 0; ix < patch; ++ix)
          dst[iy * patch + ix] = grid[static_cast<size_t>(py * patch + iy) * w + px * patch + ix];
    }
  return out;
}

Var encode_raster(Tape& tape, Binder& bind, const Tensor& patches, const CondConfig& cfg) {
  if (patches.rows() != cfg.image_tokens() || patches.cols() != cfg.patch * cfg.patch)
    throw ShapeError("encode_raster: patches " + shape_str(patches.shape) + " do not match config");
  Var x = linear_layer(tape, bind, "cond.img.patch_proj", tape.input(patches));
  x = tape.add(x, bind("cond.img.pos"));
  for (int b = 0; b < cfg.image_blocks; ++b)
    x = sa_block(tape, bind, "cond.img.blk" + std::to_string(b), x, cfg.image_heads);
  return x;
}

Tensor bone_features(const Skeleton& skel, const CondConfig& cfg) {
  const int n = skel.bone_count();
  const int d = skel.dim;
  Tensor rows = Tensor::zeros({n, 2 * d});
  for (int b = 0; b < n; ++b) {
    for (int c = 0; c < d; ++c) {
      const float sv = static_cast<float>(skel.start(b)[c]);
      const float ev = static_cast<float>(skel.end(b)[c]);
      if (!std::isfinite(sv) || !std::isfinite(ev))
        throw Error("encode_skeleton: NaN coordinate in bone " + std::to_string(b));
      rows.at(b, c) = sv;
      rows.at(b, d + c) = ev;
    }
  }
  return frequency_embed(rows, cfg.pose_freq_bands);
}

Tensor joint_features(const Skeleton& skel, const CondConfig& cfg) {
  const auto joints = skel.joints();
  const int d = skel.dim;
  const int j = static_cast<int>(joints.size()) / d;
  Tensor rows = Tensor::zeros({j, d});
  for (int i = 0; i < j; ++i)
    for (int c = 0; c < d; ++c) {
      const float v = static_cast<float>(joints[static_cast<size_t>(i) * d + c]);
      if (!std::isfinite(v)) throw Error("encode_joints: NaN joint coordinate");
      rows.at(i, c) = v;
    }
  return frequency_embed(rows, cfg.pose_freq_bands);
}

Tensor pose_features(const Skeleton& skel, const CondConfig& cfg) {
  return cfg.pose_repr == PoseRepr::joints ? joint_features(skel, cfg) : bone_features(skel, cfg);
}

Var encode_pose(Tape& tape, Binder& bind, const Tensor& feats, const CondConfig& cfg) {
  if (feats.cols() != cfg.pose_feat_dim())
    throw ShapeError("encode_pose: features " + shape_str(feats.shape) +
                     " do not match configured width " + std::to_string(cfg.pose_feat_dim()));
  Var x = mlp_block(tape, bind, "cond.pose.mlp", tape.input(feats));
  return sa_block(tape, bind, "cond.pose.sa", x, cfg.pose_heads);
}

Var null_condition(Tape& tape, Binder& bind, CondKind kind) {
  return bind(kind == CondKind::image ? "cond.null.image" : "cond.null.pose");
}

}  // namespace poseflow
