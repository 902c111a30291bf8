#pragma once

#include <functional>

#include "poseflow/adam.hpp"
#include "poseflow/condenc.hpp"
#include "poseflow/dataset.hpp"
#include "poseflow/shapevae.hpp"

namespace poseflow {

struct FlowConfig {
  int blocks = 4;
  int width = 128;
  int heads = 4;
  int mlp_ratio = 4;
  int time_freqs = 16;
  int latent_tokens = 16;  // K
  int latent_dim = 32;     // D_lat
  int image_dim = 64;      // C_i of incoming image tokens
  int pose_dim = 64;       // C_p of incoming pose tokens
};

/// Registers the DiT under "flow.": input/output projections, timestep
/// embedder, the shared AdaLN MLP, and per-block offsets + attention +
/// the two per-stream MLPs. Modulation outputs and the final projection
/// are zero-initialized so the model starts as the zero velocity field.
void init_flow_params(ParameterStore& store, const FlowConfig& cfg);

/// x_t = (1-t)*x1 + t*x0: data at t=0, noise at t=1.
Tensor interpolate(const Tensor& x0, const Tensor& x1, double t);
/// Constant path velocity x1 - x0 (the regression target).
Tensor velocity_target(const Tensor& x0, const Tensor& x1);

/// One full DiT pass. Condition tokens are concatenated [image ++ pose],
/// jointly modulated per stream, mixed by one self-attention over
/// [condition ++ latent], then updated by per-stream MLPs. Throws with the
/// block index if activations go non-finite.
Var flow_forward(Tape& tape, Binder& bind, Var x_t, double t, Var c_image, Var c_pose,
                 const FlowConfig& cfg);

/// Inference helper on raw tensors (conditions already encoded).
Tensor flow_velocity(const ParameterStore& store, const Tensor& x_t, double t,
                     const Tensor& c_image, const Tensor& c_pose, const FlowConfig& cfg);

struct FlowTrainConfig {
  FlowConfig flow;
  CondConfig cond;
  double p_drop_image = 0.1;
  double p_drop_pose = 0.1;
  int steps = 5000;
  int batch = 8;
  float lr = 3e-4f;
  int log_every = 100;
  int max_train_pairs = 0;  // 0 = use every train pair
};

/// Per-pair tensors precomputed once per run: normalized target latents,
/// image patches, pose features.
struct FlowBatchCache {
  std::vector<Tensor> latents;   // [K, D_lat] each, normalized
  std::vector<Tensor> patches;   // [M, patch^2]
  std::vector<Tensor> posefeat;  // [N, feat]
};

FlowBatchCache build_flow_cache(const Dataset& ds, const ParameterStore& vae_store,
                                const VaeConfig& vae_cfg, const LatentStats& stats,
                                const FlowTrainConfig& cfg);

/// Independent condition dropout: each slot nulled by its own coin.
struct DropoutDraw {
  bool drop_image = false;
  bool drop_pose = false;
};
DropoutDraw draw_dropout(RngState& rng, double p_image, double p_pose);

/// Trains the DiT + condition encoders + null embeddings; x1 comes from the
/// frozen VAE via the cache. Returns the trained store.
ParameterStore train_flow(const Dataset& ds, const ParameterStore& vae_store,
                          const VaeConfig& vae_cfg, const LatentStats& stats,
                          const FlowTrainConfig& cfg, uint64_t seed,
                          const TrainLogFn& log = nullptr);

/// Loss of a single (x_t, t, conditions, target) tuple on an existing tape;
/// used by tests and the training loop.
Var flow_element_loss(Tape& tape, Binder& bind, const Tensor& x0, const Tensor& x1, double t,
                      const Tensor* patches, const Tensor* posefeat, const FlowTrainConfig& cfg);

}  // namespace poseflow
