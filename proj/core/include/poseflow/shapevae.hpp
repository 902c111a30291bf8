#pragma once

#include <functional>
#include <optional>
#include <string>

#include "poseflow/adam.hpp"
#include "poseflow/dataset.hpp"
#include "poseflow/params.hpp"

namespace poseflow {

struct VaeConfig {
  int latent_tokens = 16;  // K
  int latent_dim = 32;
  int width = 64;
  int heads = 4;
  int enc_blocks = 1;
  int dec_blocks = 2;
  int freq_bands = 8;
  double beta = 0.0;  // KL weight; 0 = deterministic autoencoder
  int n_surface = 1024;  // encoder input counts, must match samples
  int n_sharp = 256;
  float sdf_clamp = 0.1f;

  int point_feat_dim(int dim = 2) const { return dim + dim * 2 * freq_bands; }
};

/// Registers every VAE parameter under the "vae." prefix.
void init_vae_params(ParameterStore& store, const VaeConfig& cfg);

/// Point-set features fed to the encoder: raw coords ++ frequency embed.
Tensor embed_points(const std::vector<float>& flat_points, int dim, int freq_bands);

struct EncodeOut {
  Var latent;            // [K, D_lat]
  Var mean, logvar;      // valid when beta > 0
};

/// K learnable query tokens cross-attend to the embedded surface+sharp
/// points. Deterministic when beta = 0; otherwise reparameterized with
/// `noise` (pass a [K, D_lat] standard-normal leaf).
EncodeOut encode_vae(Tape& tape, Binder& bind, const ShapeSample& sample, const VaeConfig& cfg,
                     std::optional<Tensor> noise = std::nullopt);

/// Convenience inference path (no gradients, beta treated as 0).
Tensor encode_latents(const ParameterStore& store, const ShapeSample& sample,
                      const VaeConfig& cfg);

/// Frequency-embedded queries cross-attend to the latent set; MLP head
/// emits one SDF value per query.
Var decode_sdf(Tape& tape, Binder& bind, Var latents, const Tensor& queries, const VaeConfig& cfg);

Tensor decode_sdf_values(const ParameterStore& store, const Tensor& latents,
                         const Tensor& queries, const VaeConfig& cfg);

struct VaeLossParts {
  Var total;
  float recon = 0.0f;
  float kl = 0.0f;
};

/// L1 on clamped SDF values at `query_idx` positions (+ beta * KL).
VaeLossParts vae_loss(Tape& tape, Binder& bind, const ShapeSample& sample,
                      const std::vector<int>& query_idx, const VaeConfig& cfg,
                      std::optional<Tensor> noise = std::nullopt);

/// Per-dimension mean/std of latent entries over the given samples, f64
/// accumulated; std floored at 1e-6.
struct LatentStats {
  std::vector<float> mean, stddev;  // D_lat each
};
LatentStats compute_latent_stats(const ParameterStore& store, const std::vector<TrainingPair>& pairs,
                                 const VaeConfig& cfg);

Tensor normalize_latents(const Tensor& lat, const LatentStats& st);
Tensor denormalize_latents(const Tensor& lat, const LatentStats& st);

struct VaeTrainConfig {
  VaeConfig vae;
  int steps = 3000;
  int batch = 8;
  int queries_per_step = 256;
  int train_shapes = 500;  // first N train pairs feed the VAE
  float lr = 3e-4f;
  int log_every = 100;
};

using TrainLogFn = std::function<void(int step, double loss, double wall_s)>;

/// Trains on the target shapes of the first train_shapes pairs and returns
/// the store; stats are computed over the same shapes afterwards.
ParameterStore train_vae(const Dataset& ds, const VaeTrainConfig& cfg, uint64_t seed,
                         LatentStats* stats_out, const TrainLogFn& log = nullptr);

/// Fraction of stored queries whose decoded sign matches the stored sdf.
double vae_sign_accuracy(const ParameterStore& store, const std::vector<TrainingPair>& pairs,
                         const VaeConfig& cfg, int max_pairs = 0);
/// Fraction of stored surface points with |decoded sdf| < tol.
double vae_surface_recall(const ParameterStore& store, const std::vector<TrainingPair>& pairs,
                          const VaeConfig& cfg, double tol = 0.02, int max_pairs = 0);

}  // namespace poseflow
