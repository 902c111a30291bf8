#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>

#include "poseflow/flowdit.hpp"

namespace poseflow {

enum class GuidanceStrategy { image_only, frozen_pose, independent };

std::string strategy_name(GuidanceStrategy s);

/// CFG strategy: a single scale for the two-term forms, four scales for
/// the independent form. Two-term forms are evaluated in the factored
/// shape (1-lambda)*v_uncond + lambda*v_cond. Independent weights are
/// never renormalized, even when they do not sum to 1.
struct GuidanceWeights {
  GuidanceStrategy strategy = GuidanceStrategy::frozen_pose;
  double lambda = 7.5;
  std::array<double, 4> lambdas{1.0, 0.0, 0.0, 0.0};

  static GuidanceWeights image_only(double lambda);
  static GuidanceWeights frozen_pose(double lambda);
  static GuidanceWeights independent(const std::array<double, 4>& l);
  static GuidanceWeights preset_a() { return independent({7.5, -6.5, 0.0, 0.0}); }
  static GuidanceWeights preset_b() { return independent({14.5, -7.0, -3.0, -3.0}); }
  /// Parses "image-only:L", "frozen-pose:L", "independent:a,b,c,d",
  /// "preset-a", "preset-b".
  static GuidanceWeights parse(const std::string& spec, const std::string& pointer = "/guidance");
  std::string to_spec() const;
};

struct SamplerConfig {
  int steps = 32;
  enum class Scheme { euler, heun } scheme = Scheme::euler;
  uint64_t seed = 0;
};

using VelocityFn = std::function<Tensor(const Tensor& x, double t)>;

/// Encoded condition tokens for one sample; null slots fall back to the
/// learned null embeddings inside guided_velocity.
struct EncodedConditions {
  std::optional<Tensor> image;  // [M, C_i]
  std::optional<Tensor> pose;   // [N, C_p]
};

EncodedConditions encode_conditions(const ParameterStore& store, const CondConfig& cfg,
                                    const std::vector<uint8_t>& raster_bits, int raster_w,
                                    int raster_h, const Skeleton& skel);

/// One guided velocity evaluation combining the strategy's forward passes.
Tensor guided_velocity(const ParameterStore& store, const FlowConfig& fcfg, const Tensor& x_t,
                       double t, const EncodedConditions& cond, const GuidanceWeights& weights);

VelocityFn make_guided_velocity(const ParameterStore& store, const FlowConfig& fcfg,
                                const EncodedConditions& cond, const GuidanceWeights& weights);

/// Integrates dx/dt = v from t=1 (noise) down to t=0. Euler steps are
/// x += dt*v; Heun averages the slopes at both ends of the step. If
/// `initial` is provided it replaces the seeded Gaussian start.
Tensor sample_ode(const VelocityFn& velocity, int tokens, int dim, const SamplerConfig& cfg,
                  const std::optional<Tensor>& initial = std::nullopt,
                  Tensor* noise_out = nullptr);

/// Full sampling pipeline in latent space: guided ODE then denormalization
/// by the VAE statistics.
Tensor sample_latents(const ParameterStore& flow_store, const FlowConfig& fcfg,
                      const EncodedConditions& cond, const GuidanceWeights& weights,
                      const SamplerConfig& scfg, const LatentStats& stats,
                      Tensor* noise_out = nullptr);

}  // namespace poseflow
