#include "poseflow/guidance.hpp"

#include <cmath>
#include <sstream>

namespace poseflow {

std::string strategy_name(GuidanceStrategy s) {
  switch (s) {
    case GuidanceStrategy::image_only: return "image-only";
    case GuidanceStrategy::frozen_pose: return "frozen-pose";
    case GuidanceStrategy::independent: return "independent";
  }
  return "?";
}

GuidanceWeights GuidanceWeights::image_only(double lambda) {
  GuidanceWeights w;
  w.strategy = GuidanceStrategy::image_only;
  w.lambda = lambda;
  return w;
}

GuidanceWeights GuidanceWeights::frozen_pose(double lambda) {
  GuidanceWeights w;
  w.strategy = GuidanceStrategy::frozen_pose;
  w.lambda = lambda;
  return w;
}

GuidanceWeights GuidanceWeights::independent(const std::array<double, 4>& l) {
  GuidanceWeights w;
  w.strategy = GuidanceStrategy::independent;
  w.lambdas = l;
  return w;
}

GuidanceWeights GuidanceWeights::parse(const std::string& spec, const std::string& pointer) {
  if (spec == "preset-a") return preset_a();
  if (spec == "preset-b") return preset_b();
  const auto colon = spec.find(':');
  const std::string name = spec.substr(0, colon);
  const std::string args = colon == std::string::npos ? "" : spec.substr(colon + 1);
  auto parse_num = [&](const std::string& s) {
    try {
      size_t used = 0;
      double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw ConfigError(pointer, "bad guidance number \"" + s + "\" in \"" + spec + "\"");
    }
  };
  if (name == "image-only" || name == "frozen-pose") {
    if (args.empty()) throw ConfigError(pointer, "missing guidance scale in \"" + spec + "\"");
    const double l = parse_num(args);
    return name == "image-only" ? image_only(l) : frozen_pose(l);
  }
  if (name == "independent") {
    std::array<double, 4> l{};
    std::stringstream ss(args);
    std::string tok;
    size_t i = 0;
    while (std::getline(ss, tok, ',')) {
      if (i >= 4) throw ConfigError(pointer, "too many weights in \"" + spec + "\"");
      l[i++] = parse_num(tok);
    }
    if (i != 4) throw ConfigError(pointer, "expected 4 weights in \"" + spec + "\"");
    return independent(l);
  }
  throw ConfigError(pointer, "unknown guidance strategy \"" + name + "\"");
}

std::string GuidanceWeights::to_spec() const {
  std::ostringstream os;
  os << strategy_name(strategy) << ":";
  if (strategy == GuidanceStrategy::independent) {
    for (size_t i = 0; i < 4; ++i) {
      if (i) os << ",";
      os << lambdas[i];
    }
  } else {
    os << lambda;
  }
  return os.str();
}

EncodedConditions encode_conditions(const ParameterStore& store, const CondConfig& cfg,
                                    const std::vector<uint8_t>& raster_bits, int raster_w,
                                    int raster_h, const Skeleton& skel) {
  EncodedConditions out;
  {
    Tape tape(false);
    Binder bind(tape, store);
    Tensor patches = patchify(raster_to_floats(raster_bits, raster_w, raster_h), raster_w,
                              raster_h, cfg.patch);
    out.image = tape.val(encode_raster(tape, bind, patches, cfg));
  }
  {
    Tape tape(false);
    Binder bind(tape, store);
    out.pose = tape.val(encode_pose(tape, bind, pose_features(skel, cfg), cfg));
  }
  return out;
}

namespace {

const Tensor& null_image_tokens(const ParameterStore& store) { return store.at("cond.null.image"); }
const Tensor& null_pose_tokens(const ParameterStore& store) { return store.at("cond.null.pose"); }

}  // namespace

Tensor guided_velocity(const ParameterStore& store, const FlowConfig& fcfg, const Tensor& x_t,
                       double t, const EncodedConditions& cond, const GuidanceWeights& weights) {
  const Tensor& null_img = null_image_tokens(store);
  const Tensor& null_pose = null_pose_tokens(store);
  auto fwd = [&](const Tensor* ci, const Tensor* cp) {
    return flow_velocity(store, x_t, t, ci ? *ci : null_img, cp ? *cp : null_pose, fcfg);
  };
  switch (weights.strategy) {
    case GuidanceStrategy::image_only: {
      if (!cond.image) throw Error("guided_velocity: image-only strategy needs an image condition");
      // pose slot stays the learned null in every term
      Tensor uncond = fwd(nullptr, nullptr);
      Tensor with_img = fwd(&*cond.image, nullptr);
      const float l = static_cast<float>(weights.lambda);
      return t_axpby(uncond, 1.0f - l, with_img, l);
    }
    case GuidanceStrategy::frozen_pose: {
      if (!cond.image || !cond.pose)
        throw Error("guided_velocity: frozen-pose strategy needs image and pose conditions");
      Tensor pose_only = fwd(nullptr, &*cond.pose);
      Tensor both = fwd(&*cond.image, &*cond.pose);
      const float l = static_cast<float>(weights.lambda);
      return t_axpby(pose_only, 1.0f - l, both, l);
    }
    case GuidanceStrategy::independent: {
      const Tensor* ci = cond.image ? &*cond.image : nullptr;
      const Tensor* cp = cond.pose ? &*cond.pose : nullptr;
      Tensor acc;
      bool first = true;
      for (size_t k = 0; k < 4; ++k) {
        const double lk = weights.lambdas[k];
        if (lk == 0.0) continue;
        const Tensor* use_ci = (k == 0 || k == 2) ? ci : nullptr;
        const Tensor* use_cp = (k == 0 || k == 1) ? cp : nullptr;
        if ((k == 0 || k == 2) && !ci)
          throw Error("guided_velocity: weight " + std::to_string(k + 1) +
                      " needs an image condition");
        if ((k == 0 || k == 1) && !cp)
          throw Error("guided_velocity: weight " + std::to_string(k + 1) +
                      " needs a pose condition");
        Tensor term = fwd(use_ci, use_cp);
        if (first) {
          acc = t_scale(term, static_cast<float>(lk));
          first = false;
        } else {
          acc = t_axpby(acc, 1.0f, term, static_cast<float>(lk));
        }
      }
      if (first) throw Error("guided_velocity: all independent weights are zero");
      return acc;
    }
  }
  throw Error("guided_velocity: unknown strategy");
}

VelocityFn make_guided_velocity(const ParameterStore& store, const FlowConfig& fcfg,
                                const EncodedConditions& cond, const GuidanceWeights& weights) {
  return [&store, fcfg, cond, weights](const Tensor& x, double t) {
    return guided_velocity(store, fcfg, x, t, cond, weights);
  };
}

Tensor sample_ode(const VelocityFn& velocity, int tokens, int dim, const SamplerConfig& cfg,
                  const std::optional<Tensor>& initial, Tensor* noise_out) {
  if (cfg.steps < 1) throw Error("sample: step count must be >= 1");
  Tensor x;
  if (initial) {
    x = *initial;
  } else {
    x = Tensor::zeros({tokens, dim});
    RngState rng = RngState(cfg.seed).substream("sample").substream("noise");
    for (auto& v : x.v) v = rng.normal_f32();
  }
  if (noise_out) *noise_out = x;
  const double dt = 1.0 / static_cast<double>(cfg.steps);
  double t = 1.0;
  for (int s = 0; s < cfg.steps; ++s) {
    Tensor v1 = velocity(x, t);
    if (cfg.scheme == SamplerConfig::Scheme::euler) {
      x = t_axpby(x, 1.0f, v1, static_cast<float>(dt));
    } else {
      Tensor xe = t_axpby(x, 1.0f, v1, static_cast<float>(dt));
      const double t2 = std::max(t - dt, 0.0);
      Tensor v2 = velocity(xe, t2);
      Tensor avg = t_axpby(v1, 0.5f, v2, 0.5f);
      x = t_axpby(x, 1.0f, avg, static_cast<float>(dt));
    }
    if (!x.finite())
      throw Error("sample: non-finite state after integration step " + std::to_string(s));
    t -= dt;
  }
  return x;
}

Tensor sample_latents(const ParameterStore& flow_store, const FlowConfig& fcfg,
                      const EncodedConditions& cond, const GuidanceWeights& weights,
                      const SamplerConfig& scfg, const LatentStats& stats, Tensor* noise_out) {
  VelocityFn v = make_guided_velocity(flow_store, fcfg, cond, weights);
  Tensor normalized =
      sample_ode(v, fcfg.latent_tokens, fcfg.latent_dim, scfg, std::nullopt, noise_out);
  return denormalize_latents(normalized, stats);
}

}  // namespace poseflow
