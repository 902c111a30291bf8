#include "poseflow/flowdit.hpp"

#include <chrono>
#include <cmath>

#include "poseflow/blocks.hpp"

namespace poseflow {

void init_flow_params(ParameterStore& store, const FlowConfig& cfg) {
  const int w = cfg.width;
  init_linear(store, "flow.in_lat", cfg.latent_dim, w);
  init_linear(store, "flow.in_img", cfg.image_dim, w);
  init_linear(store, "flow.in_pose", cfg.pose_dim, w);
  init_mlp(store, "flow.temb", 2 * cfg.time_freqs, w, w);
  init_linear(store, "flow.adaln", w, 6 * w, /*zero=*/true);
  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "flow.blk" + std::to_string(b);
    store.create_zeros(p + ".off1", {1, 6 * w});
    store.create_zeros(p + ".off2", {1, 6 * w});
    init_linear(store, p + ".wq", w, w);
    init_linear(store, p + ".wk", w, w);
    init_linear(store, p + ".wv", w, w);
    init_linear(store, p + ".wo", w, w);
    init_mlp(store, p + ".mlp1", w, cfg.mlp_ratio * w, w);
    init_mlp(store, p + ".mlp2", w, cfg.mlp_ratio * w, w);
  }
  init_linear(store, "flow.final_adaln", w, 2 * w, /*zero=*/true);
  init_linear(store, "flow.final", w, cfg.latent_dim, /*zero=*/true);
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, double t) {
  if (!same_shape(x0, x1))
    throw ShapeError("interpolate: shape mismatch " + shape_str(x0.shape) + " vs " +
                     shape_str(x1.shape));
  if (t < 0.0 || t > 1.0)
    throw Error("interpolate: t = " + std::to_string(t) + " outside [0,1]");
  // data at t=0, noise at t=1
  return t_axpby(x1, static_cast<float>(1.0 - t), x0, static_cast<float>(t));
}

Tensor velocity_target(const Tensor& x0, const Tensor& x1) { return t_sub(x1, x0); }

namespace {

struct Mod {
  Var shift_a, scale_a, gate_a, shift_m, scale_m, gate_m;
};

Mod chunk6(Tape& t, Var m, int w) {
  return Mod{t.slice_cols(m, 0, w),         t.slice_cols(m, w, 2 * w),
             t.slice_cols(m, 2 * w, 3 * w), t.slice_cols(m, 3 * w, 4 * w),
             t.slice_cols(m, 4 * w, 5 * w), t.slice_cols(m, 5 * w, 6 * w)};
}

}  // namespace

Var flow_forward(Tape& tape, Binder& bind, Var x_t, double t, Var c_image, Var c_pose,
                 const FlowConfig& cfg) {
  const Tensor& tx = tape.val(x_t);
  if (tx.rows() != cfg.latent_tokens || tx.cols() != cfg.latent_dim)
    throw ShapeError("flow_forward: x_t " + shape_str(tx.shape) + " does not match config");
  const int w = cfg.width;

  Var lat = linear_layer(tape, bind, "flow.in_lat", x_t);
  Var img = linear_layer(tape, bind, "flow.in_img", c_image);
  Var pose = linear_layer(tape, bind, "flow.in_pose", c_pose);
  Var cond = tape.concat_rows(img, pose);
  const int n_cond = tape.val(cond).rows();
  const int n_lat = tape.val(lat).rows();

  Tensor tval({1, 1}, {static_cast<float>(t)});
  Var temb = mlp_block(tape, bind, "flow.temb", tape.input(frequency_embed(tval, cfg.time_freqs)));
  Var base6 = linear_layer(tape, bind, "flow.adaln", tape.gelu(temb));

  for (int b = 0; b < cfg.blocks; ++b) {
    const std::string p = "flow.blk" + std::to_string(b);
    Mod m1 = chunk6(tape, tape.add(base6, bind(p + ".off1")), w);
    Mod m2 = chunk6(tape, tape.add(base6, bind(p + ".off2")), w);

    Var latn = tape.modulate(tape.layer_norm_plain(lat), m1.shift_a, m1.scale_a);
    Var condn = tape.modulate(tape.layer_norm_plain(cond), m2.shift_a, m2.scale_a);
    Var joint = tape.concat_rows(condn, latn);
    Var attn = tape.attention(linear_layer(tape, bind, p + ".wq", joint),
                              linear_layer(tape, bind, p + ".wk", joint),
                              linear_layer(tape, bind, p + ".wv", joint), cfg.heads);
    Var o = linear_layer(tape, bind, p + ".wo", attn);
    cond = tape.gated_add(cond, tape.slice_rows(o, 0, n_cond), m2.gate_a);
    lat = tape.gated_add(lat, tape.slice_rows(o, n_cond, n_cond + n_lat), m1.gate_a);

    Var latm = tape.modulate(tape.layer_norm_plain(lat), m1.shift_m, m1.scale_m);
    lat = tape.gated_add(lat, mlp_block(tape, bind, p + ".mlp1", latm), m1.gate_m);
    Var condm = tape.modulate(tape.layer_norm_plain(cond), m2.shift_m, m2.scale_m);
    cond = tape.gated_add(cond, mlp_block(tape, bind, p + ".mlp2", condm), m2.gate_m);

    tape.check_finite(lat, "flow_forward: block " + std::to_string(b) + " latent stream");
    tape.check_finite(cond, "flow_forward: block " + std::to_string(b) + " condition stream");
  }

  Var fmod = linear_layer(tape, bind, "flow.final_adaln", tape.gelu(temb));
  Var fshift = tape.slice_cols(fmod, 0, w);
  Var fscale = tape.slice_cols(fmod, w, 2 * w);
  Var latn = tape.modulate(tape.layer_norm_plain(lat), fshift, fscale);
  return linear_layer(tape, bind, "flow.final", latn);
}

Tensor flow_velocity(const ParameterStore& store, const Tensor& x_t, double t,
                     const Tensor& c_image, const Tensor& c_pose, const FlowConfig& cfg) {
  Tape tape(false);
  Binder bind(tape, store);
  Var out = flow_forward(tape, bind, tape.input(x_t), t, tape.input(c_image),
                         tape.input(c_pose), cfg);
  return tape.val(out);
}

DropoutDraw draw_dropout(RngState& rng, double p_image, double p_pose) {
  DropoutDraw d;
  d.drop_image = rng.coin(p_image);
  d.drop_pose = rng.coin(p_pose);
  return d;
}

FlowBatchCache build_flow_cache(const Dataset& ds, const ParameterStore& vae_store,
                                const VaeConfig& vae_cfg, const LatentStats& stats,
                                const FlowTrainConfig& cfg) {
  FlowBatchCache cache;
  size_t n = ds.train.size();
  if (cfg.max_train_pairs > 0) n = std::min(n, static_cast<size_t>(cfg.max_train_pairs));
  cache.latents.reserve(n);
  cache.patches.reserve(n);
  cache.posefeat.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const TrainingPair& p = ds.train[i];
    cache.latents.push_back(
        normalize_latents(encode_latents(vae_store, p.shape_b, vae_cfg), stats));
    cache.patches.push_back(patchify(
        raster_to_floats(p.raster_bits, static_cast<int>(p.raster_w), static_cast<int>(p.raster_h)),
        static_cast<int>(p.raster_w), static_cast<int>(p.raster_h), cfg.cond.patch));
    cache.posefeat.push_back(pose_features(p.skel_b, cfg.cond));
  }
  return cache;
}

Var flow_element_loss(Tape& tape, Binder& bind, const Tensor& x0, const Tensor& x1, double t,
                      const Tensor* patches, const Tensor* posefeat, const FlowTrainConfig& cfg) {
  Var c_img = patches ? encode_raster(tape, bind, *patches, cfg.cond)
                      : null_condition(tape, bind, CondKind::image);
  Var c_pose = posefeat ? encode_pose(tape, bind, *posefeat, cfg.cond)
                        : null_condition(tape, bind, CondKind::pose);
  Var x_t = tape.input(interpolate(x0, x1, t));
  Var target = tape.input(velocity_target(x0, x1));
  Var pred = flow_forward(tape, bind, x_t, t, c_img, c_pose, cfg.flow);
  return tape.mse_loss(pred, target);
}

ParameterStore train_flow(const Dataset& ds, const ParameterStore& vae_store,
                          const VaeConfig& vae_cfg, const LatentStats& stats,
                          const FlowTrainConfig& cfg, uint64_t seed, const TrainLogFn& log) {
  if (ds.train.empty()) throw Error("train_flow: empty training set");
  ParameterStore store(seed);
  init_cond_params(store, cfg.cond);
  init_flow_params(store, cfg.flow);
  Adam adam({.lr = cfg.lr});
  const FlowBatchCache cache = build_flow_cache(ds, vae_store, vae_cfg, stats, cfg);
  const size_t n_pairs = cache.latents.size();
  RngState root = RngState(seed).substream("flow");
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 0; step < cfg.steps; ++step) {
    RngState srng = root.substream("step").substream(static_cast<uint64_t>(step));
    Tape tape;
    Binder bind(tape, store);
    std::vector<Var> losses;
    losses.reserve(static_cast<size_t>(cfg.batch));
    for (int e = 0; e < cfg.batch; ++e) {
      RngState erng = srng.substream(static_cast<uint64_t>(e));
      const size_t idx = erng.next_below(n_pairs);
      const double t = erng.next_double();
      const DropoutDraw drop = draw_dropout(erng, cfg.p_drop_image, cfg.p_drop_pose);
      const Tensor& x1 = cache.latents[idx];
      Tensor x0 = Tensor::zeros(x1.shape);
      for (auto& v : x0.v) v = erng.normal_f32();
      losses.push_back(flow_element_loss(tape, bind, x0, x1, t,
                                         drop.drop_image ? nullptr : &cache.patches[idx],
                                         drop.drop_pose ? nullptr : &cache.posefeat[idx], cfg));
    }
    Var loss = tape.mean_of(losses);
    const double loss_val = tape.val(loss).v[0];
    if (!std::isfinite(loss_val))
      throw Error("train_flow: non-finite loss at step " + std::to_string(step));
    tape.backward(loss);
    GradMap grads;
    bind.add_grads_to(grads);
    adam.step(store, grads);
    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      const double wall =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(step, loss_val, wall);
    }
  }
  return store;
}

}  // namespace poseflow
