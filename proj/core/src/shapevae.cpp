#include "poseflow/shapevae.hpp"

#include <chrono>
#include <cmath>

#include "poseflow/blocks.hpp"

namespace poseflow {

void init_vae_params(ParameterStore& store, const VaeConfig& cfg) {
  const int w = cfg.width;
  const int feat = cfg.point_feat_dim();
  init_linear(store, "vae.enc.point_proj", feat, w);
  store.create_trunc_normal("vae.enc.query", {cfg.latent_tokens, w});
  for (int b = 0; b < cfg.enc_blocks; ++b)
    init_ca_block(store, "vae.enc.blk" + std::to_string(b), w);
  init_layer_norm(store, "vae.enc.ln_out", w);
  init_linear(store, "vae.enc.out", w, cfg.latent_dim);
  if (cfg.beta > 0.0) init_linear(store, "vae.enc.logvar", w, cfg.latent_dim, /*zero=*/true);

  init_linear(store, "vae.dec.query_proj", feat, w);
  init_linear(store, "vae.dec.lat_proj", cfg.latent_dim, w);
  for (int b = 0; b < cfg.dec_blocks; ++b)
    init_ca_block(store, "vae.dec.blk" + std::to_string(b), w);
  init_layer_norm(store, "vae.dec.ln_out", w);
  init_linear(store, "vae.dec.head_fc", w, w);
  init_linear(store, "vae.dec.head_out", w, 1, /*zero=*/true);
}

Tensor embed_points(const std::vector<float>& flat_points, int dim, int freq_bands) {
  const int n = static_cast<int>(flat_points.size()) / dim;
  Tensor coords({n, dim}, flat_points);
  Tensor freqs = frequency_embed(coords, freq_bands);
  Tensor out = Tensor::zeros({n, dim + freqs.cols()});
  for (int r = 0; r < n; ++r) {
    float* dst = out.v.data() + static_cast<size_t>(r) * out.cols();
    for (int c = 0; c < dim; ++c) dst[c] = coords.at(r, c);
    const float* f = freqs.v.data() + static_cast<size_t>(r) * freqs.cols();
    for (int c = 0; c < freqs.cols(); ++c) dst[dim + c] = f[c];
  }
  return out;
}

EncodeOut encode_vae(Tape& tape, Binder& bind, const ShapeSample& sample, const VaeConfig& cfg,
                     std::optional<Tensor> noise) {
  if (sample.n_surface() != cfg.n_surface || sample.n_sharp() != cfg.n_sharp)
    throw ShapeError("encode: sample has " + std::to_string(sample.n_surface()) + "+" +
                     std::to_string(sample.n_sharp()) + " points, config expects " +
                     std::to_string(cfg.n_surface) + "+" + std::to_string(cfg.n_sharp));
  std::vector<float> pts = sample.surface;
  pts.insert(pts.end(), sample.sharp.begin(), sample.sharp.end());
  Var emb = tape.input(embed_points(pts, sample.dim, cfg.freq_bands));
  Var kv = linear_layer(tape, bind, "vae.enc.point_proj", emb);
  Var q = bind("vae.enc.query");
  for (int b = 0; b < cfg.enc_blocks; ++b)
    q = ca_block(tape, bind, "vae.enc.blk" + std::to_string(b), q, kv, cfg.heads);
  Var hn = layer_norm_layer(tape, bind, "vae.enc.ln_out", q);
  EncodeOut out;
  out.mean = linear_layer(tape, bind, "vae.enc.out", hn);
  if (cfg.beta > 0.0) {
    out.logvar = linear_layer(tape, bind, "vae.enc.logvar", hn);
    Tensor eps = noise ? std::move(*noise)
                       : Tensor::zeros({cfg.latent_tokens, cfg.latent_dim});
    out.latent = tape.reparam(out.mean, out.logvar, tape.input(std::move(eps)));
  } else {
    out.latent = out.mean;
  }
  return out;
}

Tensor encode_latents(const ParameterStore& store, const ShapeSample& sample,
                      const VaeConfig& cfg) {
  Tape tape(false);
  Binder bind(tape, store);
  VaeConfig c = cfg;
  c.beta = 0.0;  // inference uses the posterior mean
  EncodeOut out = encode_vae(tape, bind, sample, c);
  return tape.val(out.latent);
}

Var decode_sdf(Tape& tape, Binder& bind, Var latents, const Tensor& queries,
               const VaeConfig& cfg) {
  Var emb = tape.input(embed_points(queries.v, queries.cols(), cfg.freq_bands));
  Var h = linear_layer(tape, bind, "vae.dec.query_proj", emb);
  Var kv = linear_layer(tape, bind, "vae.dec.lat_proj", latents);
  for (int b = 0; b < cfg.dec_blocks; ++b)
    h = ca_block(tape, bind, "vae.dec.blk" + std::to_string(b), h, kv, cfg.heads);
  Var hn = layer_norm_layer(tape, bind, "vae.dec.ln_out", h);
  Var fc = tape.gelu(linear_layer(tape, bind, "vae.dec.head_fc", hn));
  return linear_layer(tape, bind, "vae.dec.head_out", fc);  // [n, 1]
}

Tensor decode_sdf_values(const ParameterStore& store, const Tensor& latents,
                         const Tensor& queries, const VaeConfig& cfg) {
  Tape tape(false);
  Binder bind(tape, store);
  Var lat = tape.input(latents);
  Var out = decode_sdf(tape, bind, lat, queries, cfg);
  Tensor flat = tape.val(out);
  flat.shape = {flat.rows()};
  return flat;
}

VaeLossParts vae_loss(Tape& tape, Binder& bind, const ShapeSample& sample,
                      const std::vector<int>& query_idx, const VaeConfig& cfg,
                      std::optional<Tensor> noise) {
  EncodeOut enc = encode_vae(tape, bind, sample, cfg, std::move(noise));
  const int nq = static_cast<int>(query_idx.size());
  Tensor q = Tensor::zeros({nq, sample.dim});
  Tensor target = Tensor::zeros({nq, 1});
  for (int i = 0; i < nq; ++i) {
    const int j = query_idx[static_cast<size_t>(i)];
    for (int c = 0; c < sample.dim; ++c)
      q.at(i, c) = sample.queries[static_cast<size_t>(j) * sample.dim + c];
    target.at(i, 0) = sample.sdf[static_cast<size_t>(j)];
  }
  Var pred = decode_sdf(tape, bind, enc.latent, q, cfg);
  Var recon = tape.l1_clamped_loss(pred, tape.input(std::move(target)), cfg.sdf_clamp);
  VaeLossParts parts;
  parts.recon = tape.val(recon).v[0];
  if (cfg.beta > 0.0) {
    Var kl = tape.kl_loss(enc.mean, enc.logvar);
    parts.kl = tape.val(kl).v[0];
    parts.total = tape.add(recon, tape.scale(kl, static_cast<float>(cfg.beta)));
  } else {
    parts.total = recon;
  }
  return parts;
}

LatentStats compute_latent_stats(const ParameterStore& store,
                                 const std::vector<TrainingPair>& pairs, const VaeConfig& cfg) {
  const int d = cfg.latent_dim;
  std::vector<double> sum(static_cast<size_t>(d), 0.0), sq(static_cast<size_t>(d), 0.0);
  int64_t count = 0;
  for (const TrainingPair& p : pairs) {
    Tensor lat = encode_latents(store, p.shape_b, cfg);
    for (int r = 0; r < lat.rows(); ++r) {
      for (int c = 0; c < d; ++c) {
        const double x = lat.at(r, c);
        sum[static_cast<size_t>(c)] += x;
        sq[static_cast<size_t>(c)] += x * x;
      }
      ++count;
    }
  }
  LatentStats st;
  st.mean.resize(static_cast<size_t>(d));
  st.stddev.resize(static_cast<size_t>(d));
  for (int c = 0; c < d; ++c) {
    const double mu = sum[static_cast<size_t>(c)] / static_cast<double>(count);
    const double var = sq[static_cast<size_t>(c)] / static_cast<double>(count) - mu * mu;
    st.mean[static_cast<size_t>(c)] = static_cast<float>(mu);
    st.stddev[static_cast<size_t>(c)] = static_cast<float>(std::sqrt(std::max(var, 1e-12)));
    if (st.stddev[static_cast<size_t>(c)] < 1e-6f) st.stddev[static_cast<size_t>(c)] = 1e-6f;
  }
  return st;
}

Tensor normalize_latents(const Tensor& lat, const LatentStats& st) {
  Tensor out = lat;
  const int d = static_cast<int>(st.mean.size());
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < d; ++c)
      out.at(r, c) = (out.at(r, c) - st.mean[static_cast<size_t>(c)]) / st.stddev[static_cast<size_t>(c)];
  return out;
}

Tensor denormalize_latents(const Tensor& lat, const LatentStats& st) {
  Tensor out = lat;
  const int d = static_cast<int>(st.mean.size());
  for (int r = 0; r < out.rows(); ++r)
    for (int c = 0; c < d; ++c)
      out.at(r, c) = out.at(r, c) * st.stddev[static_cast<size_t>(c)] + st.mean[static_cast<size_t>(c)];
  return out;
}

ParameterStore train_vae(const Dataset& ds, const VaeTrainConfig& cfg, uint64_t seed,
                         LatentStats* stats_out, const TrainLogFn& log) {
  const int n_shapes = std::min<int>(cfg.train_shapes, static_cast<int>(ds.train.size()));
  if (n_shapes < 1) throw Error("train_vae: no training shapes");
  ParameterStore store(seed);
  init_vae_params(store, cfg.vae);
  Adam adam({.lr = cfg.lr});
  RngState root = RngState(seed).substream("vae");
  const auto t0 = std::chrono::steady_clock::now();

  for (int step = 0; step < cfg.steps; ++step) {
    RngState srng = root.substream("step").substream(static_cast<uint64_t>(step));
    Tape tape;
    Binder bind(tape, store);
    std::vector<Var> losses;
    losses.reserve(static_cast<size_t>(cfg.batch));
    for (int e = 0; e < cfg.batch; ++e) {
      RngState erng = srng.substream(static_cast<uint64_t>(e));
      const TrainingPair& pair =
          ds.train[erng.next_below(static_cast<uint64_t>(n_shapes))];
      std::vector<int> idx(static_cast<size_t>(cfg.queries_per_step));
      for (auto& i : idx)
        i = static_cast<int>(erng.next_below(static_cast<uint64_t>(pair.shape_b.n_queries())));
      std::optional<Tensor> noise;
      if (cfg.vae.beta > 0.0) {
        Tensor n = Tensor::zeros({cfg.vae.latent_tokens, cfg.vae.latent_dim});
        for (auto& x : n.v) x = erng.normal_f32();
        noise = std::move(n);
      }
      losses.push_back(vae_loss(tape, bind, pair.shape_b, idx, cfg.vae, std::move(noise)).total);
    }
    Var loss = tape.mean_of(losses);
    const double loss_val = tape.val(loss).v[0];
    if (!std::isfinite(loss_val)) throw Error("train_vae: non-finite loss at step " + std::to_string(step));
    tape.backward(loss);
    GradMap grads;
    bind.add_grads_to(grads);
    adam.step(store, grads);
    if (log && (step % cfg.log_every == 0 || step + 1 == cfg.steps)) {
      const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      log(step, loss_val, wall);
    }
  }

  if (stats_out) {
    std::vector<TrainingPair> shapes(ds.train.begin(), ds.train.begin() + n_shapes);
    *stats_out = compute_latent_stats(store, shapes, cfg.vae);
  }
  return store;
}

double vae_sign_accuracy(const ParameterStore& store, const std::vector<TrainingPair>& pairs,
                         const VaeConfig& cfg, int max_pairs) {
  int64_t hit = 0, total = 0;
  int n = static_cast<int>(pairs.size());
  if (max_pairs > 0) n = std::min(n, max_pairs);
  for (int i = 0; i < n; ++i) {
    const ShapeSample& s = pairs[static_cast<size_t>(i)].shape_b;
    Tensor lat = encode_latents(store, s, cfg);
    Tensor q({s.n_queries(), s.dim}, s.queries);
    Tensor pred = decode_sdf_values(store, lat, q, cfg);
    for (int j = 0; j < s.n_queries(); ++j) {
      const bool in_pred = pred.v[static_cast<size_t>(j)] <= 0.0f;
      const bool in_gt = s.sdf[static_cast<size_t>(j)] <= 0.0f;
      hit += (in_pred == in_gt) ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

double vae_surface_recall(const ParameterStore& store, const std::vector<TrainingPair>& pairs,
                          const VaeConfig& cfg, double tol, int max_pairs) {
  int64_t hit = 0, total = 0;
  int n = static_cast<int>(pairs.size());
  if (max_pairs > 0) n = std::min(n, max_pairs);
  for (int i = 0; i < n; ++i) {
    const ShapeSample& s = pairs[static_cast<size_t>(i)].shape_b;
    Tensor lat = encode_latents(store, s, cfg);
    Tensor q({s.n_surface(), s.dim}, s.surface);
    Tensor pred = decode_sdf_values(store, lat, q, cfg);
    for (int j = 0; j < s.n_surface(); ++j) {
      hit += std::abs(pred.v[static_cast<size_t>(j)]) < tol ? 1 : 0;
      ++total;
    }
  }
  return total ? static_cast<double>(hit) / static_cast<double>(total) : 0.0;
}

}  // namespace poseflow
