#include "poseflow/blocks.hpp"

namespace poseflow {

void init_linear(ParameterStore& store, const std::string& prefix, int in, int out, bool zero) {
  if (zero)
    store.create_zeros(prefix + ".w", {in, out});
  else
    store.create_trunc_normal(prefix + ".w", {in, out});
  store.create_zeros(prefix + ".b", {out});
}

Var linear_layer(Tape& t, Binder& bind, const std::string& prefix, Var x) {
  return t.linear(x, bind(prefix + ".w"), bind(prefix + ".b"));
}

void init_mlp(ParameterStore& store, const std::string& prefix, int in, int hidden, int out,
              bool zero_out) {
  init_linear(store, prefix + ".fc1", in, hidden);
  init_linear(store, prefix + ".fc2", hidden, out, zero_out);
}

Var mlp_block(Tape& t, Binder& bind, const std::string& prefix, Var x) {
  Var h = t.gelu(linear_layer(t, bind, prefix + ".fc1", x));
  return linear_layer(t, bind, prefix + ".fc2", h);
}

void init_layer_norm(ParameterStore& store, const std::string& prefix, int dim) {
  store.create(prefix + ".g", {dim}).v.assign(static_cast<size_t>(dim), 1.0f);
  store.create_zeros(prefix + ".b", {dim});
}

Var layer_norm_layer(Tape& t, Binder& bind, const std::string& prefix, Var x) {
  return t.layer_norm(x, bind(prefix + ".g"), bind(prefix + ".b"));
}

void init_sa_block(ParameterStore& store, const std::string& prefix, int width, int mlp_ratio) {
  init_layer_norm(store, prefix + ".ln1", width);
  init_linear(store, prefix + ".wq", width, width);
  init_linear(store, prefix + ".wk", width, width);
  init_linear(store, prefix + ".wv", width, width);
  init_linear(store, prefix + ".wo", width, width);
  init_layer_norm(store, prefix + ".ln2", width);
  init_mlp(store, prefix + ".mlp", width, width * mlp_ratio, width);
}

Var sa_block(Tape& t, Binder& bind, const std::string& prefix, Var x, int heads) {
  Var n = layer_norm_layer(t, bind, prefix + ".ln1", x);
  Var attn = t.attention(linear_layer(t, bind, prefix + ".wq", n),
                         linear_layer(t, bind, prefix + ".wk", n),
                         linear_layer(t, bind, prefix + ".wv", n), heads);
  x = t.add(x, linear_layer(t, bind, prefix + ".wo", attn));
  Var m = mlp_block(t, bind, prefix + ".mlp", layer_norm_layer(t, bind, prefix + ".ln2", x));
  return t.add(x, m);
}

void init_ca_block(ParameterStore& store, const std::string& prefix, int width, int mlp_ratio) {
  init_layer_norm(store, prefix + ".ln_q", width);
  init_layer_norm(store, prefix + ".ln_kv", width);
  init_linear(store, prefix + ".wq", width, width);
  init_linear(store, prefix + ".wk", width, width);
  init_linear(store, prefix + ".wv", width, width);
  init_linear(store, prefix + ".wo", width, width);
  init_layer_norm(store, prefix + ".ln2", width);
  init_mlp(store, prefix + ".mlp", width, width * mlp_ratio, width);
}

Var ca_block(Tape& t, Binder& bind, const std::string& prefix, Var x, Var kv, int heads) {
  Var qn = layer_norm_layer(t, bind, prefix + ".ln_q", x);
  Var kvn = layer_norm_layer(t, bind, prefix + ".ln_kv", kv);
  Var attn = t.attention(linear_layer(t, bind, prefix + ".wq", qn),
                         linear_layer(t, bind, prefix + ".wk", kvn),
                         linear_layer(t, bind, prefix + ".wv", kvn), heads);
  x = t.add(x, linear_layer(t, bind, prefix + ".wo", attn));
  Var m = mlp_block(t, bind, prefix + ".mlp", layer_norm_layer(t, bind, prefix + ".ln2", x));
  return t.add(x, m);
}

}  // namespace poseflow
