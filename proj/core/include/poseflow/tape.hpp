#pragma once

#include <functional>
#include <string>
#include <vector>

#include "poseflow/tensor.hpp"

namespace poseflow {

/// Handle to a tape node.
struct Var {
  int i = -1;
  bool valid() const { return i >= 0; }
};

/// Reverse-mode autodiff tape. Operations append nodes whose values are
/// computed eagerly; backward() replays registered closures in reverse
/// creation order (a topological order by construction). A tape is
/// single-use: build a forward pass, call backward once, then discard.
///
/// Constructing with record=false skips closure creation entirely, which
/// turns the same builder code into a plain inference executor.
class Tape {
 public:
  explicit Tape(bool record = true) : record_(record) {}

  /// Leaf carrying data; never receives a gradient.
  Var input(Tensor t);
  /// Leaf carrying a parameter snapshot; receives a gradient in backward.
  Var param(const Tensor& t);

  const Tensor& val(Var x) const { return nodes_[x.i].t; }
  Tensor& val(Var x) { return nodes_[x.i].t; }
  /// Gradient buffer of a node (valid after backward()).
  const std::vector<float>& grad(Var x) const { return nodes_[x.i].t.g; }

  Var matmul(Var a, Var b);
  /// x[m,k] * w[k,n] + bias[n]; pass an invalid Var to skip the bias.
  Var linear(Var x, Var w, Var bias);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, float s);
  Var gelu(Var x);
  Var layer_norm(Var x, Var gain, Var bias, float eps = 1e-5f);
  Var layer_norm_plain(Var x, float eps = 1e-5f);
  Var softmax_rows(Var x);
  /// Multi-head scaled dot-product attention over the full key/value set.
  /// q:[Lq,d] k,v:[Lk,d]; heads must divide d. Heads are column blocks and
  /// are reassembled side by side into the output's d columns.
  Var attention(Var q, Var k, Var v, int heads);
  Var concat_rows(Var a, Var b);
  Var slice_rows(Var x, int r0, int r1);
  Var slice_cols(Var x, int c0, int c1);
  /// x * (1 + scale) + shift with row-vector shift/scale broadcast over rows.
  Var modulate(Var x, Var shift, Var scale);
  /// x + gate * y with row-vector gate broadcast over rows.
  Var gated_add(Var x, Var y, Var gate);
  Var concat_cols(Var a, Var b);
  /// mean + exp(0.5*logvar) * noise, the VAE reparameterization.
  Var reparam(Var mean, Var logvar, Var noise);
  Var mse_loss(Var pred, Var target);
  /// mean |clamp(pred) - clamp(target)| with clamping to [-c, c].
  Var l1_clamped_loss(Var pred, Var target, float c);
  Var kl_loss(Var mean, Var logvar);
  /// Mean of scalar nodes.
  Var mean_of(const std::vector<Var>& xs);

  void backward(Var scalar_loss);
  void check_finite(Var x, const std::string& context) const;
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor t;
    std::function<void()> bwd;
    bool needs_grad = false;
  };
  std::vector<Node> nodes_;
  bool record_;
  bool ran_backward_ = false;

  Var push(Tensor t, bool needs_grad);
  bool wants(Var x) const { return x.valid() && nodes_[x.i].needs_grad; }
  std::vector<float>& gbuf(Var x) {
    nodes_[x.i].t.ensure_grad();
    return nodes_[x.i].t.g;
  }
  const float* vptr(Var x) const { return nodes_[x.i].t.v.data(); }
};

}  // namespace poseflow
