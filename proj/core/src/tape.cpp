#include "poseflow/tape.hpp"

#include <cmath>
#include <cstring>
#include <limits>
#include <memory>
#include <numbers>

namespace poseflow {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;

// C[m,n] += A[m,k] * B[k,n]
void mm_acc(const float* __restrict a, const float* __restrict b, float* __restrict c, int m,
            int k, int n) {
  for (int i = 0; i < m; ++i) {
    float* __restrict crow = c + static_cast<size_t>(i) * n;
    const float* __restrict arow = a + static_cast<size_t>(i) * k;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      const float* __restrict brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T  (rows of B dotted with rows of A)
void mm_acc_bt(const float* __restrict a, const float* __restrict b, float* __restrict c, int m,
               int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* __restrict arow = a + static_cast<size_t>(i) * k;
    float* __restrict crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const float* __restrict brow = b + static_cast<size_t>(j) * k;
      float acc = 0.0f;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_acc_at(const float* __restrict a, const float* __restrict b, float* __restrict c, int m,
               int k, int n) {
  for (int i = 0; i < m; ++i) {
    const float* __restrict arow = a + static_cast<size_t>(i) * k;
    const float* __restrict brow = b + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const float av = arow[p];
      float* __restrict crow = c + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void require_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) throw ShapeError(std::string(op) + ": expected rank-2, got " + shape_str(t.shape));
}

}  // namespace

Var Tape::push(Tensor t, bool needs_grad) {
  nodes_.push_back(Node{std::move(t), nullptr, record_ && needs_grad});
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::input(Tensor t) { return push(std::move(t), false); }

Var Tape::param(const Tensor& t) {
  Tensor copy;
  copy.shape = t.shape;
  copy.v = t.v;
  return push(std::move(copy), true);
}

Var Tape::matmul(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].t;
  const Tensor& tb = nodes_[b.i].t;
  const bool batched = ta.ndim() == 3 && tb.ndim() == 3;
  if (!batched && (ta.ndim() != 2 || tb.ndim() != 2))
    throw ShapeError("matmul: ranks not supported: " + shape_str(ta.shape) + " x " +
                     shape_str(tb.shape));
  const int nb = batched ? ta.shape[0] : 1;
  const int m = ta.shape[batched ? 1 : 0];
  const int k = ta.shape[batched ? 2 : 1];
  const int kb = tb.shape[batched ? 1 : 0];
  const int n = tb.shape[batched ? 2 : 1];
  if (k != kb || (batched && tb.shape[0] != nb))
    throw ShapeError("matmul: shape mismatch " + shape_str(ta.shape) + " x " +
                     shape_str(tb.shape));

  Tensor out = Tensor::zeros(batched ? Shape{nb, m, n} : Shape{m, n});
  for (int s = 0; s < nb; ++s)
    mm_acc(ta.v.data() + static_cast<size_t>(s) * m * k,
           tb.v.data() + static_cast<size_t>(s) * k * n,
           out.v.data() + static_cast<size_t>(s) * m * n, m, k, n);
  Var o = push(std::move(out), wants(a) || wants(b));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, a, b, o, nb, m, k, n]() {
      const float* go = nodes_[o.i].t.g.data();
      if (wants(a)) {
        float* ga = gbuf(a).data();
        for (int s = 0; s < nb; ++s)
          mm_acc_bt(go + static_cast<size_t>(s) * m * n, vptr(b) + static_cast<size_t>(s) * k * n,
                    ga + static_cast<size_t>(s) * m * k, m, n, k);
      }
      if (wants(b)) {
        float* gb = gbuf(b).data();
        for (int s = 0; s < nb; ++s)
          mm_acc_at(vptr(a) + static_cast<size_t>(s) * m * k, go + static_cast<size_t>(s) * m * n,
                    gb + static_cast<size_t>(s) * k * n, m, k, n);
      }
    };
  }
  return o;
}

Var Tape::linear(Var x, Var w, Var bias) {
  const Tensor& tx = nodes_[x.i].t;
  const Tensor& tw = nodes_[w.i].t;
  require_2d(tx, "linear");
  require_2d(tw, "linear");
  const int m = tx.shape[0], k = tx.shape[1], n = tw.shape[1];
  if (tw.shape[0] != k)
    throw ShapeError("linear: shape mismatch " + shape_str(tx.shape) + " x " +
                     shape_str(tw.shape));
  Tensor out = Tensor::zeros({m, n});
  if (bias.valid()) {
    const Tensor& tb = nodes_[bias.i].t;
    if (tb.numel() != n)
      throw ShapeError("linear: bias size " + shape_str(tb.shape) + " does not match output " +
                       std::to_string(n));
    for (int i = 0; i < m; ++i)
      std::memcpy(out.v.data() + static_cast<size_t>(i) * n, tb.v.data(), sizeof(float) * n);
  }
  mm_acc(tx.v.data(), tw.v.data(), out.v.data(), m, k, n);
  Var o = push(std::move(out), wants(x) || wants(w) || (bias.valid() && wants(bias)));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, w, bias, o, m, k, n]() {
      const float* go = nodes_[o.i].t.g.data();
      if (wants(x)) mm_acc_bt(go, vptr(w), gbuf(x).data(), m, n, k);
      if (wants(w)) mm_acc_at(vptr(x), go, gbuf(w).data(), m, k, n);
      if (bias.valid() && wants(bias)) {
        float* gb = gbuf(bias).data();
        for (int i = 0; i < m; ++i) {
          const float* grow = go + static_cast<size_t>(i) * n;
          for (int j = 0; j < n; ++j) gb[j] += grow[j];
        }
      }
    };
  }
  return o;
}

Var Tape::add(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].t;
  const Tensor& tb = nodes_[b.i].t;
  if (!same_shape(ta, tb))
    throw ShapeError("add: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += tb.v[i];
  Var o = push(std::move(out), wants(a) || wants(b));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, a, b, o]() {
      const auto& go = nodes_[o.i].t.g;
      if (wants(a)) {
        auto& ga = gbuf(a);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (wants(b)) {
        auto& gb = gbuf(b);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i];
      }
    };
  }
  return o;
}

Var Tape::sub(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].t;
  const Tensor& tb = nodes_[b.i].t;
  if (!same_shape(ta, tb))
    throw ShapeError("sub: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= tb.v[i];
  Var o = push(std::move(out), wants(a) || wants(b));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, a, b, o]() {
      const auto& go = nodes_[o.i].t.g;
      if (wants(a)) {
        auto& ga = gbuf(a);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
      }
      if (wants(b)) {
        auto& gb = gbuf(b);
        for (size_t i = 0; i < go.size(); ++i) gb[i] -= go[i];
      }
    };
  }
  return o;
}

Var Tape::mul(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].t;
  const Tensor& tb = nodes_[b.i].t;
  if (!same_shape(ta, tb))
    throw ShapeError("mul: shape mismatch " + shape_str(ta.shape) + " vs " + shape_str(tb.shape));
  Tensor out = ta;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= tb.v[i];
  Var o = push(std::move(out), wants(a) || wants(b));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, a, b, o]() {
      const auto& go = nodes_[o.i].t.g;
      if (wants(a)) {
        auto& ga = gbuf(a);
        const float* bv = vptr(b);
        for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * bv[i];
      }
      if (wants(b)) {
        auto& gb = gbuf(b);
        const float* av = vptr(a);
        for (size_t i = 0; i < go.size(); ++i) gb[i] += go[i] * av[i];
      }
    };
  }
  return o;
}

Var Tape::scale(Var a, float s) {
  Tensor out = nodes_[a.i].t;
  for (auto& x : out.v) x *= s;
  Var o = push(std::move(out), wants(a));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, a, o, s]() {
      const auto& go = nodes_[o.i].t.g;
      auto& ga = gbuf(a);
      for (size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * s;
    };
  }
  return o;
}

Var Tape::gelu(Var x) {
  const Tensor& tx = nodes_[x.i].t;
  Tensor out = tx;
  for (auto& v : out.v) {
    double xv = v;
    v = static_cast<float>(0.5 * xv * (1.0 + std::erf(xv * kInvSqrt2)));
  }
  Var o = push(std::move(out), wants(x));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, o]() {
      const auto& go = nodes_[o.i].t.g;
      auto& gx = gbuf(x);
      const float* xv = vptr(x);
      for (size_t i = 0; i < go.size(); ++i) {
        double v = xv[i];
        double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        gx[i] += go[i] * static_cast<float>(cdf + v * pdf);
      }
    };
  }
  return o;
}

Var Tape::layer_norm(Var x, Var gain, Var bias, float eps) {
  const Tensor& tx = nodes_[x.i].t;
  const int rows = tx.rows(), d = tx.cols();
  if (gain.valid()) {
    if (nodes_[gain.i].t.numel() != d || nodes_[bias.i].t.numel() != d)
      throw ShapeError("layer_norm: gain/bias " + shape_str(nodes_[gain.i].t.shape) + "/" +
                       shape_str(nodes_[bias.i].t.shape) + " do not match feature dim " +
                       std::to_string(d));
  }
  if (eps <= 0.0f) throw Error("layer_norm: eps must be positive");
  Tensor out = Tensor::zeros(tx.shape);
  auto stats = std::make_shared<std::vector<float>>(static_cast<size_t>(rows) * (d + 1));
  // stats layout per row: xhat[d], invstd
  const float* gv = gain.valid() ? vptr(gain) : nullptr;
  const float* bv = gain.valid() ? vptr(bias) : nullptr;
  for (int r = 0; r < rows; ++r) {
    const float* xr = tx.v.data() + static_cast<size_t>(r) * d;
    float* yr = out.v.data() + static_cast<size_t>(r) * d;
    float* sr = stats->data() + static_cast<size_t>(r) * (d + 1);
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) {
      double dv = xr[j] - mu;
      var += dv * dv;
    }
    var /= d;
    float invstd = static_cast<float>(1.0 / std::sqrt(var + eps));
    sr[d] = invstd;
    for (int j = 0; j < d; ++j) {
      float xh = static_cast<float>((xr[j] - mu) * invstd);
      sr[j] = xh;
      yr[j] = gv ? xh * gv[j] + bv[j] : xh;
    }
  }
  Var o = push(std::move(out), wants(x) || (gain.valid() && (wants(gain) || wants(bias))));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, gain, bias, o, rows, d, stats]() {
      const float* go = nodes_[o.i].t.g.data();
      const float* gv = gain.valid() ? vptr(gain) : nullptr;
      float* ggain = (gain.valid() && wants(gain)) ? gbuf(gain).data() : nullptr;
      float* gbias = (bias.valid() && wants(bias)) ? gbuf(bias).data() : nullptr;
      float* gx = wants(x) ? gbuf(x).data() : nullptr;
      for (int r = 0; r < rows; ++r) {
        const float* gor = go + static_cast<size_t>(r) * d;
        const float* sr = stats->data() + static_cast<size_t>(r) * (d + 1);
        const float invstd = sr[d];
        if (ggain || gbias) {
          for (int j = 0; j < d; ++j) {
            if (ggain) ggain[j] += gor[j] * sr[j];
            if (gbias) gbias[j] += gor[j];
          }
        }
        if (gx) {
          double m1 = 0.0, m2 = 0.0;  // mean(dy*g), mean(dy*g*xhat)
          for (int j = 0; j < d; ++j) {
            double dyg = static_cast<double>(gor[j]) * (gv ? gv[j] : 1.0f);
            m1 += dyg;
            m2 += dyg * sr[j];
          }
          m1 /= d;
          m2 /= d;
          float* gxr = gx + static_cast<size_t>(r) * d;
          for (int j = 0; j < d; ++j) {
            double dyg = static_cast<double>(gor[j]) * (gv ? gv[j] : 1.0f);
            gxr[j] += static_cast<float>((dyg - m1 - sr[j] * m2) * invstd);
          }
        }
      }
    };
  }
  return o;
}

Var Tape::layer_norm_plain(Var x, float eps) { return layer_norm(x, Var{}, Var{}, eps); }

Var Tape::softmax_rows(Var x) {
  const Tensor& tx = nodes_[x.i].t;
  const int rows = tx.rows(), d = tx.cols();
  Tensor out = Tensor::zeros(tx.shape);
  for (int r = 0; r < rows; ++r) {
    const float* xr = tx.v.data() + static_cast<size_t>(r) * d;
    float* yr = out.v.data() + static_cast<size_t>(r) * d;
    float mx = xr[0];
    for (int j = 1; j < d; ++j) mx = std::max(mx, xr[j]);
    double sum = 0.0;
    for (int j = 0; j < d; ++j) {
      float e = std::exp(xr[j] - mx);
      yr[j] = e;
      sum += e;
    }
    float inv = static_cast<float>(1.0 / sum);
    for (int j = 0; j < d; ++j) yr[j] *= inv;
  }
  Var o = push(std::move(out), wants(x));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, o, rows, d]() {
      const float* go = nodes_[o.i].t.g.data();
      const float* p = nodes_[o.i].t.v.data();
      float* gx = gbuf(x).data();
      for (int r = 0; r < rows; ++r) {
        const float* gr = go + static_cast<size_t>(r) * d;
        const float* pr = p + static_cast<size_t>(r) * d;
        double dot = 0.0;
        for (int j = 0; j < d; ++j) dot += static_cast<double>(gr[j]) * pr[j];
        float* gxr = gx + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j)
          gxr[j] += pr[j] * (gr[j] - static_cast<float>(dot));
      }
    };
  }
  return o;
}

Var Tape::attention(Var q, Var k, Var v, int heads) {
  const Tensor& tq = nodes_[q.i].t;
  const Tensor& tk = nodes_[k.i].t;
  const Tensor& tv = nodes_[v.i].t;
  require_2d(tq, "attention");
  require_2d(tk, "attention");
  require_2d(tv, "attention");
  const int lq = tq.shape[0], d = tq.shape[1], lk = tk.shape[0];
  if (tk.shape[1] != d || !same_shape(tk, tv))
    throw ShapeError("attention: q " + shape_str(tq.shape) + " k " + shape_str(tk.shape) + " v " +
                     shape_str(tv.shape) + " disagree");
  if (heads < 1 || d % heads != 0)
    throw ShapeError("attention: head count " + std::to_string(heads) +
                     " does not divide feature dim " + std::to_string(d));
  const int dh = d / heads;
  const float inv_sqrt = static_cast<float>(1.0 / std::sqrt(static_cast<double>(dh)));

  auto probs = std::make_shared<std::vector<float>>(
      static_cast<size_t>(heads) * lq * lk);
  Tensor out = Tensor::zeros({lq, d});
  std::vector<float> srow(lk);
  for (int h = 0; h < heads; ++h) {
    const int c0 = h * dh;
    float* ph = probs->data() + static_cast<size_t>(h) * lq * lk;
    for (int i = 0; i < lq; ++i) {
      const float* qi = tq.v.data() + static_cast<size_t>(i) * d + c0;
      float mx = -std::numeric_limits<float>::infinity();
      for (int j = 0; j < lk; ++j) {
        const float* kj = tk.v.data() + static_cast<size_t>(j) * d + c0;
        float acc = 0.0f;
        for (int c = 0; c < dh; ++c) acc += qi[c] * kj[c];
        srow[j] = acc * inv_sqrt;
        mx = std::max(mx, srow[j]);
      }
      double sum = 0.0;
      for (int j = 0; j < lk; ++j) {
        float e = std::exp(srow[j] - mx);
        srow[j] = e;
        sum += e;
      }
      const float inv = static_cast<float>(1.0 / sum);
      float* prow = ph + static_cast<size_t>(i) * lk;
      float* oi = out.v.data() + static_cast<size_t>(i) * d + c0;
      for (int j = 0; j < lk; ++j) {
        const float p = srow[j] * inv;
        prow[j] = p;
        const float* vj = tv.v.data() + static_cast<size_t>(j) * d + c0;
        for (int c = 0; c < dh; ++c) oi[c] += p * vj[c];
      }
    }
  }
  Var o = push(std::move(out), wants(q) || wants(k) || wants(v));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, q, k, v, o, heads, lq, lk, d, dh, inv_sqrt, probs]() {
      const float* go = nodes_[o.i].t.g.data();
      float* gq = wants(q) ? gbuf(q).data() : nullptr;
      float* gk = wants(k) ? gbuf(k).data() : nullptr;
      float* gv = wants(v) ? gbuf(v).data() : nullptr;
      const float* qv = vptr(q);
      const float* kv = vptr(k);
      const float* vv = vptr(v);
      std::vector<float> ds(lk);
      for (int h = 0; h < heads; ++h) {
        const int c0 = h * dh;
        const float* ph = probs->data() + static_cast<size_t>(h) * lq * lk;
        for (int i = 0; i < lq; ++i) {
          const float* prow = ph + static_cast<size_t>(i) * lk;
          const float* goi = go + static_cast<size_t>(i) * d + c0;
          // dP and the softmax Jacobian contraction
          double dot = 0.0;
          for (int j = 0; j < lk; ++j) {
            const float* vj = vv + static_cast<size_t>(j) * d + c0;
            float dp = 0.0f;
            for (int c = 0; c < dh; ++c) dp += goi[c] * vj[c];
            ds[j] = dp;
            dot += static_cast<double>(dp) * prow[j];
          }
          for (int j = 0; j < lk; ++j)
            ds[j] = prow[j] * (ds[j] - static_cast<float>(dot)) * inv_sqrt;
          if (gv) {
            for (int j = 0; j < lk; ++j) {
              const float p = prow[j];
              float* gvj = gv + static_cast<size_t>(j) * d + c0;
              for (int c = 0; c < dh; ++c) gvj[c] += p * goi[c];
            }
          }
          if (gq) {
            float* gqi = gq + static_cast<size_t>(i) * d + c0;
            for (int j = 0; j < lk; ++j) {
              const float s = ds[j];
              const float* kj = kv + static_cast<size_t>(j) * d + c0;
              for (int c = 0; c < dh; ++c) gqi[c] += s * kj[c];
            }
          }
          if (gk) {
            const float* qi = qv + static_cast<size_t>(i) * d + c0;
            for (int j = 0; j < lk; ++j) {
              const float s = ds[j];
              float* gkj = gk + static_cast<size_t>(j) * d + c0;
              for (int c = 0; c < dh; ++c) gkj[c] += s * qi[c];
            }
          }
        }
      }
    };
  }
  return o;
}

Var Tape::concat_rows(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].t;
  const Tensor& tb = nodes_[b.i].t;
  require_2d(ta, "concat_rows");
  require_2d(tb, "concat_rows");
  if (ta.shape[1] != tb.shape[1])
    throw ShapeError("concat_rows: column mismatch " + shape_str(ta.shape) + " vs " +
                     shape_str(tb.shape));
  const int ra = ta.shape[0], rb = tb.shape[0], d = ta.shape[1];
  Tensor out = Tensor::zeros({ra + rb, d});
  std::memcpy(out.v.data(), ta.v.data(), sizeof(float) * ta.v.size());
  std::memcpy(out.v.data() + ta.v.size(), tb.v.data(), sizeof(float) * tb.v.size());
  Var o = push(std::move(out), wants(a) || wants(b));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, a, b, o, ra, rb, d]() {
      const float* go = nodes_[o.i].t.g.data();
      if (wants(a)) {
        auto& ga = gbuf(a);
        for (size_t i = 0; i < ga.size(); ++i) ga[i] += go[i];
      }
      if (wants(b)) {
        auto& gb = gbuf(b);
        const float* gob = go + static_cast<size_t>(ra) * d;
        for (size_t i = 0; i < gb.size(); ++i) gb[i] += gob[i];
      }
    };
  }
  return o;
}

Var Tape::slice_rows(Var x, int r0, int r1) {
  const Tensor& tx = nodes_[x.i].t;
  require_2d(tx, "slice_rows");
  if (r0 < 0 || r1 > tx.shape[0] || r0 >= r1)
    throw ShapeError("slice_rows: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") invalid for " + shape_str(tx.shape));
  const int d = tx.shape[1];
  Tensor out = Tensor::zeros({r1 - r0, d});
  std::memcpy(out.v.data(), tx.v.data() + static_cast<size_t>(r0) * d,
              sizeof(float) * out.v.size());
  Var o = push(std::move(out), wants(x));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, o, r0, d]() {
      const auto& go = nodes_[o.i].t.g;
      float* gx = gbuf(x).data() + static_cast<size_t>(r0) * d;
      for (size_t i = 0; i < go.size(); ++i) gx[i] += go[i];
    };
  }
  return o;
}

Var Tape::slice_cols(Var x, int c0, int c1) {
  const Tensor& tx = nodes_[x.i].t;
  require_2d(tx, "slice_cols");
  if (c0 < 0 || c1 > tx.shape[1] || c0 >= c1)
    throw ShapeError("slice_cols: range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") invalid for " + shape_str(tx.shape));
  const int rows = tx.shape[0], d = tx.shape[1], w = c1 - c0;
  Tensor out = Tensor::zeros({rows, w});
  for (int r = 0; r < rows; ++r)
    std::memcpy(out.v.data() + static_cast<size_t>(r) * w,
                tx.v.data() + static_cast<size_t>(r) * d + c0, sizeof(float) * w);
  Var o = push(std::move(out), wants(x));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, o, c0, rows, d, w]() {
      const float* go = nodes_[o.i].t.g.data();
      float* gx = gbuf(x).data();
      for (int r = 0; r < rows; ++r) {
        const float* gor = go + static_cast<size_t>(r) * w;
        float* gxr = gx + static_cast<size_t>(r) * d + c0;
        for (int j = 0; j < w; ++j) gxr[j] += gor[j];
      }
    };
  }
  return o;
}

Var Tape::modulate(Var x, Var shift, Var scale) {
  const Tensor& tx = nodes_[x.i].t;
  const Tensor& tsh = nodes_[shift.i].t;
  const Tensor& tsc = nodes_[scale.i].t;
  const int rows = tx.rows(), d = tx.cols();
  if (tsh.numel() != d || tsc.numel() != d)
    throw ShapeError("modulate: shift/scale " + shape_str(tsh.shape) + "/" +
                     shape_str(tsc.shape) + " do not match feature dim " + std::to_string(d));
  Tensor out = Tensor::zeros(tx.shape);
  for (int r = 0; r < rows; ++r) {
    const float* xr = tx.v.data() + static_cast<size_t>(r) * d;
    float* yr = out.v.data() + static_cast<size_t>(r) * d;
    for (int j = 0; j < d; ++j) yr[j] = xr[j] * (1.0f + tsc.v[j]) + tsh.v[j];
  }
  Var o = push(std::move(out), wants(x) || wants(shift) || wants(scale));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, shift, scale, o, rows, d]() {
      const float* go = nodes_[o.i].t.g.data();
      const float* sc = vptr(scale);
      const float* xv = vptr(x);
      float* gx = wants(x) ? gbuf(x).data() : nullptr;
      float* gsh = wants(shift) ? gbuf(shift).data() : nullptr;
      float* gsc = wants(scale) ? gbuf(scale).data() : nullptr;
      for (int r = 0; r < rows; ++r) {
        const float* gor = go + static_cast<size_t>(r) * d;
        const float* xr = xv + static_cast<size_t>(r) * d;
        if (gx) {
          float* gxr = gx + static_cast<size_t>(r) * d;
          for (int j = 0; j < d; ++j) gxr[j] += gor[j] * (1.0f + sc[j]);
        }
        for (int j = 0; j < d; ++j) {
          if (gsh) gsh[j] += gor[j];
          if (gsc) gsc[j] += gor[j] * xr[j];
        }
      }
    };
  }
  return o;
}

Var Tape::gated_add(Var x, Var y, Var gate) {
  const Tensor& tx = nodes_[x.i].t;
  const Tensor& ty = nodes_[y.i].t;
  const Tensor& tg = nodes_[gate.i].t;
  if (!same_shape(tx, ty))
    throw ShapeError("gated_add: shape mismatch " + shape_str(tx.shape) + " vs " +
                     shape_str(ty.shape));
  const int rows = tx.rows(), d = tx.cols();
  if (tg.numel() != d)
    throw ShapeError("gated_add: gate " + shape_str(tg.shape) + " does not match feature dim " +
                     std::to_string(d));
  Tensor out = Tensor::zeros(tx.shape);
  for (int r = 0; r < rows; ++r) {
    const float* xr = tx.v.data() + static_cast<size_t>(r) * d;
    const float* yr = ty.v.data() + static_cast<size_t>(r) * d;
    float* outr = out.v.data() + static_cast<size_t>(r) * d;
    for (int j = 0; j < d; ++j) outr[j] = xr[j] + tg.v[j] * yr[j];
  }
  Var o = push(std::move(out), wants(x) || wants(y) || wants(gate));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, x, y, gate, o, rows, d]() {
      const float* go = nodes_[o.i].t.g.data();
      const float* gt = vptr(gate);
      const float* yv = vptr(y);
      float* gx = wants(x) ? gbuf(x).data() : nullptr;
      float* gy = wants(y) ? gbuf(y).data() : nullptr;
      float* gg = wants(gate) ? gbuf(gate).data() : nullptr;
      for (int r = 0; r < rows; ++r) {
        const size_t off = static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j) {
          const float g0 = go[off + j];
          if (gx) gx[off + j] += g0;
          if (gy) gy[off + j] += g0 * gt[j];
          if (gg) gg[j] += g0 * yv[off + j];
        }
      }
    };
  }
  return o;
}

Var Tape::concat_cols(Var a, Var b) {
  const Tensor& ta = nodes_[a.i].t;
  const Tensor& tb = nodes_[b.i].t;
  require_2d(ta, "concat_cols");
  require_2d(tb, "concat_cols");
  if (ta.shape[0] != tb.shape[0])
    throw ShapeError("concat_cols: row mismatch " + shape_str(ta.shape) + " vs " +
                     shape_str(tb.shape));
  const int rows = ta.shape[0], da = ta.shape[1], db = tb.shape[1];
  Tensor out = Tensor::zeros({rows, da + db});
  for (int r = 0; r < rows; ++r) {
    std::memcpy(out.v.data() + static_cast<size_t>(r) * (da + db),
                ta.v.data() + static_cast<size_t>(r) * da, sizeof(float) * da);
    std::memcpy(out.v.data() + static_cast<size_t>(r) * (da + db) + da,
                tb.v.data() + static_cast<size_t>(r) * db, sizeof(float) * db);
  }
  Var o = push(std::move(out), wants(a) || wants(b));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, a, b, o, rows, da, db]() {
      const float* go = nodes_[o.i].t.g.data();
      if (wants(a)) {
        float* ga = gbuf(a).data();
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < da; ++j)
            ga[static_cast<size_t>(r) * da + j] += go[static_cast<size_t>(r) * (da + db) + j];
      }
      if (wants(b)) {
        float* gb = gbuf(b).data();
        for (int r = 0; r < rows; ++r)
          for (int j = 0; j < db; ++j)
            gb[static_cast<size_t>(r) * db + j] += go[static_cast<size_t>(r) * (da + db) + da + j];
      }
    };
  }
  return o;
}

Var Tape::reparam(Var mean, Var logvar, Var noise) {
  const Tensor& tm = nodes_[mean.i].t;
  const Tensor& tl = nodes_[logvar.i].t;
  const Tensor& tn = nodes_[noise.i].t;
  if (!same_shape(tm, tl) || !same_shape(tm, tn))
    throw ShapeError("reparam: shape mismatch " + shape_str(tm.shape) + "/" + shape_str(tl.shape) +
                     "/" + shape_str(tn.shape));
  Tensor out = tm;
  for (size_t i = 0; i < out.v.size(); ++i)
    out.v[i] += std::exp(0.5f * tl.v[i]) * tn.v[i];
  Var o = push(std::move(out), wants(mean) || wants(logvar));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, mean, logvar, noise, o]() {
      const auto& go = nodes_[o.i].t.g;
      if (wants(mean)) {
        auto& gm = gbuf(mean);
        for (size_t i = 0; i < go.size(); ++i) gm[i] += go[i];
      }
      if (wants(logvar)) {
        auto& gl = gbuf(logvar);
        const float* lv = vptr(logvar);
        const float* nv = vptr(noise);
        for (size_t i = 0; i < go.size(); ++i)
          gl[i] += go[i] * 0.5f * std::exp(0.5f * lv[i]) * nv[i];
      }
    };
  }
  return o;
}

Var Tape::mse_loss(Var pred, Var target) {
  const Tensor& tp = nodes_[pred.i].t;
  const Tensor& tt = nodes_[target.i].t;
  if (!same_shape(tp, tt))
    throw ShapeError("mse_loss: shape mismatch " + shape_str(tp.shape) + " vs " +
                     shape_str(tt.shape));
  double acc = 0.0;
  for (size_t i = 0; i < tp.v.size(); ++i) {
    double dv = static_cast<double>(tp.v[i]) - tt.v[i];
    acc += dv * dv;
  }
  const double n = static_cast<double>(tp.v.size());
  Var o = push(Tensor::scalar(static_cast<float>(acc / n)), wants(pred) || wants(target));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, pred, target, o, n]() {
      const float gl = nodes_[o.i].t.g[0];
      const float* pv = vptr(pred);
      const float* tv = vptr(target);
      const float c = static_cast<float>(2.0 / n) * gl;
      if (wants(pred)) {
        auto& gp = gbuf(pred);
        for (size_t i = 0; i < gp.size(); ++i) gp[i] += c * (pv[i] - tv[i]);
      }
      if (wants(target)) {
        auto& gt = gbuf(target);
        for (size_t i = 0; i < gt.size(); ++i) gt[i] -= c * (pv[i] - tv[i]);
      }
    };
  }
  return o;
}

Var Tape::l1_clamped_loss(Var pred, Var target, float c) {
  const Tensor& tp = nodes_[pred.i].t;
  const Tensor& tt = nodes_[target.i].t;
  if (!same_shape(tp, tt))
    throw ShapeError("l1_clamped_loss: shape mismatch " + shape_str(tp.shape) + " vs " +
                     shape_str(tt.shape));
  auto clamp = [c](float x) { return x < -c ? -c : (x > c ? c : x); };
  double acc = 0.0;
  for (size_t i = 0; i < tp.v.size(); ++i)
    acc += std::abs(static_cast<double>(clamp(tp.v[i])) - clamp(tt.v[i]));
  const double n = static_cast<double>(tp.v.size());
  Var o = push(Tensor::scalar(static_cast<float>(acc / n)), wants(pred));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, pred, target, o, c, n, clamp]() {
      const float gl = nodes_[o.i].t.g[0];
      const float* pv = vptr(pred);
      const float* tv = vptr(target);
      auto& gp = gbuf(pred);
      const float inv = static_cast<float>(1.0 / n) * gl;
      for (size_t i = 0; i < gp.size(); ++i) {
        if (pv[i] <= -c || pv[i] >= c) continue;  // clamped flat region
        float dv = clamp(pv[i]) - clamp(tv[i]);
        gp[i] += inv * (dv > 0.0f ? 1.0f : (dv < 0.0f ? -1.0f : 0.0f));
      }
    };
  }
  return o;
}

Var Tape::kl_loss(Var mean, Var logvar) {
  const Tensor& tm = nodes_[mean.i].t;
  const Tensor& tl = nodes_[logvar.i].t;
  if (!same_shape(tm, tl))
    throw ShapeError("kl_loss: shape mismatch " + shape_str(tm.shape) + " vs " +
                     shape_str(tl.shape));
  double acc = 0.0;
  for (size_t i = 0; i < tm.v.size(); ++i) {
    double mu = tm.v[i], lv = tl.v[i];
    acc += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
  }
  const double n = static_cast<double>(tm.v.size());
  Var o = push(Tensor::scalar(static_cast<float>(acc / n)), wants(mean) || wants(logvar));
  if (nodes_[o.i].needs_grad) {
    nodes_[o.i].bwd = [this, mean, logvar, o, n]() {
      const float gl = nodes_[o.i].t.g[0];
      const float inv = static_cast<float>(1.0 / n) * gl;
      if (wants(mean)) {
        auto& gm = gbuf(mean);
        const float* mv = vptr(mean);
        for (size_t i = 0; i < gm.size(); ++i) gm[i] += inv * mv[i];
      }
      if (wants(logvar)) {
        auto& glv = gbuf(logvar);
        const float* lv = vptr(logvar);
        for (size_t i = 0; i < glv.size(); ++i)
          glv[i] += inv * 0.5f * (std::exp(lv[i]) - 1.0f);
      }
    };
  }
  return o;
}

Var Tape::mean_of(const std::vector<Var>& xs) {
  if (xs.empty()) throw Error("mean_of: empty");
  double acc = 0.0;
  bool ng = false;
  for (Var x : xs) {
    if (nodes_[x.i].t.numel() != 1)
      throw ShapeError("mean_of: expected scalars, got " + shape_str(nodes_[x.i].t.shape));
    acc += nodes_[x.i].t.v[0];
    ng = ng || wants(x);
  }
  const float inv = 1.0f / static_cast<float>(xs.size());
  Var o = push(Tensor::scalar(static_cast<float>(acc) * inv), ng);
  if (nodes_[o.i].needs_grad) {
    auto list = xs;
    nodes_[o.i].bwd = [this, list, o, inv]() {
      const float gl = nodes_[o.i].t.g[0] * inv;
      for (Var x : list)
        if (wants(x)) gbuf(x)[0] += gl;
    };
  }
  return o;
}

void Tape::backward(Var loss) {
  if (!record_) throw Error("backward: tape built with record=false");
  if (ran_backward_) throw Error("backward: tape is single-use");
  ran_backward_ = true;
  Node& ln = nodes_[loss.i];
  if (ln.t.numel() != 1)
    throw ShapeError("backward: loss must be scalar, got " + shape_str(ln.t.shape));
  if (!std::isfinite(ln.t.v[0]))
    throw Error("backward: non-finite loss value");
  ln.t.ensure_grad();
  ln.t.g[0] = 1.0f;
  for (int i = loss.i; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.bwd && !n.t.g.empty()) n.bwd();
  }
}

void Tape::check_finite(Var x, const std::string& context) const {
  if (!nodes_[x.i].t.finite()) throw Error(context + ": non-finite values detected");
}

}  // namespace poseflow
