#include "poseflow/tensor.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace poseflow {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << ",";
    os << s[i];
  }
  os << "]";
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int e : s) {
    if (e <= 0) throw ShapeError("non-positive extent in shape " + shape_str(s));
    n *= e;
  }
  return n;
}

Tensor::Tensor(Shape s, std::vector<float> values) : shape(std::move(s)), v(std::move(values)) {
  if (shape_numel(shape) != static_cast<int64_t>(v.size()))
    throw ShapeError("value count " + std::to_string(v.size()) + " does not match shape " +
                     shape_str(shape));
}

Tensor Tensor::zeros(Shape s) {
  Tensor t;
  t.shape = std::move(s);
  t.v.assign(static_cast<size_t>(shape_numel(t.shape)), 0.0f);
  return t;
}

Tensor Tensor::full(Shape s, float value) {
  Tensor t = zeros(std::move(s));
  for (auto& x : t.v) x = value;
  return t;
}

int Tensor::rows() const {
  if (shape.empty()) throw ShapeError("rows() on rank-0 tensor");
  if (shape.size() == 1) return 1;
  int64_t r = 1;
  for (size_t i = 0; i + 1 < shape.size(); ++i) r *= shape[i];
  return static_cast<int>(r);
}

int Tensor::cols() const {
  if (shape.empty()) throw ShapeError("cols() on rank-0 tensor");
  return shape.back();
}

bool Tensor::finite() const {
  for (float x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

void Tensor::ensure_grad() {
  if (g.size() != v.size()) g.assign(v.size(), 0.0f);
}

void Tensor::zero_grad() {
  for (auto& x : g) x = 0.0f;
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape == b.shape; }

static void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (!same_shape(a, b))
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape) + " vs " +
                     shape_str(b.shape));
}

Tensor t_add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "t_add");
  Tensor out = a;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

Tensor t_sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "t_sub");
  Tensor out = a;
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
  return out;
}

Tensor t_scale(const Tensor& a, float s) {
  Tensor out = a;
  for (auto& x : out.v) x *= s;
  return out;
}

Tensor t_axpby(const Tensor& a, float alpha, const Tensor& b, float beta) {
  require_same(a, b, "t_axpby");
  Tensor out = Tensor::zeros(a.shape);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] = a.v[i] * alpha + b.v[i] * beta;
  return out;
}

float t_max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same(a, b, "t_max_abs_diff");
  float m = 0.0f;
  for (size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
  return m;
}

Tensor frequency_embed(const Tensor& coords, int num_freqs) {
  if (num_freqs < 1) throw Error("frequency_embed: num_freqs must be >= 1");
  const int rows = coords.rows();
  const int d = coords.cols();
  Tensor out = Tensor::zeros({rows, d * 2 * num_freqs});
  const int ow = out.cols();
  for (int r = 0; r < rows; ++r) {
    const float* src = coords.v.data() + static_cast<size_t>(r) * d;
    float* dst = out.v.data() + static_cast<size_t>(r) * ow;
    int k = 0;
    for (int c = 0; c < d; ++c) {
      double scaled = std::numbers::pi * static_cast<double>(src[c]);
      for (int j = 0; j < num_freqs; ++j) {
        double arg = std::ldexp(scaled, j);  // 2^j * pi * c
        dst[k++] = static_cast<float>(std::sin(arg));
        dst[k++] = static_cast<float>(std::cos(arg));
      }
    }
  }
  return out;
}

}  // namespace poseflow
