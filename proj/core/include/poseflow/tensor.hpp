#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "poseflow/common.hpp"

namespace poseflow {

using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

/// Dense row-major f32 tensor with an optional gradient buffer of the same
/// shape. The gradient buffer stays empty until ensure_grad() is called.
struct Tensor {
  Shape shape;
  std::vector<float> v;
  std::vector<float> g;

  Tensor() = default;
  Tensor(Shape s, std::vector<float> values);

  static Tensor zeros(Shape s);
  static Tensor full(Shape s, float value);
  static Tensor scalar(float value) { return Tensor({1}, {value}); }

  int64_t numel() const { return static_cast<int64_t>(v.size()); }
  int ndim() const { return static_cast<int>(shape.size()); }
  // 2D accessors; rank-1 tensors count as a single row.
  int rows() const;
  int cols() const;
  float& at(int r, int c) { return v[static_cast<size_t>(r) * cols() + c]; }
  float at(int r, int c) const { return v[static_cast<size_t>(r) * cols() + c]; }

  bool finite() const;
  void ensure_grad();
  void zero_grad();
};

bool same_shape(const Tensor& a, const Tensor& b);

// Elementwise helpers on raw tensors (no tape), used by inference-time code.
Tensor t_add(const Tensor& a, const Tensor& b);
Tensor t_sub(const Tensor& a, const Tensor& b);
Tensor t_scale(const Tensor& a, float s);
/// a*alpha + b*beta, elementwise.
Tensor t_axpby(const Tensor& a, float alpha, const Tensor& b, float beta);
/// max |a - b| over all entries.
float t_max_abs_diff(const Tensor& a, const Tensor& b);

/// sin/cos positional features: each input coordinate c contributes
/// sin(2^j*pi*c), cos(2^j*pi*c) for j in [0, num_freqs). Output width is
/// cols * 2 * num_freqs; rows are preserved.
Tensor frequency_embed(const Tensor& coords, int num_freqs);

}  // namespace poseflow
