#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "poseflow/rng.hpp"
#include "poseflow/tape.hpp"
#include "poseflow/tensor.hpp"

namespace poseflow {

/// Ordered, uniquely named parameter tensors. Iteration follows insertion
/// order, so checkpoints and gradient walks are deterministic.
class ParameterStore {
 public:
  /// Initialization per tensor derives its own RNG substream from the root
  /// seed and the parameter name; creation order never matters.
  explicit ParameterStore(uint64_t seed = 0) : seed_(seed) {}

  Tensor& create(const std::string& name, Shape shape);
  /// Truncated normal (|z| <= 2) scaled to std 0.02, the projection default.
  Tensor& create_trunc_normal(const std::string& name, Shape shape, float stddev = 0.02f);
  Tensor& create_zeros(const std::string& name, Shape shape);

  bool has(const std::string& name) const { return index_.count(name) > 0; }
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;

  const std::vector<std::string>& names() const { return order_; }
  size_t size() const { return order_.size(); }
  int64_t total_count() const;
  uint64_t seed() const { return seed_; }
  void set_seed(uint64_t s) { seed_ = s; }

 private:
  uint64_t seed_;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> index_;
};

using GradMap = std::unordered_map<std::string, std::vector<float>>;

/// Binds parameters onto a tape once per forward pass and remembers the
/// mapping so gradients can be read back by name afterwards.
class Binder {
 public:
  Binder(Tape& tape, const ParameterStore& store) : tape_(&tape), store_(&store) {}

  /// Bind (or reuse) the parameter's tape node.
  Var operator()(const std::string& name);

  /// Accumulate scale * grad of every bound parameter into `out`.
  void add_grads_to(GradMap& out, float scale = 1.0f) const;

  const ParameterStore& store() const { return *store_; }

 private:
  Tape* tape_;
  const ParameterStore* store_;
  std::unordered_map<std::string, Var> bound_;
};

}  // namespace poseflow
