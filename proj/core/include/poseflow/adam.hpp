#pragma once

#include "poseflow/params.hpp"

namespace poseflow {

struct AdamConfig {
  float lr = 3e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
};

/// Adam with bias correction. Moments are keyed by parameter name and
/// follow store order, so update order is deterministic.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  /// One optimizer step. Throws on non-finite gradients, naming the
  /// offending parameter; the store is left untouched in that case.
  void step(ParameterStore& store, const GradMap& grads);

  int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<float> m, v;
  };
  AdamConfig cfg_;
  std::unordered_map<std::string, Moments> state_;
  int64_t t_ = 0;
};

}  // namespace poseflow
