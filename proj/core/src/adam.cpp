#include "poseflow/adam.hpp"

#include <cmath>

namespace poseflow {

void Adam::step(ParameterStore& store, const GradMap& grads) {
  // Validate first so a bad step leaves parameters untouched.
  for (const auto& name : store.names()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    for (float g : it->second)
      if (!std::isfinite(g))
        throw Error("adam_step: non-finite gradient for parameter '" + name + "'");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  for (const auto& name : store.names()) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    Tensor& p = store.at(name);
    const auto& g = it->second;
    if (g.size() != p.v.size())
      throw ShapeError("adam_step: gradient size mismatch for '" + name + "'");
    Moments& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(g.size(), 0.0f);
      mom.v.assign(g.size(), 0.0f);
    }
    for (size_t i = 0; i < g.size(); ++i) {
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0f - cfg_.beta1) * g[i];
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
      const double mhat = mom.m[i] / bc1;
      const double vhat = mom.v[i] / bc2;
      p.v[i] -= static_cast<float>(cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps));
    }
  }
}

}  // namespace poseflow
