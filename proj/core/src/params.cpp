#include "poseflow/params.hpp"

namespace poseflow {

Tensor& ParameterStore::create(const std::string& name, Shape shape) {
  if (has(name)) throw Error("parameter already exists: " + name);
  order_.push_back(name);
  auto [it, ok] = index_.emplace(name, Tensor::zeros(std::move(shape)));
  return it->second;
}

Tensor& ParameterStore::create_trunc_normal(const std::string& name, Shape shape, float stddev) {
  Tensor& t = create(name, std::move(shape));
  RngState rng = RngState(seed_).substream("init").substream(name);
  for (auto& x : t.v) x = rng.trunc_normal(stddev);
  return t;
}

Tensor& ParameterStore::create_zeros(const std::string& name, Shape shape) {
  return create(name, std::move(shape));
}

Tensor& ParameterStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParameterStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

int64_t ParameterStore::total_count() const {
  int64_t n = 0;
  for (const auto& name : order_) n += index_.at(name).numel();
  return n;
}

Var Binder::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Var v = tape_->param(store_->at(name));
  bound_.emplace(name, v);
  return v;
}

void Binder::add_grads_to(GradMap& out, float scale) const {
  for (const auto& name : store_->names()) {
    auto it = bound_.find(name);
    if (it == bound_.end()) continue;
    const auto& g = tape_->grad(it->second);
    if (g.empty()) continue;  // parameter unused by this loss
    auto& dst = out[name];
    if (dst.empty()) dst.assign(g.size(), 0.0f);
    for (size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * scale;
  }
}

}  // namespace poseflow
