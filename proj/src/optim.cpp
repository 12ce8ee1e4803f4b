#include "exface/optim.hpp"

#include <cmath>

namespace exface {

double global_norm(const ParamSet<float>& grads) {
  double sq = 0.0;
  for (const auto& t : grads.tensors()) {
    for (float g : t.data) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

Adam::Adam(const ParamSet<float>& layout, AdamConfig cfg)
    : cfg_(cfg), m_(layout.zeros_like()), v_(layout.zeros_like()) {}

double Adam::step(ParamSet<float>& params, ParamSet<float>& grads) {
  const double norm = global_norm(grads);
  if (cfg_.clip_norm > 0.0 && norm > cfg_.clip_norm) {
    const auto s = static_cast<float>(cfg_.clip_norm / norm);
    for (auto& t : grads.tensors()) {
      for (float& g : t.data) g *= s;
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(cfg_.beta1);
  const auto b2 = static_cast<float>(cfg_.beta2);
  const auto step_size = static_cast<float>(cfg_.lr / bc1);
  const auto inv_bc2 = static_cast<float>(1.0 / bc2);
  const auto eps = static_cast<float>(cfg_.eps);
  auto& pt = params.tensors();
  auto& gt = grads.tensors();
  auto& mt = m_.tensors();
  auto& vt = v_.tensors();
  for (std::size_t i = 0; i < pt.size(); ++i) {
    float* p = pt[i].data.data();
    const float* g = gt[i].data.data();
    float* m = mt[i].data.data();
    float* v = vt[i].data.data();
    const std::size_t n = pt[i].numel();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      p[j] -= step_size * m[j] / (std::sqrt(v[j] * inv_bc2) + eps);
    }
  }
  return norm;
}

}  // namespace exface
