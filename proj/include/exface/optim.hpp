#pragma once

#include "exface/params.hpp"

namespace exface {

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Global gradient-norm clip; <= 0 disables clipping.
  double clip_norm = 1.0;
};

class Adam {
 public:
  Adam(const ParamSet<float>& layout, AdamConfig cfg);

  /// Applies one update; `grads` may be rescaled in place by the clip.
  /// Returns the gradient norm before clipping.
  double step(ParamSet<float>& params, ParamSet<float>& grads);

  long steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  ParamSet<float> m_;
  ParamSet<float> v_;
  long t_ = 0;
};

double global_norm(const ParamSet<float>& grads);

}  // namespace exface
