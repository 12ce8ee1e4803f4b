#pragma once

#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "exface/core.hpp"
#include "exface/rng.hpp"

namespace exface {

struct ScheduleConfig {
  int steps = 32;
  double beta_start = 1e-4;
  double beta_end = 0.25;

  nlohmann::json to_json() const;
  static ScheduleConfig from_json(const nlohmann::json& doc);
};

/// Linear variance schedule with the posterior reverse variances.
/// Noise levels are 1-based; alpha_bar(0) is defined as 1.
class DiffusionSchedule {
 public:
  static DiffusionSchedule linear(int steps, double beta_start, double beta_end);
  static DiffusionSchedule from_config(const ScheduleConfig& cfg) {
    return linear(cfg.steps, cfg.beta_start, cfg.beta_end);
  }

  int steps() const { return static_cast<int>(beta_.size()); }
  double beta(int n) const { return beta_.at(index(n)); }
  double alpha(int n) const { return alpha_.at(index(n)); }
  double alpha_bar(int n) const { return n == 0 ? 1.0 : alpha_bar_.at(index(n)); }
  double sigma2(int n) const { return sigma2_.at(index(n)); }
  const ScheduleConfig& config() const { return config_; }

 private:
  std::size_t index(int n) const;

  ScheduleConfig config_;
  std::vector<double> beta_;
  std::vector<double> alpha_;
  std::vector<double> alpha_bar_;
  std::vector<double> sigma2_;
};

/// Closed-form forward noising: sqrt(abar_n) x0 + sqrt(1 - abar_n) noise.
MotorSequence add_noise(const MotorSequence& x0, int n, std::span<const float> noise,
                        const DiffusionSchedule& sched);

/// Forward process sampled one Markov transition at a time.
MotorSequence forward_chain(const MotorSequence& x0, int n, Rng& rng, const DiffusionSchedule& sched);

/// Mean of q(x_{n-1} | x_n, x0_hat).
MotorSequence posterior_mean(const MotorSequence& xn, const MotorSequence& x0_hat, int n,
                             const DiffusionSchedule& sched);

/// Mean of q(x_{m} | x_n, x0_hat) for any m < n; m = n - 1 reduces to the
/// single-step form above, m = 0 returns x0_hat.
MotorSequence posterior_mean(const MotorSequence& xn, const MotorSequence& x0_hat, int n, int m,
                             const DiffusionSchedule& sched);
double posterior_variance(int n, int m, const DiffusionSchedule& sched);

/// Network interface: predicts the clean sequence (diffusion space) from x_n.
class X0Predictor {
 public:
  virtual ~X0Predictor() = default;
  virtual MotorSequence predict_x0(const MotorSequence& xn, int n,
                                   const BlendshapeSequence& c) const = 0;
  virtual int dof() const = 0;
};

struct SamplerOptions {
  bool stochastic = false;
  int stride = 1;
  /// Clamp each x0 estimate to the data range [-1,1] before the posterior step.
  bool clip_x0 = true;
};

/// Noise levels visited by the sampler, descending from N in steps of `stride`.
std::vector<int> sampling_steps(int total_steps, int stride);

/// Ancestral sampling from standard normal noise; returns a command-space
/// sequence in [0,1]. The transition out of the last visited level targets
/// level 0, where the posterior mean equals the x0 estimate.
MotorSequence sample(const X0Predictor& denoiser, const BlendshapeSequence& c,
                     const DiffusionSchedule& sched, Rng& rng, const SamplerOptions& opts);

}  // namespace exface
