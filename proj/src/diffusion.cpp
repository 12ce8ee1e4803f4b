#include "exface/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

namespace exface {

nlohmann::json ScheduleConfig::to_json() const {
  return {{"kind", "linear"}, {"steps", steps}, {"beta_start", beta_start}, {"beta_end", beta_end}};
}

ScheduleConfig ScheduleConfig::from_json(const nlohmann::json& doc) {
  ScheduleConfig cfg;
  if (doc.contains("kind") && doc.at("kind").get<std::string>() != "linear") {
    throw ConfigError("only linear schedules are supported");
  }
  cfg.steps = doc.value("steps", cfg.steps);
  cfg.beta_start = doc.value("beta_start", cfg.beta_start);
  cfg.beta_end = doc.value("beta_end", cfg.beta_end);
  return cfg;
}

DiffusionSchedule DiffusionSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("schedule needs at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    std::ostringstream os;
    os << "schedule requires 0 < beta_start <= beta_end < 1, got " << beta_start << ", "
       << beta_end;
    throw ConfigError(os.str());
  }
  DiffusionSchedule s;
  s.config_ = {steps, beta_start, beta_end};
  s.beta_.resize(steps);
  s.alpha_.resize(steps);
  s.alpha_bar_.resize(steps);
  s.sigma2_.resize(steps);
  double running = 1.0;
  for (int i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
    const double beta = beta_start + frac * (beta_end - beta_start);
    const double prev_bar = running;
    running *= 1.0 - beta;
    s.beta_[i] = beta;
    s.alpha_[i] = 1.0 - beta;
    s.alpha_bar_[i] = running;
    s.sigma2_[i] = (1.0 - prev_bar) / (1.0 - running) * beta;
  }
  return s;
}

std::size_t DiffusionSchedule::index(int n) const {
  if (n < 1 || n > steps()) {
    throw InputError("noise level " + std::to_string(n) + " outside 1.." + std::to_string(steps()));
  }
  return static_cast<std::size_t>(n - 1);
}

namespace {

void require_level(int n, const DiffusionSchedule& sched) {
  if (n < 1 || n > sched.steps()) {
    throw InputError("noise level " + std::to_string(n) + " outside 1.." +
                     std::to_string(sched.steps()));
  }
}

void require_same_shape(const MotorSequence& a, const MotorSequence& b, const char* what) {
  if (a.length() != b.length() || a.dof() != b.dof()) {
    throw InputError(std::string(what) + ": shape mismatch");
  }
}

MotorSequence diffusion_like(const MotorSequence& proto, int noise_level) {
  MotorSequence out;
  out.frames = FrameBlock(proto.length(), proto.dof());
  out.noise_level = noise_level;
  out.space = MotorSpace::kDiffusion;
  return out;
}

}  // namespace

MotorSequence add_noise(const MotorSequence& x0, int n, std::span<const float> noise,
                        const DiffusionSchedule& sched) {
  require_level(n, sched);
  if (x0.noise_level != 0) throw InputError("add_noise expects a clean sequence");
  if (noise.size() != x0.frames.flat().size()) throw InputError("add_noise: noise size mismatch");
  const double ab = sched.alpha_bar(n);
  const auto signal = static_cast<float>(std::sqrt(ab));
  const auto spread = static_cast<float>(std::sqrt(1.0 - ab));
  MotorSequence out = diffusion_like(x0, n);
  auto src = x0.frames.flat();
  auto dst = out.frames.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = signal * src[i] + spread * noise[i];
  return out;
}

MotorSequence forward_chain(const MotorSequence& x0, int n, Rng& rng, const DiffusionSchedule& sched) {
  require_level(n, sched);
  if (x0.noise_level != 0) throw InputError("forward_chain expects a clean sequence");
  MotorSequence x = x0;
  x.space = MotorSpace::kDiffusion;
  auto v = x.frames.flat();
  for (int k = 1; k <= n; ++k) {
    const double keep = std::sqrt(1.0 - sched.beta(k));
    const double spread = std::sqrt(sched.beta(k));
    for (float& e : v) e = static_cast<float>(keep * e + spread * rng.normal());
  }
  x.noise_level = n;
  return x;
}

MotorSequence posterior_mean(const MotorSequence& xn, const MotorSequence& x0_hat, int n,
                             const DiffusionSchedule& sched) {
  require_level(n, sched);
  return posterior_mean(xn, x0_hat, n, n - 1, sched);
}

MotorSequence posterior_mean(const MotorSequence& xn, const MotorSequence& x0_hat, int n, int m,
                             const DiffusionSchedule& sched) {
  require_level(n, sched);
  if (m < 0 || m >= n) throw InputError("posterior target level must satisfy 0 <= m < n");
  require_same_shape(xn, x0_hat, "posterior_mean");
  MotorSequence out = diffusion_like(xn, m);
  if (m == 0) {
    // abar_0 = 1: the x_n coefficient vanishes exactly.
    std::copy(x0_hat.frames.flat().begin(), x0_hat.frames.flat().end(), out.frames.flat().begin());
    return out;
  }
  const double ab_n = sched.alpha_bar(n);
  const double ab_m = sched.alpha_bar(m);
  const double step_alpha = ab_n / ab_m;  // alpha_n when m = n - 1
  const double denom = 1.0 - ab_n;
  const double cx = std::sqrt(step_alpha) * (1.0 - ab_m) / denom;
  const double c0 = std::sqrt(ab_m) * (1.0 - step_alpha) / denom;
  auto a = xn.frames.flat();
  auto b = x0_hat.frames.flat();
  auto dst = out.frames.flat();
  for (std::size_t i = 0; i < dst.size(); ++i) {
    dst[i] = static_cast<float>(cx * a[i] + c0 * b[i]);
  }
  return out;
}

double posterior_variance(int n, int m, const DiffusionSchedule& sched) {
  require_level(n, sched);
  if (m < 0 || m >= n) throw InputError("posterior target level must satisfy 0 <= m < n");
  if (m == n - 1) return sched.sigma2(n);
  const double ab_n = sched.alpha_bar(n);
  const double ab_m = sched.alpha_bar(m);
  return (1.0 - ab_m) / (1.0 - ab_n) * (1.0 - ab_n / ab_m);
}

std::vector<int> sampling_steps(int total_steps, int stride) {
  if (total_steps < 1) throw ConfigError("sampler needs at least one step");
  if (stride < 1) throw ConfigError("sampler stride must be >= 1");
  std::vector<int> levels;
  for (int n = total_steps; n >= 1; n -= stride) levels.push_back(n);
  return levels;
}

MotorSequence sample(const X0Predictor& denoiser, const BlendshapeSequence& c,
                     const DiffusionSchedule& sched, Rng& rng, const SamplerOptions& opts) {
  const auto levels = sampling_steps(sched.steps(), opts.stride);
  const int frames = c.length();
  const int dof = denoiser.dof();
  if (frames == 0) throw InputError("sample: empty conditioning sequence");

  MotorSequence x;
  x.frames = FrameBlock(frames, dof);
  x.space = MotorSpace::kDiffusion;
  x.noise_level = levels.front();
  for (float& v : x.frames.flat()) v = static_cast<float>(rng.normal());

  for (std::size_t k = 0; k < levels.size(); ++k) {
    const int n = levels[k];
    const int m = k + 1 < levels.size() ? levels[k + 1] : 0;
    MotorSequence x0_hat = denoiser.predict_x0(x, n, c);
    if (x0_hat.length() != frames || x0_hat.dof() != dof) {
      std::ostringstream os;
      os << "sampler abort at noise level " << n << ": denoiser returned " << x0_hat.length()
         << "x" << x0_hat.dof() << ", expected " << frames << "x" << dof;
      throw ModelError(os.str());
    }
    for (float& v : x0_hat.frames.flat()) {
      if (!std::isfinite(v)) {
        throw ModelError("sampler abort at noise level " + std::to_string(n) +
                         ": non-finite x0 estimate");
      }
      if (opts.clip_x0) v = std::clamp(v, -1.0f, 1.0f);
    }
    x0_hat.space = MotorSpace::kDiffusion;
    x0_hat.noise_level = 0;
    MotorSequence next = posterior_mean(x, x0_hat, n, m, sched);
    if (opts.stochastic && m > 0) {
      const auto sd = static_cast<float>(std::sqrt(posterior_variance(n, m, sched)));
      for (float& v : next.frames.flat()) v += sd * static_cast<float>(rng.normal());
    }
    x = std::move(next);
  }
  x.noise_level = 0;
  return from_diffusion_space(x);
}

}  // namespace exface
