#include "exface/plant.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

namespace exface {

nlohmann::json PlantSpec::to_json() const {
  return {{"seed", seed},
          {"dof", dof},
          {"hidden", hidden},
          {"blendshape_dim", blendshape_dim},
          {"gain", gain},
          {"capture_noise_sigma", capture_noise_sigma},
          {"self_drive_min", self_drive_min},
          {"self_drive_max", self_drive_max},
          {"coupling_max", coupling_max},
          {"couplings_per_row", couplings_per_row},
          {"extra_readouts_max", extra_readouts_max}};
}

PlantSpec PlantSpec::from_json(const nlohmann::json& doc) {
  PlantSpec s;
  s.seed = doc.value("seed", s.seed);
  s.dof = doc.value("dof", s.dof);
  s.hidden = doc.value("hidden", s.hidden);
  s.blendshape_dim = doc.value("blendshape_dim", s.blendshape_dim);
  s.gain = doc.value("gain", s.gain);
  s.capture_noise_sigma = doc.value("capture_noise_sigma", s.capture_noise_sigma);
  s.self_drive_min = doc.value("self_drive_min", s.self_drive_min);
  s.self_drive_max = doc.value("self_drive_max", s.self_drive_max);
  s.coupling_max = doc.value("coupling_max", s.coupling_max);
  s.couplings_per_row = doc.value("couplings_per_row", s.couplings_per_row);
  s.extra_readouts_max = doc.value("extra_readouts_max", s.extra_readouts_max);
  return s;
}

PlantModel::PlantModel(const PlantSpec& spec) : spec_(spec), hidden_(spec.hidden > 0 ? spec.hidden : spec.dof) {
  if (spec_.dof <= 0 || spec_.blendshape_dim <= 0) throw ConfigError("plant dims must be positive");
  if (!(spec_.gain > 0.0)) throw ConfigError("plant gain must be positive");
  if (spec_.capture_noise_sigma < 0.0) throw ConfigError("plant noise sigma must be >= 0");
  Rng rng(derive_seed(spec_.seed, "plant-structure"));
  const int D = spec_.dof;
  const int H = hidden_;
  const int B = spec_.blendshape_dim;

  // W1: diagonally dominant (each hidden unit driven mainly by one motor) with
  // a few weaker positive cross-couplings.
  w1_.assign(static_cast<std::size_t>(H) * D, 0.0);
  for (int i = 0; i < H; ++i) {
    double* row = w1_.data() + static_cast<std::ptrdiff_t>(i) * D;
    row[i % D] = rng.uniform(spec_.self_drive_min, spec_.self_drive_max);
    for (int c = 0; c < spec_.couplings_per_row && D > 1; ++c) {
      int j = rng.uniform_int(0, D - 1);
      if (j == i % D) j = (j + 1) % D;
      row[j] += rng.uniform(0.0, spec_.coupling_max);
    }
  }

  // W2: every hidden unit gets a primary readout channel (random permutation),
  // channels additionally mix a few other units.
  w2_.assign(static_cast<std::size_t>(B) * H, 0.0);
  std::vector<int> perm(H);
  std::iota(perm.begin(), perm.end(), 0);
  for (int i = H - 1; i > 0; --i) std::swap(perm[i], perm[rng.uniform_int(0, i)]);
  for (int r = 0; r < B; ++r) {
    double* row = w2_.data() + static_cast<std::ptrdiff_t>(r) * H;
    const int primary = r < H ? perm[r] : rng.uniform_int(0, H - 1);
    row[primary] += rng.uniform(0.5, 1.0);
    const int extras = rng.uniform_int(0, spec_.extra_readouts_max);
    for (int e = 0; e < extras; ++e) row[rng.uniform_int(0, H - 1)] += rng.uniform(0.1, 0.5);
  }
  // Fewer channels than hidden units: fold the surplus units into existing channels.
  if (B < H) {
    for (int u = B; u < H; ++u) {
      w2_[static_cast<std::size_t>(u % B) * H + perm[u]] += rng.uniform(0.5, 1.0);
    }
  }

  // Normalize each channel to reach exactly 1 (before gain) at full actuation.
  std::vector<double> h_full(H);
  for (int i = 0; i < H; ++i) {
    double s = 0.0;
    for (int j = 0; j < D; ++j) s += w1_[static_cast<std::size_t>(i) * D + j];
    h_full[i] = std::tanh(s);
  }
  for (int r = 0; r < B; ++r) {
    double* row = w2_.data() + static_cast<std::ptrdiff_t>(r) * H;
    double s = 0.0;
    for (int i = 0; i < H; ++i) s += row[i] * h_full[i];
    for (int i = 0; i < H; ++i) row[i] /= s;
  }
}

void PlantModel::observe_into(std::span<const float> motors, std::span<float> out, Rng* noise) const {
  if (static_cast<int>(motors.size()) != spec_.dof) {
    throw InputError("plant expects " + std::to_string(spec_.dof) + " motors, got " +
                     std::to_string(motors.size()));
  }
  if (static_cast<int>(out.size()) != spec_.blendshape_dim) throw InputError("plant output width mismatch");
  const int D = spec_.dof;
  const int H = hidden_;
  std::vector<double> h(H);
  for (int i = 0; i < H; ++i) {
    const double* row = w1_.data() + static_cast<std::ptrdiff_t>(i) * D;
    double s = 0.0;
    for (int j = 0; j < D; ++j) s += row[j] * motors[j];
    h[i] = std::tanh(s);
  }
  const double sigma = spec_.capture_noise_sigma;
  for (int r = 0; r < spec_.blendshape_dim; ++r) {
    const double* row = w2_.data() + static_cast<std::ptrdiff_t>(r) * H;
    double s = 0.0;
    for (int i = 0; i < H; ++i) s += row[i] * h[i];
    double b = std::clamp(spec_.gain * s, 0.0, 1.0);
    if (noise != nullptr && sigma > 0.0) {
      b += std::clamp(noise->normal(), -3.0, 3.0) * sigma;
      b = std::clamp(b, 0.0, 1.0);
    }
    out[r] = static_cast<float>(b);
  }
}

BlendshapeFrame PlantModel::observe(const MotorFrame& m, Rng* noise) const {
  BlendshapeFrame out{std::vector<float>(spec_.blendshape_dim)};
  observe_into(m.values, out.values, noise);
  return out;
}

BlendshapeSequence PlantModel::observe(const MotorSequence& m, Rng* noise) const {
  if (m.space != MotorSpace::kCommand) throw InputError("plant expects command-space motors");
  BlendshapeSequence out{FrameBlock(m.length(), spec_.blendshape_dim), 60.0};
  for (int t = 0; t < m.length(); ++t) observe_into(m.frames.frame(t), out.frames.frame(t), noise);
  return out;
}

std::vector<double> PlantModel::jacobian_at_zero() const {
  const int D = spec_.dof;
  const int H = hidden_;
  const int B = spec_.blendshape_dim;
  std::vector<double> j(static_cast<std::size_t>(B) * D, 0.0);
  for (int r = 0; r < B; ++r) {
    for (int i = 0; i < H; ++i) {
      const double a = spec_.gain * w2_[static_cast<std::size_t>(r) * H + i];
      if (a == 0.0) continue;
      for (int c = 0; c < D; ++c) j[static_cast<std::size_t>(r) * D + c] += a * w1_[static_cast<std::size_t>(i) * D + c];
    }
  }
  return j;
}

double PlantModel::lipschitz_bound() const {
  auto inf_norm = [](const std::vector<double>& m, int rows, int cols) {
    double best = 0.0;
    for (int r = 0; r < rows; ++r) {
      double s = 0.0;
      for (int c = 0; c < cols; ++c) s += std::abs(m[static_cast<std::size_t>(r) * cols + c]);
      best = std::max(best, s);
    }
    return best;
  };
  return spec_.gain * inf_norm(w2_, spec_.blendshape_dim, hidden_) * inf_norm(w1_, hidden_, spec_.dof);
}

BlendshapeFrame plant_observe(const PlantModel& plant, const MotorFrame& m, Rng* noise) {
  m.validate(plant.dof());
  return plant.observe(m, noise);
}

namespace {

// Sparse activation: a few contiguous groups of channels at random amplitudes.
void sparse_groups(std::span<float> out, Rng& rng, const KeyframeOptions& opts) {
  std::fill(out.begin(), out.end(), 0.0f);
  if (rng.uniform() < opts.neutral_prob) return;
  const int dim = static_cast<int>(out.size());
  if (opts.tonic_max > 0.0) {
    for (float& v : out) v = static_cast<float>(rng.uniform(0.0, opts.tonic_max));
  }
  const int groups = rng.uniform_int(1, opts.max_groups);
  for (int g = 0; g < groups; ++g) {
    const int width = rng.uniform_int(1, opts.max_group_width);
    const int start = rng.uniform_int(0, dim - 1);
    const auto amp = static_cast<float>(rng.uniform(opts.min_amplitude, opts.max_amplitude));
    for (int w = 0; w < width; ++w) {
      float& v = out[(start + w) % dim];
      v = std::max(v, amp);
    }
  }
}

}  // namespace

Episode gen_human_episode(const PlantModel& plant, int len, Rng& rng, const KeyframeOptions& opts) {
  Episode ep;
  ep.motor.frames = keyframe_track(len, plant.dof(), opts, rng,
                                   [&](std::span<float> k, Rng& r) { sparse_groups(k, r, opts); });
  ep.motor.space = MotorSpace::kCommand;
  ep.blendshape = plant.observe(ep.motor, nullptr);
  return ep;
}

BlendshapeSequence gen_human_sequence(const PlantModel& plant, int len, SequenceMode mode, Rng& rng,
                                      const KeyframeOptions& opts) {
  if (mode == SequenceMode::kReachable) return gen_human_episode(plant, len, rng, opts).blendshape;
  KeyframeOptions free_opts = opts;
  free_opts.max_amplitude = std::min(opts.max_amplitude, 0.9);
  free_opts.min_amplitude = std::min(opts.min_amplitude, free_opts.max_amplitude);
  free_opts.max_group_width = std::max(opts.max_group_width, 4);
  BlendshapeSequence seq;
  seq.frames = keyframe_track(len, plant.blendshape_dim(), free_opts, rng,
                              [&](std::span<float> k, Rng& r) { sparse_groups(k, r, free_opts); });
  return seq;
}

Episode gen_interpolation_episode(const PlantModel& plant, int len, Rng& rng, const KeyframeOptions& opts) {
  Episode ep;
  ep.motor.frames = keyframe_track(len, plant.dof(), opts, rng, [](std::span<float> k, Rng& r) {
    for (float& v : k) v = static_cast<float>(r.uniform());
  });
  ep.motor.space = MotorSpace::kCommand;
  Rng noise = rng.split();
  ep.blendshape = plant.observe(ep.motor, &noise);
  return ep;
}

}  // namespace exface
