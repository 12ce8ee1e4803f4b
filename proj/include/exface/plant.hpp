#pragma once

// Simulated robot face: a deterministic, smooth, coupled motors -> blendshape
// map with optional truncated capture noise, plus generators for the
// "human" driving sequences used to exercise it.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "exface/core.hpp"
#include "exface/rng.hpp"

namespace exface {

struct PlantSpec {
  std::uint64_t seed = 1;
  int dof = 33;
  int hidden = 0;  // 0 means "same as dof"
  int blendshape_dim = kDefaultBlendshapeDim;
  double gain = 0.9;
  double capture_noise_sigma = 0.005;
  // Mixing-matrix construction.
  double self_drive_min = 0.3;
  double self_drive_max = 0.6;
  double coupling_max = 0.3;
  int couplings_per_row = 2;
  int extra_readouts_max = 2;

  nlohmann::json to_json() const;
  static PlantSpec from_json(const nlohmann::json& doc);
};

/// b = clamp(gain * W2 * tanh(W1 * m), 0, 1) (+ capture noise). All mixing
/// weights are non-negative, so zero motors give the neutral (all-zero) face
/// and every channel is monotone in every motor.
class PlantModel {
 public:
  explicit PlantModel(const PlantSpec& spec);

  const PlantSpec& spec() const { return spec_; }
  int dof() const { return spec_.dof; }
  int hidden() const { return hidden_; }
  int blendshape_dim() const { return spec_.blendshape_dim; }

  /// Row-major hidden x dof.
  const std::vector<double>& w1() const { return w1_; }
  /// Row-major blendshape_dim x hidden.
  const std::vector<double>& w2() const { return w2_; }

  /// Noise-free when `noise` is null.
  void observe_into(std::span<const float> motors, std::span<float> out, Rng* noise) const;
  BlendshapeFrame observe(const MotorFrame& m, Rng* noise = nullptr) const;
  BlendshapeSequence observe(const MotorSequence& m, Rng* noise = nullptr) const;

  /// Analytic Jacobian at m = 0 (gain * W2 * W1), row-major blendshape_dim x dof.
  std::vector<double> jacobian_at_zero() const;
  /// L with ||g(m) - g(m')||_inf <= L ||m - m'||_inf.
  double lipschitz_bound() const;

 private:
  PlantSpec spec_;
  int hidden_;
  std::vector<double> w1_;
  std::vector<double> w2_;
};

BlendshapeFrame plant_observe(const PlantModel& plant, const MotorFrame& m, Rng* noise);

enum class SequenceMode : std::uint8_t { kReachable, kFree };

struct KeyframeOptions {
  int min_spacing = 10;
  int max_spacing = 40;
  double neutral_prob = 0.1;
  int max_groups = 4;
  int max_group_width = 4;
  double min_amplitude = 0.3;
  double max_amplitude = 1.0;
  /// Upper bound of the per-channel background level under the active groups.
  double tonic_max = 0.4;
};

/// A driving sequence with its ground-truth motors (reachable constructions).
struct Episode {
  MotorSequence motor;
  BlendshapeSequence blendshape;
};

/// Keyframe track of `len` frames: keyframes at randomized spacing, cosine
/// interpolation between them. `keyframe` fills one keyframe vector.
template <typename KeyframeFn>
FrameBlock keyframe_track(int len, int dim, const KeyframeOptions& opts, Rng& rng, KeyframeFn&& keyframe);

/// Human-like expression drive: sparse muscle-group activations in motor space,
/// observed through the plant without noise.
Episode gen_human_episode(const PlantModel& plant, int len, Rng& rng,
                          const KeyframeOptions& opts = {});

/// Reachable mode returns gen_human_episode's blendshapes; free mode places
/// sparse keyframes directly in blendshape space (possibly unreachable).
BlendshapeSequence gen_human_sequence(const PlantModel& plant, int len, SequenceMode mode, Rng& rng,
                                      const KeyframeOptions& opts = {});

/// Dense uniform-random motor keyframes, interpolated and observed with
/// capture noise (the interpolation-ablation data source).
Episode gen_interpolation_episode(const PlantModel& plant, int len, Rng& rng,
                                  const KeyframeOptions& opts = {});

// ---------------------------------------------------------------------------

template <typename KeyframeFn>
FrameBlock keyframe_track(int len, int dim, const KeyframeOptions& opts, Rng& rng, KeyframeFn&& keyframe) {
  if (len < 2) throw InputError("keyframe track needs at least 2 frames");
  FrameBlock track(len, dim);
  std::vector<float> prev(dim, 0.0f);
  std::vector<float> next(dim, 0.0f);
  keyframe(std::span<float>(prev), rng);
  int t0 = 0;
  track.set_frame(0, prev);
  while (t0 < len - 1) {
    const int spacing = rng.uniform_int(opts.min_spacing, opts.max_spacing);
    keyframe(std::span<float>(next), rng);
    const int t1 = t0 + spacing;
    for (int t = t0 + 1; t <= std::min(t1, len - 1); ++t) {
      const double u = static_cast<double>(t - t0) / spacing;
      const double w = 0.5 * (1.0 - std::cos(3.14159265358979323846 * u));
      auto row = track.frame(t);
      for (int j = 0; j < dim; ++j) {
        row[j] = static_cast<float>(prev[j] + w * (next[j] - prev[j]));
      }
    }
    prev.swap(next);
    t0 = t1;
  }
  return track;
}

}  // namespace exface
