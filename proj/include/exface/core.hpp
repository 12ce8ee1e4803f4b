#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace exface {

inline constexpr int kDefaultBlendshapeDim = 55;
inline constexpr int kDefaultWindow = 120;

/// Input rejected by a precondition check (wrong dimension, out-of-range value).
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration (schedule bounds, robot config, run config).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Failure inside a model: non-finite parameters, shape contract violations.
class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct BlendshapeFrame {
  std::vector<float> values;

  int dim() const { return static_cast<int>(values.size()); }
  /// Throws InputError unless the frame has `expected_dim` channels, all in [0,1].
  void validate(int expected_dim) const;
};

struct MotorFrame {
  std::vector<float> values;

  int dof() const { return static_cast<int>(values.size()); }
  void validate(int expected_dof) const;
};

/// Row-major block of `frames` x `dim` values.
class FrameBlock {
 public:
  FrameBlock() = default;
  FrameBlock(int frames, int dim, float fill = 0.0f);
  FrameBlock(int frames, int dim, std::vector<float> data);

  int frames() const { return frames_; }
  int dim() const { return dim_; }
  bool empty() const { return frames_ == 0; }

  std::span<float> frame(int t);
  std::span<const float> frame(int t) const;
  std::span<float> flat() { return data_; }
  std::span<const float> flat() const { return data_; }
  std::vector<float>& storage() { return data_; }
  const std::vector<float>& storage() const { return data_; }

  void set_frame(int t, std::span<const float> values);
  bool operator==(const FrameBlock&) const = default;

 private:
  int frames_ = 0;
  int dim_ = 0;
  std::vector<float> data_;
};

struct BlendshapeSequence {
  FrameBlock frames;
  double frame_rate_hz = 60.0;

  int length() const { return frames.frames(); }
  int dim() const { return frames.dim(); }
  BlendshapeFrame frame(int t) const;
  void validate(int expected_dim) const;

  static BlendshapeSequence from_frames(const std::vector<BlendshapeFrame>& frames,
                                        double frame_rate_hz = 60.0);
};

/// Motor values live either in normalized command space [0,1] or in the
/// zero-centered diffusion space (2m - 1, unbounded once noised).
enum class MotorSpace : std::uint8_t { kCommand, kDiffusion };

struct MotorSequence {
  FrameBlock frames;
  int noise_level = 0;
  MotorSpace space = MotorSpace::kCommand;

  int length() const { return frames.frames(); }
  int dof() const { return frames.dim(); }
  MotorFrame frame(int t) const;
  /// Command-space sequences must hold values in [0,1].
  void validate(int expected_dof) const;
};

struct RobotConfig {
  std::string name;
  int dof = 0;
  std::vector<std::string> actuator_names;
  std::vector<double> raw_min;
  std::vector<double> raw_max;
  int blendshape_dim = kDefaultBlendshapeDim;

  void validate() const;

  /// Bundled presets: "micheal" (33 cable actuators) and "hobbs" (32 linkages).
  static RobotConfig preset(const std::string& name);
  static RobotConfig from_json(const nlohmann::json& doc);
  static RobotConfig load(const std::string& path);
  nlohmann::json to_json() const;
};

struct NeutralPose {
  BlendshapeFrame neutral;
};

/// Re-expresses a raw capture relative to the rest pose, rescaling the
/// remaining headroom of each channel to [0,1]. Channels whose neutral value
/// exceeds 0.99 carry no usable range and map to 0.
BlendshapeFrame calibrate(const BlendshapeFrame& raw, const NeutralPose& neutral);

std::vector<float> to_diffusion_space(std::span<const float> command);
std::vector<float> from_diffusion_space(std::span<const float> diffusion);
MotorSequence to_diffusion_space(const MotorSequence& command);
MotorSequence from_diffusion_space(const MotorSequence& diffusion);

std::vector<double> denormalize(const MotorFrame& m, const RobotConfig& cfg);

}  // namespace exface
