#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "exface/core.hpp"
#include "exface/denoiser.hpp"
#include "exface/diffusion.hpp"
#include "exface/optim.hpp"
#include "exface/plant.hpp"

namespace exface {

/// Everything that determines a run. Loaded from one JSON document; command
/// line flags are applied afterwards and win.
struct RunConfig {
  // Robot: a preset name or a path to a robot JSON document.
  std::string robot = "micheal";
  RobotConfig robot_config = RobotConfig::preset("micheal");

  /// Plant structure (its dims follow the robot). Without an explicit
  /// `plant_seed` the seed is derived from `seed` and the robot name.
  PlantSpec plant;
  std::optional<std::uint64_t> plant_seed;
  ScheduleConfig schedule;
  ModelConfig model;
  int baseline_mlp_hidden = 256;

  AdamConfig adam;
  int batch_size = 16;
  double stage0_epochs = 30.0;
  double bootstrap_epochs = 30.0;
  double new_data_weight = 2.0;

  int stage0_pairs = 600;
  long first_budget = 8000;
  long budget = 4000;
  int iterations = 3;
  /// Multiplies stage-0 pairs and frame budgets. Epochs are passes over the
  /// (scaled) dataset, so optimizer steps shrink by the same factor.
  double scale = 1.0;
  bool interp_data = false;

  int validation_frames = 2000;
  /// Sampler steps per inference (the schedule is strided to this many levels).
  int sample_steps = 8;

  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "runs/default";

  // Service.
  std::uint16_t port = 9000;
  std::optional<std::uint16_t> ws_port;
  std::filesystem::path static_dir;
  double publish_hz = 60.0;
  double smooth = 0.0;
  std::filesystem::path checkpoint;
  double bench_seconds = 10.0;
  double replay_hz = 60.0;

  /// Throws ConfigError with a field-specific message.
  void validate() const;
  nlohmann::json to_json() const;
  static RunConfig from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
  static RunConfig load(const std::filesystem::path& path);

  /// Resolves `robot` into `robot_config` and aligns model/plant dimensions with it.
  void resolve_robot(const std::filesystem::path& base_dir = {});

  int scaled_pairs() const;
  long scaled_budget(int iteration) const;  // iteration is 1-based
  int sampler_stride() const;
  PlantSpec plant_spec() const;
  std::uint64_t named_seed(const std::string& stream) const { return derive_seed(seed, stream); }
};

}  // namespace exface
