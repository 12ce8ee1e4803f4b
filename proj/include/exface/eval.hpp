#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "exface/denoiser.hpp"
#include "exface/diffusion.hpp"
#include "exface/plant.hpp"

namespace exface {

/// Mean over frames and channels of the squared difference.
double motor_distance(const MotorSequence& pred, const MotorSequence& truth);

/// MSE between the plant's noise-free response to `pred_motor` and the target.
double blendshape_distance(const MotorSequence& pred_motor, const BlendshapeSequence& target_bs,
                           const PlantModel& plant);

struct ValidationSet {
  std::string id;
  MotorSequence motor;            // ground truth that produced the targets
  BlendshapeSequence blendshape;  // targets
};

/// Reachable human-like sequence, fully determined by (plant, frames, seed).
ValidationSet make_validation_set(const PlantModel& plant, int frames, std::uint64_t seed);

/// Maps one blendshape window to motors. `start` is the window's first frame in
/// the long sequence; predictors must be pure functions of (window, start).
using WindowPredictor = std::function<MotorSequence(const BlendshapeSequence& window, int start)>;

/// Covers a long sequence with back-to-back windows; the last window is
/// shifted to end on the final frame and only contributes its new frames.
MotorSequence predict_long_sequence(const WindowPredictor& predictor, const BlendshapeSequence& seq,
                                    int window);

WindowPredictor exface_predictor(const Denoiser& model, const DiffusionSchedule& sched,
                                 SamplerOptions opts, std::uint64_t seed);
WindowPredictor regression_predictor(const ModelConfig& cfg, const ParamSet<float>& params);
/// Uniform-random motor frames, resampled per frame.
WindowPredictor random_predictor(int dof, std::uint64_t seed);

struct EvalRow {
  std::string method;
  double motor_distance = 0.0;
  double blendshape_distance = 0.0;
};

struct EvalReport {
  std::vector<EvalRow> rows;
  nlohmann::json metadata = nlohmann::json::object();

  const EvalRow* find(const std::string& method) const;
  nlohmann::json to_json() const;
  /// Fixed-width table followed by the published reference rows.
  std::string to_table() const;
};

struct MethodEntry {
  std::string name;
  WindowPredictor predictor;
};

EvalReport run_comparison(const std::vector<MethodEntry>& methods, const ValidationSet& val,
                          const PlantModel& plant, int window, nlohmann::json metadata = {});

struct IterationMetrics {
  int iteration = 0;
  long frames_total = 0;
  double motor_distance = 0.0;
  double blendshape_distance = 0.0;
  double train_loss = 0.0;
};

/// CSV columns: iteration,frames_total,motor_distance,blendshape_distance
void write_curve_csv(const std::filesystem::path& path, const std::vector<IterationMetrics>& curve);

}  // namespace exface
