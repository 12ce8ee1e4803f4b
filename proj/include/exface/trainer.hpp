#pragma once

// Training loops: denoiser and baseline fitting on (motor, blendshape)
// sequences, static stage-0 data generation, and the bootstrap loop that grows
// the dataset by executing the current model on the plant.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <vector>

#include "exface/dataset.hpp"
#include "exface/denoiser.hpp"
#include "exface/diffusion.hpp"
#include "exface/eval.hpp"
#include "exface/optim.hpp"
#include "exface/plant.hpp"

namespace exface {

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, long step) : std::runtime_error(what), step_(step) {}
  long step() const { return step_; }

 private:
  long step_;
};

struct TrainConfig {
  AdamConfig adam;
  int batch_size = 16;
  /// Passes over the (weighted) dataset, measured in sampled sequences.
  double epochs = 1.0;
  /// Hard cap on optimizer steps; 0 means no cap.
  long max_steps = 0;
  /// Sampling weight of sequences added in the current bootstrap iteration.
  double new_data_weight = 2.0;
};

struct TrainResult {
  long steps = 0;
  double mean_loss = 0.0;   // over the final 10% of steps
  std::vector<double> loss_trace;
};

/// Called after every optimizer step with (step, batch loss).
using StepCallback = std::function<void(long, double)>;

/// Trains `params` in place. For the diffusion model each sequence draws a
/// fresh level n ~ U{1..N} and noise; baselines regress command-space motors.
/// Sequences longer than the model window are randomly cropped. Samples with
/// added_at_iteration == current_iteration (> 0) are drawn with
/// cfg.new_data_weight. A non-finite loss raises TrainingError and leaves
/// `params` at the last finite update.
TrainResult train_epochs(const ModelConfig& model, ParamSet<float>& params,
                         const std::vector<TrainingSample>& data, const DiffusionSchedule* sched,
                         const TrainConfig& cfg, Rng& rng, int current_iteration = 0,
                         const StepCallback& on_step = {});

/// Static pairs: one random motor configuration per pair, held for `window`
/// frames, observed on the noise-free plant.
std::vector<TrainingSample> build_stage0(const PlantModel& plant, int pairs, int window, Rng& rng);

/// Number of window-length sequences that covers a frame budget (rounds up).
/// Throws ConfigError when the budget is below one window.
int sequences_for_budget(long frame_budget, int window);

struct BootstrapContext {
  const PlantModel* plant = nullptr;
  ModelConfig model;
  DiffusionSchedule schedule = DiffusionSchedule::linear(32, 1e-4, 0.25);
  const ValidationSet* validation = nullptr;
  /// Sampler used both for data collection and validation.
  SamplerOptions sampler{false, 4, true};
  std::uint64_t sampler_seed = 0;
};

struct BootstrapOptions {
  long frame_budget = 4000;
  /// Ablation: collect uniform keyframe interpolations instead of executing
  /// model predictions for human-like targets.
  bool interp_data = false;
  /// Draw collection rollouts with the stochastic sampler (validation always
  /// uses the context's deterministic sampler).
  bool stochastic_collection = false;
  TrainConfig train;
};

struct BootstrapState {
  int iteration = 0;
  std::vector<TrainingSample> dataset;
  ParamSet<float> params;
  std::vector<IterationMetrics> history;
  long train_steps = 0;

  long frames_total() const { return total_frames(dataset); }
};

IterationMetrics validate_model(const BootstrapContext& ctx, const ParamSet<float>& params,
                                int iteration, long frames_total);

/// Builds stage-0 data, initializes and trains the model, and records the
/// iteration-0 validation metrics.
BootstrapState run_stage0(const BootstrapContext& ctx, int pairs, const TrainConfig& train,
                          Rng& data_rng, Rng& init_rng, Rng& train_rng);

/// One bootstrap iteration: collect `frame_budget` new frames, append them
/// (weighted for this iteration), fine-tune on everything, validate.
void bootstrap_iterate(BootstrapState& state, const BootstrapContext& ctx,
                       const BootstrapOptions& opts, Rng& data_rng, Rng& train_rng);

}  // namespace exface
