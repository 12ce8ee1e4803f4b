#include "exface/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <omp.h>

#include "exface/kernels.hpp"

namespace exface {

namespace {

struct Prepared {
  std::vector<float> noisy;
  std::vector<float> cond;
  std::vector<float> target;
  int frames = 0;
  int level = 0;
};

// Draws one example (crop, level, noise) from a sample. All randomness is
// consumed here, serially, so batches are reproducible regardless of threads.
void prepare(const ModelConfig& model, const TrainingSample& s, const DiffusionSchedule* sched, Rng& rng,
             Prepared& out) {
  const int frames = std::min(s.frames(), model.window);
  const int start = s.frames() > frames ? rng.uniform_int(0, s.frames() - frames) : 0;
  out.frames = frames;
  const int dof = model.dof;
  const int bdim = model.blendshape_dim;
  out.cond.resize(static_cast<std::size_t>(frames) * bdim);
  out.target.resize(static_cast<std::size_t>(frames) * dof);
  for (int t = 0; t < frames; ++t) {
    auto c = s.blendshape.frames.frame(start + t);
    std::copy(c.begin(), c.end(), out.cond.begin() + static_cast<std::ptrdiff_t>(t) * bdim);
    auto m = s.motor.frames.frame(start + t);
    std::copy(m.begin(), m.end(), out.target.begin() + static_cast<std::ptrdiff_t>(t) * dof);
  }
  if (model.kind != ModelKind::kDiffusionTransformer) {
    out.noisy.clear();
    out.level = 0;
    return;
  }
  for (float& v : out.target) v = 2.0f * v - 1.0f;
  out.level = rng.uniform_int(1, sched->steps());
  const double a = std::sqrt(sched->alpha_bar(out.level));
  const double b = std::sqrt(1.0 - sched->alpha_bar(out.level));
  out.noisy.resize(out.target.size());
  for (std::size_t i = 0; i < out.target.size(); ++i) {
    out.noisy[i] = static_cast<float>(a * out.target[i] + b * rng.normal());
  }
}

}  // namespace

TrainResult train_epochs(const ModelConfig& model, ParamSet<float>& params,
                         const std::vector<TrainingSample>& data, const DiffusionSchedule* sched,
                         const TrainConfig& cfg, Rng& rng, int current_iteration,
                         const StepCallback& on_step) {
  model.validate();
  if (data.empty()) throw InputError("train_epochs: empty dataset");
  if (cfg.batch_size <= 0) throw ConfigError("batch size must be positive");
  if (!(cfg.epochs > 0.0)) throw ConfigError("epochs must be positive");
  if (model.kind == ModelKind::kDiffusionTransformer && sched == nullptr) {
    throw ConfigError("diffusion training requires a schedule");
  }
  for (const auto& s : data) s.validate(model.dof, model.blendshape_dim);

  std::vector<double> cumulative(data.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const bool fresh = current_iteration > 0 && data[i].added_at_iteration == current_iteration;
    acc += fresh ? cfg.new_data_weight : 1.0;
    cumulative[i] = acc;
  }

  long steps = static_cast<long>(std::ceil(cfg.epochs * static_cast<double>(data.size()) / cfg.batch_size));
  if (cfg.max_steps > 0) steps = std::min(steps, cfg.max_steps);
  steps = std::max(steps, 1L);

  const int B = cfg.batch_size;
  const int threads = std::max(1, std::min(kernels::max_threads(), B));
  std::vector<ParamSet<float>> local;
  local.reserve(threads);
  for (int i = 0; i < threads; ++i) local.push_back(params.zeros_like());
  ParamSet<float> grads = params.zeros_like();
  Adam adam(params, cfg.adam);
  std::vector<Prepared> batch(B);
  std::vector<double> losses(B);

  TrainResult result;
  result.loss_trace.reserve(steps);
  for (long step = 0; step < steps; ++step) {
    for (int b = 0; b < B; ++b) {
      const double u = rng.uniform() * acc;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
      const std::size_t idx = std::min<std::size_t>(it - cumulative.begin(), data.size() - 1);
      prepare(model, data[idx], sched, rng, batch[b]);
    }
    const float scale = 1.0f / static_cast<float>(B);
#pragma omp parallel for num_threads(threads) schedule(static)
    for (int b = 0; b < B; ++b) {
      const Prepared& p = batch[b];
      Example<float> ex;
      ex.noisy = p.noisy.empty() ? nullptr : p.noisy.data();
      ex.cond = p.cond.data();
      ex.target = p.target.data();
      ex.frames = p.frames;
      ex.level = p.level;
      losses[b] = loss_and_grad(model, params, ex, &local[omp_get_thread_num()], scale);
    }
    double loss = 0.0;
    for (double l : losses) loss += l;
    loss /= B;

    grads.fill(0.0f);
    for (auto& g : local) {
      grads.add_scaled(g, 1.0f);
      g.fill(0.0f);
    }
    if (!std::isfinite(loss) || !std::isfinite(global_norm(grads))) {
      throw TrainingError("non-finite loss at step " + std::to_string(step), step);
    }
    adam.step(params, grads);
    result.loss_trace.push_back(loss);
    if (on_step) on_step(step, loss);
  }
  result.steps = steps;
  const std::size_t tail = std::max<std::size_t>(1, result.loss_trace.size() / 10);
  double sum = 0.0;
  for (std::size_t i = result.loss_trace.size() - tail; i < result.loss_trace.size(); ++i) sum += result.loss_trace[i];
  result.mean_loss = sum / static_cast<double>(tail);
  return result;
}

std::vector<TrainingSample> build_stage0(const PlantModel& plant, int pairs, int window, Rng& rng) {
  if (pairs <= 0) throw ConfigError("stage-0 pair count must be positive");
  if (window <= 0) throw ConfigError("window must be positive");
  std::vector<TrainingSample> out;
  out.reserve(pairs);
  std::vector<float> m(plant.dof());
  std::vector<float> b(plant.blendshape_dim());
  for (int p = 0; p < pairs; ++p) {
    for (float& v : m) v = static_cast<float>(rng.uniform());
    plant.observe_into(m, b, nullptr);
    TrainingSample s;
    s.motor.frames = FrameBlock(window, plant.dof());
    s.motor.space = MotorSpace::kCommand;
    s.blendshape.frames = FrameBlock(window, plant.blendshape_dim());
    for (int t = 0; t < window; ++t) {
      s.motor.frames.set_frame(t, m);
      s.blendshape.frames.set_frame(t, b);
    }
    s.source = SampleSource::kStatic;
    s.added_at_iteration = 0;
    out.push_back(std::move(s));
  }
  return out;
}

int sequences_for_budget(long frame_budget, int window) {
  if (window <= 0) throw ConfigError("window must be positive");
  if (frame_budget < window) {
    throw ConfigError("frame budget " + std::to_string(frame_budget) + " is below one window of " +
                      std::to_string(window) + " frames");
  }
  return static_cast<int>((frame_budget + window - 1) / window);
}

IterationMetrics validate_model(const BootstrapContext& ctx, const ParamSet<float>& params, int iteration,
                                long frames_total) {
  if (ctx.plant == nullptr || ctx.validation == nullptr) throw ConfigError("bootstrap context incomplete");
  const Denoiser model(ctx.model, params);
  const auto predictor = exface_predictor(model, ctx.schedule, ctx.sampler, ctx.sampler_seed);
  const MotorSequence pred = predict_long_sequence(predictor, ctx.validation->blendshape, ctx.model.window);
  IterationMetrics m;
  m.iteration = iteration;
  m.frames_total = frames_total;
  m.motor_distance = motor_distance(pred, ctx.validation->motor);
  m.blendshape_distance = blendshape_distance(pred, ctx.validation->blendshape, *ctx.plant);
  return m;
}

BootstrapState run_stage0(const BootstrapContext& ctx, int pairs, const TrainConfig& train, Rng& data_rng,
                          Rng& init_rng, Rng& train_rng) {
  if (ctx.plant == nullptr) throw ConfigError("bootstrap context has no plant");
  if (ctx.model.kind != ModelKind::kDiffusionTransformer) throw ConfigError("bootstrap needs the diffusion model");
  BootstrapState state;
  state.dataset = build_stage0(*ctx.plant, pairs, ctx.model.window, data_rng);
  state.params = init_params<float>(ctx.model, init_rng);
  const TrainResult r = train_epochs(ctx.model, state.params, state.dataset, &ctx.schedule, train, train_rng, 0);
  state.train_steps = r.steps;
  IterationMetrics m = validate_model(ctx, state.params, 0, state.frames_total());
  m.train_loss = r.mean_loss;
  state.history.push_back(m);
  return state;
}

void bootstrap_iterate(BootstrapState& state, const BootstrapContext& ctx, const BootstrapOptions& opts,
                       Rng& data_rng, Rng& train_rng) {
  if (ctx.plant == nullptr) throw ConfigError("bootstrap context has no plant");
  const int window = ctx.model.window;
  const int n_seq = sequences_for_budget(opts.frame_budget, window);
  const int iteration = state.iteration + 1;
  const PlantModel& plant = *ctx.plant;

  std::vector<TrainingSample> fresh(n_seq);
  if (opts.interp_data) {
    for (auto& s : fresh) {
      Episode ep = gen_interpolation_episode(plant, window, data_rng);
      s.motor = std::move(ep.motor);
      s.blendshape = std::move(ep.blendshape);
    }
  } else {
    // Targets and per-sequence seeds are drawn serially; model execution runs in parallel.
    std::vector<BlendshapeSequence> targets(n_seq);
    std::vector<std::uint64_t> seeds(n_seq);
    for (int i = 0; i < n_seq; ++i) {
      targets[i] = gen_human_sequence(plant, window, SequenceMode::kReachable, data_rng);
      seeds[i] = data_rng.next_u64();
    }
    const Denoiser model(ctx.model, state.params);
    SamplerOptions collect = ctx.sampler;
    collect.stochastic = opts.stochastic_collection;
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n_seq; ++i) {
      Rng sampler_rng(seeds[i]);
      Rng capture_rng(mix_seed(seeds[i]));
      fresh[i].motor = sample(model, targets[i], ctx.schedule, sampler_rng, collect);
      fresh[i].blendshape = plant.observe(fresh[i].motor, &capture_rng);
    }
  }
  for (auto& s : fresh) {
    s.source = SampleSource::kBootstrap;
    s.added_at_iteration = iteration;
    state.dataset.push_back(std::move(s));
  }

  const TrainResult r =
      train_epochs(ctx.model, state.params, state.dataset, &ctx.schedule, opts.train, train_rng, iteration);
  state.train_steps += r.steps;
  state.iteration = iteration;
  IterationMetrics m = validate_model(ctx, state.params, iteration, state.frames_total());
  m.train_loss = r.mean_loss;
  state.history.push_back(m);
}

}  // namespace exface
