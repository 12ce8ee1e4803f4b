#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "exface/trainer.hpp"

using namespace exface;

namespace {

ModelConfig tiny_model(ModelKind kind = ModelKind::kDiffusionTransformer) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.dof = 4;
  cfg.blendshape_dim = 6;
  cfg.window = 12;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 32;
  cfg.mlp_hidden = 16;
  return cfg;
}

PlantSpec tiny_plant() {
  PlantSpec spec;
  spec.dof = 4;
  spec.blendshape_dim = 6;
  return spec;
}

const DiffusionSchedule kSched = DiffusionSchedule::linear(32, 1e-4, 0.25);

}  // namespace

TEST_CASE("stage-0 frame arithmetic") {
  const PlantModel plant(PlantSpec{});
  Rng rng(1);
  const auto data = build_stage0(plant, 600, 120, rng);
  CHECK(data.size() == 600);
  CHECK(total_frames(data) == 72000);
  Rng rng_small(1);
  CHECK(total_frames(build_stage0(plant, 60, 120, rng_small)) == 7200);
}

TEST_CASE("stage-0 samples are constant tiles of one plant observation") {
  const PlantModel plant(PlantSpec{});
  Rng rng(2);
  const auto data = build_stage0(plant, 3, 120, rng);
  for (const auto& s : data) {
    CHECK(s.source == SampleSource::kStatic);
    const MotorFrame m0 = s.motor.frame(0);
    CHECK(plant.observe(m0).values == s.blendshape.frame(0).values);
    for (int t = 1; t < s.frames(); ++t) {
      CHECK(s.motor.frame(t).values == m0.values);
      CHECK(s.blendshape.frame(t).values == s.blendshape.frame(0).values);
    }
  }
  CHECK_THROWS(build_stage0(plant, 0, 120, rng));
}

TEST_CASE("frame budgets round up to whole windows") {
  CHECK(sequences_for_budget(8000, 120) == 67);
  CHECK(sequences_for_budget(4000, 120) == 34);
  CHECK(sequences_for_budget(120, 120) == 1);
  CHECK(sequences_for_budget(800, 120) == 7);
  CHECK(sequences_for_budget(400, 120) == 4);
  CHECK_THROWS_AS(sequences_for_budget(119, 120), ConfigError);
}

TEST_CASE("zero learning rate leaves parameters bitwise unchanged") {
  const ModelConfig cfg = tiny_model();
  const PlantModel plant(tiny_plant());
  Rng rng(3);
  const auto data = build_stage0(plant, 4, cfg.window, rng);
  ParamSet<float> params = init_params<float>(cfg, rng);
  const ParamSet<float> before = params;
  TrainConfig tc;
  tc.adam.lr = 0.0;
  tc.epochs = 8.0;
  const auto r = train_epochs(cfg, params, data, &kSched, tc, rng);
  CHECK(r.steps == 2);
  CHECK(params == before);
}

TEST_CASE("fixed seeds give an identical loss trace") {
  const ModelConfig cfg = tiny_model();
  const PlantModel plant(tiny_plant());
  auto run = [&] {
    Rng data_rng(4);
    Rng init_rng(5);
    Rng train_rng(6);
    const auto data = build_stage0(plant, 8, cfg.window, data_rng);
    ParamSet<float> params = init_params<float>(cfg, init_rng);
    TrainConfig tc;
    tc.adam.lr = 1e-3;
    tc.epochs = 20.0;
    return std::make_pair(train_epochs(cfg, params, data, &kSched, tc, train_rng).loss_trace, params);
  };
  const auto a = run();
  const auto b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}

TEST_CASE("overfitting one sample drives the loss down") {
  const ModelConfig cfg = tiny_model();
  const PlantModel plant(tiny_plant());
  Rng rng(7);
  const Episode ep = gen_human_episode(plant, cfg.window, rng);
  const std::vector<TrainingSample> data{{ep.motor, ep.blendshape, SampleSource::kStatic, 0}};
  ParamSet<float> params = init_params<float>(cfg, rng);
  TrainConfig tc;
  tc.adam.lr = 3e-3;
  tc.epochs = 50.0 * tc.batch_size;  // 50 steps
  const auto r = train_epochs(cfg, params, data, &kSched, tc, rng);
  REQUIRE(r.steps == 50);
  // Batch losses are noisy (random levels), so compare 5-step block means:
  // each block may exceed the best earlier block by at most 10%.
  std::vector<double> blocks;
  for (int b = 0; b < 10; ++b) {
    blocks.push_back(std::accumulate(r.loss_trace.begin() + 5 * b, r.loss_trace.begin() + 5 * b + 5, 0.0) / 5.0);
  }
  double best = blocks[0];
  for (double v : blocks) {
    CHECK(v <= 1.1 * best);
    best = std::min(best, v);
  }
  CHECK(blocks.back() < 0.5 * blocks.front());
}

TEST_CASE("baselines train on command-space targets") {
  const PlantModel plant(tiny_plant());
  Rng rng(8);
  const auto data = build_stage0(plant, 16, 12, rng);
  for (const ModelKind kind : {ModelKind::kMlp, ModelKind::kTransformer}) {
    const ModelConfig cfg = tiny_model(kind);
    ParamSet<float> params = init_params<float>(cfg, rng);
    TrainConfig tc;
    tc.adam.lr = 3e-3;
    tc.epochs = 40.0;
    const auto r = train_epochs(cfg, params, data, nullptr, tc, rng);
    CHECK(r.loss_trace.back() < r.loss_trace.front());
  }
  CHECK_THROWS_AS(
      [&] {
        ParamSet<float> p = init_params<float>(tiny_model(), rng);
        train_epochs(tiny_model(), p, data, nullptr, TrainConfig{}, rng);
      }(),
      ConfigError);
}

TEST_CASE("divergence raises a training error with finite parameters left behind") {
  const ModelConfig cfg = tiny_model();
  const PlantModel plant(tiny_plant());
  Rng rng(9);
  const auto data = build_stage0(plant, 4, cfg.window, rng);
  ParamSet<float> params = init_params<float>(cfg, rng);
  TrainConfig tc;
  tc.adam.lr = 1e30;
  tc.epochs = 400.0;
  CHECK_THROWS_AS(train_epochs(cfg, params, data, &kSched, tc, rng), TrainingError);
  CHECK_NOTHROW(require_finite(params));
}

TEST_CASE("bootstrap iteration bookkeeping") {
  const PlantModel plant(tiny_plant());
  const ValidationSet val = make_validation_set(plant, 48, 11);
  BootstrapContext ctx;
  ctx.plant = &plant;
  ctx.model = tiny_model();
  ctx.validation = &val;
  ctx.sampler_seed = 12;
  TrainConfig tc;
  tc.adam.lr = 1e-3;
  tc.epochs = 2.0;
  Rng data_rng(13);
  Rng init_rng(14);
  Rng train_rng(15);
  BootstrapState state = run_stage0(ctx, 5, tc, data_rng, init_rng, train_rng);
  CHECK(state.iteration == 0);
  CHECK(state.history.size() == 1);
  CHECK(state.frames_total() == 5 * 12);

  for (const bool interp : {false, true}) {
    BootstrapOptions opts;
    opts.frame_budget = 30;  // rounds up to 3 windows of 12
    opts.interp_data = interp;
    opts.train = tc;
    const long before = state.frames_total();
    bootstrap_iterate(state, ctx, opts, data_rng, train_rng);
    CHECK(state.frames_total() - before == 36);
    CHECK(state.history.size() == static_cast<std::size_t>(state.iteration + 1));
    CHECK(state.history.back().frames_total == state.frames_total());
    const auto& added = state.dataset.back();
    CHECK(added.source == SampleSource::kBootstrap);
    CHECK(added.added_at_iteration == state.iteration);
    CHECK_NOTHROW(added.validate(4, 6));
  }
  CHECK(state.iteration == 2);

  BootstrapOptions small;
  small.frame_budget = 11;
  CHECK_THROWS_AS(bootstrap_iterate(state, ctx, small, data_rng, train_rng), ConfigError);
}

TEST_CASE("bootstrap collection stores the plant's response to the model's own motors") {
  PlantSpec spec = tiny_plant();
  spec.capture_noise_sigma = 0.0;
  const PlantModel plant(spec);
  const ValidationSet val = make_validation_set(plant, 24, 1);
  BootstrapContext ctx;
  ctx.plant = &plant;
  ctx.model = tiny_model();
  ctx.validation = &val;
  TrainConfig tc;
  tc.epochs = 1.0;
  Rng a(1), b(2), c(3);
  BootstrapState state = run_stage0(ctx, 2, tc, a, b, c);
  BootstrapOptions opts;
  opts.frame_budget = 12;
  opts.train = tc;
  bootstrap_iterate(state, ctx, opts, a, c);
  const auto& s = state.dataset.back();
  CHECK(plant.observe(s.motor).frames == s.blendshape.frames);
}
