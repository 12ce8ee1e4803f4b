#include "exface/commands.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "exface/checkpoint.hpp"
#include "exface/client.hpp"
#include "exface/dataset.hpp"
#include "exface/eval.hpp"
#include "exface/plant.hpp"
#include "exface/server.hpp"
#include "exface/service.hpp"
#include "exface/trainer.hpp"

namespace exface {

namespace {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

TrainConfig train_config(const RunConfig& cfg, double epochs) {
  TrainConfig t;
  t.adam = cfg.adam;
  t.batch_size = cfg.batch_size;
  t.epochs = epochs;
  t.new_data_weight = cfg.new_data_weight;
  return t;
}

nlohmann::json metrics_json(const IterationMetrics& m) {
  return {{"iteration", m.iteration},
          {"frames_total", m.frames_total},
          {"motor_distance", m.motor_distance},
          {"blendshape_distance", m.blendshape_distance},
          {"train_loss", m.train_loss}};
}

IterationMetrics metrics_from_json(const nlohmann::json& j) {
  IterationMetrics m;
  m.iteration = j.at("iteration").get<int>();
  m.frames_total = j.at("frames_total").get<long>();
  m.motor_distance = j.at("motor_distance").get<double>();
  m.blendshape_distance = j.at("blendshape_distance").get<double>();
  m.train_loss = j.at("train_loss").get<double>();
  return m;
}

/// Everything stage 0 depends on; stage-0 artifacts are only reused when this matches.
nlohmann::json stage0_fingerprint(const RunConfig& cfg) {
  const nlohmann::json full = cfg.to_json();
  return {{"robot", cfg.robot_config.to_json()},
          {"seed", cfg.seed},
          {"plant", full.at("plant")},
          {"schedule", full.at("schedule")},
          {"model", full.at("model")},
          {"lr", cfg.adam.lr},
          {"clip_norm", cfg.adam.clip_norm},
          {"batch_size", cfg.batch_size},
          {"stage0_epochs", cfg.stage0_epochs},
          {"pairs", cfg.scaled_pairs()},
          {"validation_frames", cfg.validation_frames},
          {"sample_steps", cfg.sample_steps}};
}

/// Plant, validation sequence and bootstrap context for one run config.
struct Setup {
  explicit Setup(const RunConfig& cfg)
      : plant(cfg.plant_spec()),
        validation(make_validation_set(plant, cfg.validation_frames, cfg.named_seed("validation"))) {
    ctx.plant = &plant;
    ctx.model = cfg.model;
    ctx.model.kind = ModelKind::kDiffusionTransformer;
    ctx.schedule = DiffusionSchedule::from_config(cfg.schedule);
    ctx.validation = &validation;
    ctx.sampler = SamplerOptions{false, cfg.sampler_stride(), true};
    ctx.sampler_seed = cfg.named_seed("sampler");
  }
  Setup(const Setup&) = delete;
  Setup& operator=(const Setup&) = delete;

  PlantModel plant;
  ValidationSet validation;
  BootstrapContext ctx;
};

Checkpoint make_checkpoint(const RunConfig& cfg, const ModelConfig& model, const ParamSet<float>& params, long steps,
                           nlohmann::json extra) {
  Checkpoint ckpt;
  ckpt.meta.model = model;
  ckpt.meta.robot = cfg.robot_config.name;
  ckpt.meta.schedule = cfg.schedule;
  ckpt.meta.training_steps = steps;
  ckpt.meta.extra = std::move(extra);
  ckpt.params = params;
  return ckpt;
}

/// Loads stage-0 state from disk when it was produced by an identical config.
std::optional<BootstrapState> load_stage0(const RunConfig& cfg, const RunPaths& paths) {
  const fs::path metrics_path = paths.stage0_dir() / "metrics.json";
  if (!fs::exists(metrics_path)) return std::nullopt;
  nlohmann::json doc;
  {
    std::ifstream in(metrics_path);
    try {
      in >> doc;
    } catch (const nlohmann::json::exception&) {
      return std::nullopt;  // half-written artifact; recompute
    }
  }
  if (doc.value("fingerprint", nlohmann::json()) != stage0_fingerprint(cfg)) {
    throw ConfigError("stage-0 artifacts in " + paths.stage0_dir().string() +
                      " were produced by a different configuration; use a fresh --out-dir");
  }
  BootstrapState state;
  Checkpoint ckpt = load_checkpoint(paths.stage0_dir() / "checkpoint", cfg.robot_config.dof);
  state.params = std::move(ckpt.params);
  state.dataset = read_dataset_jsonl(paths.stage0_dir() / "dataset.jsonl");
  state.train_steps = doc.at("train_steps").get<long>();
  state.history.push_back(metrics_from_json(doc.at("metrics")));
  return state;
}

BootstrapState train_stage0(const RunConfig& cfg, const Setup& setup, const RunPaths& paths, std::ostream& log,
                            nlohmann::json* summary) {
  const auto t0 = Clock::now();
  Rng data_rng(cfg.named_seed("data-stage0"));
  Rng init_rng(cfg.named_seed("init"));
  Rng train_rng(cfg.named_seed("train-stage0"));
  log << "stage0: " << cfg.scaled_pairs() << " pairs x " << cfg.model.window << " frames, "
      << cfg.stage0_epochs << " epochs\n";
  BootstrapState state =
      run_stage0(setup.ctx, cfg.scaled_pairs(), train_config(cfg, cfg.stage0_epochs), data_rng, init_rng, train_rng);
  const IterationMetrics& m = state.history.back();
  log << "stage0: " << state.train_steps << " steps, loss " << m.train_loss << ", validation motor "
      << m.motor_distance << " blendshape " << m.blendshape_distance << "\n";

  const fs::path dir = paths.stage0_dir();
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint",
                  make_checkpoint(cfg, setup.ctx.model, state.params, state.train_steps, {{"stage", "stage0"}}));
  write_dataset_jsonl(dir / "dataset.jsonl", state.dataset);
  nlohmann::json doc = {{"command", "train-stage0"},
                        {"pairs", cfg.scaled_pairs()},
                        {"frames_total", state.frames_total()},
                        {"train_steps", state.train_steps},
                        {"metrics", metrics_json(m)},
                        {"validation_id", setup.validation.id},
                        {"plant_seed", setup.plant.spec().seed},
                        {"runtime_s", seconds_since(t0)},
                        {"fingerprint", stage0_fingerprint(cfg)}};
  write_json(dir / "metrics.json", doc);  // written last: marks the stage as complete
  if (summary != nullptr) *summary = doc;
  return state;
}

std::vector<float> flatten_blendshapes(const std::vector<TrainingSample>& samples, int dim, long* frames) {
  std::vector<float> out;
  *frames = 0;
  for (const auto& s : samples) {
    if (s.blendshape.dim() != dim) {
      throw ConfigError("replay file has " + std::to_string(s.blendshape.dim()) + " blendshape channels, server expects " +
                        std::to_string(dim));
    }
    const auto flat = s.blendshape.frames.flat();
    out.insert(out.end(), flat.begin(), flat.end());
    *frames += s.blendshape.length();
  }
  return out;
}

/// Loads the serving checkpoint and checks it against the robot config.
Checkpoint load_serving_checkpoint(const RunConfig& cfg) {
  const fs::path path = cfg.checkpoint.empty() ? RunPaths{cfg.out_dir}.bootstrap_dir(false) / "checkpoint" : cfg.checkpoint;
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.meta.model.dof != cfg.robot_config.dof) {
    throw ConfigError("checkpoint " + path.string() + " has dof " + std::to_string(ckpt.meta.model.dof) +
                      " but robot '" + cfg.robot_config.name + "' has " + std::to_string(cfg.robot_config.dof));
  }
  if (ckpt.meta.model.blendshape_dim != cfg.robot_config.blendshape_dim) {
    throw ConfigError("checkpoint blendshape_dim does not match the robot config");
  }
  if (ckpt.meta.model.kind != ModelKind::kDiffusionTransformer) {
    throw ConfigError("checkpoint " + path.string() + " is not a diffusion model");
  }
  return ckpt;
}

EngineConfig engine_config(const RunConfig& cfg, const ScheduleConfig& schedule) {
  if (cfg.sample_steps < 1 || schedule.steps % cfg.sample_steps != 0) {
    throw ConfigError("sample_steps " + std::to_string(cfg.sample_steps) + " must divide the checkpoint's " +
                      std::to_string(schedule.steps) + " diffusion steps");
  }
  EngineConfig e;
  e.sampler = SamplerOptions{false, schedule.steps / cfg.sample_steps, true};
  e.sampler_seed = cfg.named_seed("sampler");
  return e;
}

ServerConfig server_config(const RunConfig& cfg) {
  ServerConfig s;
  s.port = cfg.port;
  s.ws_port = cfg.ws_port;
  s.static_dir = cfg.static_dir;
  s.publisher.publish_hz = cfg.publish_hz;
  s.publisher.smooth = cfg.smooth;
  return s;
}

}  // namespace

void write_json(const fs::path& path, const nlohmann::json& doc) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(2) << "\n";
    if (!out) throw std::runtime_error("write failed for " + path.string());
  }
  fs::rename(tmp, path);
}

nlohmann::json cmd_train_stage0(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const RunPaths paths{cfg.out_dir};
  write_json(paths.root / "config.json", cfg.to_json());
  const Setup setup(cfg);
  nlohmann::json summary;
  train_stage0(cfg, setup, paths, log, &summary);
  return summary;
}

nlohmann::json cmd_bootstrap(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto t0 = Clock::now();
  const RunPaths paths{cfg.out_dir};
  write_json(paths.root / "config.json", cfg.to_json());
  const Setup setup(cfg);

  std::optional<BootstrapState> loaded = load_stage0(cfg, paths);
  if (loaded) log << "stage0: reusing " << paths.stage0_dir().string() << "\n";
  BootstrapState state = loaded ? std::move(*loaded) : train_stage0(cfg, setup, paths, log, nullptr);

  const std::string mode = cfg.interp_data ? "interp" : "standard";
  for (int k = 1; k <= cfg.iterations; ++k) {
    BootstrapOptions opts;
    opts.frame_budget = cfg.scaled_budget(k);
    opts.interp_data = cfg.interp_data;
    opts.train = train_config(cfg, cfg.bootstrap_epochs);
    // Per-iteration streams keep a resumed run identical to an uninterrupted one.
    Rng data_rng(cfg.named_seed("data-iter-" + std::to_string(k)));
    Rng train_rng(cfg.named_seed("train-iter-" + std::to_string(k)));
    const auto ti = Clock::now();
    bootstrap_iterate(state, setup.ctx, opts, data_rng, train_rng);
    const IterationMetrics& m = state.history.back();
    log << "bootstrap[" << mode << "] iteration " << k << ": +" << opts.frame_budget << " frame budget, total "
        << m.frames_total << " frames, loss " << m.train_loss << ", validation motor " << m.motor_distance
        << " blendshape " << m.blendshape_distance << " (" << seconds_since(ti) << " s)\n";
  }

  const fs::path dir = paths.bootstrap_dir(cfg.interp_data);
  fs::create_directories(dir);
  save_checkpoint(dir / "checkpoint", make_checkpoint(cfg, setup.ctx.model, state.params, state.train_steps,
                                                      {{"stage", "bootstrap"}, {"mode", mode},
                                                       {"iterations", state.iteration}}));
  write_dataset_jsonl(dir / "dataset.jsonl", state.dataset);
  write_curve_csv(dir / "curve.csv", state.history);

  nlohmann::json curve = nlohmann::json::array();
  for (const auto& m : state.history) curve.push_back(metrics_json(m));
  nlohmann::json doc = {{"command", "bootstrap"},
                        {"mode", mode},
                        {"iterations", state.iteration},
                        {"frames_total", state.frames_total()},
                        {"train_steps", state.train_steps},
                        {"curve", curve},
                        {"validation_id", setup.validation.id},
                        {"plant_seed", setup.plant.spec().seed},
                        {"runtime_s", seconds_since(t0)}};
  write_json(dir / "bootstrap.json", doc);
  return doc;
}

nlohmann::json cmd_eval(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  const auto t0 = Clock::now();
  const RunPaths paths{cfg.out_dir};
  const Setup setup(cfg);
  const fs::path run_dir = paths.bootstrap_dir(cfg.interp_data);
  const fs::path ckpt_dir = cfg.checkpoint.empty() ? run_dir / "checkpoint" : cfg.checkpoint;
  if (!fs::exists(ckpt_dir / kManifestFile)) {
    throw std::runtime_error("missing checkpoint " + ckpt_dir.string() + " (run bootstrap first)");
  }
  const Checkpoint ckpt = load_checkpoint(ckpt_dir, cfg.robot_config.dof);
  const fs::path data_path = run_dir / "dataset.jsonl";
  if (!fs::exists(data_path)) throw std::runtime_error("missing training data " + data_path.string());
  const std::vector<TrainingSample> data = read_dataset_jsonl(data_path);

  // Baselines see exactly the diffusion model's final training set and the
  // same number of optimizer steps.
  const long steps = std::max<long>(1, ckpt.meta.training_steps);
  TrainConfig base_train = train_config(cfg, 1.0);
  base_train.epochs = static_cast<double>(steps) * cfg.batch_size / static_cast<double>(data.size());
  base_train.max_steps = steps;

  ModelConfig mlp_cfg = cfg.model;
  mlp_cfg.kind = ModelKind::kMlp;
  mlp_cfg.mlp_hidden = cfg.baseline_mlp_hidden;
  ModelConfig tf_cfg = cfg.model;
  tf_cfg.kind = ModelKind::kTransformer;

  std::vector<std::pair<ModelConfig, ParamSet<float>>> baselines;
  for (const ModelConfig& bc : {mlp_cfg, tf_cfg}) {
    const auto tb = Clock::now();
    Rng init_rng(cfg.named_seed("init-" + to_string(bc.kind)));
    Rng train_rng(cfg.named_seed("train-" + to_string(bc.kind)));
    ParamSet<float> params = init_params<float>(bc, init_rng);
    const TrainResult r = train_epochs(bc, params, data, nullptr, base_train, train_rng, 0);
    log << "eval: trained " << to_string(bc.kind) << " baseline, " << r.steps << " steps, loss " << r.mean_loss
        << " (" << seconds_since(tb) << " s)\n";
    save_checkpoint(paths.eval_dir() / to_string(bc.kind),
                    make_checkpoint(cfg, bc, params, r.steps, {{"stage", "baseline"}}));
    baselines.emplace_back(bc, std::move(params));
  }

  const Denoiser model(ckpt.meta.model, ckpt.params);
  const DiffusionSchedule sched = DiffusionSchedule::from_config(ckpt.meta.schedule);
  const EngineConfig engine = engine_config(cfg, ckpt.meta.schedule);
  std::vector<MethodEntry> methods;
  methods.push_back({"Random", random_predictor(cfg.robot_config.dof, cfg.named_seed("random-baseline"))});
  methods.push_back({"MLP", regression_predictor(baselines[0].first, baselines[0].second)});
  methods.push_back({"Transformer", regression_predictor(baselines[1].first, baselines[1].second)});
  methods.push_back({"ExFace", exface_predictor(model, sched, engine.sampler, engine.sampler_seed)});

  nlohmann::json meta = {{"plant_seed", setup.plant.spec().seed},
                         {"robot", cfg.robot_config.name},
                         {"checkpoint", ckpt_dir.string()},
                         {"checkpoint_training_steps", ckpt.meta.training_steps},
                         {"validation_id", setup.validation.id},
                         {"validation_frames", setup.validation.blendshape.length()},
                         {"training_frames", total_frames(data)},
                         {"sample_steps", cfg.sample_steps}};
  const EvalReport report = run_comparison(methods, setup.validation, setup.plant, cfg.model.window, meta);
  log << report.to_table();

  nlohmann::json doc = report.to_json();
  doc["command"] = "eval";
  doc["runtime_s"] = seconds_since(t0);
  write_json(paths.eval_dir() / "report.json", doc);
  {
    std::ofstream out(paths.eval_dir() / "report.txt");
    out << report.to_table();
  }
  return doc;
}

nlohmann::json cmd_serve(const RunConfig& cfg, const std::atomic<bool>& stop, std::ostream& log) {
  cfg.validate();
  const Checkpoint ckpt = load_serving_checkpoint(cfg);
  RetargetingEngine engine(ckpt.meta.model, ckpt.params, DiffusionSchedule::from_config(ckpt.meta.schedule),
                           engine_config(cfg, ckpt.meta.schedule));
  Server server(engine, server_config(cfg));
  server.start();
  log << "serving robot '" << cfg.robot_config.name << "' (dof " << engine.dof() << ") on tcp port "
      << server.port();
  if (server.ws_port()) log << ", websocket/http port " << *server.ws_port();
  log << std::endl;
  const auto t0 = Clock::now();
  while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  nlohmann::json doc = {{"command", "serve"}, {"uptime_s", seconds_since(t0)}, {"stats", server.stats_json()}};
  server.stop();
  write_json(fs::path(cfg.out_dir) / "serve.json", doc);
  return doc;
}

nlohmann::json cmd_replay(const RunConfig& cfg, const fs::path& file, const std::string& host, std::ostream& log) {
  if (!(cfg.replay_hz > 0.0)) throw ConfigError("replay rate must be positive");
  if (!fs::exists(file)) throw ConfigError("replay file " + file.string() + " does not exist");
  const std::vector<TrainingSample> samples = read_dataset_jsonl(file, false);

  ServiceClient client(host, cfg.port);
  const auto hello = client.receive_type(protocol::MsgType::kHello, std::chrono::seconds(5));
  if (!hello) throw std::runtime_error("server did not send HELLO");
  const auto& h = std::get<protocol::Hello>(*hello);
  long frames = 0;
  const std::vector<float> flat = flatten_blendshapes(samples, h.blendshape_dim, &frames);

  std::atomic<long> commands{0};
  std::atomic<long> errors{0};
  std::atomic<bool> done{false};
  std::thread reader([&] {
    while (!done.load() && client.connected()) {
      auto msg = client.receive(std::chrono::milliseconds(50));
      if (!msg) continue;
      if (std::holds_alternative<protocol::MotorCommandMsg>(*msg)) ++commands;
      if (std::holds_alternative<protocol::ErrorMsg>(*msg)) {
        ++errors;
        log << "replay: server error: " << std::get<protocol::ErrorMsg>(*msg).message << "\n";
      }
    }
  });

  log << "replay: " << frames << " frames at " << cfg.replay_hz << " Hz to " << host << ":" << cfg.port << "\n";
  const auto period = std::chrono::duration<double>(1.0 / cfg.replay_hz);
  const auto t0 = Clock::now();
  long sent = 0;
  const int dim = h.blendshape_dim;
  try {
    for (long i = 0; i < frames; ++i) {
      std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(period * static_cast<double>(i)));
      protocol::BlendshapeFrameMsg m;
      m.timestamp_us = static_cast<std::uint64_t>(std::llround(1e6 * static_cast<double>(i) / cfg.replay_hz));
      m.values.assign(flat.begin() + i * dim, flat.begin() + (i + 1) * dim);
      client.send(m);
      ++sent;
    }
  } catch (...) {
    done.store(true);
    client.close();
    reader.join();
    throw;
  }
  const double duration = seconds_since(t0);
  std::this_thread::sleep_for(std::chrono::milliseconds(200));  // let trailing commands arrive
  done.store(true);
  reader.join();
  client.close();

  nlohmann::json doc = {{"command", "replay"},
                        {"file", file.string()},
                        {"frames_sent", sent},
                        {"rate_hz", cfg.replay_hz},
                        {"duration_s", duration},
                        {"expected_duration_s", static_cast<double>(frames) / cfg.replay_hz},
                        {"commands_received", commands.load()},
                        {"errors_received", errors.load()}};
  write_json(fs::path(cfg.out_dir) / "replay.json", doc);
  return doc;
}

nlohmann::json cmd_bench(const RunConfig& cfg, std::ostream& log) {
  cfg.validate();
  ModelConfig model = cfg.model;
  model.kind = ModelKind::kDiffusionTransformer;
  ParamSet<float> params;
  ScheduleConfig schedule = cfg.schedule;
  std::string source = "initialized";
  if (!cfg.checkpoint.empty()) {
    Checkpoint ckpt = load_serving_checkpoint(cfg);
    model = ckpt.meta.model;
    schedule = ckpt.meta.schedule;
    params = std::move(ckpt.params);
    source = cfg.checkpoint.string();
  } else {
    Rng init_rng(cfg.named_seed("init"));
    params = init_params<float>(model, init_rng);
  }
  RetargetingEngine engine(model, std::move(params), DiffusionSchedule::from_config(schedule),
                           engine_config(cfg, schedule));
  ServerConfig scfg = server_config(cfg);
  scfg.port = 0;
  scfg.ws_port.reset();
  Server server(engine, scfg);
  server.start();

  // Human-like drive at 60 Hz, as a capture app would send it.
  const PlantModel plant(cfg.plant_spec());
  const int frames = static_cast<int>(std::ceil(cfg.bench_seconds * 60.0)) + 1;
  Rng drive_rng(cfg.named_seed("bench-drive"));
  const BlendshapeSequence drive = gen_human_sequence(plant, std::max(frames, 2), SequenceMode::kReachable, drive_rng);

  log << "bench: d_model " << model.d_model << ", " << model.n_layers << " layers, window " << model.window << ", "
      << cfg.sample_steps << " sampling steps, " << cfg.bench_seconds << " s at 60 Hz input\n";
  ServiceClient client("127.0.0.1", server.port());
  std::mutex mu;
  std::vector<Clock::time_point> arrivals;
  std::atomic<bool> done{false};
  std::thread reader([&] {
    while (!done.load() && client.connected()) {
      auto msg = client.receive(std::chrono::milliseconds(50));
      if (msg && std::holds_alternative<protocol::MotorCommandMsg>(*msg)) {
        std::lock_guard lock(mu);
        arrivals.push_back(Clock::now());
      }
    }
  });

  const auto t0 = Clock::now();
  const auto period = std::chrono::duration<double>(1.0 / 60.0);
  for (int i = 0; i < drive.length(); ++i) {
    std::this_thread::sleep_until(t0 + std::chrono::duration_cast<Clock::duration>(period * static_cast<double>(i)));
    const BlendshapeFrame f = drive.frame(i);
    client.send(protocol::BlendshapeFrameMsg{static_cast<std::uint64_t>(std::llround(i * 1e6 / 60.0)), f.values});
  }
  const double duration = seconds_since(t0);
  done.store(true);
  reader.join();
  const nlohmann::json stats = server.stats_json();
  client.close();
  server.stop();

  double client_hz = 0.0;
  {
    std::lock_guard lock(mu);
    if (arrivals.size() > 1) {
      client_hz = static_cast<double>(arrivals.size() - 1) /
                  std::chrono::duration<double>(arrivals.back() - arrivals.front()).count();
    }
  }
  nlohmann::json doc = {{"command", "bench"},
                        {"model", model.to_json()},
                        {"params", source},
                        {"sample_steps", cfg.sample_steps},
                        {"duration_s", duration},
                        {"frames_sent", drive.length()},
                        {"latency_p50_ms", stats.at("latency_p50_ms")},
                        {"latency_p95_ms", stats.at("latency_p95_ms")},
                        {"cycle_p95_ms", stats.at("cycle_p95_ms")},
                        {"publish_hz", stats.at("publish_hz")},
                        {"client_command_hz", client_hz},
                        {"cycles", stats.at("cycles")},
                        {"frames_dropped", stats.at("frames_dropped")},
                        {"errors", stats.at("errors")}};
  log << "bench: latency p50 " << doc["latency_p50_ms"].get<double>() << " ms, p95 "
      << doc["latency_p95_ms"].get<double>() << " ms, publish " << doc["publish_hz"].get<double>() << " Hz ("
      << client_hz << " Hz at client), " << doc["cycles"] << " inference cycles\n";
  write_json(fs::path(cfg.out_dir) / "bench.json", doc);
  return doc;
}

}  // namespace exface
