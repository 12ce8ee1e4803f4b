// exface: training, evaluation and serving front end.
//
//   exface train-stage0 --config configs/desk.json --scale 0.1 --out-dir runs/desk
//   exface bootstrap    --config configs/desk.json --scale 0.1 --out-dir runs/desk
//   exface eval         --config configs/desk.json --scale 0.1 --out-dir runs/desk
//   exface serve        --checkpoint runs/desk/bootstrap/checkpoint --port 9000 --ws-port 8080
//   exface replay       runs/desk/bootstrap/dataset.jsonl --port 9000
//   exface bench        --sample-steps 8
//
// Exit codes: 0 success, 2 configuration error, 3 runtime failure.

#include <atomic>
#include <csignal>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "exface/checkpoint.hpp"
#include "exface/commands.hpp"
#include "exface/run_config.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

struct Overrides {
  std::string config;
  std::optional<std::string> robot;
  std::optional<double> scale;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<int> sample_steps;
  std::optional<int> iterations;
  std::optional<std::string> checkpoint;
  std::optional<std::uint16_t> port;
  std::optional<std::uint16_t> ws_port;
  std::optional<std::string> static_dir;
  std::optional<double> publish_hz;
  std::optional<double> smooth;
  std::optional<double> seconds;
  std::optional<double> rate;
  bool interp_data = false;
  std::string host = "127.0.0.1";
  std::string replay_file;
};

exface::RunConfig build_config(const Overrides& o) {
  exface::RunConfig cfg = o.config.empty() ? exface::RunConfig{} : exface::RunConfig::load(o.config);
  if (o.robot) {
    cfg.robot = *o.robot;
    cfg.resolve_robot();
  }
  if (o.scale) cfg.scale = *o.scale;
  if (o.out_dir) cfg.out_dir = *o.out_dir;
  if (o.seed) cfg.seed = *o.seed;
  if (o.sample_steps) cfg.sample_steps = *o.sample_steps;
  if (o.iterations) cfg.iterations = *o.iterations;
  if (o.checkpoint) cfg.checkpoint = *o.checkpoint;
  if (o.port) cfg.port = *o.port;
  if (o.ws_port) cfg.ws_port = *o.ws_port;
  if (o.static_dir) cfg.static_dir = *o.static_dir;
  if (o.publish_hz) cfg.publish_hz = *o.publish_hz;
  if (o.smooth) cfg.smooth = *o.smooth;
  if (o.seconds) cfg.bench_seconds = *o.seconds;
  if (o.rate) cfg.replay_hz = *o.rate;
  if (o.interp_data) cfg.interp_data = true;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ExFace: diffusion-based blendshape-to-motor retargeting"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "Run config JSON")->check(CLI::ExistingFile);
  app.add_option("--robot-config", o.robot, "Robot preset name (micheal, hobbs) or robot JSON path");
  app.add_option("--scale", o.scale, "Multiplier on stage-0 pairs and frame budgets");
  app.add_option("--out-dir", o.out_dir, "Directory for artifacts");
  app.add_option("--seed", o.seed, "Base seed for all named random streams");
  app.add_option("--sample-steps", o.sample_steps, "Sampler steps per inference");
  app.add_option("--iterations", o.iterations, "Bootstrap iterations");
  app.add_option("--checkpoint", o.checkpoint, "Checkpoint directory");
  app.add_option("--port", o.port, "TCP port");
  app.add_option("--ws-port", o.ws_port, "WebSocket + static HTTP port");
  app.add_option("--static-dir", o.static_dir, "Static files served on the WebSocket port");
  app.add_option("--publish-hz", o.publish_hz, "Motor command publish rate");
  app.add_option("--smooth", o.smooth, "Exponential smoothing weight on published commands, 0 = off");
  app.add_flag("--interp-data", o.interp_data, "Bootstrap with random keyframe interpolation data (ablation)");

  auto* stage0 = app.add_subcommand("train-stage0", "Train the initial model on static random pairs");
  auto* bootstrap = app.add_subcommand("bootstrap", "Stage 0 plus iterative self-collected data");
  auto* eval = app.add_subcommand("eval", "Compare Random / MLP / Transformer / ExFace");
  auto* serve = app.add_subcommand("serve", "Run the real-time retargeting service");
  auto* replay = app.add_subcommand("replay", "Stream a JSON-lines file to a running service");
  replay->add_option("file", o.replay_file, "Dataset JSON-lines file")->required();
  replay->add_option("--host", o.host, "Service host");
  replay->add_option("--rate", o.rate, "Frames per second");
  auto* bench = app.add_subcommand("bench", "Measure service latency and publish rate over TCP loopback");
  bench->add_option("--seconds", o.seconds, "Measurement duration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    const exface::RunConfig cfg = build_config(o);
    if (*stage0) {
      exface::cmd_train_stage0(cfg, std::cerr);
    } else if (*bootstrap) {
      exface::cmd_bootstrap(cfg, std::cerr);
    } else if (*eval) {
      exface::cmd_eval(cfg, std::cerr);
    } else if (*serve) {
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      exface::cmd_serve(cfg, g_stop, std::cerr);
    } else if (*replay) {
      exface::cmd_replay(cfg, o.replay_file, o.host, std::cerr);
    } else if (*bench) {
      const auto doc = exface::cmd_bench(cfg, std::cerr);
      std::cout << doc.dump(2) << "\n";
    }
  } catch (const exface::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}
