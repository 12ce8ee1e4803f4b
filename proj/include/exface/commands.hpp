#pragma once

// Entry points behind the `exface` binary. Each command reads a RunConfig,
// writes its artifacts under cfg.out_dir and returns a JSON summary (also
// written to disk). ConfigError signals a configuration problem; any other
// exception is a runtime failure.

#include <atomic>
#include <filesystem>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "exface/run_config.hpp"

namespace exface {

/// Output layout under out_dir.
struct RunPaths {
  std::filesystem::path root;

  std::filesystem::path stage0_dir() const { return root / "stage0"; }
  std::filesystem::path bootstrap_dir(bool interp) const { return root / (interp ? "bootstrap-interp" : "bootstrap"); }
  std::filesystem::path eval_dir() const { return root / "eval"; }
};

/// Static single-frame pairs -> initial model. Writes stage0/{checkpoint/,
/// dataset.jsonl, metrics.json}.
nlohmann::json cmd_train_stage0(const RunConfig& cfg, std::ostream& log);

/// Stage 0 (reused from disk when present and produced by the same config)
/// followed by cfg.iterations bootstrap iterations. Writes
/// bootstrap[-interp]/{checkpoint/, dataset.jsonl, curve.csv, bootstrap.json}.
nlohmann::json cmd_bootstrap(const RunConfig& cfg, std::ostream& log);

/// Random / MLP / Transformer / ExFace comparison on the validation sequence.
/// The baselines are trained on the bootstrap run's final dataset with the
/// same number of optimizer steps. Writes eval/{report.json, report.txt}.
nlohmann::json cmd_eval(const RunConfig& cfg, std::ostream& log);

/// Runs the service until `stop` becomes true. Refuses a checkpoint whose dof
/// differs from the robot config (ConfigError).
nlohmann::json cmd_serve(const RunConfig& cfg, const std::atomic<bool>& stop, std::ostream& log);

/// Streams the blendshape track of a JSON-lines dataset to a running server at
/// cfg.replay_hz and counts the motor commands that come back.
nlohmann::json cmd_replay(const RunConfig& cfg, const std::filesystem::path& file, const std::string& host,
                          std::ostream& log);

/// Starts an in-process server on an ephemeral port, drives it over TCP
/// loopback with a 60 Hz human-like stream for cfg.bench_seconds and reports
/// ingest->publish latency and publish rate. Uses cfg.checkpoint when set,
/// otherwise a freshly initialized model of the configured size.
nlohmann::json cmd_bench(const RunConfig& cfg, std::ostream& log);

/// Pretty-prints `doc` to `path`, creating parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

}  // namespace exface
