#include "exface/run_config.hpp"

#include <cmath>
#include <fstream>

namespace exface {

namespace {

namespace fs = std::filesystem;

bool is_preset_name(const std::string& robot) { return robot == "micheal" || robot == "hobbs"; }

fs::path resolve_path(const fs::path& p, const fs::path& base_dir) {
  if (p.empty() || p.is_absolute() || base_dir.empty()) return p;
  return base_dir / p;
}

template <typename T>
void read_if(const nlohmann::json& doc, const char* key, T& out) {
  if (doc.contains(key) && !doc.at(key).is_null()) out = doc.at(key).get<T>();
}

}  // namespace

void RunConfig::validate() const {
  robot_config.validate();
  model.validate();
  if (model.dof != robot_config.dof) {
    throw ConfigError("model.dof " + std::to_string(model.dof) + " does not match robot dof " +
                      std::to_string(robot_config.dof));
  }
  if (model.blendshape_dim != robot_config.blendshape_dim) {
    throw ConfigError("model.blendshape_dim does not match the robot config");
  }
  (void)DiffusionSchedule::from_config(schedule);  // throws on invalid bounds
  if (!(adam.lr >= 0.0) || !std::isfinite(adam.lr)) throw ConfigError("train.lr must be finite and >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(stage0_epochs > 0.0) || !(bootstrap_epochs > 0.0)) throw ConfigError("train epochs must be > 0");
  if (!(new_data_weight > 0.0)) throw ConfigError("train.new_data_weight must be > 0");
  if (!(scale > 0.0) || scale > 1.0e3) throw ConfigError("scale must be in (0, 1000]");
  if (stage0_pairs < 1 || scaled_pairs() < 1) throw ConfigError("data.stage0_pairs must scale to >= 1");
  if (iterations < 0) throw ConfigError("data.iterations must be >= 0");
  for (int it = 1; it <= std::min(iterations, 2); ++it) {
    if (scaled_budget(it) < model.window) {
      throw ConfigError("scaled frame budget " + std::to_string(scaled_budget(it)) +
                        " is below one window of " + std::to_string(model.window) + " frames");
    }
  }
  if (validation_frames < model.window) throw ConfigError("data.validation_frames must cover one window");
  if (sample_steps < 1 || sample_steps > schedule.steps) {
    throw ConfigError("sample_steps must be in [1, " + std::to_string(schedule.steps) + "]");
  }
  if (schedule.steps % sample_steps != 0) {
    throw ConfigError("sample_steps must divide the schedule's " + std::to_string(schedule.steps) + " steps");
  }
  if (!(publish_hz > 0.0) || publish_hz > 1000.0) throw ConfigError("publish_hz must be in (0, 1000]");
  if (!(smooth >= 0.0 && smooth < 1.0)) throw ConfigError("smooth must be in [0, 1)");
  if (!(bench_seconds > 0.0)) throw ConfigError("bench_seconds must be > 0");
  if (!(replay_hz > 0.0)) throw ConfigError("replay_hz must be > 0");
}

int RunConfig::scaled_pairs() const { return static_cast<int>(std::lround(stage0_pairs * scale)); }

long RunConfig::scaled_budget(int iteration) const {
  const long base = iteration <= 1 ? first_budget : budget;
  return std::lround(static_cast<double>(base) * scale);
}

int RunConfig::sampler_stride() const { return schedule.steps / sample_steps; }

PlantSpec RunConfig::plant_spec() const {
  PlantSpec spec = plant;
  spec.dof = robot_config.dof;
  spec.blendshape_dim = robot_config.blendshape_dim;
  // Different robots get different plants unless a seed is pinned.
  spec.seed = plant_seed.value_or(derive_seed(seed, "plant:" + robot_config.name));
  return spec;
}

void RunConfig::resolve_robot(const fs::path& base_dir) {
  if (is_preset_name(robot)) {
    robot_config = RobotConfig::preset(robot);
  } else {
    robot_config = RobotConfig::load(resolve_path(robot, base_dir).string());
  }
  model.dof = robot_config.dof;
  model.blendshape_dim = robot_config.blendshape_dim;
}

nlohmann::json RunConfig::to_json() const {
  nlohmann::json j;
  j["robot"] = robot;
  j["seed"] = seed;
  j["plant"] = plant_spec().to_json();
  j["schedule"] = schedule.to_json();
  j["model"] = model.to_json();
  j["baseline"] = {{"mlp_hidden", baseline_mlp_hidden}};
  j["train"] = {{"lr", adam.lr},
                {"clip_norm", adam.clip_norm},
                {"batch_size", batch_size},
                {"stage0_epochs", stage0_epochs},
                {"bootstrap_epochs", bootstrap_epochs},
                {"new_data_weight", new_data_weight}};
  j["data"] = {{"stage0_pairs", stage0_pairs},     {"first_budget", first_budget},
               {"budget", budget},                 {"iterations", iterations},
               {"scale", scale},                   {"interp_data", interp_data},
               {"validation_frames", validation_frames}};
  j["sampler"] = {{"sample_steps", sample_steps}};
  j["service"] = {{"port", port},
                  {"ws_port", ws_port ? nlohmann::json(*ws_port) : nlohmann::json(nullptr)},
                  {"static_dir", static_dir.string()},
                  {"publish_hz", publish_hz},
                  {"smooth", smooth},
                  {"checkpoint", checkpoint.string()},
                  {"bench_seconds", bench_seconds},
                  {"replay_hz", replay_hz}};
  j["out_dir"] = out_dir.string();
  return j;
}

RunConfig RunConfig::from_json(const nlohmann::json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw ConfigError("run config must be a JSON object");
  RunConfig cfg;
  try {
    read_if(doc, "robot", cfg.robot);
    read_if(doc, "seed", cfg.seed);
    cfg.resolve_robot(base_dir);
    if (doc.contains("plant")) {
      const auto& p = doc.at("plant");
      cfg.plant = PlantSpec::from_json(p);
      if (p.contains("seed")) cfg.plant_seed = p.at("seed").get<std::uint64_t>();
    }
    if (doc.contains("schedule")) cfg.schedule = ScheduleConfig::from_json(doc.at("schedule"));
    if (doc.contains("model")) {
      nlohmann::json m = doc.at("model");
      m["dof"] = cfg.robot_config.dof;
      m["blendshape_dim"] = cfg.robot_config.blendshape_dim;
      cfg.model = ModelConfig::from_json(m);
    }
    if (doc.contains("baseline")) read_if(doc.at("baseline"), "mlp_hidden", cfg.baseline_mlp_hidden);
    if (doc.contains("train")) {
      const auto& t = doc.at("train");
      read_if(t, "lr", cfg.adam.lr);
      read_if(t, "clip_norm", cfg.adam.clip_norm);
      read_if(t, "batch_size", cfg.batch_size);
      read_if(t, "stage0_epochs", cfg.stage0_epochs);
      read_if(t, "bootstrap_epochs", cfg.bootstrap_epochs);
      read_if(t, "new_data_weight", cfg.new_data_weight);
    }
    if (doc.contains("data")) {
      const auto& d = doc.at("data");
      read_if(d, "stage0_pairs", cfg.stage0_pairs);
      read_if(d, "first_budget", cfg.first_budget);
      read_if(d, "budget", cfg.budget);
      read_if(d, "iterations", cfg.iterations);
      read_if(d, "scale", cfg.scale);
      read_if(d, "interp_data", cfg.interp_data);
      read_if(d, "validation_frames", cfg.validation_frames);
    }
    if (doc.contains("sampler")) read_if(doc.at("sampler"), "sample_steps", cfg.sample_steps);
    if (doc.contains("service")) {
      const auto& s = doc.at("service");
      read_if(s, "port", cfg.port);
      if (s.contains("ws_port") && !s.at("ws_port").is_null()) cfg.ws_port = s.at("ws_port").get<std::uint16_t>();
      std::string path;
      read_if(s, "static_dir", path);
      cfg.static_dir = resolve_path(path, base_dir);
      path.clear();
      read_if(s, "checkpoint", path);
      cfg.checkpoint = resolve_path(path, base_dir);
      read_if(s, "publish_hz", cfg.publish_hz);
      read_if(s, "smooth", cfg.smooth);
      read_if(s, "bench_seconds", cfg.bench_seconds);
      read_if(s, "replay_hz", cfg.replay_hz);
    }
    std::string out;
    read_if(doc, "out_dir", out);
    if (!out.empty()) cfg.out_dir = out;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  return cfg;
}

RunConfig RunConfig::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open run config " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("run config " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc, path.parent_path());
}

}  // namespace exface
