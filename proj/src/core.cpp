#include "exface/core.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace exface {

namespace {

void check_unit_range(std::span<const float> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float v = values[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      std::ostringstream os;
      os << what << " channel " << i << " = " << v << " outside [0,1]";
      throw InputError(os.str());
    }
  }
}

std::vector<std::string> numbered_names(const std::string& prefix, int count) {
  std::vector<std::string> names;
  names.reserve(count);
  for (int i = 0; i < count; ++i) {
    std::string idx = std::to_string(i);
    if (idx.size() < 2) idx.insert(idx.begin(), '0');
    names.push_back(prefix + idx);
  }
  return names;
}

}  // namespace

void BlendshapeFrame::validate(int expected_dim) const {
  if (dim() != expected_dim) {
    throw InputError("blendshape frame has " + std::to_string(dim()) + " channels, expected " +
                     std::to_string(expected_dim));
  }
  check_unit_range(values, "blendshape");
}

void MotorFrame::validate(int expected_dof) const {
  if (dof() != expected_dof) {
    throw InputError("motor frame has " + std::to_string(dof()) + " values, expected " +
                     std::to_string(expected_dof));
  }
  check_unit_range(values, "motor");
}

FrameBlock::FrameBlock(int frames, int dim, float fill)
    : frames_(frames), dim_(dim), data_(static_cast<std::size_t>(frames) * dim, fill) {
  if (frames < 0 || dim < 0) throw InputError("negative frame block shape");
}

FrameBlock::FrameBlock(int frames, int dim, std::vector<float> data)
    : frames_(frames), dim_(dim), data_(std::move(data)) {
  if (frames < 0 || dim < 0 || data_.size() != static_cast<std::size_t>(frames) * dim) {
    throw InputError("frame block storage does not match shape");
  }
}

std::span<float> FrameBlock::frame(int t) {
  return std::span<float>(data_).subspan(static_cast<std::size_t>(t) * dim_, dim_);
}

std::span<const float> FrameBlock::frame(int t) const {
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(t) * dim_, dim_);
}

void FrameBlock::set_frame(int t, std::span<const float> values) {
  if (static_cast<int>(values.size()) != dim_) throw InputError("frame width mismatch");
  std::copy(values.begin(), values.end(), frame(t).begin());
}

BlendshapeFrame BlendshapeSequence::frame(int t) const {
  auto f = frames.frame(t);
  return BlendshapeFrame{{f.begin(), f.end()}};
}

void BlendshapeSequence::validate(int expected_dim) const {
  if (frames.empty()) throw InputError("blendshape sequence is empty");
  if (dim() != expected_dim) {
    throw InputError("blendshape sequence has " + std::to_string(dim()) +
                     " channels, expected " + std::to_string(expected_dim));
  }
  check_unit_range(frames.flat(), "blendshape");
}

BlendshapeSequence BlendshapeSequence::from_frames(const std::vector<BlendshapeFrame>& frames,
                                                   double frame_rate_hz) {
  if (frames.empty()) throw InputError("blendshape sequence is empty");
  const int dim = frames.front().dim();
  BlendshapeSequence seq{FrameBlock(static_cast<int>(frames.size()), dim), frame_rate_hz};
  for (std::size_t t = 0; t < frames.size(); ++t) {
    if (frames[t].dim() != dim) throw InputError("blendshape frames differ in dimension");
    seq.frames.set_frame(static_cast<int>(t), frames[t].values);
  }
  return seq;
}

MotorFrame MotorSequence::frame(int t) const {
  auto f = frames.frame(t);
  return MotorFrame{{f.begin(), f.end()}};
}

void MotorSequence::validate(int expected_dof) const {
  if (frames.empty()) throw InputError("motor sequence is empty");
  if (dof() != expected_dof) {
    throw InputError("motor sequence has " + std::to_string(dof()) + " channels, expected " +
                     std::to_string(expected_dof));
  }
  if (space == MotorSpace::kCommand) check_unit_range(frames.flat(), "motor");
}

void RobotConfig::validate() const {
  if (dof <= 0) throw ConfigError("robot config '" + name + "': dof must be positive");
  if (blendshape_dim <= 0) throw ConfigError("robot config '" + name + "': blendshape_dim must be positive");
  const auto n = static_cast<std::size_t>(dof);
  if (actuator_names.size() != n || raw_min.size() != n || raw_max.size() != n) {
    throw ConfigError("robot config '" + name + "': per-actuator arrays must have dof entries");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(raw_min[i] < raw_max[i])) {
      throw ConfigError("robot config '" + name + "': raw_min >= raw_max for actuator " +
                        actuator_names[i]);
    }
  }
}

RobotConfig RobotConfig::preset(const std::string& name) {
  RobotConfig cfg;
  cfg.name = name;
  cfg.blendshape_dim = kDefaultBlendshapeDim;
  if (name == "micheal") {
    // Cable-driven face, servo counts.
    cfg.dof = 33;
    cfg.actuator_names = numbered_names("cable_", cfg.dof);
    cfg.raw_min.assign(cfg.dof, 0.0);
    cfg.raw_max.assign(cfg.dof, 4096.0);
  } else if (name == "hobbs") {
    // Linkage-driven face, joint angle in degrees.
    cfg.dof = 32;
    cfg.actuator_names = numbered_names("link_", cfg.dof);
    cfg.raw_min.assign(cfg.dof, -60.0);
    cfg.raw_max.assign(cfg.dof, 60.0);
  } else {
    throw ConfigError("unknown robot preset '" + name + "'");
  }
  return cfg;
}

RobotConfig RobotConfig::from_json(const nlohmann::json& doc) {
  RobotConfig cfg;
  try {
    cfg.name = doc.at("name").get<std::string>();
    cfg.dof = doc.at("dof").get<int>();
    cfg.actuator_names = doc.at("actuator_names").get<std::vector<std::string>>();
    cfg.raw_min = doc.at("raw_min").get<std::vector<double>>();
    cfg.raw_max = doc.at("raw_max").get<std::vector<double>>();
    cfg.blendshape_dim = doc.value("blendshape_dim", kDefaultBlendshapeDim);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("robot config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

RobotConfig RobotConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open robot config " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("robot config " + path + ": " + e.what());
  }
  return from_json(doc);
}

nlohmann::json RobotConfig::to_json() const {
  return {{"name", name},       {"dof", dof},         {"actuator_names", actuator_names},
          {"raw_min", raw_min}, {"raw_max", raw_max}, {"blendshape_dim", blendshape_dim}};
}

BlendshapeFrame calibrate(const BlendshapeFrame& raw, const NeutralPose& neutral) {
  const auto& n = neutral.neutral.values;
  if (raw.values.size() != n.size()) {
    throw InputError("calibrate: raw has " + std::to_string(raw.dim()) +
                     " channels, neutral has " + std::to_string(n.size()));
  }
  BlendshapeFrame out{std::vector<float>(n.size(), 0.0f)};
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (n[i] > 0.99f) continue;
    const float v = (raw.values[i] - n[i]) / (1.0f - n[i]);
    out.values[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

std::vector<float> to_diffusion_space(std::span<const float> command) {
  std::vector<float> out(command.size());
  std::transform(command.begin(), command.end(), out.begin(),
                 [](float m) { return 2.0f * m - 1.0f; });
  return out;
}

std::vector<float> from_diffusion_space(std::span<const float> diffusion) {
  std::vector<float> out(diffusion.size());
  std::transform(diffusion.begin(), diffusion.end(), out.begin(),
                 [](float x) { return std::clamp((x + 1.0f) * 0.5f, 0.0f, 1.0f); });
  return out;
}

MotorSequence to_diffusion_space(const MotorSequence& command) {
  if (command.space != MotorSpace::kCommand) throw InputError("sequence already in diffusion space");
  MotorSequence out;
  out.frames = FrameBlock(command.length(), command.dof(), to_diffusion_space(command.frames.flat()));
  out.noise_level = 0;
  out.space = MotorSpace::kDiffusion;
  return out;
}

MotorSequence from_diffusion_space(const MotorSequence& diffusion) {
  if (diffusion.space != MotorSpace::kDiffusion) throw InputError("sequence not in diffusion space");
  MotorSequence out;
  out.frames =
      FrameBlock(diffusion.length(), diffusion.dof(), from_diffusion_space(diffusion.frames.flat()));
  out.noise_level = 0;
  out.space = MotorSpace::kCommand;
  return out;
}

std::vector<double> denormalize(const MotorFrame& m, const RobotConfig& cfg) {
  if (m.dof() != cfg.dof) {
    throw InputError("denormalize: frame has " + std::to_string(m.dof()) + " values, robot '" +
                     cfg.name + "' has dof " + std::to_string(cfg.dof));
  }
  std::vector<double> raw(cfg.dof);
  for (int i = 0; i < cfg.dof; ++i) {
    raw[i] = cfg.raw_min[i] + static_cast<double>(m.values[i]) * (cfg.raw_max[i] - cfg.raw_min[i]);
  }
  return raw;
}

}  // namespace exface
