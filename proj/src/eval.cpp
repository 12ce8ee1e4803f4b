#include "exface/eval.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace exface {

namespace {

struct ReferenceRow {
  const char* method;
  double motor;
  double blendshape;
};

// Published physical-robot values, printed for context only.
constexpr ReferenceRow kReferenceRows[] = {
    {"Random", 0.1461, 0.0105},
    {"MLP", 0.0465, 0.0039},
    {"Transformer", 0.0383, 0.0029},
    {"Ours", 0.0353, 0.0025},
};

}  // namespace

double motor_distance(const MotorSequence& pred, const MotorSequence& truth) {
  if (pred.length() != truth.length() || pred.dof() != truth.dof()) {
    throw InputError("motor_distance: shape mismatch");
  }
  auto a = pred.frames.flat();
  auto b = truth.frames.flat();
  if (a.empty()) throw InputError("motor_distance: empty sequences");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double blendshape_distance(const MotorSequence& pred_motor, const BlendshapeSequence& target_bs,
                           const PlantModel& plant) {
  if (pred_motor.dof() != plant.dof() || target_bs.dim() != plant.blendshape_dim() ||
      pred_motor.length() != target_bs.length()) {
    throw InputError("blendshape_distance: shape mismatch");
  }
  const BlendshapeSequence produced = plant.observe(pred_motor, nullptr);
  auto a = produced.frames.flat();
  auto b = target_bs.frames.flat();
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

ValidationSet make_validation_set(const PlantModel& plant, int frames, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "validation"));
  Episode ep = gen_human_episode(plant, frames, rng);
  ValidationSet v;
  v.id = "human-reachable-" + std::to_string(frames) + "f-seed" + std::to_string(seed) + "-plant" +
         std::to_string(plant.spec().seed);
  v.motor = std::move(ep.motor);
  v.blendshape = std::move(ep.blendshape);
  return v;
}

MotorSequence predict_long_sequence(const WindowPredictor& predictor, const BlendshapeSequence& seq,
                                    int window) {
  const int len = seq.length();
  if (len == 0) throw InputError("predict_long_sequence: empty sequence");
  if (window <= 0) throw InputError("predict_long_sequence: window must be positive");
  std::vector<int> starts;
  if (len <= window) {
    starts.push_back(0);
  } else {
    for (int s = 0; s + window <= len; s += window) starts.push_back(s);
    if (starts.back() + window < len) starts.push_back(len - window);
  }
  const int width = std::min(window, len);
  std::vector<MotorSequence> outputs(starts.size());
  const int n_windows = static_cast<int>(starts.size());
#pragma omp parallel for schedule(dynamic)
  for (int w = 0; w < n_windows; ++w) {
    BlendshapeSequence chunk{FrameBlock(width, seq.dim()), seq.frame_rate_hz};
    for (int t = 0; t < width; ++t) chunk.frames.set_frame(t, seq.frames.frame(starts[w] + t));
    outputs[w] = predictor(chunk, starts[w]);
  }
  const int dof = outputs.front().dof();
  MotorSequence out;
  out.frames = FrameBlock(len, dof);
  for (int w = 0; w < n_windows; ++w) {
    const auto& o = outputs[w];
    if (o.length() != width || o.dof() != dof) throw ModelError("window predictor returned a bad shape");
    // Frames already covered by an earlier window keep their first prediction.
    const int covered = w == 0 ? 0 : starts[w - 1] + width;
    for (int t = std::max(0, covered - starts[w]); t < width; ++t) {
      out.frames.set_frame(starts[w] + t, o.frames.frame(t));
    }
  }
  return out;
}

WindowPredictor exface_predictor(const Denoiser& model, const DiffusionSchedule& sched,
                                 SamplerOptions opts, std::uint64_t seed) {
  return [&model, &sched, opts, seed](const BlendshapeSequence& window, int start) {
    Rng rng(derive_seed(seed, "window-" + std::to_string(start)));
    return sample(model, window, sched, rng, opts);
  };
}

WindowPredictor regression_predictor(const ModelConfig& cfg, const ParamSet<float>& params) {
  return [&cfg, &params](const BlendshapeSequence& window, int) {
    return transformer_predict(cfg, params, window);
  };
}

WindowPredictor random_predictor(int dof, std::uint64_t seed) {
  return [dof, seed](const BlendshapeSequence& window, int start) {
    Rng rng(derive_seed(seed, "random-" + std::to_string(start)));
    MotorSequence out;
    out.frames = FrameBlock(window.length(), dof);
    for (float& v : out.frames.flat()) v = static_cast<float>(rng.uniform());
    return out;
  };
}

const EvalRow* EvalReport::find(const std::string& method) const {
  for (const auto& r : rows) {
    if (r.method == method) return &r;
  }
  return nullptr;
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json out;
  out["metadata"] = metadata;
  out["rows"] = nlohmann::json::array();
  for (const auto& r : rows) {
    out["rows"].push_back({{"method", r.method},
                           {"motor_distance", r.motor_distance},
                           {"blendshape_distance", r.blendshape_distance}});
  }
  nlohmann::json ref = nlohmann::json::array();
  for (const auto& r : kReferenceRows) {
    ref.push_back({{"method", r.method}, {"motor_distance", r.motor}, {"blendshape_distance", r.blendshape}});
  }
  out["reference_physical_robot"] = ref;
  out["note"] =
      "distances computed against the simulated plant; reference rows come from a physical robot "
      "and are not comparable in absolute value";
  return out;
}

std::string EvalReport::to_table() const {
  std::ostringstream os;
  char line[160];
  std::snprintf(line, sizeof(line), "%-14s %16s %20s\n", "Method", "Motor Distance", "Blendshape Distance");
  os << line;
  os << std::string(52, '-') << '\n';
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%-14s %16.4f %20.4f\n", r.method.c_str(), r.motor_distance,
                  r.blendshape_distance);
    os << line;
  }
  os << std::string(52, '-') << '\n';
  os << "Blendshape distance is measured on the simulated plant (noise off).\n";
  os << "Reference values reported on the physical robot (not reproducible here):\n";
  for (const auto& r : kReferenceRows) {
    std::snprintf(line, sizeof(line), "  %-12s %16.4f %20.4f\n", r.method, r.motor, r.blendshape);
    os << line;
  }
  return os.str();
}

EvalReport run_comparison(const std::vector<MethodEntry>& methods, const ValidationSet& val,
                          const PlantModel& plant, int window, nlohmann::json metadata) {
  if (methods.empty()) throw InputError("run_comparison: no methods");
  EvalReport report;
  report.metadata = metadata.is_object() ? std::move(metadata) : nlohmann::json::object();
  report.metadata["validation_set"] = val.id;
  report.metadata["validation_frames"] = val.blendshape.length();
  report.metadata["plant_seed"] = plant.spec().seed;
  for (const auto& m : methods) {
    if (!m.predictor) throw InputError("run_comparison: method '" + m.name + "' has no model");
    const MotorSequence pred = predict_long_sequence(m.predictor, val.blendshape, window);
    report.rows.push_back({m.name, motor_distance(pred, val.motor),
                           blendshape_distance(pred, val.blendshape, plant)});
  }
  return report;
}

void write_curve_csv(const std::filesystem::path& path, const std::vector<IterationMetrics>& curve) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "iteration,frames_total,motor_distance,blendshape_distance\n";
  out.precision(8);
  for (const auto& m : curve) {
    out << m.iteration << ',' << m.frames_total << ',' << m.motor_distance << ','
        << m.blendshape_distance << '\n';
  }
}

}  // namespace exface
