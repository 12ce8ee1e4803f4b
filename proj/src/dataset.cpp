#include "exface/dataset.hpp"

#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

namespace exface {

std::string to_string(SampleSource s) {
  switch (s) {
    case SampleSource::kStatic:
      return "static";
    case SampleSource::kBootstrap:
      return "bootstrap";
    case SampleSource::kExternal:
      return "external";
  }
  return "external";
}

SampleSource sample_source_from_string(const std::string& s) {
  if (s == "static") return SampleSource::kStatic;
  if (s == "bootstrap") return SampleSource::kBootstrap;
  if (s == "external") return SampleSource::kExternal;
  throw InputError("unknown sample source '" + s + "'");
}

void TrainingSample::validate(int dof, int blendshape_dim) const {
  motor.validate(dof);
  blendshape.validate(blendshape_dim);
  if (motor.length() != blendshape.length()) throw InputError("training sample lengths differ");
}

long total_frames(const std::vector<TrainingSample>& samples) {
  long n = 0;
  for (const auto& s : samples) n += s.frames();
  return n;
}

void write_dataset_jsonl(const std::filesystem::path& path, const std::vector<TrainingSample>& samples) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write dataset " + path.string());
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const auto& sample = samples[s];
    for (int t = 0; t < sample.frames(); ++t) {
      auto b = sample.blendshape.frames.frame(t);
      nlohmann::json rec = {{"seq_id", s},
                            {"frame_idx", t},
                            {"blendshape", std::vector<float>(b.begin(), b.end())},
                            {"source", to_string(sample.source)}};
      if (!sample.motor.frames.empty()) {
        auto m = sample.motor.frames.frame(t);
        rec["motor"] = std::vector<float>(m.begin(), m.end());
      }
      out << rec.dump() << '\n';
    }
  }
  if (!out) throw std::runtime_error("short write to dataset " + path.string());
}

std::vector<TrainingSample> read_dataset_jsonl(const std::filesystem::path& path, bool require_motor) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open dataset " + path.string());
  struct Pending {
    std::map<long, std::vector<float>> blend;
    std::map<long, std::vector<float>> motor;
    SampleSource source = SampleSource::kExternal;
  };
  std::vector<std::string> order;
  std::map<std::string, Pending> seqs;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      const std::string id = rec.at("seq_id").dump();
      const long idx = rec.at("frame_idx").get<long>();
      auto [it, inserted] = seqs.try_emplace(id);
      if (inserted) order.push_back(id);
      it->second.blend[idx] = rec.at("blendshape").get<std::vector<float>>();
      if (rec.contains("motor")) {
        it->second.motor[idx] = rec.at("motor").get<std::vector<float>>();
      } else if (require_motor) {
        throw InputError("record has no motor field");
      }
      if (rec.contains("source")) it->second.source = sample_source_from_string(rec.at("source").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const InputError& e) {
      throw InputError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }

  std::vector<TrainingSample> samples;
  samples.reserve(order.size());
  for (const auto& id : order) {
    auto& p = seqs[id];
    const int frames = static_cast<int>(p.blend.size());
    if (p.blend.rbegin()->first != frames - 1 || p.blend.begin()->first != 0) {
      throw InputError("sequence " + id + " has missing frame indices");
    }
    TrainingSample s;
    s.source = p.source;
    const int bdim = static_cast<int>(p.blend.begin()->second.size());
    s.blendshape.frames = FrameBlock(frames, bdim);
    for (const auto& [t, v] : p.blend) s.blendshape.frames.set_frame(static_cast<int>(t), v);
    if (!p.motor.empty()) {
      if (static_cast<int>(p.motor.size()) != frames) throw InputError("sequence " + id + " has partial motor data");
      const int dof = static_cast<int>(p.motor.begin()->second.size());
      s.motor.frames = FrameBlock(frames, dof);
      for (const auto& [t, v] : p.motor) s.motor.frames.set_frame(static_cast<int>(t), v);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace exface
