#include "exface/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace exface {

namespace {

constexpr char kMagic[8] = {'E', 'X', 'F', 'C', 'K', 'P', 'T', '1'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string bytes(std::size_t n) {
    need(n);
    std::string out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  bool done() const { return pos_ == s_.size(); }

 private:
  void need(std::size_t n) const {
    if (s_.size() - pos_ < n) throw CheckpointError("parameter blob truncated");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file_atomic(const std::filesystem::path& p, const std::string& bytes) {
  auto tmp = p;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, p);
}

}  // namespace

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string encode_params_blob(const ParamSet<float>& params) {
  std::string out(kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(params.tensors().size()));
  for (const auto& t : params.tensors()) {
    put_u32(out, static_cast<std::uint32_t>(t.name.size()));
    out += t.name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) put_f32(out, v);
  }
  return out;
}

ParamSet<float> decode_params_blob(const std::string& blob) {
  if (blob.size() < sizeof(kMagic) || std::memcmp(blob.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("parameter blob has a bad magic header");
  }
  Reader r(blob);
  r.bytes(sizeof(kMagic));
  ParamSet<float> params;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t name_len = r.u32();
    if (name_len > 4096) throw CheckpointError("parameter blob: implausible name length");
    std::string name = r.bytes(name_len);
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw CheckpointError("parameter blob: implausible tensor rank");
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    auto& t = params.add(name, shape);
    for (float& v : t.data) v = r.f32();
  }
  if (!r.done()) throw CheckpointError("parameter blob has trailing bytes");
  return params;
}

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt) {
  std::filesystem::create_directories(dir);
  const std::string blob = encode_params_blob(ckpt.params);
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : ckpt.params.tensors()) tensors.push_back({{"name", t.name}, {"shape", t.shape}});
  nlohmann::json manifest = {
      {"format", "exface-checkpoint"},
      {"version", 1},
      {"model", ckpt.meta.model.to_json()},
      {"robot", ckpt.meta.robot},
      {"schedule", ckpt.meta.schedule.to_json()},
      {"training_steps", ckpt.meta.training_steps},
      {"extra", ckpt.meta.extra},
      {"tensors", tensors},
      {"blob_bytes", blob.size()},
      {"blob_fnv1a64", fnv1a64(blob)},
  };
  write_file_atomic(dir / kBlobFile, blob);
  write_file_atomic(dir / kManifestFile, manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& dir, std::optional<int> expected_dof) {
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file(dir / kManifestFile));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("corrupt manifest in " + dir.string() + ": " + e.what());
  }
  Checkpoint ckpt;
  try {
    if (manifest.at("format").get<std::string>() != "exface-checkpoint") {
      throw CheckpointError("not an exface checkpoint: " + dir.string());
    }
    ckpt.meta.model = ModelConfig::from_json(manifest.at("model"));
    ckpt.meta.robot = manifest.at("robot").get<std::string>();
    ckpt.meta.schedule = ScheduleConfig::from_json(manifest.at("schedule"));
    ckpt.meta.training_steps = manifest.at("training_steps").get<long>();
    ckpt.meta.extra = manifest.value("extra", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("manifest in " + dir.string() + " is missing fields: " + e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError("manifest in " + dir.string() + ": " + e.what());
  }
  if (expected_dof && ckpt.meta.model.dof != *expected_dof) {
    throw CheckpointError("checkpoint " + dir.string() + " has dof " +
                          std::to_string(ckpt.meta.model.dof) + ", robot config requires " +
                          std::to_string(*expected_dof));
  }

  const std::string blob = read_file(dir / kBlobFile);
  if (blob.size() != manifest.at("blob_bytes").get<std::size_t>()) {
    throw CheckpointError("parameter blob size does not match manifest (truncated or replaced)");
  }
  if (fnv1a64(blob) != manifest.at("blob_fnv1a64").get<std::uint64_t>()) {
    throw CheckpointError("parameter blob digest does not match manifest");
  }
  ParamSet<float> params = decode_params_blob(blob);
  const auto& table = manifest.at("tensors");
  if (table.size() != params.tensors().size()) throw CheckpointError("manifest/blob tensor count mismatch");
  for (std::size_t i = 0; i < table.size(); ++i) {
    const auto& t = params.tensors()[i];
    if (table[i].at("name").get<std::string>() != t.name ||
        table[i].at("shape").get<std::vector<int>>() != t.shape) {
      throw CheckpointError("manifest/blob mismatch at tensor " + t.name);
    }
  }
  Rng probe(0);
  const ParamSet<float> layout = init_params<float>(ckpt.meta.model, probe);
  if (!layout.same_layout(params)) {
    throw CheckpointError("checkpoint tensors do not match the model configuration");
  }
  ckpt.params = std::move(params);
  return ckpt;
}

}  // namespace exface
