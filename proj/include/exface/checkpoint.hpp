#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "exface/denoiser.hpp"
#include "exface/diffusion.hpp"
#include "exface/params.hpp"

namespace exface {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CheckpointMeta {
  ModelConfig model;
  std::string robot;
  ScheduleConfig schedule;
  long training_steps = 0;
  nlohmann::json extra = nlohmann::json::object();
};

struct Checkpoint {
  CheckpointMeta meta;
  ParamSet<float> params;
};

// On disk a checkpoint is a directory holding:
//   manifest.json  hyperparameters, robot name, schedule, step count, tensor
//                  table, blob size and FNV-1a 64 digest
//   params.bin     "EXFCKPT1", u32 tensor count, then per tensor: u32 name
//                  length, name bytes, u32 rank, u32 dims, f32 values.
//                  All fields little-endian.
inline constexpr const char* kManifestFile = "manifest.json";
inline constexpr const char* kBlobFile = "params.bin";

void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);

/// Loads and verifies a checkpoint. With `expected_dof`, refuses a model whose
/// dof differs. Throws CheckpointError; never returns partial state.
Checkpoint load_checkpoint(const std::filesystem::path& dir,
                           std::optional<int> expected_dof = std::nullopt);

std::string encode_params_blob(const ParamSet<float>& params);
ParamSet<float> decode_params_blob(const std::string& blob);

std::uint64_t fnv1a64(const std::string& bytes);

}  // namespace exface
