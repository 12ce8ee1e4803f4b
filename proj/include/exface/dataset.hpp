#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "exface/core.hpp"

namespace exface {

enum class SampleSource : std::uint8_t { kStatic, kBootstrap, kExternal };

std::string to_string(SampleSource s);
SampleSource sample_source_from_string(const std::string& s);

struct TrainingSample {
  MotorSequence motor;           // command space, clean
  BlendshapeSequence blendshape;  // same length
  SampleSource source = SampleSource::kStatic;
  int added_at_iteration = 0;

  int frames() const { return motor.length(); }
  void validate(int dof, int blendshape_dim) const;
};

long total_frames(const std::vector<TrainingSample>& samples);

/// JSON-lines, one record per frame:
///   {"seq_id", "frame_idx", "blendshape": [...], "motor": [...], "source"}
/// plus an optional "image_path" that is carried through but unused.
void write_dataset_jsonl(const std::filesystem::path& path, const std::vector<TrainingSample>& samples);

/// Groups records by seq_id (in order of first appearance) and frame_idx.
/// Records without a "motor" field are accepted when `require_motor` is false
/// (blendshape-only replay files); their motor sequences are left empty.
std::vector<TrainingSample> read_dataset_jsonl(const std::filesystem::path& path,
                                               bool require_motor = true);

}  // namespace exface
