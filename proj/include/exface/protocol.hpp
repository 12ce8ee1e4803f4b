#pragma once

// Wire format for the retargeting service.
//
//   frame = u32 length | u8 type | payload
//
// `length` counts the type byte plus payload. Header integers are big-endian;
// float arrays are little-endian IEEE-754 binary32. The WebSocket mirror
// carries the same messages as JSON objects.

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace exface::protocol {

inline constexpr std::uint8_t kProtoVersion = 1;
/// Upper bound on `length`; anything larger is treated as a corrupt stream.
inline constexpr std::uint32_t kMaxFrameLength = 1u << 20;

enum class MsgType : std::uint8_t {
  kHello = 0x01,
  kSetNeutral = 0x02,
  kBlendshapeFrame = 0x03,
  kMotorCommand = 0x04,
  kStats = 0x05,
  kError = 0x06,
};

enum class ErrorCode : std::uint16_t {
  kMalformed = 1,
  kDimensionMismatch = 2,
  kUnknownType = 3,
  kVersionMismatch = 4,
  kOutOfRange = 5,
  kInternal = 6,
};

class ProtocolError : public std::runtime_error {
 public:
  ProtocolError(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

struct Hello {
  std::uint8_t proto_version = kProtoVersion;
  std::uint8_t dof = 0;
  std::uint8_t blendshape_dim = 0;
  bool operator==(const Hello&) const = default;
};

struct SetNeutral {
  std::vector<float> values;
  bool operator==(const SetNeutral&) const = default;
};

struct BlendshapeFrameMsg {
  std::uint64_t timestamp_us = 0;
  std::vector<float> values;
  bool operator==(const BlendshapeFrameMsg&) const = default;
};

struct MotorCommandMsg {
  std::uint64_t timestamp_us = 0;
  std::vector<float> values;
  bool operator==(const MotorCommandMsg&) const = default;
};

struct StatsMsg {
  std::string json;  // serialized JSON object, kept verbatim
  bool operator==(const StatsMsg&) const = default;
};

struct ErrorMsg {
  ErrorCode code = ErrorCode::kInternal;
  std::string message;
  bool operator==(const ErrorMsg&) const = default;
};

using Message = std::variant<Hello, SetNeutral, BlendshapeFrameMsg, MotorCommandMsg, StatsMsg, ErrorMsg>;

MsgType type_of(const Message& msg);
std::string type_name(MsgType type);

/// Full frame including the length prefix.
std::string encode(const Message& msg);
/// Decodes one type byte + payload (the bytes counted by `length`).
Message decode_body(std::string_view body);

/// Incremental decoder for a byte stream.
class StreamDecoder {
 public:
  void feed(std::string_view bytes);
  /// Next complete message, if any. A malformed frame throws ProtocolError and
  /// is consumed; an oversized length prefix poisons the stream.
  std::optional<Message> next();
  std::size_t buffered() const { return buffer_.size() - offset_; }
  /// True after an invalid length prefix; the stream cannot be resynchronized.
  bool poisoned() const { return poisoned_; }

 private:
  std::string buffer_;
  std::size_t offset_ = 0;
  bool poisoned_ = false;
};

/// JSON mirror: {"type": "...", "t_us": ..., "values": [...]} plus
/// type-specific fields for hello / stats / error.
nlohmann::json to_json(const Message& msg);
Message from_json(const nlohmann::json& doc);

}  // namespace exface::protocol
