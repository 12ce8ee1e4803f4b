#include "exface/protocol.hpp"

#include <bit>
#include <cstring>

namespace exface::protocol {

namespace {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

void put_u8(std::string& out, std::uint8_t v) { out.push_back(static_cast<char>(v)); }

template <typename U>
void put_be(std::string& out, U v) {
  for (int shift = static_cast<int>(sizeof(U) * 8) - 8; shift >= 0; shift -= 8) {
    out.push_back(static_cast<char>((v >> shift) & 0xFF));
  }
}

void put_f32_le(std::string& out, float f) {
  const auto bits = std::bit_cast<std::uint32_t>(f);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

void put_floats(std::string& out, const std::vector<float>& values) {
  for (float f : values) put_f32_le(out, f);
}

class Reader {
 public:
  explicit Reader(std::string_view data) : data_(data) {}

  std::size_t remaining() const { return data_.size() - pos_; }

  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(data_[pos_++]);
  }

  template <typename U>
  U be() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) v = static_cast<U>((v << 8) | static_cast<std::uint8_t>(data_[pos_++]));
    return v;
  }

  std::vector<float> floats_rest() {
    if (remaining() % 4 != 0) throw ProtocolError(ErrorCode::kMalformed, "float payload not a multiple of 4 bytes");
    std::vector<float> out(remaining() / 4);
    for (float& f : out) {
      std::uint32_t bits = 0;
      for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
      f = std::bit_cast<float>(bits);
    }
    return out;
  }

  std::string rest() {
    std::string s(data_.substr(pos_));
    pos_ = data_.size();
    return s;
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) throw ProtocolError(ErrorCode::kMalformed, "truncated payload");
  }

  std::string_view data_;
  std::size_t pos_ = 0;
};

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

std::vector<float> json_values(const nlohmann::json& doc) {
  if (!doc.contains("values") || !doc.at("values").is_array()) {
    throw ProtocolError(ErrorCode::kMalformed, "message needs a \"values\" array");
  }
  std::vector<float> out;
  out.reserve(doc.at("values").size());
  for (const auto& v : doc.at("values")) {
    if (!v.is_number()) throw ProtocolError(ErrorCode::kMalformed, "non-numeric entry in \"values\"");
    out.push_back(v.get<float>());
  }
  return out;
}

}  // namespace

MsgType type_of(const Message& msg) {
  return std::visit(Overloaded{
                        [](const Hello&) { return MsgType::kHello; },
                        [](const SetNeutral&) { return MsgType::kSetNeutral; },
                        [](const BlendshapeFrameMsg&) { return MsgType::kBlendshapeFrame; },
                        [](const MotorCommandMsg&) { return MsgType::kMotorCommand; },
                        [](const StatsMsg&) { return MsgType::kStats; },
                        [](const ErrorMsg&) { return MsgType::kError; },
                    },
                    msg);
}

std::string type_name(MsgType type) {
  switch (type) {
    case MsgType::kHello:
      return "hello";
    case MsgType::kSetNeutral:
      return "set_neutral";
    case MsgType::kBlendshapeFrame:
      return "blendshape_frame";
    case MsgType::kMotorCommand:
      return "motor_command";
    case MsgType::kStats:
      return "stats";
    case MsgType::kError:
      return "error";
  }
  return "unknown";
}

std::string encode(const Message& msg) {
  std::string body;
  put_u8(body, static_cast<std::uint8_t>(type_of(msg)));
  std::visit(Overloaded{
                 [&](const Hello& m) {
                   put_u8(body, m.proto_version);
                   put_u8(body, m.dof);
                   put_u8(body, m.blendshape_dim);
                 },
                 [&](const SetNeutral& m) { put_floats(body, m.values); },
                 [&](const BlendshapeFrameMsg& m) {
                   put_be<std::uint64_t>(body, m.timestamp_us);
                   put_floats(body, m.values);
                 },
                 [&](const MotorCommandMsg& m) {
                   put_be<std::uint64_t>(body, m.timestamp_us);
                   put_floats(body, m.values);
                 },
                 [&](const StatsMsg& m) { body += m.json; },
                 [&](const ErrorMsg& m) {
                   put_be<std::uint16_t>(body, static_cast<std::uint16_t>(m.code));
                   body += m.message;
                 },
             },
             msg);
  if (body.size() > kMaxFrameLength) throw ProtocolError(ErrorCode::kMalformed, "message too large");
  std::string frame;
  frame.reserve(4 + body.size());
  put_be<std::uint32_t>(frame, static_cast<std::uint32_t>(body.size()));
  frame += body;
  return frame;
}

Message decode_body(std::string_view body) {
  Reader r(body);
  const std::uint8_t type = r.u8();
  switch (static_cast<MsgType>(type)) {
    case MsgType::kHello: {
      Hello h;
      h.proto_version = r.u8();
      h.dof = r.u8();
      h.blendshape_dim = r.u8();
      if (r.remaining() != 0) throw ProtocolError(ErrorCode::kMalformed, "trailing bytes after HELLO");
      return h;
    }
    case MsgType::kSetNeutral:
      return SetNeutral{r.floats_rest()};
    case MsgType::kBlendshapeFrame: {
      BlendshapeFrameMsg m;
      m.timestamp_us = r.be<std::uint64_t>();
      m.values = r.floats_rest();
      return m;
    }
    case MsgType::kMotorCommand: {
      MotorCommandMsg m;
      m.timestamp_us = r.be<std::uint64_t>();
      m.values = r.floats_rest();
      return m;
    }
    case MsgType::kStats:
      return StatsMsg{r.rest()};
    case MsgType::kError: {
      ErrorMsg m;
      m.code = static_cast<ErrorCode>(r.be<std::uint16_t>());
      m.message = r.rest();
      return m;
    }
  }
  throw ProtocolError(ErrorCode::kUnknownType, "unknown message type " + std::to_string(type));
}

void StreamDecoder::feed(std::string_view bytes) {
  // Compact once the consumed prefix dominates the buffer.
  if (offset_ > 0 && offset_ * 2 > buffer_.size()) {
    buffer_.erase(0, offset_);
    offset_ = 0;
  }
  buffer_.append(bytes);
}

std::optional<Message> StreamDecoder::next() {
  if (poisoned_) throw ProtocolError(ErrorCode::kMalformed, "stream is unsynchronized");
  if (buffered() < 4) return std::nullopt;
  const auto* p = reinterpret_cast<const unsigned char*>(buffer_.data() + offset_);
  const std::uint32_t length = (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) |
                               (std::uint32_t{p[2]} << 8) | std::uint32_t{p[3]};
  if (length == 0 || length > kMaxFrameLength) {
    poisoned_ = true;
    throw ProtocolError(ErrorCode::kMalformed, "invalid frame length " + std::to_string(length));
  }
  if (buffered() < 4 + static_cast<std::size_t>(length)) return std::nullopt;
  const std::string_view body(buffer_.data() + offset_ + 4, length);
  offset_ += 4 + length;
  return decode_body(body);
}

nlohmann::json to_json(const Message& msg) {
  nlohmann::json j;
  j["type"] = type_name(type_of(msg));
  std::visit(Overloaded{
                 [&](const Hello& m) {
                   j["proto_version"] = m.proto_version;
                   j["dof"] = m.dof;
                   j["blendshape_dim"] = m.blendshape_dim;
                 },
                 [&](const SetNeutral& m) { j["values"] = m.values; },
                 [&](const BlendshapeFrameMsg& m) {
                   j["t_us"] = m.timestamp_us;
                   j["values"] = m.values;
                 },
                 [&](const MotorCommandMsg& m) {
                   j["t_us"] = m.timestamp_us;
                   j["values"] = m.values;
                 },
                 [&](const StatsMsg& m) {
                   j["stats"] = nlohmann::json::parse(m.json.empty() ? std::string("{}") : m.json, nullptr, false);
                 },
                 [&](const ErrorMsg& m) {
                   j["code"] = static_cast<std::uint16_t>(m.code);
                   j["message"] = m.message;
                 },
             },
             msg);
  return j;
}

Message from_json(const nlohmann::json& doc) {
  if (!doc.is_object() || !doc.contains("type") || !doc.at("type").is_string()) {
    throw ProtocolError(ErrorCode::kMalformed, "message needs a string \"type\"");
  }
  const std::string type = doc.at("type").get<std::string>();
  try {
    if (type == "hello") {
      return Hello{doc.value<std::uint8_t>("proto_version", kProtoVersion), doc.at("dof").get<std::uint8_t>(),
                   doc.at("blendshape_dim").get<std::uint8_t>()};
    }
    if (type == "set_neutral") return SetNeutral{json_values(doc)};
    if (type == "blendshape_frame") return BlendshapeFrameMsg{doc.value<std::uint64_t>("t_us", 0), json_values(doc)};
    if (type == "motor_command") return MotorCommandMsg{doc.value<std::uint64_t>("t_us", 0), json_values(doc)};
    if (type == "stats") return StatsMsg{doc.value("stats", nlohmann::json::object()).dump()};
    if (type == "error") {
      return ErrorMsg{static_cast<ErrorCode>(doc.value<std::uint16_t>("code", 6)), doc.value("message", std::string())};
    }
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(ErrorCode::kMalformed, std::string("bad ") + type + " message: " + e.what());
  }
  throw ProtocolError(ErrorCode::kUnknownType, "unknown message type '" + type + "'");
}

}  // namespace exface::protocol
