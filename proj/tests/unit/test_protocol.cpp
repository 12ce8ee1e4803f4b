#include <doctest.h>

#include <cmath>
#include <limits>

#include "exface/protocol.hpp"
#include "exface/rng.hpp"

using namespace exface::protocol;

namespace {

std::vector<float> random_floats(int n, exface::Rng& rng) {
  std::vector<float> v(n);
  for (float& x : v) x = static_cast<float>(rng.uniform());
  return v;
}

std::vector<Message> one_of_each(exface::Rng& rng) {
  return {
      Hello{kProtoVersion, 33, 55},
      SetNeutral{random_floats(55, rng)},
      BlendshapeFrameMsg{1234567890123ull, random_floats(55, rng)},
      MotorCommandMsg{42ull, random_floats(33, rng)},
      StatsMsg{R"({"latency_p95_ms":12.5,"publish_hz":60.0})"},
      ErrorMsg{ErrorCode::kDimensionMismatch, "expected 55 channels, got 54"},
  };
}

std::uint32_t read_length(const std::string& frame) {
  const auto* p = reinterpret_cast<const unsigned char*>(frame.data());
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) | p[3];
}

}  // namespace

TEST_CASE("all six message types round-trip bitwise") {
  exface::Rng rng(1);
  for (const Message& msg : one_of_each(rng)) {
    const std::string wire = encode(msg);
    CHECK(read_length(wire) == wire.size() - 4);
    const Message back = decode_body(std::string_view(wire).substr(4));
    CHECK(back == msg);
    CHECK(encode(back) == wire);
  }
}

TEST_CASE("special float values survive the codec bit for bit") {
  const std::vector<float> specials = {0.0f, -0.0f, std::numeric_limits<float>::denorm_min(),
                                       std::numeric_limits<float>::infinity(),
                                       std::numeric_limits<float>::quiet_NaN(), 1.0f};
  const std::string wire = encode(MotorCommandMsg{7, specials});
  const auto back = std::get<MotorCommandMsg>(decode_body(std::string_view(wire).substr(4)));
  REQUIRE(back.values.size() == specials.size());
  for (std::size_t i = 0; i < specials.size(); ++i) {
    CHECK(std::bit_cast<std::uint32_t>(back.values[i]) == std::bit_cast<std::uint32_t>(specials[i]));
  }
}

TEST_CASE("55-channel blendshape frame is 233 bytes with the documented layout") {
  std::vector<float> values(55, 0.0f);
  values[0] = 1.0f;
  const std::string wire = encode(BlendshapeFrameMsg{0x0102030405060708ull, values});
  CHECK(wire.size() == 233);
  CHECK(read_length(wire) == 229);
  CHECK(static_cast<unsigned char>(wire[4]) == 0x03);
  // Big-endian timestamp.
  for (int i = 0; i < 8; ++i) CHECK(static_cast<unsigned char>(wire[5 + i]) == i + 1);
  // Little-endian float: 1.0f = 0x3f800000.
  CHECK(static_cast<unsigned char>(wire[13]) == 0x00);
  CHECK(static_cast<unsigned char>(wire[14]) == 0x00);
  CHECK(static_cast<unsigned char>(wire[15]) == 0x80);
  CHECK(static_cast<unsigned char>(wire[16]) == 0x3f);
}

TEST_CASE("hello and error layouts") {
  const std::string hello = encode(Hello{1, 33, 55});
  CHECK(hello == std::string("\x00\x00\x00\x04\x01\x01\x21\x37", 8));
  const std::string err = encode(ErrorMsg{ErrorCode::kUnknownType, "x"});
  CHECK(err == std::string("\x00\x00\x00\x04\x06\x00\x03x", 8));
}

TEST_CASE("stream decoder reassembles arbitrary fragmentation") {
  exface::Rng rng(2);
  std::string stream;
  std::vector<Message> sent;
  for (int rep = 0; rep < 20; ++rep) {
    for (Message& m : one_of_each(rng)) {
      stream += encode(m);
      sent.push_back(std::move(m));
    }
  }
  StreamDecoder dec;
  std::vector<Message> got;
  std::size_t pos = 0;
  while (pos < stream.size()) {
    const std::size_t n = std::min<std::size_t>(stream.size() - pos, rng.uniform_int(1, 97));
    dec.feed(std::string_view(stream).substr(pos, n));
    pos += n;
    while (auto m = dec.next()) got.push_back(std::move(*m));
  }
  CHECK(dec.buffered() == 0);
  REQUIRE(got.size() == sent.size());
  for (std::size_t i = 0; i < sent.size(); ++i) CHECK(got[i] == sent[i]);
}

TEST_CASE("malformed frames raise protocol errors") {
  SUBCASE("unknown type is consumed and the stream continues") {
    StreamDecoder dec;
    dec.feed(std::string("\x00\x00\x00\x01\x7f", 5));
    dec.feed(encode(Hello{}));
    try {
      (void)dec.next();
      FAIL("expected ProtocolError");
    } catch (const ProtocolError& e) {
      CHECK(e.code() == ErrorCode::kUnknownType);
    }
    CHECK(std::holds_alternative<Hello>(*dec.next()));
  }
  SUBCASE("float payload not a multiple of four") {
    CHECK_THROWS_AS(decode_body(std::string("\x02\x00\x00\x00", 4)), ProtocolError);
  }
  SUBCASE("truncated timestamp") {
    CHECK_THROWS_AS(decode_body(std::string("\x03\x00\x00", 3)), ProtocolError);
  }
  SUBCASE("oversized length poisons the stream") {
    StreamDecoder dec;
    dec.feed(std::string("\xff\xff\xff\xff\x01", 5));
    CHECK_THROWS_AS(dec.next(), ProtocolError);
    CHECK(dec.poisoned());
    CHECK_THROWS_AS(dec.next(), ProtocolError);
  }
  SUBCASE("zero length poisons the stream") {
    StreamDecoder dec;
    dec.feed(std::string("\x00\x00\x00\x00", 4));
    CHECK_THROWS_AS(dec.next(), ProtocolError);
    CHECK(dec.poisoned());
  }
}

TEST_CASE("JSON mirror round-trips every message type") {
  exface::Rng rng(3);
  for (const Message& msg : one_of_each(rng)) {
    const nlohmann::json j = to_json(msg);
    CHECK(j.at("type") == type_name(type_of(msg)));
    const Message back = from_json(nlohmann::json::parse(j.dump()));
    if (std::holds_alternative<StatsMsg>(msg)) {
      CHECK(nlohmann::json::parse(std::get<StatsMsg>(back).json) ==
            nlohmann::json::parse(std::get<StatsMsg>(msg).json));
    } else {
      CHECK(back == msg);  // floats are printed round-trip exact
    }
  }
}

TEST_CASE("JSON mirror field names") {
  const auto j = to_json(BlendshapeFrameMsg{99, {0.25f, 0.5f}});
  CHECK(j == nlohmann::json::parse(R"({"type":"blendshape_frame","t_us":99,"values":[0.25,0.5]})"));
  const auto m = from_json(nlohmann::json::parse(R"({"type":"motor_command","t_us":5,"values":[1.0]})"));
  CHECK(std::get<MotorCommandMsg>(m) == MotorCommandMsg{5, {1.0f}});
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"type":"bogus"})")), ProtocolError);
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"values":[1]})")), ProtocolError);
  CHECK_THROWS_AS(from_json(nlohmann::json::parse(R"({"type":"set_neutral","values":["a"]})")), ProtocolError);
}
