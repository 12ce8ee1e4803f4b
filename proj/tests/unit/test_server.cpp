#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "exface/client.hpp"
#include "exface/server.hpp"

using namespace exface;
using namespace std::chrono_literals;
namespace asio = boost::asio;
namespace beast = boost::beast;
using tcp = asio::ip::tcp;

namespace {

ModelConfig tiny_model() {
  ModelConfig cfg;
  cfg.dof = 4;
  cfg.blendshape_dim = 6;
  cfg.window = 12;
  cfg.d_model = 16;
  cfg.n_layers = 1;
  cfg.n_heads = 2;
  cfg.d_ff = 24;
  return cfg;
}

struct Fixture {
  RetargetingEngine engine;
  Server server;

  explicit Fixture(ServerConfig cfg)
      : engine(tiny_model(),
               [] {
                 Rng rng(1);
                 return init_params<float>(tiny_model(), rng);
               }(),
               DiffusionSchedule::linear(32, 1e-4, 0.25), EngineConfig{}),
        server(engine, cfg) {
    server.start();
  }
  ~Fixture() { server.stop(); }
};

ServerConfig local_config() {
  ServerConfig cfg;
  cfg.port = 0;
  cfg.stats_interval_s = 0.2;
  return cfg;
}

protocol::BlendshapeFrameMsg frame(std::uint64_t t, float v, int dim = 6) {
  return protocol::BlendshapeFrameMsg{t, std::vector<float>(dim, v)};
}

}  // namespace

TEST_CASE("TCP session: hello, commands at the publish rate, errors keep the connection") {
  Fixture fx(local_config());
  ServiceClient client("127.0.0.1", fx.server.port());
  const auto hello = client.receive_type(protocol::MsgType::kHello, 2s);
  REQUIRE(hello);
  CHECK(std::get<protocol::Hello>(*hello) == protocol::Hello{protocol::kProtoVersion, 4, 6});

  client.send(protocol::Hello{protocol::kProtoVersion, 4, 6});
  client.send(protocol::SetNeutral{std::vector<float>(6, 0.1f)});
  for (int i = 0; i < 10; ++i) {
    client.send(frame(static_cast<std::uint64_t>(1000 * i), 0.5f));
    std::this_thread::sleep_for(16ms);
  }
  std::uint64_t last_t = 0;
  int commands = 0;
  const auto deadline = std::chrono::steady_clock::now() + 1s;
  while (std::chrono::steady_clock::now() < deadline) {
    auto msg = client.receive(100ms);
    if (!msg) continue;
    if (const auto* cmd = std::get_if<protocol::MotorCommandMsg>(&*msg)) {
      CHECK(cmd->values.size() == 4);
      for (float v : cmd->values) {
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
      CHECK(cmd->timestamp_us >= last_t);
      last_t = cmd->timestamp_us;
      ++commands;
    }
  }
  CHECK(commands >= 40);  // ~60 Hz over one second
  CHECK(last_t == 9000);

  // A 5-channel frame on a 6-channel server: ERROR, connection stays up.
  client.send(frame(20000, 0.5f, 5));
  const auto err = client.receive_type(protocol::MsgType::kError, 2s);
  REQUIRE(err);
  CHECK(std::get<protocol::ErrorMsg>(*err).code == protocol::ErrorCode::kDimensionMismatch);
  client.send(frame(30000, 0.5f));
  bool saw_new = false;
  for (int i = 0; i < 60 && !saw_new; ++i) {
    auto cmd = client.receive_type(protocol::MsgType::kMotorCommand, 500ms);
    saw_new = cmd && std::get<protocol::MotorCommandMsg>(*cmd).timestamp_us == 30000;
  }
  CHECK(saw_new);
  CHECK(client.connected());

  // Mismatched handshake and out-of-range values are reported too.
  client.send(protocol::Hello{protocol::kProtoVersion, 5, 6});
  auto hs = client.receive_type(protocol::MsgType::kError, 2s);
  REQUIRE(hs);
  CHECK(std::get<protocol::ErrorMsg>(*hs).code == protocol::ErrorCode::kDimensionMismatch);
  client.send(frame(40000, 1.5f));
  auto oor = client.receive_type(protocol::MsgType::kError, 2s);
  REQUIRE(oor);
  CHECK(std::get<protocol::ErrorMsg>(*oor).code == protocol::ErrorCode::kOutOfRange);

  // Stats are published periodically.
  CHECK(client.receive_type(protocol::MsgType::kStats, 2s).has_value());
}

TEST_CASE("TCP session: corrupt length prefix closes only that connection") {
  Fixture fx(local_config());
  ServiceClient bad("127.0.0.1", fx.server.port());
  ServiceClient good("127.0.0.1", fx.server.port());
  REQUIRE(bad.receive_type(protocol::MsgType::kHello, 2s));
  REQUIRE(good.receive_type(protocol::MsgType::kHello, 2s));
  bad.send_raw(std::string("\xff\xff\xff\xff\x03", 5));
  auto err = bad.receive_type(protocol::MsgType::kError, 2s);
  CHECK(err.has_value());
  for (int i = 0; i < 40 && bad.connected(); ++i) std::this_thread::sleep_for(25ms);
  CHECK_FALSE(bad.connected());
  good.send(frame(1, 0.2f));
  CHECK(good.receive_type(protocol::MsgType::kMotorCommand, 2s).has_value());
}

TEST_CASE("WebSocket mirror speaks JSON and static files are served") {
  const auto static_dir = std::filesystem::temp_directory_path() / "exface-test-static";
  std::filesystem::create_directories(static_dir);
  {
    std::ofstream(static_dir / "index.html") << "<html>console</html>";
  }
  ServerConfig cfg = local_config();
  cfg.ws_port = 0;
  cfg.static_dir = static_dir;
  Fixture fx(cfg);
  REQUIRE(fx.server.ws_port().has_value());
  const std::string port = std::to_string(*fx.server.ws_port());

  asio::io_context io;
  tcp::resolver resolver(io);
  const auto endpoints = resolver.resolve("127.0.0.1", port);

  SUBCASE("websocket") {
    beast::websocket::stream<tcp::socket> ws(io);
    asio::connect(ws.next_layer(), endpoints);
    ws.handshake("127.0.0.1:" + port, "/");
    beast::flat_buffer buf;
    ws.read(buf);
    const auto hello = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
    CHECK(hello.at("type") == "hello");
    CHECK(hello.at("dof") == 4);
    CHECK(hello.at("blendshape_dim") == 6);

    ws.text(true);
    ws.write(asio::buffer(nlohmann::json{{"type", "blendshape_frame"}, {"t_us", 77}, {"values", std::vector<float>(6, 0.3f)}}.dump()));
    bool got_command = false;
    for (int i = 0; i < 200 && !got_command; ++i) {
      buf.consume(buf.size());
      ws.read(buf);
      const auto msg = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
      if (msg.at("type") == "motor_command") {
        CHECK(msg.at("values").size() == 4);
        got_command = msg.at("t_us") == 77;
      }
    }
    CHECK(got_command);

    ws.write(asio::buffer(nlohmann::json{{"type", "blendshape_frame"}, {"t_us", 78}, {"values", {0.1, 0.2}}}.dump()));
    bool got_error = false;
    for (int i = 0; i < 200 && !got_error; ++i) {
      buf.consume(buf.size());
      ws.read(buf);
      const auto msg = nlohmann::json::parse(beast::buffers_to_string(buf.data()));
      got_error = msg.at("type") == "error";
    }
    CHECK(got_error);
    ws.close(beast::websocket::close_code::normal);
  }

  SUBCASE("static http") {
    tcp::socket sock(io);
    asio::connect(sock, endpoints);
    beast::http::request<beast::http::empty_body> req{beast::http::verb::get, "/index.html", 11};
    req.set(beast::http::field::host, "127.0.0.1");
    beast::http::write(sock, req);
    beast::flat_buffer buf;
    beast::http::response<beast::http::string_body> res;
    beast::http::read(sock, buf, res);
    CHECK(res.result() == beast::http::status::ok);
    CHECK(res.body() == "<html>console</html>");

    tcp::socket sock2(io);
    asio::connect(sock2, endpoints);
    beast::http::request<beast::http::empty_body> bad{beast::http::verb::get, "/../etc/passwd", 11};
    bad.set(beast::http::field::host, "127.0.0.1");
    beast::http::write(sock2, bad);
    beast::flat_buffer buf2;
    beast::http::response<beast::http::string_body> res2;
    beast::http::read(sock2, buf2, res2);
    CHECK(res2.result() != beast::http::status::ok);
  }
  std::filesystem::remove_all(static_dir);
}

TEST_CASE("server stats report publish rate and drops") {
  Fixture fx(local_config());
  ServiceClient client("127.0.0.1", fx.server.port());
  for (int i = 0; i < 60; ++i) {
    client.send(frame(static_cast<std::uint64_t>(i), 0.4f));
    std::this_thread::sleep_for(16ms);
  }
  std::this_thread::sleep_for(300ms);  // let the last frames reach the engine
  const auto stats = fx.server.stats_json();
  CHECK(stats.at("publish_hz").get<double>() == doctest::Approx(60.0).epsilon(0.05));
  CHECK(stats.at("latency_p95_ms").get<double>() >= 0.0);
  CHECK(stats.at("pending").get<std::size_t>() <= 1);
  CHECK(stats.at("cycles").get<std::uint64_t>() + stats.at("frames_dropped").get<std::uint64_t>() +
            stats.at("pending").get<std::uint64_t>() ==
        60);
}
