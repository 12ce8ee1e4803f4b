#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "exface/service.hpp"

namespace exface {

struct ServerConfig {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = 9000;                // 0 picks an ephemeral port
  std::optional<std::uint16_t> ws_port;     // WebSocket mirror + static files; unset disables
  std::filesystem::path static_dir;         // served on the WebSocket port when set
  PublisherConfig publisher;
  double stats_interval_s = 1.0;
  /// Per-subscriber outgoing queue bound; the oldest queued message is dropped beyond it.
  std::size_t max_outbox = 64;
};

/// TCP + WebSocket front end around a RetargetingEngine. Runs three
/// activities: network I/O, inference (as fast as frames allow, one in
/// flight) and fixed-rate publication.
class Server {
 public:
  Server(RetargetingEngine& engine, ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds the listeners and starts all threads. Throws on bind failure.
  void start();
  /// Idempotent.
  void stop();
  bool running() const;

  std::uint16_t port() const;
  std::optional<std::uint16_t> ws_port() const;

  const LoopStats& stats() const;
  nlohmann::json stats_json() const;

  struct Impl;  // opaque; public only so transport sessions in the .cpp can name it

 private:
  std::unique_ptr<Impl> impl_;
};

}  // namespace exface
