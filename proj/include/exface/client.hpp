#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>

#include "exface/protocol.hpp"

namespace exface {

/// Blocking TCP client for the retargeting service. A background reader
/// decodes incoming frames into a queue; `receive` pops from it.
class ServiceClient {
 public:
  /// Connects; throws std::runtime_error when the server is unreachable.
  ServiceClient(const std::string& host, std::uint16_t port);
  ~ServiceClient();
  ServiceClient(const ServiceClient&) = delete;
  ServiceClient& operator=(const ServiceClient&) = delete;

  void send(const protocol::Message& msg);
  /// Sends pre-encoded bytes verbatim (for malformed-input tests).
  void send_raw(const std::string& bytes);

  std::optional<protocol::Message> receive(std::chrono::milliseconds timeout);
  /// Drops queued messages until one of `type` arrives or the timeout expires.
  std::optional<protocol::Message> receive_type(protocol::MsgType type, std::chrono::milliseconds timeout);

  /// False once the server closed the connection or a read failed.
  bool connected() const;
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace exface
