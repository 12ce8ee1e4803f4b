#include "exface/client.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <stdexcept>
#include <thread>

#include <boost/asio.hpp>

namespace exface {

namespace asio = boost::asio;
using asio::ip::tcp;

struct ServiceClient::Impl {
  asio::io_context io;
  tcp::socket socket{io};
  std::mutex write_mu;
  std::mutex mu;
  std::condition_variable cv;
  std::deque<protocol::Message> inbox;
  std::atomic<bool> open{true};
  std::thread reader;

  void read_loop() {
    protocol::StreamDecoder decoder;
    std::array<char, 8192> buf{};
    try {
      for (;;) {
        const std::size_t n = socket.read_some(asio::buffer(buf));
        decoder.feed(std::string_view(buf.data(), n));
        while (auto msg = decoder.next()) {
          {
            std::lock_guard lock(mu);
            inbox.push_back(std::move(*msg));
          }
          cv.notify_all();
        }
      }
    } catch (const std::exception&) {
      // Connection closed or stream corrupt; either way the session is over.
    }
    open.store(false);
    cv.notify_all();
  }
};

ServiceClient::ServiceClient(const std::string& host, std::uint16_t port) : impl_(std::make_unique<Impl>()) {
  try {
    tcp::resolver resolver(impl_->io);
    asio::connect(impl_->socket, resolver.resolve(host, std::to_string(port)));
    impl_->socket.set_option(tcp::no_delay(true));
  } catch (const boost::system::system_error& e) {
    throw std::runtime_error("cannot connect to " + host + ":" + std::to_string(port) + ": " + e.what());
  }
  impl_->reader = std::thread([im = impl_.get()] { im->read_loop(); });
}

ServiceClient::~ServiceClient() { close(); }

void ServiceClient::send(const protocol::Message& msg) { send_raw(protocol::encode(msg)); }

void ServiceClient::send_raw(const std::string& bytes) {
  std::lock_guard lock(impl_->write_mu);
  boost::system::error_code ec;
  asio::write(impl_->socket, asio::buffer(bytes), ec);
  if (ec) throw std::runtime_error("send failed: " + ec.message());
}

std::optional<protocol::Message> ServiceClient::receive(std::chrono::milliseconds timeout) {
  std::unique_lock lock(impl_->mu);
  impl_->cv.wait_for(lock, timeout, [&] { return !impl_->inbox.empty() || !impl_->open.load(); });
  if (impl_->inbox.empty()) return std::nullopt;
  protocol::Message msg = std::move(impl_->inbox.front());
  impl_->inbox.pop_front();
  return msg;
}

std::optional<protocol::Message> ServiceClient::receive_type(protocol::MsgType type,
                                                             std::chrono::milliseconds timeout) {
  const auto deadline = std::chrono::steady_clock::now() + timeout;
  for (;;) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) return std::nullopt;
    auto msg = receive(left);
    if (!msg) {
      if (!connected()) return std::nullopt;
      continue;
    }
    if (protocol::type_of(*msg) == type) return msg;
  }
}

bool ServiceClient::connected() const { return impl_->open.load(); }

void ServiceClient::close() {
  if (!impl_) return;
  boost::system::error_code ignored;
  // shutdown() wakes the blocked reader; the descriptor is closed only after
  // it has exited.
  impl_->socket.shutdown(tcp::socket::shutdown_both, ignored);
  if (impl_->reader.joinable()) impl_->reader.join();
  impl_->socket.close(ignored);
}

}  // namespace exface
