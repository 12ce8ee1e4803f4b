#include "exface/server.hpp"

#include <atomic>
#include <deque>
#include <fstream>
#include <mutex>
#include <thread>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "exface/protocol.hpp"

namespace exface {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace {

std::string mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html" || ext == ".htm") return "text/html";
  if (ext == ".js" || ext == ".mjs") return "application/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

}  // namespace

/// Anything that can receive broadcast messages. All calls happen on the I/O thread.
class Subscriber {
 public:
  virtual ~Subscriber() = default;
  virtual void deliver(const protocol::Message& msg) = 0;
};

struct Server::Impl {
  Impl(RetargetingEngine& e, ServerConfig c)
      : engine(e), cfg(std::move(c)), publisher(e.dof(), cfg.publisher) {}

  RetargetingEngine& engine;
  ServerConfig cfg;
  CommandPublisher publisher;
  LoopStats stats;

  asio::io_context io;
  std::optional<asio::executor_work_guard<asio::io_context::executor_type>> work;
  std::unique_ptr<tcp::acceptor> acceptor;
  std::unique_ptr<tcp::acceptor> ws_acceptor;
  std::thread io_thread;
  std::thread inference_thread;
  std::thread publish_thread;
  std::atomic<bool> running{false};

  std::mutex subs_mu;
  std::vector<std::weak_ptr<Subscriber>> subscribers;

  std::mutex latency_mu;
  std::optional<SteadyClock::time_point> pending_received;

  void add_subscriber(const std::shared_ptr<Subscriber>& s) {
    std::lock_guard lock(subs_mu);
    subscribers.push_back(s);
  }

  void broadcast(protocol::Message msg) {
    asio::post(io, [this, msg = std::move(msg)] {
      std::vector<std::shared_ptr<Subscriber>> live;
      {
        std::lock_guard lock(subs_mu);
        std::erase_if(subscribers, [](const auto& w) { return w.expired(); });
        for (const auto& w : subscribers) {
          if (auto s = w.lock()) live.push_back(std::move(s));
        }
      }
      for (auto& s : live) s->deliver(msg);
    });
  }

  protocol::Hello hello() const {
    return protocol::Hello{protocol::kProtoVersion, static_cast<std::uint8_t>(engine.dof()),
                           static_cast<std::uint8_t>(engine.blendshape_dim())};
  }

  /// Applies one client message; returns a reply to send to that client, if any.
  std::optional<protocol::Message> handle(const protocol::Message& msg) {
    using namespace protocol;
    try {
      if (const auto* h = std::get_if<Hello>(&msg)) {
        if (h->proto_version != kProtoVersion) {
          return ErrorMsg{ErrorCode::kVersionMismatch, "protocol version " + std::to_string(h->proto_version) +
                                                           " not supported"};
        }
        if (h->dof != engine.dof() || h->blendshape_dim != engine.blendshape_dim()) {
          return ErrorMsg{ErrorCode::kDimensionMismatch,
                          "server expects dof " + std::to_string(engine.dof()) + " and blendshape_dim " +
                              std::to_string(engine.blendshape_dim())};
        }
        return std::nullopt;
      }
      if (const auto* n = std::get_if<SetNeutral>(&msg)) {
        if (static_cast<int>(n->values.size()) != engine.blendshape_dim()) {
          return ErrorMsg{ErrorCode::kDimensionMismatch, "neutral pose has " + std::to_string(n->values.size()) +
                                                             " channels, expected " +
                                                             std::to_string(engine.blendshape_dim())};
        }
        engine.set_neutral(n->values);
        return std::nullopt;
      }
      if (const auto* f = std::get_if<BlendshapeFrameMsg>(&msg)) {
        if (static_cast<int>(f->values.size()) != engine.blendshape_dim()) {
          return ErrorMsg{ErrorCode::kDimensionMismatch, "frame has " + std::to_string(f->values.size()) +
                                                             " channels, expected " +
                                                             std::to_string(engine.blendshape_dim())};
        }
        engine.ingest(f->timestamp_us, f->values);
        return std::nullopt;
      }
      return ErrorMsg{ErrorCode::kUnknownType, "clients may send hello, set_neutral or blendshape_frame only"};
    } catch (const InputError& e) {
      return ErrorMsg{ErrorCode::kOutOfRange, e.what()};
    }
  }

  void inference_loop() {
    while (running.load()) {
      const auto t0 = SteadyClock::now();
      const CycleResult r = engine.control_cycle(std::chrono::milliseconds(50));
      if (!r.fresh) continue;
      const auto t1 = SteadyClock::now();
      stats.record_cycle(std::chrono::duration<double, std::milli>(t1 - t0).count());
      publisher.update(r.command, r.source_timestamp_us, t1);
      std::lock_guard lock(latency_mu);
      pending_received = r.received;
    }
  }

  void publish_loop() {
    const auto period = std::chrono::duration_cast<SteadyClock::duration>(
        std::chrono::duration<double>(1.0 / cfg.publisher.publish_hz));
    const auto stats_period = std::chrono::duration_cast<SteadyClock::duration>(
        std::chrono::duration<double>(cfg.stats_interval_s));
    auto next = SteadyClock::now();
    auto next_stats = next + stats_period;
    while (running.load()) {
      next += period;
      std::this_thread::sleep_until(next);
      const auto now = SteadyClock::now();
      // After a stall, resume the grid from now rather than bursting.
      if (now - next > period) next = now;
      if (auto out = publisher.tick(now)) {
        stats.record_publish(now);
        {
          std::lock_guard lock(latency_mu);
          if (pending_received) {
            stats.record_latency_ms(std::chrono::duration<double, std::milli>(now - *pending_received).count());
            pending_received.reset();
          }
        }
        broadcast(protocol::MotorCommandMsg{out->source_timestamp_us, out->command.values});
      }
      if (now >= next_stats) {
        next_stats = now + stats_period;
        broadcast(protocol::StatsMsg{stats_json().dump()});
      }
    }
  }

  nlohmann::json stats_json() const {
    nlohmann::json j = stats.to_json(engine.slot().dropped(), engine.errors());
    j["dof"] = engine.dof();
    j["blendshape_dim"] = engine.blendshape_dim();
    j["cycles"] = engine.cycles();
    j["pending"] = engine.slot().pending();
    return j;
  }

  void accept_tcp();
  void accept_ws();
};

namespace {

/// Bounded outgoing queue shared by both transports: drops the oldest queued
/// (not in-flight) message when full.
class Outbox {
 public:
  explicit Outbox(std::size_t cap) : cap_(cap) {}
  /// Returns true when the caller should start a write.
  bool push(std::string msg) {
    queue_.push_back(std::move(msg));
    if (queue_.size() > cap_ + (writing_ ? 1 : 0)) queue_.erase(queue_.begin() + (writing_ ? 1 : 0));
    if (writing_) return false;
    writing_ = true;
    return true;
  }
  const std::string& front() const { return queue_.front(); }
  /// Returns true when another write should follow.
  bool pop() {
    queue_.pop_front();
    writing_ = !queue_.empty();
    return writing_;
  }

 private:
  std::size_t cap_;
  std::deque<std::string> queue_;
  bool writing_ = false;
};

class TcpSession : public Subscriber, public std::enable_shared_from_this<TcpSession> {
 public:
  TcpSession(tcp::socket socket, Server::Impl& server)
      : socket_(std::move(socket)), server_(server), outbox_(server.cfg.max_outbox) {}

  void start() {
    socket_.set_option(tcp::no_delay(true));
    send(server_.hello());
    read();
  }

  void deliver(const protocol::Message& msg) override { send(msg); }

 private:
  void send(const protocol::Message& msg) {
    if (closed_) return;
    if (outbox_.push(protocol::encode(msg))) write();
  }

  void write() {
    auto self = shared_from_this();
    asio::async_write(socket_, asio::buffer(outbox_.front()), [self](boost::system::error_code ec, std::size_t) {
      if (ec) return self->close();
      if (self->outbox_.pop()) self->write();
    });
  }

  void read() {
    auto self = shared_from_this();
    socket_.async_read_some(asio::buffer(buf_), [self](boost::system::error_code ec, std::size_t n) {
      if (ec) return self->close();
      self->decoder_.feed(std::string_view(self->buf_.data(), n));
      try {
        while (auto msg = self->decoder_.next()) {
          if (auto reply = self->server_.handle(*msg)) self->send(*reply);
        }
      } catch (const protocol::ProtocolError& e) {
        self->send(protocol::ErrorMsg{e.code(), e.what()});
        if (self->decoder_.poisoned()) return self->close_after_flush();
      }
      self->read();
    });
  }

  void close_after_flush() {
    auto self = shared_from_this();
    asio::post(socket_.get_executor(), [self] { self->close(); });
  }

  void close() {
    if (closed_) return;
    closed_ = true;
    boost::system::error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
  }

  tcp::socket socket_;
  Server::Impl& server_;
  protocol::StreamDecoder decoder_;
  Outbox outbox_;
  std::array<char, 8192> buf_{};
  bool closed_ = false;
};

class WsSession : public Subscriber, public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, Server::Impl& server)
      : ws_(std::move(socket)), server_(server), outbox_(server.cfg.max_outbox) {}

  void start(http::request<http::string_body> req) {
    ws_.text(true);
    auto self = shared_from_this();
    ws_.async_accept(req, [self](beast::error_code ec) {
      if (ec) return;
      self->open_ = true;
      self->server_.add_subscriber(self);
      self->send(self->server_.hello());
      self->read();
    });
  }

  void deliver(const protocol::Message& msg) override { send(msg); }

 private:
  void send(const protocol::Message& msg) {
    if (!open_) return;
    if (outbox_.push(protocol::to_json(msg).dump())) write();
  }

  void write() {
    auto self = shared_from_this();
    ws_.async_write(asio::buffer(outbox_.front()), [self](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      if (self->outbox_.pop()) self->write();
    });
  }

  void read() {
    auto self = shared_from_this();
    ws_.async_read(buffer_, [self](beast::error_code ec, std::size_t) {
      if (ec) {
        self->open_ = false;
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      try {
        const auto doc = nlohmann::json::parse(text);
        if (auto reply = self->server_.handle(protocol::from_json(doc))) self->send(*reply);
      } catch (const protocol::ProtocolError& e) {
        self->send(protocol::ErrorMsg{e.code(), e.what()});
      } catch (const nlohmann::json::exception& e) {
        self->send(protocol::ErrorMsg{protocol::ErrorCode::kMalformed, e.what()});
      }
      self->read();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  Server::Impl& server_;
  beast::flat_buffer buffer_;
  Outbox outbox_;
  bool open_ = false;
};

/// First request on the WebSocket port: upgrade, or a static file GET.
class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, Server::Impl& server) : stream_(std::move(socket)), server_(server) {}

  void start() { read(); }

 private:
  void read() {
    req_ = {};
    auto self = shared_from_this();
    http::async_read(stream_, buffer_, req_, [self](beast::error_code ec, std::size_t) {
      if (ec) return;
      if (websocket::is_upgrade(self->req_)) {
        std::make_shared<WsSession>(self->stream_.release_socket(), self->server_)->start(std::move(self->req_));
        return;
      }
      self->respond();
    });
  }

  void respond() {
    auto res = std::make_shared<http::response<http::string_body>>();
    res->version(req_.version());
    res->keep_alive(false);
    res->set(http::field::server, "exface");
    std::string target(req_.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target.empty() || target.back() == '/') target += "index.html";
    const auto& root = server_.cfg.static_dir;
    if (req_.method() != http::verb::get) {
      res->result(http::status::method_not_allowed);
    } else if (root.empty() || target.find("..") != std::string::npos) {
      res->result(http::status::not_found);
    } else {
      const auto path = root / target.substr(1);
      std::ifstream in(path, std::ios::binary);
      if (!in) {
        res->result(http::status::not_found);
      } else {
        res->result(http::status::ok);
        res->set(http::field::content_type, mime_type(path));
        res->body().assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
      }
    }
    res->prepare_payload();
    auto self = shared_from_this();
    http::async_write(stream_, *res, [self, res](beast::error_code, std::size_t) {
      beast::error_code ignored;
      self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
    });
  }

  beast::tcp_stream stream_;
  Server::Impl& server_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

void Server::Impl::accept_tcp() {
  acceptor->async_accept([this](boost::system::error_code ec, tcp::socket socket) {
    if (ec) return;
    auto session = std::make_shared<TcpSession>(std::move(socket), *this);
    add_subscriber(session);
    session->start();
    accept_tcp();
  });
}

void Server::Impl::accept_ws() {
  ws_acceptor->async_accept([this](boost::system::error_code ec, tcp::socket socket) {
    if (ec) return;
    std::make_shared<HttpSession>(std::move(socket), *this)->start();
    accept_ws();
  });
}

Server::Server(RetargetingEngine& engine, ServerConfig cfg) : impl_(std::make_unique<Impl>(engine, std::move(cfg))) {}

Server::~Server() { stop(); }

void Server::start() {
  if (impl_->running.load()) return;
  auto& im = *impl_;
  const auto address = asio::ip::make_address(im.cfg.bind_address);
  im.acceptor = std::make_unique<tcp::acceptor>(im.io, tcp::endpoint(address, im.cfg.port));
  if (im.cfg.ws_port) {
    im.ws_acceptor = std::make_unique<tcp::acceptor>(im.io, tcp::endpoint(address, *im.cfg.ws_port));
  }
  im.work.emplace(im.io.get_executor());
  im.accept_tcp();
  if (im.ws_acceptor) im.accept_ws();
  im.running.store(true);
  im.io_thread = std::thread([&im] { im.io.run(); });
  im.inference_thread = std::thread([&im] { im.inference_loop(); });
  im.publish_thread = std::thread([&im] { im.publish_loop(); });
}

void Server::stop() {
  auto& im = *impl_;
  if (!im.running.exchange(false)) return;
  im.engine.close();
  if (im.publish_thread.joinable()) im.publish_thread.join();
  if (im.inference_thread.joinable()) im.inference_thread.join();
  asio::post(im.io, [&im] {
    boost::system::error_code ignored;
    if (im.acceptor) im.acceptor->close(ignored);
    if (im.ws_acceptor) im.ws_acceptor->close(ignored);
  });
  im.work.reset();
  im.io.stop();
  if (im.io_thread.joinable()) im.io_thread.join();
}

bool Server::running() const { return impl_->running.load(); }

std::uint16_t Server::port() const { return impl_->acceptor ? impl_->acceptor->local_endpoint().port() : 0; }

std::optional<std::uint16_t> Server::ws_port() const {
  if (!impl_->ws_acceptor) return std::nullopt;
  return impl_->ws_acceptor->local_endpoint().port();
}

const LoopStats& Server::stats() const { return impl_->stats; }

nlohmann::json Server::stats_json() const { return impl_->stats_json(); }

}  // namespace exface
