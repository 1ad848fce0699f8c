#include "precrash/server/server.hpp"

#include <array>
#include <atomic>
#include <chrono>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace precrash::server {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using error_code = boost::system::error_code;

struct Server::Impl {
  asio::io_context io;
  tcp::acceptor acceptor{io};
  std::atomic<SessionId> next_session{1};
};

namespace {

// Socket side of one session; every member is touched on the network thread only.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(Server& server, asio::io_context& io, SessionId id)
      : server_(server), io_(io), id_(id), outbox_(std::make_shared<Outbox>()) {}
  virtual ~Connection() = default;

  void open() {
    std::weak_ptr<Connection> weak = shared_from_this();
    auto* io = &io_;
    auto wake = [weak, io] {
      asio::post(*io, [weak] {
        if (auto c = weak.lock()) c->flush();
      });
    };
    server_.post([id = id_, box = outbox_, wake](Engine& e) { e.connect(id, box, wake); });
    start_reading();
  }

 protected:
  virtual void start_reading() = 0;
  virtual void send(const std::string& body, std::function<void(error_code)> done) = 0;
  virtual void close_transport() = 0;

  void deliver(std::string body) {
    server_.post([id = id_, body = std::move(body)](Engine& e) { e.handle(id, body); });
  }
  // The reader stops here, so the connection keeps itself alive until the
  // error has been written and fail() runs.
  void protocol_error(ErrorCode code, std::string detail) {
    linger_ = shared_from_this();
    server_.post([id = id_, code, detail = std::move(detail)](Engine& e) { e.protocol_error(id, code, detail, true); });
  }

  void fail() {
    if (closed_) return;
    closed_ = true;
    close_transport();
    server_.post([id = id_](Engine& e) { e.disconnect(id); });
    linger_.reset();
  }

 private:
  void flush() {
    if (writing_ || closed_) return;
    std::optional<std::string> body = outbox_->pop();
    if (!body) {
      if (outbox_->closing()) fail();
      return;
    }
    writing_ = true;
    current_ = std::move(*body);
    send(current_, [self = shared_from_this()](error_code ec) {
      self->writing_ = false;
      if (ec) return self->fail();
      self->flush();
    });
  }

  Server& server_;
  asio::io_context& io_;
  SessionId id_;
  std::shared_ptr<Outbox> outbox_;
  std::string current_;
  std::shared_ptr<Connection> linger_;
  bool writing_ = false;
  bool closed_ = false;
};

class TcpConnection final : public Connection {
 public:
  TcpConnection(Server& server, asio::io_context& io, SessionId id, tcp::socket socket, std::string_view head)
      : Connection(server, io, id), socket_(std::move(socket)) {
    decoder_.feed(head);
  }

 protected:
  void start_reading() override {
    if (drain()) read();
  }

  void send(const std::string& body, std::function<void(error_code)> done) override {
    framed_ = encode_frame(body);
    asio::async_write(socket_, asio::buffer(framed_), [done = std::move(done)](error_code ec, std::size_t) { done(ec); });
  }

  void close_transport() override {
    error_code ignored;
    socket_.shutdown(tcp::socket::shutdown_both, ignored);
    socket_.close(ignored);
  }

 private:
  // Forwards complete frames; false once the stream is unusable.
  bool drain() {
    std::string body;
    for (;;) {
      switch (decoder_.next(body)) {
        case FrameDecoder::Status::Frame:
          deliver(std::move(body));
          body.clear();
          break;
        case FrameDecoder::Status::NeedMore:
          return true;
        case FrameDecoder::Status::Oversize:
          protocol_error(ErrorCode::OversizeFrame, "frame length exceeds 1 MiB");
          return false;
      }
    }
  }

  void read() {
    auto self = std::static_pointer_cast<TcpConnection>(shared_from_this());
    socket_.async_read_some(asio::buffer(chunk_), [self](error_code ec, std::size_t n) {
      if (ec) return self->fail();
      self->decoder_.feed(std::string_view(self->chunk_.data(), n));
      if (self->drain()) self->read();
    });
  }

  tcp::socket socket_;
  FrameDecoder decoder_;
  std::array<char, 1 << 16> chunk_{};
  std::string framed_;
};

class WsConnection final : public Connection {
 public:
  WsConnection(Server& server, asio::io_context& io, SessionId id, websocket::stream<tcp::socket> ws)
      : Connection(server, io, id), ws_(std::move(ws)) {
    ws_.read_message_max(kMaxFrameBytes);
  }

 protected:
  void start_reading() override { read(); }

  void send(const std::string& body, std::function<void(error_code)> done) override {
    ws_.text(true);
    ws_.async_write(asio::buffer(body), [done = std::move(done)](error_code ec, std::size_t) { done(ec); });
  }

  void close_transport() override {
    error_code ignored;
    beast::get_lowest_layer(ws_).shutdown(tcp::socket::shutdown_both, ignored);
    beast::get_lowest_layer(ws_).close(ignored);
  }

 private:
  void read() {
    auto self = std::static_pointer_cast<WsConnection>(shared_from_this());
    ws_.async_read(buffer_, [self](error_code ec, std::size_t) {
      if (ec) return self->fail();  // includes oversize messages, closed with code 1009
      self->deliver(beast::buffers_to_string(self->buffer_.data()));
      self->buffer_.consume(self->buffer_.size());
      self->read();
    });
  }

  websocket::stream<tcp::socket> ws_;
  beast::flat_buffer buffer_;
};

// Reads the HTTP upgrade request and hands the socket to a WsConnection.
class Upgrade : public std::enable_shared_from_this<Upgrade> {
 public:
  Upgrade(Server& server, asio::io_context& io, SessionId id, tcp::socket socket, beast::flat_buffer buffer)
      : server_(server), io_(io), id_(id), socket_(std::move(socket)), buffer_(std::move(buffer)) {
    parser_.body_limit(0);
    parser_.header_limit(16 * 1024);
  }

  void run() {
    http::async_read(socket_, buffer_, parser_, [self = shared_from_this()](error_code ec, std::size_t) {
      if (ec) return;
      self->accept();
    });
  }

 private:
  void accept() {
    const auto& req = parser_.get();
    if (!websocket::is_upgrade(req) || std::string_view(req.target().data(), req.target().size()) != kWebSocketPath) {
      response_ = std::make_shared<http::response<http::string_body>>(http::status::not_found, req.version());
      response_->set(http::field::content_type, "text/plain");
      response_->body() = "WebSocket endpoint is /ws\n";
      response_->prepare_payload();
      http::async_write(socket_, *response_, [self = shared_from_this()](error_code, std::size_t) {
        error_code ignored;
        self->socket_.shutdown(tcp::socket::shutdown_both, ignored);
      });
      return;
    }
    ws_.emplace(std::move(socket_));
    ws_->async_accept(req, [self = shared_from_this()](error_code ec) {
      if (ec) return;
      auto conn = std::make_shared<WsConnection>(self->server_, self->io_, self->id_, std::move(*self->ws_));
      conn->open();
    });
  }

  Server& server_;
  asio::io_context& io_;
  SessionId id_;
  tcp::socket socket_;
  beast::flat_buffer buffer_;
  http::request_parser<http::empty_body> parser_;
  std::shared_ptr<http::response<http::string_body>> response_;
  std::optional<websocket::stream<tcp::socket>> ws_;
};

// Peeks the first four bytes: "GET " starts an HTTP upgrade, anything else a
// frame length (a "GET " prefix would announce a frame far beyond the cap).
class Sniffer : public std::enable_shared_from_this<Sniffer> {
 public:
  Sniffer(Server& server, asio::io_context& io, SessionId id, tcp::socket socket)
      : server_(server), io_(io), id_(id), socket_(std::move(socket)) {}

  void run() {
    asio::async_read(socket_, asio::buffer(head_), [self = shared_from_this()](error_code ec, std::size_t) {
      if (ec) return;
      self->dispatch();
    });
  }

 private:
  void dispatch() {
    const std::string_view head(head_.data(), head_.size());
    if (head == "GET ") {
      beast::flat_buffer buffer;
      buffer.commit(asio::buffer_copy(buffer.prepare(head.size()), asio::buffer(head_)));
      std::make_shared<Upgrade>(server_, io_, id_, std::move(socket_), std::move(buffer))->run();
    } else {
      std::make_shared<TcpConnection>(server_, io_, id_, std::move(socket_), head)->open();
    }
  }

  Server& server_;
  asio::io_context& io_;
  SessionId id_;
  tcp::socket socket_;
  std::array<char, 4> head_{};
};

void accept_loop(Server& server, Server::Impl& impl) {
  impl.acceptor.async_accept([&server, &impl](error_code ec, tcp::socket socket) {
    if (ec) {
      if (ec == asio::error::operation_aborted || !impl.acceptor.is_open()) return;
      return accept_loop(server, impl);
    }
    error_code ignored;
    socket.set_option(tcp::no_delay(true), ignored);
    const SessionId id = impl.next_session++;
    std::make_shared<Sniffer>(server, impl.io, id, std::move(socket))->run();
    accept_loop(server, impl);
  });
}

}  // namespace

Server::Server(ServerOptions options)
    : options_(std::move(options)), engine_(std::make_unique<Engine>(options_.engine)), impl_(std::make_unique<Impl>()) {}

Server::~Server() { stop(); }

void Server::start() {
  const tcp::endpoint endpoint(asio::ip::make_address(options_.bind_address), options_.port);
  impl_->acceptor.open(endpoint.protocol());
  impl_->acceptor.set_option(tcp::acceptor::reuse_address(true));
  impl_->acceptor.bind(endpoint);
  impl_->acceptor.listen();
  port_ = impl_->acceptor.local_endpoint().port();
  accept_loop(*this, *impl_);
  sim_thread_ = std::thread([this] { sim_loop(); });
  io_thread_ = std::thread([this] { impl_->io.run(); });
}

void Server::post(std::function<void(Engine&)> fn) {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    commands_.push_back(std::move(fn));
  }
  wake_.notify_one();
}

void Server::request_stop() {
  {
    std::lock_guard lock(mutex_);
    stop_requested_ = true;
  }
  stop_cv_.notify_all();
}

void Server::wait() {
  std::unique_lock lock(mutex_);
  stop_cv_.wait(lock, [this] { return stop_requested_; });
}

void Server::stop() {
  {
    std::lock_guard lock(mutex_);
    if (stopping_) return;
    stopping_ = true;
    stop_requested_ = true;
  }
  wake_.notify_all();
  stop_cv_.notify_all();
  if (io_thread_.joinable()) {
    asio::post(impl_->io, [this] {
      error_code ignored;
      impl_->acceptor.close(ignored);
    });
    impl_->io.stop();
    io_thread_.join();
  }
  if (sim_thread_.joinable()) sim_thread_.join();
}

void Server::sim_loop() {
  using clock = std::chrono::steady_clock;
  clock::time_point deadline{};  // wall slot of the next realtime step
  bool paced = false;
  std::unique_lock lock(mutex_);
  while (!stopping_) {
    const bool pacing = engine_->realtime() && engine_->stepping();
    if (!pacing) {
      paced = false;
      wake_.wait(lock, [this] { return stopping_ || !commands_.empty(); });
    } else {
      if (!paced) deadline = clock::now();
      paced = true;
      wake_.wait_until(lock, deadline, [this] { return stopping_ || !commands_.empty(); });
    }
    if (stopping_) break;

    std::deque<std::function<void(Engine&)>> batch;
    batch.swap(commands_);
    lock.unlock();
    for (auto& fn : batch) fn(*engine_);
    if (paced && engine_->realtime() && engine_->stepping()) {
      const auto now = clock::now();
      if (now >= deadline) {
        // Late steps are taken back to back: simulated time lags, nothing is skipped.
        engine_->realtime_step(std::chrono::duration<double>(now - deadline).count());
        deadline += std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / engine_->rate_hz()));
      }
    }
    lock.lock();
  }
}

}  // namespace precrash::server
