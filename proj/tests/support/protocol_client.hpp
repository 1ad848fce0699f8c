#pragma once

// Blocking protocol clients for tests: length-prefixed TCP and WebSocket.

#include <sys/socket.h>
#include <sys/time.h>

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>
#include <json.hpp>

#include "precrash/server/protocol.hpp"

namespace precrash::testing {

namespace asio = boost::asio;
namespace beast = boost::beast;
using tcp = asio::ip::tcp;

inline void set_receive_timeout(tcp::socket& socket, std::chrono::milliseconds timeout) {
  timeval tv{};
  tv.tv_sec = static_cast<long>(timeout.count() / 1000);
  tv.tv_usec = static_cast<long>((timeout.count() % 1000) * 1000);
  ::setsockopt(socket.native_handle(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
}

class ProtocolClient {
 public:
  virtual ~ProtocolClient() = default;
  virtual void send_body(const std::string& body) = 0;
  /// Next message body; nullopt on timeout or closed connection.
  virtual std::optional<std::string> receive() = 0;

  /// Sends {id, type, payload}.
  void request(std::int64_t id, const std::string& type, const nlohmann::json& payload = nlohmann::json::object()) {
    nlohmann::ordered_json j;
    j["id"] = id;
    j["type"] = type;
    j["payload"] = payload;
    send_body(j.dump());
  }

  /// Every message up to and including the reply carrying `id`.
  std::vector<std::string> until_reply(std::int64_t id) {
    std::vector<std::string> out;
    for (;;) {
      auto body = receive();
      if (!body) throw std::runtime_error("no reply for id " + std::to_string(id));
      out.push_back(*body);
      const auto j = nlohmann::json::parse(*body);
      if (j.at("id") == id && id != 0) return out;
    }
  }

  /// The reply to a request, skipping pushes.
  nlohmann::json call(std::int64_t id, const std::string& type, const nlohmann::json& payload = nlohmann::json::object()) {
    request(id, type, payload);
    return nlohmann::json::parse(until_reply(id).back());
  }
};

class TcpClient : public ProtocolClient {
 public:
  explicit TcpClient(std::uint16_t port, std::chrono::milliseconds timeout = std::chrono::seconds(20)) : socket_(io_) {
    socket_.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    socket_.set_option(tcp::no_delay(true));
    set_receive_timeout(socket_, timeout);
  }

  void send_raw(const std::string& bytes) { asio::write(socket_, asio::buffer(bytes)); }
  void send_body(const std::string& body) override { send_raw(server::encode_frame(body)); }

  std::optional<std::string> receive() override {
    boost::system::error_code ec;
    unsigned char head[4];
    asio::read(socket_, asio::buffer(head), ec);
    if (ec) return std::nullopt;
    const std::uint32_t n = (std::uint32_t{head[0]} << 24) | (std::uint32_t{head[1]} << 16) |
                            (std::uint32_t{head[2]} << 8) | std::uint32_t{head[3]};
    std::string body(n, '\0');
    asio::read(socket_, asio::buffer(body), ec);
    if (ec) return std::nullopt;
    return body;
  }

  tcp::socket& socket() { return socket_; }

 private:
  asio::io_context io_;
  tcp::socket socket_;
};

class WsClient : public ProtocolClient {
 public:
  explicit WsClient(std::uint16_t port, const std::string& path = "/ws",
                    std::chrono::milliseconds timeout = std::chrono::seconds(20))
      : ws_(io_) {
    auto& socket = beast::get_lowest_layer(ws_);
    socket.connect(tcp::endpoint(asio::ip::make_address("127.0.0.1"), port));
    set_receive_timeout(socket, timeout);
    ws_.handshake("127.0.0.1:" + std::to_string(port), path);
    ws_.text(true);
  }

  void send_body(const std::string& body) override { ws_.write(asio::buffer(body)); }

  std::optional<std::string> receive() override {
    beast::flat_buffer buffer;
    boost::system::error_code ec;
    ws_.read(buffer, ec);
    if (ec) return std::nullopt;
    return beast::buffers_to_string(buffer.data());
  }

 private:
  asio::io_context io_;
  beast::websocket::stream<tcp::socket> ws_;
};

}  // namespace precrash::testing
