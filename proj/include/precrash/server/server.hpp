#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "precrash/server/engine.hpp"

namespace precrash::server {

struct ServerOptions {
  std::string bind_address = "127.0.0.1";
  std::uint16_t port = kDefaultPort;  // 0 picks an ephemeral port
  EngineOptions engine;
};

/// TCP listener for length-prefixed frames and WebSocket upgrades on `/ws`,
/// both feeding one simulation thread that owns the Engine.
///
/// Threads: one network thread runs every socket; the simulation thread
/// consumes an ordered command queue and paces realtime steps. They share
/// only that queue and the per-session outboxes.
class Server {
 public:
  explicit Server(ServerOptions options);
  ~Server();

  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Engine access before start() (preloading a run, installing callbacks).
  Engine& engine() { return *engine_; }

  /// Binds and launches both threads; throws when the port is unavailable.
  void start();
  std::uint16_t port() const { return port_; }

  /// Runs `fn` on the simulation thread after everything queued before it.
  void post(std::function<void(Engine&)> fn);

  /// Thread-safe; wakes wait().
  void request_stop();
  /// Blocks until request_stop().
  void wait();
  /// Closes the listener and all sessions and joins the threads.
  void stop();

  struct Impl;

 private:
  void sim_loop();

  ServerOptions options_;
  std::unique_ptr<Engine> engine_;
  std::unique_ptr<Impl> impl_;
  std::uint16_t port_ = 0;

  std::mutex mutex_;
  std::condition_variable wake_;
  std::deque<std::function<void(Engine&)>> commands_;
  bool stopping_ = false;
  bool stop_requested_ = false;
  std::condition_variable stop_cv_;
  std::thread sim_thread_;
  std::thread io_thread_;
};

}  // namespace precrash::server
