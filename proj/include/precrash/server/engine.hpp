#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "precrash/data_log/writer.hpp"
#include "precrash/scenario/run.hpp"
#include "precrash/server/protocol.hpp"

namespace precrash::server {

using SessionId = std::uint64_t;

enum class Role { Controller, Observer };

struct EngineOptions {
  std::filesystem::path scenario_dir;
  std::optional<std::filesystem::path> log_dir;  // one .run.jsonl per loaded run
  /// Switches to realtime at this rate when a controller joins (hosted runs).
  std::optional<double> realtime_on_controller;
};

/// The authoritative simulation and the protocol state machine. Not
/// thread-safe: the server calls it from its simulation thread only.
class Engine {
 public:
  explicit Engine(EngineOptions options);
  ~Engine();

  /// `wake` is invoked when the session's outbox leaves the idle state.
  void connect(SessionId id, std::shared_ptr<Outbox> outbox, std::function<void()> wake);
  /// Releases the controller role if held; the run keeps its state.
  void disconnect(SessionId id);

  /// One request body; exactly one reply is queued to the session.
  void handle(SessionId id, std::string_view body);
  /// Transport-level failure: queues an error and, when `close`, ends the
  /// session once it is delivered.
  void protocol_error(SessionId id, ErrorCode code, std::string_view detail, bool close);

  /// Loads a catalog scenario directly (used by a hosted run). Throws on
  /// unknown ids and invalid specs.
  void load(const std::string& scenario_id, std::uint64_t seed,
            const std::optional<std::filesystem::path>& log_path = std::nullopt);
  void load(scenario::ScenarioSpec spec, std::uint64_t seed,
            const std::optional<std::filesystem::path>& log_path = std::nullopt);
  void set_realtime(double rate_hz);

  bool realtime() const { return realtime_; }
  double rate_hz() const { return rate_hz_; }
  /// A run is loaded and has not ended.
  bool stepping() const;
  /// One realtime step; `lag_s` is how far the step is behind its wall-clock slot.
  void realtime_step(double lag_s);

  std::optional<SessionId> controller() const { return controller_; }
  const std::vector<scenario::ScenarioSpec>& catalog() const { return catalog_; }
  /// Called once per run when its scenario_end is produced.
  std::function<void(const scenario::RunOutcome&, const datalog::RunLog&)> on_run_end;

 private:
  struct Session {
    std::shared_ptr<Outbox> outbox;
    std::function<void()> wake;
    bool greeted = false;
    Role role = Role::Observer;
    bool fcd = false;
    bool events = false;
  };
  struct ActiveRun;

  void send(Session& s, std::string body);
  void reply_error(Session& s, std::int64_t id, ErrorCode code, std::string_view detail);
  void step_once();
  void finish_run();

  nlohmann::ordered_json on_hello(SessionId sid, Session& s, const nlohmann::json& payload);
  nlohmann::ordered_json state_payload() const;

  EngineOptions options_;
  std::vector<scenario::ScenarioSpec> catalog_;
  std::map<std::filesystem::path, std::shared_ptr<const net::RoadNetwork>> networks_;
  std::map<SessionId, Session> sessions_;
  std::optional<SessionId> controller_;
  std::unique_ptr<ActiveRun> run_;
  std::uint64_t runs_started_ = 0;
  bool realtime_ = false;
  double rate_hz_ = 50.0;
};

}  // namespace precrash::server
