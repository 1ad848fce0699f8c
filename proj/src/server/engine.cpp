#include "precrash/server/engine.hpp"

#include <cmath>
#include <stdexcept>

#include "precrash/road_network.hpp"

namespace precrash::server {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr std::int64_t kMaxStepsPerRequest = 1'000'000;
constexpr double kMaxRateHz = 1000.0;

struct Reject {
  ErrorCode code;
  std::string detail;
};

[[noreturn]] void reject(ErrorCode code, std::string detail) { throw Reject{code, std::move(detail)}; }

double number_field(const json& payload, const char* key, double fallback) {
  if (!payload.contains(key)) return fallback;
  const json& v = payload.at(key);
  if (!v.is_number()) reject(ErrorCode::BadJson, std::string("'") + key + "' must be a number");
  return v.get<double>();
}

int major_version(const json& v) {
  if (v.is_number_integer()) return v.get<int>();
  if (!v.is_string()) reject(ErrorCode::BadJson, "'version' must be a string");
  const std::string text = v.get<std::string>();
  std::size_t used = 0;
  int major = -1;
  try {
    major = std::stoi(text, &used);
  } catch (const std::exception&) {
    reject(ErrorCode::BadJson, "unparseable version");
  }
  if (used < text.size() && text[used] != '.') reject(ErrorCode::BadJson, "unparseable version");
  return major;
}

char signal_char(net::SignalColor c) {
  switch (c) {
    case net::SignalColor::Green: return 'G';
    case net::SignalColor::Yellow: return 'y';
    case net::SignalColor::Red: return 'r';
  }
  return 'r';
}

ordered_json record(const datalog::FcdFrame& f) {
  ordered_json j = datalog::to_json(f);
  j.erase("rec");
  return j;
}

ordered_json event_payload(const datalog::LogEvent& e) {
  ordered_json j;
  j["event"] = e.type;
  j["t"] = e.t;
  j["step_index"] = e.step_index;
  j["detail"] = e.detail;
  return j;
}

bool pushed_event(const std::string& type) {
  return type == "trigger_fired" || type == "collision" || type == "scenario_end";
}

}  // namespace

struct Engine::ActiveRun {
  std::unique_ptr<scenario::ScenarioRun> run;
  datalog::RunLog log;
  std::unique_ptr<datalog::LogWriter> writer;
  traffic::Controls controls;  // held until replaced
  bool finished = false;
};

Engine::Engine(EngineOptions options) : options_(std::move(options)) {
  catalog_ = scenario::load_scenario_dir(options_.scenario_dir);
}

Engine::~Engine() {
  if (run_ && run_->writer) {
    try {
      run_->writer->close();
    } catch (const std::exception&) {
    }
  }
}

void Engine::connect(SessionId id, std::shared_ptr<Outbox> outbox, std::function<void()> wake) {
  Session s;
  s.outbox = std::move(outbox);
  s.wake = std::move(wake);
  sessions_[id] = std::move(s);
}

void Engine::disconnect(SessionId id) {
  sessions_.erase(id);
  if (controller_ == id) controller_.reset();
}

void Engine::send(Session& s, std::string body) {
  if (s.outbox->push(std::move(body)) && s.wake) s.wake();
}

void Engine::reply_error(Session& s, std::int64_t id, ErrorCode code, std::string_view detail) {
  send(s, error_message(id, code, detail));
}

void Engine::protocol_error(SessionId id, ErrorCode code, std::string_view detail, bool close) {
  auto it = sessions_.find(id);
  if (it == sessions_.end()) return;
  reply_error(it->second, 0, code, detail);
  if (close && it->second.outbox->close_after_drain() && it->second.wake) it->second.wake();
}

bool Engine::stepping() const { return run_ && !run_->run->ended(); }

void Engine::load(const std::string& scenario_id, std::uint64_t seed,
                  const std::optional<std::filesystem::path>& log_path) {
  for (const scenario::ScenarioSpec& spec : catalog_) {
    if (spec.id == scenario_id) return load(spec, seed, log_path);
  }
  throw std::invalid_argument("unknown scenario '" + scenario_id + "'");
}

void Engine::load(scenario::ScenarioSpec spec, std::uint64_t seed,
                  const std::optional<std::filesystem::path>& log_path) {
  auto& network = networks_[spec.network_path];
  if (!network) network = scenario::load_network_for(spec);
  auto next = std::make_unique<ActiveRun>();
  next->run = std::make_unique<scenario::ScenarioRun>(std::move(spec), network, seed);
  next->log.header = next->run->header("server");

  std::optional<std::filesystem::path> path = log_path;
  if (!path && options_.log_dir) {
    path = *options_.log_dir / (next->run->spec().id + "_seed" + std::to_string(seed) + "_" +
                                std::to_string(runs_started_ + 1) + ".run.jsonl");
  }
  if (path) {
    next->writer = std::make_unique<datalog::LogWriter>(*path);
    next->writer->header(next->log.header);
  }
  if (run_ && run_->writer) run_->writer->close();
  run_ = std::move(next);
  ++runs_started_;
}

void Engine::set_realtime(double rate_hz) {
  realtime_ = true;
  rate_hz_ = rate_hz;
}

void Engine::step_once() {
  ActiveRun& r = *run_;
  auto out = r.run->step(r.controls);
  if (r.writer) {
    for (const auto& f : out.frames) r.writer->frame(f);
    for (const auto& e : out.events) r.writer->event(e);
  }

  bool any_fcd = false;
  for (const auto& [sid, s] : sessions_) any_fcd = any_fcd || (s.greeted && s.fcd);
  if (any_fcd) {
    ordered_json payload;
    payload["t"] = r.run->world().time();
    payload["step_index"] = r.run->world().step_index();
    ordered_json records = ordered_json::array();
    for (const auto& f : out.frames) records.push_back(record(f));
    payload["records"] = std::move(records);
    const std::string rest = payload.dump(-1, ' ', false, json::error_handler_t::replace);
    const std::string body = std::string(kFcdPrefix) + rest.substr(1) + "}";
    for (auto& [sid, s] : sessions_) {
      if (s.greeted && s.fcd && s.outbox->push_fcd(body) && s.wake) s.wake();
    }
  }
  for (const auto& e : out.events) {
    if (!pushed_event(e.type)) continue;
    const std::string body = envelope(0, "event", event_payload(e));
    for (auto& [sid, s] : sessions_) {
      if (s.greeted && s.events) send(s, body);
    }
  }

  r.log.frames.insert(r.log.frames.end(), std::make_move_iterator(out.frames.begin()),
                      std::make_move_iterator(out.frames.end()));
  r.log.events.insert(r.log.events.end(), std::make_move_iterator(out.events.begin()),
                      std::make_move_iterator(out.events.end()));
  if (r.run->ended() && !r.finished) finish_run();
}

void Engine::finish_run() {
  ActiveRun& r = *run_;
  r.finished = true;
  if (r.writer) r.writer->close();
  if (on_run_end) on_run_end(scenario::compute_outcome(r.log), r.log);
}

void Engine::realtime_step(double lag_s) {
  if (!stepping()) return;
  step_once();
  const auto period = std::max<std::int64_t>(1, std::llround(rate_hz_));
  if (run_->run->world().step_index() % period == 0) {
    ordered_json p;
    p["t"] = run_->run->world().time();
    p["step_index"] = run_->run->world().step_index();
    p["rate_hz"] = rate_hz_;
    p["lag_s"] = std::max(0.0, lag_s);
    const std::string body = envelope(0, "clock", p);
    for (auto& [sid, s] : sessions_) {
      if (s.greeted) send(s, body);
    }
  }
}

ordered_json Engine::on_hello(SessionId sid, Session& s, const json& payload) {
  if (s.greeted) reject(ErrorCode::BadMode, "hello already completed");
  if (!payload.contains("version")) reject(ErrorCode::BadJson, "missing 'version'");
  if (major_version(payload.at("version")) != 1) {
    reject(ErrorCode::VersionMismatch, "server speaks protocol " + std::string(kProtocolVersion));
  }
  std::string wanted = "controller";
  if (payload.contains("role")) {
    if (!payload.at("role").is_string()) reject(ErrorCode::BadJson, "'role' must be a string");
    wanted = payload.at("role").get<std::string>();
    if (wanted != "controller" && wanted != "observer") reject(ErrorCode::BadJson, "role is controller or observer");
  }
  ordered_json out;
  out["version"] = kProtocolVersion;
  s.greeted = true;
  if (wanted == "controller" && !controller_) {
    controller_ = sid;
    s.role = Role::Controller;
    out["role"] = "controller";
    if (options_.realtime_on_controller && !realtime_) set_realtime(*options_.realtime_on_controller);
  } else {
    s.role = Role::Observer;
    out["role"] = "observer";
    if (wanted == "controller") out["detail"] = "controller role already taken";
  }
  out["session"] = sid;
  return out;
}

ordered_json Engine::state_payload() const {
  const traffic::World& world = run_->run->world();
  ordered_json j;
  j["scenario_id"] = run_->run->spec().id;
  j["seed"] = run_->run->seed();
  j["t"] = world.time();
  j["step_index"] = world.step_index();
  j["ended"] = run_->run->ended();
  j["end_reason"] = run_->run->ended() ? ordered_json(run_->run->end_reason()) : ordered_json(nullptr);
  j["mode"] = realtime_ ? "realtime" : "stepped";
  j["rate_hz"] = rate_hz_;
  j["controls"] = {{"throttle", run_->controls.throttle},
                   {"brake", run_->controls.brake},
                   {"steer", run_->controls.steer},
                   {"gear", traffic::to_string(run_->controls.gear)}};
  j["weather"] = {{"friction", world.weather().friction}, {"visibility", world.weather().visibility}};
  ordered_json vehicles = ordered_json::array();
  for (const auto& f : datalog::make_frames(world)) vehicles.push_back(record(f));
  j["vehicles"] = std::move(vehicles);
  ordered_json signals = ordered_json::array();
  for (const net::SignalProgram& p : world.network().signals()) {
    std::string states;
    for (std::size_t link = 0; link < p.link_count(); ++link) states += signal_char(net::signal_state(p, link, world.time()));
    signals.push_back({{"id", p.id}, {"states", states}});
  }
  j["signals"] = std::move(signals);
  return j;
}

void Engine::handle(SessionId sid, std::string_view body) {
  auto it = sessions_.find(sid);
  if (it == sessions_.end()) return;
  Session& s = it->second;

  json msg;
  try {
    msg = json::parse(body);
  } catch (const json::exception&) {
    return reply_error(s, 0, ErrorCode::BadJson, "body is not valid JSON");
  }
  if (!msg.is_object()) return reply_error(s, 0, ErrorCode::BadJson, "body must be a JSON object");
  std::int64_t id = 0;
  if (!msg.contains("id") || !msg.at("id").is_number_integer()) {
    return reply_error(s, 0, ErrorCode::BadJson, "'id' must be an integer");
  }
  id = msg.at("id").get<std::int64_t>();
  if (!msg.contains("type") || !msg.at("type").is_string()) {
    return reply_error(s, id, ErrorCode::BadJson, "'type' must be a string");
  }
  const std::string type = msg.at("type").get<std::string>();
  const json payload = msg.contains("payload") ? msg.at("payload") : json::object();
  if (!payload.is_object()) return reply_error(s, id, ErrorCode::BadJson, "'payload' must be an object");

  try {
    const auto need_greeting = [&] {
      if (!s.greeted) reject(ErrorCode::BadMode, "send hello first");
    };
    const auto need_controller = [&] {
      need_greeting();
      if (s.role != Role::Controller) reject(ErrorCode::NotController, "observer sessions cannot send " + type);
    };
    const auto need_run = [&] {
      if (!run_) reject(ErrorCode::NotLoaded, "no scenario loaded");
    };

    if (type == "hello") {
      return send(s, envelope(id, "hello", on_hello(sid, s, payload)));
    }
    if (type == "list_scenarios") {
      need_greeting();
      ordered_json list = ordered_json::array();
      for (const auto& spec : catalog_) {
        list.push_back({{"id", spec.id},
                        {"title", spec.title},
                        {"duration_s", spec.duration_s},
                        {"practice", spec.is_practice()}});
      }
      return send(s, envelope(id, "scenarios", {{"scenarios", std::move(list)}}));
    }
    if (type == "randomize_order") {
      need_greeting();
      if (!payload.contains("seed") || !payload.at("seed").is_number_unsigned()) {
        reject(ErrorCode::BadJson, "'seed' must be a non-negative integer");
      }
      std::vector<std::string> ids;
      for (const auto& spec : catalog_) {
        if (!spec.is_practice()) ids.push_back(spec.id);
      }
      std::vector<std::string> order;
      try {
        order = scenario::randomize_order(payload.at("seed").get<std::uint64_t>(), ids);
      } catch (const std::exception& e) {
        reject(ErrorCode::NotLoaded, e.what());
      }
      return send(s, envelope(id, "order", {{"seed", payload.at("seed")}, {"order", order}}));
    }
    if (type == "subscribe") {
      need_greeting();
      if (!payload.contains("channels") || !payload.at("channels").is_array()) {
        reject(ErrorCode::BadJson, "'channels' must be an array");
      }
      bool fcd = false, events = false;
      for (const json& c : payload.at("channels")) {
        if (c == "fcd") {
          fcd = true;
        } else if (c == "events") {
          events = true;
        } else {
          reject(ErrorCode::BadJson, "channels are fcd and events");
        }
      }
      s.fcd = fcd;
      s.events = events;
      ordered_json channels = ordered_json::array();
      if (fcd) channels.push_back("fcd");
      if (events) channels.push_back("events");
      return send(s, envelope(id, "ok", {{"channels", std::move(channels)}}));
    }
    if (type == "get_state") {
      need_greeting();
      need_run();
      return send(s, envelope(id, "state", state_payload()));
    }
    if (type == "load_scenario") {
      need_controller();
      if (!payload.contains("id") || !payload.at("id").is_string()) reject(ErrorCode::BadJson, "'id' must be a string");
      std::uint64_t seed = 0;
      if (payload.contains("seed")) {
        if (!payload.at("seed").is_number_unsigned()) reject(ErrorCode::BadJson, "'seed' must be a non-negative integer");
        seed = payload.at("seed").get<std::uint64_t>();
      }
      const std::string scenario_id = payload.at("id").get<std::string>();
      bool known = false;
      for (const auto& spec : catalog_) known = known || spec.id == scenario_id;
      if (!known) reject(ErrorCode::BadJson, "unknown scenario '" + scenario_id + "'");
      load(scenario_id, seed);
      ordered_json out;
      out["scenario_id"] = scenario_id;
      out["seed"] = seed;
      out["t"] = 0.0;
      out["step_index"] = 0;
      out["duration_s"] = run_->run->spec().duration_s;
      return send(s, envelope(id, "ok", out));
    }
    if (type == "set_mode") {
      need_controller();
      if (!payload.contains("mode") || !payload.at("mode").is_string()) reject(ErrorCode::BadJson, "'mode' must be a string");
      const std::string mode = payload.at("mode").get<std::string>();
      if (mode == "stepped") {
        realtime_ = false;
      } else if (mode == "realtime") {
        const double rate = number_field(payload, "rate_hz", 50.0);
        if (!(rate > 0.0 && rate <= kMaxRateHz)) reject(ErrorCode::BadJson, "rate_hz must be in (0, 1000]");
        set_realtime(rate);
      } else {
        reject(ErrorCode::BadJson, "mode is stepped or realtime");
      }
      return send(s, envelope(id, "ok", {{"mode", mode}, {"rate_hz", rate_hz_}}));
    }
    if (type == "step") {
      need_controller();
      need_run();
      if (realtime_) reject(ErrorCode::BadMode, "step is only valid in stepped mode");
      if (!payload.contains("n") || !payload.at("n").is_number_integer()) reject(ErrorCode::BadJson, "'n' must be an integer");
      const std::int64_t n = payload.at("n").get<std::int64_t>();
      if (n < 0 || n > kMaxStepsPerRequest) reject(ErrorCode::BadJson, "'n' must be in [0, 1000000]");
      if (n > 0 && run_->run->ended()) reject(ErrorCode::BadMode, "the run has ended");
      for (std::int64_t k = 0; k < n && !run_->run->ended(); ++k) step_once();
      const traffic::World& w = run_->run->world();
      return send(s, envelope(id, "ok", {{"t", w.time()}, {"step_index", w.step_index()}, {"ended", run_->run->ended()}}));
    }
    if (type == "set_control") {
      need_controller();
      need_run();
      const traffic::Controls& prev = run_->controls;
      traffic::Gear gear = prev.gear;
      if (payload.contains("gear")) {
        const json& g = payload.at("gear");
        const auto parsed = g.is_string() ? traffic::gear_from(g.get<std::string>()) : std::nullopt;
        if (!parsed) reject(ErrorCode::BadJson, "gear is D or R");
        gear = *parsed;
      }
      run_->controls = traffic::Controls::clamped(number_field(payload, "throttle", prev.throttle),
                                                  number_field(payload, "brake", prev.brake),
                                                  number_field(payload, "steer", prev.steer), gear);
      return send(s, envelope(id, "ok", ordered_json::object()));
    }
    if (type == "end_run") {
      need_controller();
      need_run();
      ordered_json out;
      out["scenario_id"] = run_->run->spec().id;
      out["step_index"] = run_->run->world().step_index();
      out["ended"] = run_->run->ended();
      try {
        out["outcome"] = scenario::compute_outcome(run_->log).to_json();
      } catch (const std::exception&) {
        out["outcome"] = nullptr;
      }
      if (run_->writer && !run_->finished) run_->writer->close();
      run_.reset();
      return send(s, envelope(id, "ok", out));
    }
    reject(ErrorCode::UnknownType, "unknown type '" + type + "'");
  } catch (const Reject& r) {
    reply_error(s, id, r.code, r.detail);
  } catch (const std::exception& e) {
    reply_error(s, id, ErrorCode::BadJson, e.what());
  }
}

}  // namespace precrash::server
