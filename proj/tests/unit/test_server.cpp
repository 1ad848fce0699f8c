#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <thread>

#include "precrash/data_log/replay.hpp"
#include "precrash/server/engine.hpp"
#include "precrash/server/server.hpp"
#include "protocol_client.hpp"
#include "transcript.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace precrash;
using namespace precrash::server;

namespace {

const fs::path kData = PRECRASH_DATA_DIR;

EngineOptions engine_options() {
  EngineOptions o;
  o.scenario_dir = kData / "scenarios";
  return o;
}

// Engine driven in-process; every session's outbox is drained by the test.
struct Harness {
  Engine engine{engine_options()};
  std::map<SessionId, std::shared_ptr<Outbox>> boxes;

  void open(SessionId id) {
    boxes[id] = std::make_shared<Outbox>();
    engine.connect(id, boxes[id], {});
  }
  std::vector<json> drain(SessionId id) {
    std::vector<json> out;
    while (auto body = boxes[id]->pop()) out.push_back(json::parse(*body));
    return out;
  }
  std::vector<json> send(SessionId id, std::int64_t rid, const std::string& type, const json& payload = json::object()) {
    engine.handle(id, json{{"id", rid}, {"type", type}, {"payload", payload}}.dump());
    return drain(id);
  }
  json call(SessionId id, std::int64_t rid, const std::string& type, const json& payload = json::object()) {
    auto all = send(id, rid, type, payload);
    REQUIRE_FALSE(all.empty());
    CHECK(all.back()["id"] == rid);
    return all.back();
  }
  void greet(SessionId id, const std::string& role = "controller") {
    open(id);
    const json r = call(id, 1, "hello", {{"version", "1.0"}, {"role", role}});
    REQUIRE(r["type"] == "hello");
  }
};

std::string code_of(const json& reply) {
  if (reply["type"] != "error") return "";
  return reply["payload"]["code"].get<std::string>();
}

std::unique_ptr<Server> start_server(EngineOptions options = engine_options()) {
  ServerOptions so;
  so.port = 0;
  so.engine = std::move(options);
  auto server = std::make_unique<Server>(so);
  server->start();
  return server;
}

}  // namespace

TEST_CASE("frames round-trip and split at any byte") {
  std::mt19937_64 gen(1);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> bodies;
    std::string stream;
    const int count = 1 + static_cast<int>(gen() % 5);
    for (int k = 0; k < count; ++k) {
      std::string body(gen() % 300, '\0');
      for (char& c : body) c = static_cast<char>(gen() & 0xff);
      bodies.push_back(body);
      stream += encode_frame(body);
    }
    FrameDecoder decoder;
    std::vector<std::string> got;
    std::size_t pos = 0;
    while (pos < stream.size()) {
      const std::size_t n = std::min<std::size_t>(1 + gen() % 97, stream.size() - pos);
      decoder.feed(std::string_view(stream).substr(pos, n));
      pos += n;
      std::string body;
      while (decoder.next(body) == FrameDecoder::Status::Frame) got.push_back(body);
    }
    CHECK(got == bodies);
  }
  CHECK(encode_frame("{}") == std::string("\0\0\0\2{}", 6));

  FrameDecoder big;
  big.feed(std::string("\x00\x10\x00\x01", 4));
  std::string body;
  CHECK(big.next(body) == FrameDecoder::Status::Oversize);
  big.feed(encode_frame("{}"));
  CHECK(big.next(body) == FrameDecoder::Status::Oversize);

  FrameDecoder limit;
  limit.feed(encode_frame(std::string(kMaxFrameBytes, ' ')));
  CHECK(limit.next(body) == FrameDecoder::Status::Frame);
  CHECK(body.size() == kMaxFrameBytes);
}

TEST_CASE("outbox keeps replies and bounds fcd frames") {
  Outbox box(256);
  const auto fcd = [](int k) { return std::string(kFcdPrefix) + "\"k\":" + std::to_string(k) + "}}"; };
  CHECK(box.push("reply-1"));
  CHECK_FALSE(box.push("reply-2"));
  for (int k = 0; k < 1000; ++k) box.push_fcd(fcd(k));
  CHECK(box.size() == 2 + 256);
  CHECK(box.dropped_total() == 744);
  CHECK(*box.pop() == "reply-1");
  CHECK(*box.pop() == "reply-2");
  const json first = json::parse(*box.pop());
  CHECK(first["payload"]["dropped"] == 744);
  CHECK(first["payload"]["k"] == 744);
  const json second = json::parse(*box.pop());
  CHECK(second["payload"]["dropped"] == 0);
  for (int k = 0; k < 254; ++k) box.pop();
  CHECK_FALSE(box.pop().has_value());
  CHECK(box.push("wake"));
}

TEST_CASE("greeting, versions and roles") {
  Harness h;
  h.open(1);
  CHECK(code_of(h.call(1, 1, "list_scenarios")) == "BAD_MODE");
  CHECK(code_of(h.call(1, 2, "hello", {{"version", "2.0"}})) == "VERSION_MISMATCH");
  CHECK(code_of(h.call(1, 3, "hello", {{"version", "one"}})) == "BAD_JSON");
  const json hello = h.call(1, 4, "hello", {{"version", "1.3"}, {"role", "controller"}});
  CHECK(hello["type"] == "hello");
  CHECK(hello["payload"]["role"] == "controller");
  CHECK(code_of(h.call(1, 5, "hello", {{"version", "1.0"}})) == "BAD_MODE");

  h.open(2);
  const json second = h.call(2, 1, "hello", {{"version", "1.0"}, {"role", "controller"}});
  CHECK(second["payload"]["role"] == "observer");
  CHECK(second["payload"].contains("detail"));
  CHECK(code_of(h.call(2, 2, "set_control", {{"throttle", 1}})) == "NOT_CONTROLLER");
  CHECK(code_of(h.call(2, 3, "step", {{"n", 1}})) == "NOT_CONTROLLER");
  CHECK(code_of(h.call(2, 4, "load_scenario", {{"id", "practice"}})) == "NOT_CONTROLLER");
  CHECK(h.call(2, 5, "list_scenarios")["payload"]["scenarios"].size() == 9);

  h.engine.disconnect(1);
  h.open(3);
  CHECK(h.call(3, 1, "hello", {{"version", 1}})["payload"]["role"] == "controller");
}

TEST_CASE("malformed requests") {
  Harness h;
  h.greet(1);
  h.engine.handle(1, "not json");
  auto r = h.drain(1);
  REQUIRE(r.size() == 1);
  CHECK(r[0]["id"] == 0);
  CHECK(code_of(r[0]) == "BAD_JSON");
  h.engine.handle(1, "[1,2]");
  CHECK(code_of(h.drain(1).at(0)) == "BAD_JSON");
  h.engine.handle(1, R"({"id":"x","type":"step"})");
  CHECK(code_of(h.drain(1).at(0)) == "BAD_JSON");
  h.engine.handle(1, R"({"id":4,"type":"step","payload":[]})");
  CHECK(h.drain(1).at(0)["id"] == 4);
  CHECK(code_of(h.call(1, 5, "teleport")) == "UNKNOWN_TYPE");
  CHECK(code_of(h.call(1, 6, "step", {{"n", 1}})) == "NOT_LOADED");
  CHECK(code_of(h.call(1, 7, "get_state")) == "NOT_LOADED");
  CHECK(code_of(h.call(1, 8, "load_scenario", {{"id", "nowhere"}})) == "BAD_JSON");
  CHECK(code_of(h.call(1, 9, "load_scenario", {{"id", "practice"}, {"seed", -1}})) == "BAD_JSON");
  CHECK(h.call(1, 10, "load_scenario", {{"id", "practice"}, {"seed", 1}})["type"] == "ok");
  CHECK(code_of(h.call(1, 11, "step", {{"n", -1}})) == "BAD_JSON");
  CHECK(code_of(h.call(1, 12, "step", {{"n", 1.5}})) == "BAD_JSON");
  CHECK(code_of(h.call(1, 13, "set_control", {{"gear", "N"}})) == "BAD_JSON");
  CHECK(code_of(h.call(1, 14, "subscribe", {{"channels", {"video"}}})) == "BAD_JSON");
  CHECK(code_of(h.call(1, 15, "set_mode", {{"mode", "realtime"}, {"rate_hz", 0}})) == "BAD_JSON");
  CHECK(h.call(1, 16, "set_mode", {{"mode", "realtime"}, {"rate_hz", 20}})["payload"]["rate_hz"] == 20.0);
  CHECK(code_of(h.call(1, 17, "step", {{"n", 1}})) == "BAD_MODE");
}

TEST_CASE("step then get_state shows exactly n steps") {
  Harness h;
  h.greet(1);
  for (const std::int64_t n : {0, 1, 50, 1000}) {
    CAPTURE(n);
    REQUIRE(h.call(1, 2, "load_scenario", {{"id", "practice"}, {"seed", 5}})["type"] == "ok");
    const json ack = h.call(1, 3, "step", {{"n", n}});
    CHECK(ack["type"] == "ok");
    CHECK(ack["payload"]["step_index"] == n);
    CHECK(ack["payload"]["t"].get<double>() == static_cast<double>(n) * traffic::config::kDt);
    const json state = h.call(1, 4, "get_state");
    CHECK(state["payload"]["step_index"] == n);
    CHECK(state["payload"]["t"].get<double>() == static_cast<double>(n) * traffic::config::kDt);
  }
  CHECK(h.call(1, 5, "step", {{"n", 50}})["payload"]["t"].get<double>() == doctest::Approx(21.0).epsilon(1e-12));
  const json state = h.call(1, 6, "get_state");
  CHECK(state["payload"]["step_index"] == 1050);
  CHECK(state["payload"]["vehicles"].size() >= 1);
  CHECK(state["payload"]["mode"] == "stepped");
}

TEST_CASE("controls apply at the next step and are held") {
  Harness h;
  h.greet(1);
  h.call(1, 2, "load_scenario", {{"id", "practice"}, {"seed", 2}});
  h.call(1, 3, "subscribe", {{"channels", {"fcd"}}});
  CHECK(h.call(1, 4, "set_control", {{"throttle", 3.0}, {"steer", -0.2}})["type"] == "ok");
  const json state = h.call(1, 5, "get_state");
  CHECK(state["payload"]["controls"]["throttle"] == 1.0);
  CHECK(state["payload"]["step_index"] == 0);

  const auto ego_record = [](const std::vector<json>& msgs) {
    json last;
    for (const json& m : msgs) {
      if (m["type"] != "fcd_frame") continue;
      for (const json& r : m["payload"]["records"]) {
        if (r["vehicle_id"] == "ego") last = r;
      }
    }
    return last;
  };
  json ego = ego_record(h.send(1, 6, "step", {{"n", 1}}));
  CHECK(ego["throttle"] == 1.0);
  CHECK(ego["steer"] == -0.2);
  ego = ego_record(h.send(1, 7, "step", {{"n", 20}}));
  CHECK(ego["throttle"] == 1.0);
  CHECK(ego["steer"] == -0.2);
  h.call(1, 8, "set_control", {{"brake", 0.5}});
  ego = ego_record(h.send(1, 9, "step", {{"n", 1}}));
  CHECK(ego["throttle"] == 1.0);
  CHECK(ego["brake"] == 0.5);
}

TEST_CASE("fcd pushes: one per step, from the subscription point") {
  Harness h;
  h.greet(1);
  h.greet(2, "observer");
  h.call(1, 2, "load_scenario", {{"id", "practice"}, {"seed", 4}});
  h.call(1, 3, "step", {{"n", 5}});
  h.call(2, 2, "subscribe", {{"channels", {"fcd"}}});
  h.call(1, 4, "step", {{"n", 2}});
  const auto pushes = h.drain(2);
  REQUIRE(pushes.size() == 2);
  CHECK(pushes[0]["type"] == "fcd_frame");
  CHECK(pushes[0]["id"] == 0);
  CHECK(pushes[0]["payload"]["step_index"] == 6);
  CHECK(pushes[1]["payload"]["step_index"] == 7);
  CHECK(pushes[1]["payload"]["t"].get<double>() >= pushes[0]["payload"]["t"].get<double>());

  // The practice road starts empty of bots: the ego alone in the first frame.
  Harness lone;
  lone.greet(1);
  lone.call(1, 2, "load_scenario", {{"id", "practice"}, {"seed", 4}});
  lone.call(1, 3, "subscribe", {{"channels", {"fcd"}}});
  const auto first = lone.send(1, 4, "step", {{"n", 1}});
  REQUIRE(first.size() == 2);
  CHECK(first[0]["payload"]["records"].size() == 1);
  CHECK(first[0]["payload"]["records"][0]["vehicle_id"] == "ego");
}

TEST_CASE("a stalled consumer loses the oldest frames, counted in the next push") {
  Harness h;
  h.greet(1);
  h.greet(2, "observer");
  h.call(2, 2, "subscribe", {{"channels", {"fcd"}}});
  h.call(1, 2, "load_scenario", {{"id", "practice"}, {"seed", 1}});
  h.engine.handle(1, R"({"id":3,"type":"step","payload":{"n":1000}})");
  const auto pushes = h.drain(2);
  REQUIRE(pushes.size() == 256);
  CHECK(pushes[0]["payload"]["dropped"] == 744);
  CHECK(pushes[0]["payload"]["step_index"] == 745);
  CHECK(pushes[1]["payload"]["dropped"] == 0);
  CHECK(pushes.back()["payload"]["step_index"] == 1000);
  CHECK(h.drain(1).back()["payload"]["step_index"] == 1000);
}

TEST_CASE("events channel and run end") {
  Harness h;
  h.greet(1);
  h.call(1, 2, "load_scenario", {{"id", "sudden_stop"}, {"seed", 1}});
  h.call(1, 3, "subscribe", {{"channels", {"events"}}});
  std::optional<scenario::RunOutcome> ended;
  h.engine.on_run_end = [&](const scenario::RunOutcome& o, const datalog::RunLog&) { ended = o; };
  const auto msgs = h.send(1, 4, "step", {{"n", 100000}});
  std::vector<std::string> kinds;
  for (const json& m : msgs) {
    if (m["type"] == "event") kinds.push_back(m["payload"]["event"]);
  }
  REQUIRE(kinds.size() >= 3);
  CHECK(kinds.front() == "trigger_fired");
  CHECK(std::find(kinds.begin(), kinds.end(), "collision") != kinds.end());
  CHECK(kinds.back() == "scenario_end");
  CHECK(msgs.back()["payload"]["ended"] == true);
  REQUIRE(ended.has_value());
  CHECK(ended->ego_collided);
  CHECK(code_of(h.call(1, 5, "step", {{"n", 1}})) == "BAD_MODE");
  CHECK(h.call(1, 6, "step", {{"n", 0}})["type"] == "ok");
  const json end = h.call(1, 7, "end_run");
  CHECK(end["payload"]["outcome"]["ego_collided"] == true);
  CHECK(code_of(h.call(1, 8, "get_state")) == "NOT_LOADED");
}

TEST_CASE("server runs are logged and replay without divergence") {
  const fs::path dir = fs::temp_directory_path() / "precrash_server_logs";
  fs::remove_all(dir);
  fs::create_directories(dir);
  EngineOptions options = engine_options();
  options.log_dir = dir;
  {
    Engine engine(options);
    auto box = std::make_shared<Outbox>();
    engine.connect(1, box, {});
    engine.handle(1, R"({"id":1,"type":"hello","payload":{"version":"1.0"}})");
    engine.handle(1, R"({"id":2,"type":"load_scenario","payload":{"id":"jaywalker","seed":2}})");
    for (int k = 0; k < 40; ++k) {
      const double throttle = (k % 7) / 7.0;
      engine.handle(1, json{{"id", 10 + k}, {"type", "set_control"}, {"payload", {{"throttle", throttle}, {"steer", 0.01 * (k % 3)}}}}.dump());
      engine.handle(1, json{{"id", 100 + k}, {"type", "step"}, {"payload", {{"n", 7}}}}.dump());
    }
    engine.handle(1, R"({"id":999,"type":"end_run","payload":{}})");
  }
  std::vector<fs::path> logs(fs::directory_iterator(dir), fs::directory_iterator{});
  REQUIRE(logs.size() == 1);
  const auto result = datalog::replay(logs[0], true, kData);
  CHECK(result.steps == 280);
  CHECK(result.log.header.ego == "server");
  fs::remove_all(dir);
}

TEST_CASE("randomize_order matches the scenario engine") {
  Harness h;
  h.greet(1, "observer");
  const json r = h.call(1, 2, "randomize_order", {{"seed", 42}});
  std::vector<std::string> ids;
  for (const auto& s : h.engine.catalog()) {
    if (!s.is_practice()) ids.push_back(s.id);
  }
  CHECK(r["payload"]["order"].get<std::vector<std::string>>() == scenario::randomize_order(42, ids));
}

TEST_CASE("golden transcript is identical over TCP and WebSocket") {
  std::vector<std::string> tcp, ws;
  {
    auto server = start_server();
    testing::TcpClient client(server->port());
    tcp = testing::run_golden_script(client);
  }
  {
    auto server = start_server();
    testing::WsClient client(server->port());
    ws = testing::run_golden_script(client);
  }
  CHECK(tcp.size() == ws.size());
  CHECK(tcp == ws);

  const std::string golden = std::string(PRECRASH_TEST_DIR) + "/golden/transcript.jsonl";
  if (std::getenv("PRECRASH_UPDATE_GOLDEN")) {
    std::ofstream out(golden, std::ios::binary);
    for (const auto& line : tcp) out << line << '\n';
  }
  const auto expected = testing::read_transcript(golden);
  REQUIRE(expected.size() == tcp.size());
  for (std::size_t i = 0; i < tcp.size(); ++i) {
    CAPTURE(i);
    CHECK(tcp[i] == expected[i]);
  }
}

TEST_CASE("oversize frames and wrong upgrade paths are refused") {
  auto server = start_server();
  {
    testing::TcpClient client(server->port());
    client.send_raw(std::string("\x00\x10\x00\x01", 4));
    const auto reply = client.receive();
    REQUIRE(reply.has_value());
    const json j = json::parse(*reply);
    CHECK(j["payload"]["code"] == "OVERSIZE_FRAME");
    CHECK_FALSE(client.receive().has_value());
  }
  CHECK_THROWS(testing::WsClient(server->port(), "/other"));
  testing::WsClient ok(server->port());
  CHECK(ok.call(1, "hello", {{"version", "1.0"}})["type"] == "hello");
}

TEST_CASE("concurrent controller requests: exactly one wins") {
  auto server = start_server();
  testing::TcpClient a(server->port());
  testing::WsClient b(server->port());
  a.request(1, "hello", {{"version", "1.0"}, {"role", "controller"}});
  b.request(1, "hello", {{"version", "1.0"}, {"role", "controller"}});
  const json ra = json::parse(a.until_reply(1).back());
  const json rb = json::parse(b.until_reply(1).back());
  const int controllers = (ra["payload"]["role"] == "controller") + (rb["payload"]["role"] == "controller");
  CHECK(controllers == 1);
}

TEST_CASE("realtime pacing and zero-order hold") {
  auto server = start_server();
  testing::TcpClient client(server->port());
  client.call(1, "hello", {{"version", "1.0"}});
  client.call(2, "load_scenario", {{"id", "practice"}, {"seed", 1}});
  client.call(3, "set_control", {{"throttle", 0.3}});

  const auto run_for = [&](double rate, double seconds, std::int64_t id) {
    const json before = client.call(id, "get_state");
    client.call(id + 1, "set_mode", {{"mode", "realtime"}, {"rate_hz", rate}});
    std::this_thread::sleep_for(std::chrono::duration<double>(seconds));
    client.call(id + 2, "set_mode", {{"mode", "stepped"}});
    const json after = client.call(id + 3, "get_state");
    return std::make_pair(after["payload"]["step_index"].get<std::int64_t>() - before["payload"]["step_index"].get<std::int64_t>(),
                          after);
  };
  const auto [steps50, state] = run_for(50.0, 2.0, 10);
  CHECK(steps50 >= 95);
  CHECK(steps50 <= 105);
  CHECK(state["payload"]["controls"]["throttle"] == 0.3);
  json ego;
  for (const json& v : state["payload"]["vehicles"]) {
    if (v["vehicle_id"] == "ego") ego = v;
  }
  CHECK(ego["throttle"] == 0.3);

  const auto [steps100, ignored] = run_for(100.0, 1.0, 20);
  CHECK(steps100 >= 90);
  CHECK(steps100 <= 110);
}

TEST_CASE("fuzzed frames never take the server down") {
  auto server = start_server();
  std::mt19937_64 gen(2024);
  const std::vector<std::string> types = {"hello", "step", "get_state", "set_control", "subscribe", "load_scenario",
                                          "set_mode", "end_run", "list_scenarios", "randomize_order", "bogus"};
  auto client = std::make_unique<testing::TcpClient>(server->port());
  int reconnects = 0;
  for (int k = 0; k < 10000; ++k) {
    std::string body;
    switch (gen() % 4) {
      case 0: {
        body.resize(gen() % 64);
        for (char& c : body) c = static_cast<char>(gen() & 0xff);
        break;
      }
      case 1: {
        json payload = json::object();
        if (gen() % 2) payload["n"] = static_cast<int>(gen() % 5) - 1;
        if (gen() % 2) payload["version"] = gen() % 3 ? json("1.0") : json(static_cast<int>(gen() % 4));
        if (gen() % 2) payload["throttle"] = static_cast<double>(gen() % 300) / 100.0 - 1.0;
        if (gen() % 2) payload["id"] = gen() % 2 ? "practice" : "sudden_stop";
        if (gen() % 2) payload["channels"] = json::array({gen() % 2 ? "fcd" : "events"});
        if (gen() % 3 == 0) payload["mode"] = gen() % 2 ? "stepped" : "warp";
        body = json{{"id", 1 + static_cast<int>(gen() % 999)}, {"type", types[gen() % types.size()]}, {"payload", payload}}.dump();
        break;
      }
      case 2: {
        body = json{{"id", static_cast<int>(gen() % 1000)}, {"type", types[gen() % types.size()]}}.dump();
        body.resize(gen() % (body.size() + 1));
        break;
      }
      default:
        body = "{\"id\":" + std::to_string(gen() % 10) + ",\"type\":\"" + std::string(gen() % 8, '\xff') + "\"}";
    }
    if (k % 2500 == 1234) {
      client->send_raw(std::string("\xff\xff\xff\xff", 4));
      while (client->receive()) {
      }
      client = std::make_unique<testing::TcpClient>(server->port());
      ++reconnects;
      continue;
    }
    client->send_body(body);
    auto reply = client->receive();
    REQUIRE(reply.has_value());
    // Pushes may precede the reply; drain until a non-push arrives.
    const auto is_push = [](const std::string& m) {
      const std::string type = json::parse(m)["type"];
      return type == "fcd_frame" || type == "event" || type == "clock";
    };
    while (is_push(*reply)) {
      reply = client->receive();
      REQUIRE(reply.has_value());
    }
  }
  CHECK(reconnects == 4);
  testing::TcpClient fresh(server->port());
  CHECK(fresh.call(1, "hello", {{"version", "1.0"}, {"role", "observer"}})["type"] == "hello");
}
