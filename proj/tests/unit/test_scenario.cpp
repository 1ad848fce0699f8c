#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "precrash/scenario/run.hpp"

using namespace precrash;
using namespace precrash::scenario;
using traffic::config::kDt;

namespace {

const std::filesystem::path kScenarios = std::filesystem::path(PRECRASH_DATA_DIR) / "scenarios";

ScenarioSpec spec_from(const std::string& body) {
  return parse_scenario(R"({"format_version": 1, "id": "t", "title": "t",
    "network": "../networks/two_lane_road.net.json", "duration_s": 60, )" + body + "}",
                        kScenarios);
}

ScenarioSpec bundled(const std::string& id) { return load_scenario_file(kScenarios / (id + ".scenario.json")); }

RunResult run_bundled(const std::string& id, std::uint64_t seed, const EgoController& ego) {
  const ScenarioSpec spec = bundled(id);
  return run_scenario(spec, load_network_for(spec), seed, ego, "test");
}

ValidationError::Kind build_error(const ScenarioSpec& spec) {
  try {
    build_world(spec, load_network_for(spec), 1);
  } catch (const ValidationError& e) {
    return e.kind();
  }
  FAIL("no ValidationError");
  return ValidationError::Kind::Syntax;
}

datalog::FcdFrame ego_frame(std::int64_t step, double brake) {
  datalog::FcdFrame f;
  f.step_index = step;
  f.t = step * kDt;
  f.vehicle_id = "ego";
  f.kind = "ego_car";
  f.lane_id = "road_0";
  f.v = 10.0;
  f.throttle = 0.0;
  f.brake = brake;
  f.steer = 0.0;
  f.gear = "D";
  return f;
}

datalog::LogEvent trigger_at(std::int64_t step) {
  datalog::LogEvent e{step * kDt, step, "trigger_fired", {}};
  e.detail["trigger"] = "x";
  return e;
}

const std::vector<std::string> kEight = {"sudden_lane_change", "t_bone",    "sudden_stop", "red_light_runner",
                                         "deer_crossing",      "roundabout", "ramp_merge",  "jaywalker"};

}  // namespace

TEST_CASE("bundled scenario set covers the nine pre-crash situations") {
  std::set<std::string> ids;
  for (const ScenarioSpec& s : load_scenario_dir(kScenarios)) {
    ids.insert(s.id);
    CHECK(s.duration_s >= kMinDuration);
    CHECK(s.duration_s <= kMaxDuration);
    CHECK_NOTHROW(validate(s, *load_network_for(s)));
    if (s.id == "practice") {
      CHECK(s.is_practice());
    } else {
      CHECK_FALSE(s.triggers.empty());
    }
  }
  std::set<std::string> expected(kEight.begin(), kEight.end());
  expected.insert("practice");
  CHECK(ids == expected);
}

TEST_CASE("practice world holds the ego and an armed ambient flow") {
  const ScenarioSpec spec = bundled("practice");
  const traffic::World w = build_world(spec, load_network_for(spec), 3);
  CHECK(w.vehicles().size() == 1);
  CHECK(w.find("ego") != nullptr);
  CHECK(w.flows().size() == 1);
  CHECK(w.time() == 0.0);
}

TEST_CASE("red_light_runner world places the adversary on the crossing approach") {
  const ScenarioSpec spec = bundled("red_light_runner");
  const auto net = load_network_for(spec);
  const traffic::World w = build_world(spec, net, 3);
  const traffic::VehicleState* runner = w.find("runner");
  REQUIRE(runner != nullptr);
  CHECK(net->lanes()[runner->lane].id == "s_in_0");
  CHECK_FALSE(runner->ignore_red);
  REQUIRE(spec.triggers.size() == 1);
  CHECK(spec.triggers[0].actions[0].type == Action::Type::RunRedLight);
}

TEST_CASE("load errors") {
  SUBCASE("overlapping spawns") {
    const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 50, "v0": 0},
      "actors": [{"id": "a", "kind": "bot_car", "lane": "road_0", "s": 100, "v0": 0},
                 {"id": "b", "kind": "bot_car", "lane": "road_0", "s": 102, "v0": 0}])");
    CHECK(build_error(spec) == ValidationError::Kind::Overlap);
  }
  SUBCASE("actor overlapping the ego") {
    const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 50, "v0": 0},
      "actors": [{"id": "a", "kind": "pedestrian", "lane": "road_0", "s": 49}])");
    CHECK(build_error(spec) == ValidationError::Kind::Overlap);
  }
  SUBCASE("unknown lane") {
    CHECK(build_error(spec_from(R"("ego": {"lane": "road_7", "s": 50, "v0": 0})")) ==
          ValidationError::Kind::UnknownLane);
  }
  SUBCASE("duration outside the band") {
    ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 50, "v0": 0})");
    spec.duration_s = 59.98;
    CHECK(build_error(spec) == ValidationError::Kind::InvalidValue);
    spec.duration_s = 180.02;
    CHECK(build_error(spec) == ValidationError::Kind::InvalidValue);
  }
  SUBCASE("trigger naming an unknown actor") {
    const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 50, "v0": 0},
      "triggers": [{"id": "x", "condition": {"type": "time_elapsed", "t": 1},
                    "actions": [{"type": "hard_stop", "actor": "ghost", "decel": 8}]}])");
    CHECK(build_error(spec) == ValidationError::Kind::UnknownActor);
  }
  SUBCASE("duplicate trigger ids") {
    const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 50, "v0": 0},
      "triggers": [{"id": "x", "condition": {"type": "time_elapsed", "t": 1},
                    "actions": [{"type": "spawn_agent", "id": "p", "kind": "pedestrian", "path": [[0, 9], [1, 9]], "v": 1}]},
                   {"id": "x", "condition": {"type": "time_elapsed", "t": 2},
                    "actions": [{"type": "spawn_agent", "id": "q", "kind": "pedestrian", "path": [[0, 9], [1, 9]], "v": 1}]}])");
    CHECK(build_error(spec) == ValidationError::Kind::DuplicateId);
  }
  SUBCASE("format version") {
    try {
      parse_scenario(R"({"format_version": 2})", kScenarios);
      FAIL("accepted");
    } catch (const ValidationError& e) {
      CHECK(e.kind() == ValidationError::Kind::VersionMismatch);
    }
  }
  SUBCASE("missing network file") {
    ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 50, "v0": 0})");
    spec.network_path = kScenarios / "nope.net.json";
    try {
      load_network_for(spec);
      FAIL("accepted");
    } catch (const ValidationError& e) {
      CHECK(e.kind() == ValidationError::Kind::MissingFile);
    }
  }
}

TEST_CASE("ego_in_region boundary") {
  const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 100, "v0": 0})");
  const traffic::World w = build_world(spec, load_network_for(spec), 1);
  Condition c;
  c.type = Condition::Type::EgoInRegion;
  c.radius = 10.0;
  c.center = {100.0 + 9.9, 0.0};
  CHECK(condition_holds(c, w));
  c.center = {100.0 + 10.1, 0.0};
  CHECK_FALSE(condition_holds(c, w));
}

TEST_CASE("ego_speed_above and ego_gap_below") {
  const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 100, "v0": 12},
      "actors": [{"id": "lead", "kind": "bot_car", "lane": "road_0", "s": 130, "v0": 0}])");
  const traffic::World w = build_world(spec, load_network_for(spec), 1);
  CHECK(ego_gap(w, "lead") == doctest::Approx(30.0 - 4.5).epsilon(1e-12));
  Condition c;
  c.type = Condition::Type::EgoSpeedAbove;
  c.speed = 11.9;
  CHECK(condition_holds(c, w));
  c.speed = 12.0;
  CHECK_FALSE(condition_holds(c, w));
  c.type = Condition::Type::EgoGapBelow;
  c.actor = "lead";
  c.gap = 26.0;
  CHECK(condition_holds(c, w));
  c.gap = 25.0;
  CHECK_FALSE(condition_holds(c, w));
}

TEST_CASE("time_elapsed fires on the threshold step, once") {
  const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 100, "v0": 0},
      "triggers": [{"id": "at30", "condition": {"type": "time_elapsed", "t": 30},
                    "actions": [{"type": "spawn_agent", "id": "p", "kind": "pedestrian",
                                 "path": [[300, -5], [300, 10]], "v": 1.2}]}])");
  ScenarioRun run(spec, load_network_for(spec), 1);
  int fired = 0;
  std::int64_t fired_step = -1;
  for (int k = 1; k <= 1600; ++k) {
    for (const datalog::LogEvent& e : run.step({}).events) {
      if (e.type == "trigger_fired") {
        ++fired;
        fired_step = e.step_index;
        CHECK(e.detail["trigger"] == "at30");
      }
    }
    if (k == 1499) {
      CHECK(run.world().time() == doctest::Approx(29.98));
      CHECK(fired == 0);
    }
  }
  CHECK(fired == 1);
  CHECK(fired_step == 1500);
  CHECK(run.world().find("p") != nullptr);
}

TEST_CASE("action on a despawned actor is a recorded no-op") {
  const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_1", "s": 100, "v0": 0},
      "actors": [{"id": "gone", "kind": "bot_car", "lane": "road_0", "s": 1990, "v0": 10},
                 {"id": "keeper", "kind": "bot_car", "lane": "road_1", "s": 300, "v0": 0,
                  "params": {"v_desired": 0, "sigma": 0}}],
      "triggers": [{"id": "late", "condition": {"type": "time_elapsed", "t": 5},
                    "actions": [{"type": "hard_stop", "actor": "gone", "decel": 8},
                                {"type": "force_lane_change", "actor": "keeper", "dir": "left"}]}])");
  ScenarioRun run(spec, load_network_for(spec), 1);
  std::vector<datalog::LogEvent> events;
  while (run.world().step_index() < 400) {
    for (auto& e : run.step({}).events) events.push_back(e);
  }
  CHECK(run.world().find("gone") == nullptr);
  std::vector<std::string> types;
  for (const auto& e : events) types.push_back(e.type);
  REQUIRE(types == std::vector<std::string>{"trigger_fired", "action_noop", "action_noop"});
  CHECK(events[1].detail["actor"] == "gone");
  CHECK(events[1].detail["reason"] == "UnknownActor");
  CHECK(events[2].detail["actor"] == "keeper");
  CHECK(events[2].detail["reason"] == "NoTargetLane");
}

TEST_CASE("hard_stop brings the lead to rest within v0/decel") {
  const RunResult r = run_bundled("sudden_stop", 1, noop_ego());
  std::optional<std::int64_t> fire_step;
  for (const auto& e : r.log.events) {
    if (e.type == "trigger_fired") fire_step = e.step_index;
  }
  REQUIRE(fire_step);
  std::map<std::int64_t, double> lead_v;
  for (const auto& f : r.log.frames) {
    if (f.vehicle_id == "lead") lead_v[f.step_index] = f.v;
  }
  const double v0 = lead_v.at(*fire_step);
  CHECK(v0 > 5.0);
  const double stop_time = v0 / 8.0;
  const auto stop_step = *fire_step + static_cast<std::int64_t>(std::ceil(stop_time / kDt - 1e-9));
  CHECK(lead_v.at(stop_step - 1) > 0.0);
  CHECK(lead_v.at(stop_step) == 0.0);
  for (std::int64_t k = *fire_step + 1; k <= stop_step; ++k) {
    CHECK(lead_v.at(k) == doctest::Approx(std::max(0.0, lead_v.at(k - 1) - 8.0 * kDt)));
  }
}

TEST_CASE("randomize_order") {
  SUBCASE("permutation and determinism over 10000 seeds") {
    std::map<std::string, int> first;
    const std::set<std::string> all(kEight.begin(), kEight.end());
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      const auto order = randomize_order(seed, kEight);
      REQUIRE(order.size() == 8);
      REQUIRE(std::set<std::string>(order.begin(), order.end()) == all);
      ++first[order.front()];
      if (seed % 997 == 0) CHECK(randomize_order(seed, kEight) == order);
    }
    for (const auto& id : kEight) {
      CHECK(first[id] >= 950);
      CHECK(first[id] <= 1550);
    }
  }
  SUBCASE("input order does not matter for a given seed") {
    auto reversed = kEight;
    std::reverse(reversed.begin(), reversed.end());
    const auto a = randomize_order(42, kEight);
    const auto b = randomize_order(42, reversed);
    CHECK(std::set<std::string>(a.begin(), a.end()) == std::set<std::string>(b.begin(), b.end()));
  }
  SUBCASE("wrong count") {
    auto seven = kEight;
    seven.pop_back();
    CHECK_THROWS_AS(randomize_order(1, seven), ValidationError);
    auto dup = kEight;
    dup.back() = dup.front();
    CHECK_THROWS_AS(randomize_order(1, dup), ValidationError);
    auto nine = kEight;
    nine.push_back("practice");
    try {
      randomize_order(1, nine);
      FAIL("accepted");
    } catch (const ValidationError& e) {
      CHECK(e.kind() == ValidationError::Kind::WrongCount);
    }
  }
}

TEST_CASE("compute_outcome on hand-built logs") {
  datalog::RunLog log;
  log.header.scenario_id = "synthetic";
  SUBCASE("reaction 0.84 s") {
    for (std::int64_t k = 495; k <= 560; ++k) log.frames.push_back(ego_frame(k, k >= 542 ? 0.6 : (k == 520 ? 0.1 : 0.0)));
    log.events.push_back(trigger_at(500));
    const RunOutcome o = compute_outcome(log);
    REQUIRE(o.reaction_time);
    CHECK(*o.reaction_time == doctest::Approx(0.84).epsilon(1e-12));
    CHECK(*o.first_trigger_time == doctest::Approx(10.0));
    const double steps = *o.reaction_time / kDt;
    CHECK(std::abs(steps - std::round(steps)) < 1e-9);
  }
  SUBCASE("braking on the trigger step") {
    for (std::int64_t k = 495; k <= 510; ++k) log.frames.push_back(ego_frame(k, k >= 500 ? 1.0 : 0.0));
    log.events.push_back(trigger_at(500));
    CHECK(*compute_outcome(log).reaction_time == 0.0);
  }
  SUBCASE("braking before the trigger only") {
    for (std::int64_t k = 495; k <= 510; ++k) log.frames.push_back(ego_frame(k, k < 500 ? 1.0 : 0.0));
    log.events.push_back(trigger_at(500));
    CHECK_FALSE(compute_outcome(log).reaction_time);
  }
  SUBCASE("never brakes") {
    for (std::int64_t k = 1; k <= 100; ++k) log.frames.push_back(ego_frame(k, 0.0));
    log.events.push_back(trigger_at(50));
    const RunOutcome o = compute_outcome(log);
    CHECK_FALSE(o.reaction_time);
    CHECK(o.mean_ego_speed == doctest::Approx(10.0));
    CHECK_FALSE(o.collided);
  }
  SUBCASE("same-lane time to collision") {
    auto ego = ego_frame(1, 0.0);
    ego.s = 0.0;
    datalog::FcdFrame lead;
    lead.step_index = 1;
    lead.t = kDt;
    lead.vehicle_id = "lead";
    lead.kind = "bot_car";
    lead.lane_id = "road_0";
    lead.s = 20.0;
    lead.v = 5.0;
    datalog::FcdFrame other_lane = lead;
    other_lane.vehicle_id = "side";
    other_lane.lane_id = "road_1";
    other_lane.s = 6.0;
    log.frames = {ego, lead, other_lane};
    const RunOutcome o = compute_outcome(log);
    REQUIRE(o.min_ttc);
    CHECK(*o.min_ttc == doctest::Approx((20.0 - 4.5) / 5.0));
  }
  SUBCASE("collision events") {
    log.frames.push_back(ego_frame(1, 0.0));
    datalog::LogEvent c{0.02, 1, "collision", {}};
    c.detail["a"] = "bot_1";
    c.detail["b"] = "bot_2";
    log.events.push_back(c);
    RunOutcome o = compute_outcome(log);
    CHECK(o.collided);
    CHECK_FALSE(o.ego_collided);
    CHECK(o.collision_parties == std::vector<std::string>{"bot_1", "bot_2"});
  }
  SUBCASE("empty log") {
    try {
      compute_outcome(log);
      FAIL("accepted");
    } catch (const datalog::LogError& e) {
      CHECK(e.kind() == datalog::LogError::Kind::EmptyLog);
    }
  }
}

TEST_CASE("run_scenario outcomes") {
  SUBCASE("sudden_stop: no-op collides, defensive does not") {
    const RunResult noop = run_bundled("sudden_stop", 1, noop_ego());
    CHECK(noop.outcome.collided);
    CHECK(noop.outcome.ego_collided);
    CHECK(noop.outcome.end_reason == "collision");
    CHECK(noop.outcome.duration == doctest::Approx(*noop.outcome.collision_time + kCollisionGrace));
    const RunResult safe = run_bundled("sudden_stop", 1, defensive_ego());
    CHECK_FALSE(safe.outcome.collided);
    REQUIRE(safe.outcome.reaction_time);
    CHECK(*safe.outcome.reaction_time >= 0.0);
    CHECK(*safe.outcome.min_ttc > 0.0);
  }
  SUBCASE("practice completes at its duration") {
    const RunResult r = run_bundled("practice", 5, noop_ego());
    CHECK_FALSE(r.outcome.collided);
    CHECK(r.outcome.end_reason == "duration");
    CHECK(r.outcome.duration == doctest::Approx(bundled("practice").duration_s));
    CHECK(r.outcome.triggers_fired == 0);
  }
  SUBCASE("goal region ends the run") {
    const ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 100, "v0": 10},
        "goal": {"center": [150, 0], "radius": 5})");
    const RunResult r = run_scenario(spec, load_network_for(spec), 1, noop_ego(), "test");
    CHECK(r.outcome.reached_goal);
    CHECK(r.outcome.end_reason == "goal");
    CHECK(r.outcome.duration >= 4.5 - 1e-9);
    CHECK(r.outcome.duration <= 4.5 + kDt + 1e-9);
  }
}

TEST_CASE("outcome is a pure function of spec, seed and controls") {
  for (const char* id : {"practice", "t_bone", "roundabout"}) {
    const auto a = run_bundled(id, 11, defensive_ego()).outcome.to_json();
    const auto b = run_bundled(id, 11, defensive_ego()).outcome.to_json();
    CHECK(a == b);
  }
}

TEST_CASE("every adversarial scenario fires each trigger at most once") {
  for (const std::string& id : kEight) {
    const RunResult r = run_bundled(id, 2, noop_ego());
    std::map<std::string, int> count;
    for (const auto& e : r.log.events) {
      if (e.type == "trigger_fired") ++count[e.detail["trigger"].get<std::string>()];
    }
    CHECK_MESSAGE(!count.empty(), id);
    for (const auto& [trigger, n] : count) { const std::string where = id + "/" + trigger; CHECK_MESSAGE(n == 1, where); }
  }
}

TEST_CASE("stepping past the end emits scenario_end once") {
  ScenarioSpec spec = spec_from(R"("ego": {"lane": "road_0", "s": 100, "v0": 0})");
  ScenarioRun run(spec, load_network_for(spec), 1);
  int ends = 0;
  for (int k = 0; k < 3200; ++k) {
    for (const auto& e : run.step({}).events) ends += e.type == "scenario_end";
  }
  CHECK(ends == 1);
  CHECK(run.ended());
  CHECK(run.end_reason() == "duration");
}
