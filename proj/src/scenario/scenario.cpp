#include "precrash/scenario/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace precrash::scenario {

using nlohmann::json;
using Kind = ValidationError::Kind;
using traffic::AgentKind;

namespace {

[[noreturn]] void fail(Kind kind, std::string subject, const std::string& message) {
  throw ValidationError(kind, std::move(subject), message);
}

const json& member(const json& j, const char* key, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) fail(Kind::Syntax, where, where + ": missing '" + key + "'");
  return *it;
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(Kind::Syntax, where, where + ": expected a number");
  const double v = j.get<double>();
  if (!std::isfinite(v)) fail(Kind::InvalidValue, where, where + ": not finite");
  return v;
}

double number_or(const json& j, const char* key, double fallback, const std::string& where) {
  auto it = j.find(key);
  return it == j.end() ? fallback : number(*it, where + "." + key);
}

std::string text(const json& j, const std::string& where) {
  if (!j.is_string()) fail(Kind::Syntax, where, where + ": expected a string");
  return j.get<std::string>();
}

std::vector<std::string> strings(const json& j, const std::string& where) {
  if (!j.is_array()) fail(Kind::Syntax, where, where + ": expected an array");
  std::vector<std::string> out;
  for (const json& e : j) out.push_back(text(e, where));
  return out;
}

Vec2 point(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2) fail(Kind::Syntax, where, where + ": expected [x, y]");
  return {number(j[0], where), number(j[1], where)};
}

std::vector<Vec2> points(const json& j, const std::string& where) {
  if (!j.is_array()) fail(Kind::Syntax, where, where + ": expected a point list");
  std::vector<Vec2> out;
  for (const json& p : j) out.push_back(point(p, where));
  return out;
}

traffic::DriverParams driver_params(const json& j, const std::string& where) {
  traffic::DriverParams p;
  if (j.is_null()) return p;
  if (!j.is_object()) fail(Kind::Syntax, where, where + ": expected an object");
  p.a_max = number_or(j, "a_max", p.a_max, where);
  p.b_max = number_or(j, "b_max", p.b_max, where);
  p.tau = number_or(j, "tau", p.tau, where);
  p.sigma = number_or(j, "sigma", p.sigma, where);
  p.v_desired = number_or(j, "v_desired", p.v_desired, where);
  if (!(p.a_max > 0 && p.b_max > 0 && p.tau > 0)) fail(Kind::InvalidValue, where, where + ": a_max, b_max, tau must be > 0");
  if (!(p.sigma >= 0 && p.sigma <= 1)) fail(Kind::InvalidValue, where, where + ": sigma must be in [0, 1]");
  if (!(p.v_desired >= 0)) fail(Kind::InvalidValue, where, where + ": v_desired must be >= 0");
  return p;
}

AgentKind kind_of(const json& j, const std::string& where) {
  auto k = traffic::agent_kind_from(text(j, where));
  if (!k || *k == AgentKind::EgoCar) fail(Kind::InvalidValue, where, where + ": unknown actor kind");
  return *k;
}

Condition parse_condition(const json& j, const std::string& where) {
  Condition c;
  const std::string type = text(member(j, "type", where), where + ".type");
  if (type == "ego_in_region") {
    c.type = Condition::Type::EgoInRegion;
    c.center = point(member(j, "center", where), where + ".center");
    c.radius = number(member(j, "radius", where), where + ".radius");
  } else if (type == "ego_gap_below") {
    c.type = Condition::Type::EgoGapBelow;
    c.actor = text(member(j, "actor", where), where + ".actor");
    c.gap = number(member(j, "gap", where), where + ".gap");
  } else if (type == "time_elapsed") {
    c.type = Condition::Type::TimeElapsed;
    c.time = number(member(j, "t", where), where + ".t");
  } else if (type == "ego_speed_above") {
    c.type = Condition::Type::EgoSpeedAbove;
    c.speed = number(member(j, "v", where), where + ".v");
  } else {
    fail(Kind::InvalidValue, type, where + ": unknown condition '" + type + "'");
  }
  return c;
}

Action parse_action(const json& j, const std::string& where) {
  Action a;
  const std::string type = text(member(j, "type", where), where + ".type");
  if (type == "set_speed") {
    a.type = Action::Type::SetSpeed;
    a.actor = text(member(j, "actor", where), where + ".actor");
    a.speed = number(member(j, "v", where), where + ".v");
    if (j.contains("decel_limit")) a.rate = number(j["decel_limit"], where + ".decel_limit");
  } else if (type == "force_lane_change") {
    a.type = Action::Type::ForceLaneChange;
    a.actor = text(member(j, "actor", where), where + ".actor");
    const std::string dir = text(member(j, "dir", where), where + ".dir");
    if (dir == "left") {
      a.direction = traffic::LaneChange::Left;
    } else if (dir == "right") {
      a.direction = traffic::LaneChange::Right;
    } else {
      fail(Kind::InvalidValue, dir, where + ": dir must be left or right");
    }
  } else if (type == "run_red_light") {
    a.type = Action::Type::RunRedLight;
    a.actor = text(member(j, "actor", where), where + ".actor");
  } else if (type == "hard_stop") {
    a.type = Action::Type::HardStop;
    a.actor = text(member(j, "actor", where), where + ".actor");
    a.rate = number(member(j, "decel", where), where + ".decel");
    if (!(*a.rate > 0)) fail(Kind::InvalidValue, where, where + ": decel must be > 0");
  } else if (type == "spawn_agent") {
    a.type = Action::Type::SpawnAgent;
    a.actor = text(member(j, "id", where), where + ".id");
    a.kind = kind_of(member(j, "kind", where), where + ".kind");
    if (a.kind == AgentKind::BotCar) fail(Kind::InvalidValue, where, where + ": spawn_agent spawns pedestrians or deer");
    a.path = points(member(j, "path", where), where + ".path");
    if (a.path.size() < 2) fail(Kind::InvalidValue, where, where + ": path needs two points");
    a.speed = number(member(j, "v", where), where + ".v");
  } else {
    fail(Kind::InvalidValue, type, where + ": unknown action '" + type + "'");
  }
  if (a.speed < 0) fail(Kind::InvalidValue, where, where + ": negative speed");
  return a;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Kind::MissingFile, path.string(), "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::size_t edge_index(const net::RoadNetwork& net, const std::string& id, const std::string& where) {
  auto e = net.find_edge(id);
  if (!e) fail(Kind::UnknownEdge, id, where + ": unknown edge '" + id + "'");
  return *e;
}

std::size_t lane_index(const net::RoadNetwork& net, const std::string& id, const std::string& where) {
  auto l = net.find_lane(id);
  if (!l) fail(Kind::UnknownLane, id, where + ": unknown lane '" + id + "'");
  return *l;
}

std::vector<std::size_t> route_indices(const net::RoadNetwork& net, const std::vector<std::string>& route,
                                       const std::string& where) {
  std::vector<std::size_t> out;
  for (const std::string& id : route) out.push_back(edge_index(net, id, where));
  for (std::size_t i = 1; i < out.size(); ++i) {
    bool linked = false;
    for (std::size_t lane : net.edges()[out[i - 1]].lanes) linked = linked || net.connection_towards(lane, out[i]);
    if (!linked) fail(Kind::BadRoute, route[i], where + ": no connection " + route[i - 1] + " -> " + route[i]);
  }
  return out;
}

// Route of a bot starting on `lane`: the given route, or the lane's edge.
std::vector<std::size_t> bot_route(const net::RoadNetwork& net, std::size_t lane,
                                   const std::vector<std::string>& route, const std::string& where) {
  const net::Lane& l = net.lanes()[lane];
  if (l.is_internal()) fail(Kind::InvalidValue, l.id, where + ": bots start on regular lanes");
  if (route.empty()) return {l.edge_index};
  auto out = route_indices(net, route, where);
  if (out.front() != l.edge_index) fail(Kind::BadRoute, route.front(), where + ": route must start on the spawn edge");
  return out;
}

}  // namespace

std::int64_t ScenarioSpec::duration_steps() const {
  return static_cast<std::int64_t>(std::llround(duration_s / traffic::config::kDt));
}

ScenarioSpec parse_scenario(std::string_view text_in, const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(text_in.begin(), text_in.end());
  } catch (const json::parse_error& e) {
    fail(Kind::Syntax, "", std::string("scenario JSON: ") + e.what());
  }
  if (!doc.is_object()) fail(Kind::Syntax, "", "scenario must be a JSON object");
  try {
    ScenarioSpec spec;
    const json& version = member(doc, "format_version", "scenario");
    if (!version.is_number_integer() || version.get<int>() != kScenarioFormatVersion) {
      fail(Kind::VersionMismatch, "format_version", "unsupported scenario format_version");
    }
    spec.id = text(member(doc, "id", "scenario"), "id");
    spec.title = doc.contains("title") ? text(doc["title"], "title") : spec.id;
    spec.network_file = text(member(doc, "network", "scenario"), "network");
    spec.network_path = base_dir / spec.network_file;
    spec.duration_s = number(member(doc, "duration_s", "scenario"), "duration_s");
    if (doc.contains("weather")) {
      const json& w = doc["weather"];
      spec.weather.friction = number_or(w, "friction", 1.0, "weather");
      spec.weather.visibility = number_or(w, "visibility", spec.weather.visibility, "weather");
      if (!(spec.weather.friction > 0 && spec.weather.friction <= 1)) {
        fail(Kind::InvalidValue, "weather", "weather.friction must be in (0, 1]");
      }
    }
    const json& ego = member(doc, "ego", "scenario");
    spec.ego.lane = text(member(ego, "lane", "ego"), "ego.lane");
    spec.ego.s = number(member(ego, "s", "ego"), "ego.s");
    spec.ego.v0 = number_or(ego, "v0", 0.0, "ego");
    if (ego.contains("route")) spec.ego.route = strings(ego["route"], "ego.route");

    if (doc.contains("actors")) {
      std::size_t i = 0;
      for (const json& a : doc["actors"]) {
        const std::string where = "actors[" + std::to_string(i++) + "]";
        ActorSpawn s;
        s.id = text(member(a, "id", where), where + ".id");
        s.kind = kind_of(member(a, "kind", where), where + ".kind");
        s.v0 = number_or(a, "v0", 0.0, where);
        if (a.contains("path")) {
          s.path = points(a["path"], where + ".path");
          if (s.path.size() < 2) fail(Kind::InvalidValue, s.id, where + ": path needs two points");
        } else {
          s.lane = text(member(a, "lane", where), where + ".lane");
          s.s = number(member(a, "s", where), where + ".s");
        }
        if (s.kind == AgentKind::BotCar && !s.path.empty()) {
          fail(Kind::InvalidValue, s.id, where + ": bots follow lanes, not paths");
        }
        if (a.contains("route")) s.route = strings(a["route"], where + ".route");
        if (a.contains("params")) s.params = driver_params(a["params"], where + ".params");
        s.yield_at_merges = a.value("yield_at_merges", true);
        s.ignore_red = a.value("ignore_red", false);
        spec.actors.push_back(std::move(s));
      }
    }
    if (doc.contains("flows")) {
      std::size_t i = 0;
      for (const json& f : doc["flows"]) {
        const std::string where = "flows[" + std::to_string(i++) + "]";
        FlowSpec flow;
        flow.id = text(member(f, "id", where), where + ".id");
        flow.entry_edge = text(member(f, "entry_edge", where), where + ".entry_edge");
        if (f.contains("route")) flow.route = strings(f["route"], where + ".route");
        flow.rate = number(member(f, "rate", where), where + ".rate");
        flow.v0 = number_or(f, "v0", 0.0, where);
        if (f.contains("params")) flow.params = driver_params(f["params"], where + ".params");
        if (!(flow.rate >= 0)) fail(Kind::InvalidValue, flow.id, where + ": rate must be >= 0");
        spec.flows.push_back(std::move(flow));
      }
    }
    if (doc.contains("triggers")) {
      std::size_t i = 0;
      for (const json& t : doc["triggers"]) {
        const std::string where = "triggers[" + std::to_string(i++) + "]";
        TriggerRule rule;
        rule.id = text(member(t, "id", where), where + ".id");
        rule.condition = parse_condition(member(t, "condition", where), where + ".condition");
        const json& actions = member(t, "actions", where);
        if (!actions.is_array() || actions.empty()) fail(Kind::Syntax, rule.id, where + ": actions must be a non-empty array");
        std::size_t k = 0;
        for (const json& a : actions) rule.actions.push_back(parse_action(a, where + ".actions[" + std::to_string(k++) + "]"));
        spec.triggers.push_back(std::move(rule));
      }
    }
    if (doc.contains("goal")) {
      const json& g = doc["goal"];
      spec.goal = GoalRegion{point(member(g, "center", "goal"), "goal.center"), number(member(g, "radius", "goal"), "goal.radius")};
    }
    return spec;
  } catch (const ValidationError&) {
    throw;
  } catch (const std::exception& e) {
    fail(Kind::Syntax, "", std::string("scenario: ") + e.what());
  }
}

ScenarioSpec load_scenario_file(const std::filesystem::path& path) {
  ScenarioSpec spec = parse_scenario(read_file(path), path.parent_path());
  spec.source_path = path;
  return spec;
}

std::shared_ptr<const net::RoadNetwork> load_network_for(const ScenarioSpec& spec) {
  if (!std::filesystem::exists(spec.network_path)) {
    fail(Kind::MissingFile, spec.network_path.string(), "network file not found: " + spec.network_path.string());
  }
  try {
    return std::make_shared<const net::RoadNetwork>(net::load_network(spec.network_path));
  } catch (const net::NetworkError& e) {
    fail(Kind::Syntax, spec.network_path.string(), std::string("network: ") + e.what());
  }
}

void validate(const ScenarioSpec& spec, const net::RoadNetwork& network) {
  if (!(spec.duration_s >= kMinDuration && spec.duration_s <= kMaxDuration)) {
    fail(Kind::InvalidValue, "duration_s", "duration_s must be within [60, 180]");
  }
  const std::size_t ego_lane = lane_index(network, spec.ego.lane, "ego");
  if (!(spec.ego.s >= 0 && spec.ego.s <= network.lanes()[ego_lane].length())) {
    fail(Kind::InvalidValue, "ego", "ego.s outside its lane");
  }
  if (!spec.ego.route.empty()) route_indices(network, spec.ego.route, "ego.route");

  std::set<std::string> ids{std::string(kEgoId)};
  for (const ActorSpawn& a : spec.actors) {
    if (!ids.insert(a.id).second) fail(Kind::DuplicateId, a.id, "duplicate actor id '" + a.id + "'");
    if (a.path.empty()) {
      const std::size_t lane = lane_index(network, a.lane, a.id);
      if (!(a.s >= 0 && a.s <= network.lanes()[lane].length())) fail(Kind::InvalidValue, a.id, a.id + ": s outside its lane");
      if (a.kind == AgentKind::BotCar) bot_route(network, lane, a.route, a.id);
    }
  }
  std::set<std::string> flow_ids;
  for (const FlowSpec& f : spec.flows) {
    if (!flow_ids.insert(f.id).second) fail(Kind::DuplicateId, f.id, "duplicate flow id '" + f.id + "'");
    const std::size_t entry = edge_index(network, f.entry_edge, f.id);
    if (!f.route.empty()) {
      auto r = route_indices(network, f.route, f.id);
      if (r.front() != entry) fail(Kind::BadRoute, f.id, f.id + ": route must start with the entry edge");
    }
  }
  std::set<std::string> trigger_ids;
  std::set<std::string> known = ids;
  for (const TriggerRule& t : spec.triggers) {
    if (!trigger_ids.insert(t.id).second) fail(Kind::DuplicateId, t.id, "duplicate trigger id '" + t.id + "'");
    if (t.condition.type == Condition::Type::EgoGapBelow && !known.contains(t.condition.actor)) {
      fail(Kind::UnknownActor, t.condition.actor, t.id + ": unknown actor '" + t.condition.actor + "'");
    }
    for (const Action& a : t.actions) {
      if (a.type == Action::Type::SpawnAgent) {
        if (!known.insert(a.actor).second) fail(Kind::DuplicateId, a.actor, t.id + ": duplicate agent id '" + a.actor + "'");
      } else if (!known.contains(a.actor) || a.actor == kEgoId) {
        fail(Kind::UnknownActor, a.actor, t.id + ": unknown actor '" + a.actor + "'");
      }
    }
  }
}

traffic::World build_world(const ScenarioSpec& spec, std::shared_ptr<const net::RoadNetwork> network,
                           std::uint64_t seed) {
  validate(spec, *network);
  traffic::World world(network, seed, spec.weather);
  const net::RoadNetwork& net = *network;

  traffic::VehicleState ego;
  ego.id = std::string(kEgoId);
  ego.kind = AgentKind::EgoCar;
  ego.pose = net.lanes()[*net.find_lane(spec.ego.lane)].shape.at(spec.ego.s);
  ego.v = spec.ego.v0;
  if (!spec.ego.route.empty()) ego.route = route_indices(net, spec.ego.route, "ego.route");
  world.add_vehicle(ego);

  for (const ActorSpawn& a : spec.actors) {
    traffic::VehicleState v;
    v.id = a.id;
    v.kind = a.kind;
    std::tie(v.length, v.width) = traffic::default_dimensions(a.kind);
    v.v = a.v0;
    v.params = a.params;
    v.yield_at_merges = a.yield_at_merges;
    v.ignore_red = a.ignore_red;
    if (!a.path.empty()) {
      Polyline path(a.path);
      v.path = traffic::AgentPath{path, 0.0, a.v0};
      v.pose = path.at(0.0);
    } else {
      const std::size_t lane = *net.find_lane(a.lane);
      if (a.kind == AgentKind::BotCar) {
        v.lane = lane;
        v.s = a.s;
        v.route = bot_route(net, lane, a.route, a.id);
      } else {
        v.pose = net.lanes()[lane].shape.at(a.s);
        v.v = 0.0;
      }
    }
    world.add_vehicle(std::move(v));
  }
  for (const FlowSpec& f : spec.flows) {
    traffic::Flow flow;
    flow.id = f.id;
    flow.entry_edge = *net.find_edge(f.entry_edge);
    flow.route = f.route.empty() ? std::vector<std::size_t>{flow.entry_edge} : route_indices(net, f.route, f.id);
    flow.rate = f.rate;
    flow.v0 = f.v0;
    flow.params = f.params;
    world.add_flow(std::move(flow));
  }
  const auto overlaps = world.overlapping_pairs();
  if (!overlaps.empty()) {
    const auto& [a, b] = *overlaps.begin();
    fail(Kind::Overlap, a, "initial footprints of '" + a + "' and '" + b + "' overlap");
  }
  world.detect_collisions();
  return world;
}

double ego_gap(const traffic::World& world, const std::string& actor) {
  const traffic::VehicleState* ego = world.find(std::string(kEgoId));
  const traffic::VehicleState* other = world.find(actor);
  if (!ego || !other) return traffic::kInf;
  return distance(traffic::footprint(*ego).center, traffic::footprint(*other).center) -
         0.5 * (ego->length + other->length);
}

bool condition_holds(const Condition& c, const traffic::World& world) {
  const traffic::VehicleState* ego = world.find(std::string(kEgoId));
  switch (c.type) {
    case Condition::Type::EgoInRegion:
      return ego && distance(ego->pose.position(), c.center) <= c.radius;
    case Condition::Type::EgoGapBelow:
      return ego_gap(world, c.actor) < c.gap;
    case Condition::Type::TimeElapsed:
      return world.time() >= c.time - 1e-9;
    case Condition::Type::EgoSpeedAbove:
      return ego && ego->v > c.speed;
  }
  return false;
}

namespace {

std::string_view action_name(Action::Type t) {
  switch (t) {
    case Action::Type::SetSpeed: return "set_speed";
    case Action::Type::ForceLaneChange: return "force_lane_change";
    case Action::Type::RunRedLight: return "run_red_light";
    case Action::Type::HardStop: return "hard_stop";
    case Action::Type::SpawnAgent: return "spawn_agent";
  }
  return "";
}

// Applies one action; returns the reason it had no effect, if any.
std::optional<std::string> apply(const Action& a, traffic::World& world) {
  if (a.type == Action::Type::SpawnAgent) {
    if (world.find(a.actor)) return "DuplicateId";
    traffic::VehicleState v;
    v.id = a.actor;
    v.kind = a.kind;
    std::tie(v.length, v.width) = traffic::default_dimensions(a.kind);
    Polyline path(a.path);
    v.path = traffic::AgentPath{path, 0.0, a.speed};
    v.pose = path.at(0.0);
    v.v = a.speed;
    world.add_vehicle(std::move(v));
    return std::nullopt;
  }
  traffic::VehicleState* v = world.find(a.actor);
  if (!v) return "UnknownActor";
  switch (a.type) {
    case Action::Type::SetSpeed:
      if (v->path) {
        v->path->speed = a.speed;
      } else {
        v->speed_override = traffic::SpeedOverride{a.speed, a.rate.value_or(0.0)};
      }
      break;
    case Action::Type::HardStop:
      if (v->path) {
        v->path->speed = 0.0;
      } else {
        v->speed_override = traffic::SpeedOverride{0.0, *a.rate};
      }
      break;
    case Action::Type::RunRedLight:
      v->ignore_red = true;
      v->stop_latch.reset();
      break;
    case Action::Type::ForceLaneChange:
      if (!world.force_lane_change(a.actor, a.direction)) return "NoTargetLane";
      break;
    case Action::Type::SpawnAgent:
      break;
  }
  return std::nullopt;
}

}  // namespace

std::vector<datalog::LogEvent> TriggerSet::evaluate(traffic::World& world) {
  std::vector<datalog::LogEvent> events;
  for (const TriggerRule& rule : rules_) {
    if (fired_.contains(rule.id) || !condition_holds(rule.condition, world)) continue;
    fired_.insert(rule.id);
    if (!first_fire_) first_fire_ = world.time();
    datalog::LogEvent fired{world.time(), world.step_index(), "trigger_fired", {}};
    fired.detail["trigger"] = rule.id;
    events.push_back(std::move(fired));
    for (const Action& a : rule.actions) {
      if (auto reason = apply(a, world)) {
        datalog::LogEvent noop{world.time(), world.step_index(), "action_noop", {}};
        noop.detail["trigger"] = rule.id;
        noop.detail["action"] = action_name(a.type);
        noop.detail["actor"] = a.actor;
        noop.detail["reason"] = *reason;
        events.push_back(std::move(noop));
      }
    }
  }
  return events;
}

std::vector<std::string> randomize_order(std::uint64_t seed, std::vector<std::string> scenarios) {
  const std::set<std::string> distinct(scenarios.begin(), scenarios.end());
  if (scenarios.size() != 8 || distinct.size() != 8) {
    fail(Kind::WrongCount, std::to_string(scenarios.size()), "expected exactly 8 distinct scenarios");
  }
  traffic::Rng rng(seed);
  for (std::size_t i = scenarios.size() - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.below(i + 1));
    std::swap(scenarios[i], scenarios[j]);
  }
  return scenarios;
}

std::vector<ScenarioSpec> load_scenario_dir(const std::filesystem::path& dir) {
  std::vector<ScenarioSpec> out;
  if (!std::filesystem::is_directory(dir)) fail(Kind::MissingFile, dir.string(), "not a directory: " + dir.string());
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.size() > 14 && name.ends_with(".scenario.json")) out.push_back(load_scenario_file(entry.path()));
  }
  std::sort(out.begin(), out.end(), [](const ScenarioSpec& a, const ScenarioSpec& b) { return a.id < b.id; });
  return out;
}

}  // namespace precrash::scenario
