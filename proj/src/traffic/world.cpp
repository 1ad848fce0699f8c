#include "precrash/traffic/world.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>

namespace precrash::traffic {

namespace {

using config::kDt;
using config::kMinGap;

// Vehicles on a sibling lane count as leaders until their back is this far
// past the common start; sibling junction lanes overlap near their origin.
constexpr double kDivergeClearance = 15.0;
// A bot yielding at a merge stops this far before the merge point.
constexpr double kMergeStopBack = 6.0;
// How many predecessor levels are searched for merge foes.
constexpr int kMergeDepth = 2;

double back(const VehicleState& v) { return v.s - v.length; }

// Speed of `v` along the direction of `lane` at its position.
double along_speed(const VehicleState& v, const net::Lane& lane) {
  if (v.is_bot()) return v.v;
  const double heading = lane.shape.at(v.s).heading;
  return std::max(0.0, v.v * std::cos(wrap_angle(v.pose.heading - heading)));
}

double lookahead(const VehicleState& bot, double friction) {
  const double b = bot.params.b_max * friction;
  return config::kLookaheadBase + bot.v * bot.params.tau + bot.v * bot.v / (2.0 * b);
}

}  // namespace

OrientedBox footprint(const VehicleState& v) { return box_from_front(v.pose, v.length, v.width); }

std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

World::World(std::shared_ptr<const net::RoadNetwork> network, std::uint64_t seed, Weather weather)
    : network_(std::move(network)), rng_(seed), weather_(weather), occupancy_(network_->lanes().size()) {}

VehicleState* World::find(const std::string& id) {
  auto it = vehicles_.find(id);
  return it == vehicles_.end() ? nullptr : &it->second;
}

const VehicleState* World::find(const std::string& id) const {
  auto it = vehicles_.find(id);
  return it == vehicles_.end() ? nullptr : &it->second;
}

void World::rebuild_occupancy() {
  for (auto& lane : occupancy_) lane.clear();
  for (auto& [id, v] : vehicles_) {
    if (v.on_lane && v.lane != net::kNoIndex) occupancy_[v.lane].push_back(&v);
  }
}

void World::occupy(VehicleState& v, std::size_t lane, bool on_lane) {
  const bool was = v.on_lane && v.lane != net::kNoIndex;
  const bool now = on_lane && lane != net::kNoIndex;
  if (was && now && v.lane == lane) return;
  if (was) {
    auto& list = occupancy_[v.lane];
    list.erase(std::find(list.begin(), list.end(), &v));
  }
  if (now) occupancy_[lane].push_back(&v);
  v.lane = lane;
  v.on_lane = on_lane;
}

void World::add_vehicle(VehicleState v) {
  remove_vehicle(v.id);
  const std::string id = v.id;
  const std::size_t lane = v.lane;
  const bool on_lane = v.is_bot();
  v.on_lane = false;
  v.lane = net::kNoIndex;
  auto& stored = vehicles_.emplace(id, std::move(v)).first->second;
  if (stored.is_bot()) {
    const net::Lane& l = network_->lanes().at(lane);
    stored.s = std::clamp(stored.s, 0.0, l.length());
    stored.pose = l.shape.at(stored.s);
    stored.lateral = 0.0;
    if (!l.is_internal()) {
      auto it = std::find(stored.route.begin(), stored.route.end(), l.edge_index);
      stored.route_pos = it == stored.route.end() ? 0 : static_cast<std::size_t>(it - stored.route.begin());
    }
    occupy(stored, lane, on_lane);
  } else {
    project_on_lanes(stored);
  }
}

void World::remove_vehicle(const std::string& id) {
  auto it = vehicles_.find(id);
  if (it == vehicles_.end()) return;
  occupy(it->second, net::kNoIndex, false);
  vehicles_.erase(it);
}

void World::add_flow(Flow f) { flows_.push_back(std::move(f)); }

std::optional<net::LaneLink> World::route_link(std::size_t lane, const VehicleState& v, std::size_t route_pos) const {
  const net::Lane& l = network_->lanes()[lane];
  if (l.is_internal()) return l.next.empty() ? std::nullopt : std::optional(l.next.front());
  if (route_pos + 1 >= v.route.size()) return std::nullopt;
  auto conn = network_->connection_towards(lane, v.route[route_pos + 1]);
  if (!conn) return std::nullopt;
  return net::LaneLink{network_->next_lane(*conn), *conn, true};
}

bool World::route_ends_on(std::size_t lane, const VehicleState& v, std::size_t route_pos) const {
  return !network_->lanes()[lane].is_internal() && route_pos + 1 >= v.route.size();
}

void World::consider(Search& out, const VehicleState& bot, const LeaderInfo& info, bool vehicle) const {
  const double v = safe_speed(info.v, std::max(0.0, info.gap), bot.v, bot.params, weather_.friction);
  if (vehicle && (!out.nearest_vehicle || info.gap < out.nearest_vehicle->gap)) out.nearest_vehicle = info;
  if (v < out.restrictive_speed || (v == out.restrictive_speed && info.gap < out.restrictive.info.gap)) {
    out.restrictive_speed = v;
    out.restrictive = {info, vehicle};
  }
}

bool World::foe_held_by_signal(const VehicleState& foe, const net::LaneLink& link) const {
  if (!link.stop_line || foe.ignore_red) return false;
  const net::Connection& c = network_->connections()[link.connection];
  if (!c.signal) return false;
  const net::SignalColor state = net::signal_state(*network_, link.connection, time());
  if (state == net::SignalColor::Red) return true;
  return state == net::SignalColor::Yellow && foe.stop_latch == link.connection;
}

void World::merge_foes(Search& out, const VehicleState& bot, const PathStep& step, std::size_t own_prev) const {
  const auto& lanes = network_->lanes();
  const double d_own = step.offset;
  // (lane, distance from its end to the merge, link leaving it towards the merge)
  struct Frontier {
    std::size_t lane;
    double tail;
    net::LaneLink link;
  };
  std::vector<Frontier> frontier;
  for (const net::LaneLink& p : lanes[step.lane].prev) {
    if (p.lane != own_prev) frontier.push_back({p.lane, 0.0, {step.lane, p.connection, p.stop_line}});
  }
  for (int depth = 0; depth < kMergeDepth && !frontier.empty(); ++depth) {
    std::vector<Frontier> deeper;
    for (const Frontier& f : frontier) {
      const net::Lane& lane = lanes[f.lane];
      for (const VehicleState* foe : occupancy_[f.lane]) {
        if (foe == &bot) continue;
        const double d_foe = f.tail + lane.length() - foe->s;
        if (d_foe < 0.0 || d_foe > d_own) continue;
        if (d_foe == d_own && foe->id > bot.id) continue;
        if (foe->is_bot()) {
          auto link = route_link(f.lane, *foe, foe->route_pos);
          if (!link || link->lane != f.link.lane) continue;
        } else if (depth > 0) {
          continue;
        }
        if (foe_held_by_signal(*foe, f.link)) continue;
        const double gap = d_own - d_foe - foe->length - kMinGap;
        if (gap >= 0.0) {
          consider(out, bot, {gap, along_speed(*foe, lane)}, true);
        } else {
          consider(out, bot, {std::max(0.0, d_own - kMergeStopBack), 0.0}, false);
        }
      }
      for (const net::LaneLink& p : lane.prev) {
        deeper.push_back({p.lane, f.tail + lane.length(), {f.lane, p.connection, p.stop_line}});
      }
    }
    frontier = std::move(deeper);
  }
}

void World::diverging(Search& out, const VehicleState& bot, std::size_t from_lane, std::size_t own_lane, double offset,
                      double min_back) const {
  const auto& lanes = network_->lanes();
  for (const net::LaneLink& sib : lanes[from_lane].next) {
    if (sib.lane == own_lane) continue;
    const net::Lane& sl = lanes[sib.lane];
    const auto check = [&](const VehicleState& o, double back_on_sibling) {
      if (&o == &bot || back_on_sibling >= kDivergeClearance || back_on_sibling < min_back) return;
      consider(out, bot, {offset + back_on_sibling - kMinGap, along_speed(o, sl)}, true);
    };
    for (const VehicleState* o : occupancy_[sib.lane]) check(*o, back(*o));
    for (const net::LaneLink& nx : sl.next) {
      for (const VehicleState* o : occupancy_[nx.lane]) {
        if (back(*o) < 0.0) check(*o, sl.length() + back(*o));
      }
    }
  }
}

World::Search World::search(const VehicleState& bot) const {
  Search out;
  const auto& lanes = network_->lanes();
  const double horizon = lookahead(bot, weather_.friction);
  const double t = time();

  std::vector<PathStep> path{{bot.lane, -bot.s, bot.route_pos, std::nullopt}};
  for (;;) {
    const PathStep& cur = path.back();
    const double end = cur.offset + lanes[cur.lane].length();
    if (end > horizon) break;
    auto link = route_link(cur.lane, bot, cur.route_pos);
    if (!link) {
      if (!route_ends_on(cur.lane, bot, cur.route_pos)) consider(out, bot, {end, 0.0}, false);
      break;
    }
    const std::size_t pos = lanes[link->lane].is_internal() ? cur.route_pos : cur.route_pos + 1;
    path.push_back({link->lane, end, pos, link});
  }

  // Current lane: nearest vehicle ahead.
  for (const VehicleState* o : occupancy_[bot.lane]) {
    if (o == &bot) continue;
    if (o->s < bot.s || (o->s == bot.s && o->id < bot.id)) continue;
    consider(out, bot, {back(*o) - bot.s - kMinGap, along_speed(*o, lanes[bot.lane])}, true);
  }
  // Vehicles on a sibling lane that left the same origin just ahead of us.
  if (lanes[bot.lane].prev.size() == 1) {
    diverging(out, bot, lanes[bot.lane].prev.front().lane, bot.lane, -bot.s, bot.s);
  }

  for (std::size_t k = 1; k < path.size(); ++k) {
    const PathStep& step = path[k];
    const net::LaneLink& link = *step.via;
    const net::Connection& conn = network_->connections()[link.connection];
    if (link.stop_line && conn.signal && !bot.ignore_red) {
      const net::SignalColor state = net::signal_state(*network_, link.connection, t);
      if (state == net::SignalColor::Red || (state == net::SignalColor::Yellow && bot.stop_latch == link.connection)) {
        consider(out, bot, {step.offset, 0.0}, false);
      } else if (state == net::SignalColor::Yellow) {
        if (auto virt = red_light_as_leader(bot.v, step.offset, state, bot.params, weather_.friction)) {
          consider(out, bot, *virt, false);
          if (!out.latch) out.latch = link.connection;
        }
      }
    }
    for (const VehicleState* o : occupancy_[step.lane]) {
      if (o == &bot) continue;
      consider(out, bot, {step.offset + back(*o) - kMinGap, along_speed(*o, lanes[step.lane])}, true);
    }
    diverging(out, bot, path[k - 1].lane, step.lane, step.offset, -kInf);
    if (bot.yield_at_merges && lanes[step.lane].prev.size() > 1) merge_foes(out, bot, step, path[k - 1].lane);
  }
  return out;
}

std::optional<LaneChangeTarget> World::target_lane(const VehicleState& bot, std::size_t lane) const {
  const auto& lanes = network_->lanes();
  const net::Lane& cur = lanes[bot.lane];
  const net::Lane& tl = lanes[lane];
  const double s = std::clamp(bot.s * tl.length() / cur.length(), 0.0, tl.length());
  LaneChangeTarget target;
  std::optional<LeaderInfo> follower;
  const VehicleState* follower_vehicle = nullptr;
  for (const VehicleState* o : occupancy_[lane]) {
    if (o->s >= s) {
      const double gap = back(*o) - s - kMinGap;
      if (gap < target.leader.gap) target.leader = {gap, along_speed(*o, tl)};
    } else {
      const double gap = s - bot.length - o->s - kMinGap;
      if (!follower || gap < follower->gap) {
        follower = LeaderInfo{gap, along_speed(*o, tl)};
        follower_vehicle = o;
      }
    }
  }
  for (const net::LaneLink& nx : tl.next) {
    for (const VehicleState* o : occupancy_[nx.lane]) {
      const double gap = tl.length() - s + back(*o) - kMinGap;
      if (gap < target.leader.gap) target.leader = {gap, along_speed(*o, lanes[nx.lane])};
    }
  }
  for (const net::LaneLink& pv : tl.prev) {
    const net::Lane& pl = lanes[pv.lane];
    for (const VehicleState* o : occupancy_[pv.lane]) {
      const double gap = s - bot.length + pl.length() - o->s - kMinGap;
      if (!follower || gap < follower->gap) {
        follower = LeaderInfo{gap, along_speed(*o, pl)};
        follower_vehicle = o;
      }
    }
  }
  target.follower = follower;
  if (follower_vehicle && follower_vehicle->is_bot()) target.follower_params = follower_vehicle->params;
  if (auto next = bot.next_route_edge()) target.serves_route = network_->connection_towards(lane, *next).has_value();
  return target;
}

LaneChange World::route_requirement(const VehicleState& bot) const {
  auto next = bot.next_route_edge();
  if (!next || network_->connection_towards(bot.lane, *next)) return LaneChange::Stay;
  const auto& lanes = network_->lanes();
  const net::Edge& edge = network_->edges()[lanes[bot.lane].edge_index];
  const int own = lanes[bot.lane].index;
  int best = -1;
  for (std::size_t l : edge.lanes) {
    if (!network_->connection_towards(l, *next)) continue;
    const int idx = lanes[l].index;
    if (best < 0 || std::abs(idx - own) < std::abs(best - own)) best = idx;
  }
  if (best < 0) return LaneChange::Stay;
  return best > own ? LaneChange::Left : LaneChange::Right;
}

void World::move_to_lane(VehicleState& bot, std::size_t lane, double s) {
  occupy(bot, lane, true);
  bot.s = std::clamp(s, 0.0, network_->lanes()[lane].length());
  bot.pose = network_->lanes()[lane].shape.at(bot.s);
  bot.lateral = 0.0;
}

void World::update_lane_change(VehicleState& bot, const Search& found) {
  const auto& lanes = network_->lanes();
  const net::Lane& cur = lanes[bot.lane];
  const auto off = [&] {
    bot.indicator = Indicator::Off;
    bot.indicator_steps = 0;
  };
  if (cur.is_internal() || bot.speed_override || bot.s < config::kLaneChangeMinS) return off();
  const net::Edge& edge = network_->edges()[cur.edge_index];
  const auto neighbour = [&](int index) -> std::optional<std::size_t> {
    if (index < 0 || index >= static_cast<int>(edge.lanes.size())) return std::nullopt;
    return edge.lanes[static_cast<std::size_t>(index)];
  };
  const auto left = neighbour(cur.index + 1);
  const auto right = neighbour(cur.index - 1);
  if (!left && !right) return off();

  LaneChangeInputs in;
  in.v = bot.v;
  in.route_requires = route_requirement(bot);
  const bool slow_leader = found.nearest_vehicle && found.nearest_vehicle->v < config::kSlowLeaderFraction * bot.params.v_desired;
  if (in.route_requires == LaneChange::Stay && !slow_leader) return off();
  in.current_leader = found.nearest_vehicle;
  if (left) in.left = target_lane(bot, *left);
  if (right) in.right = target_lane(bot, *right);

  const LaneChange wish = lane_change_request(in, bot.params);
  if (wish == LaneChange::Stay) return off();
  const Indicator signal = wish == LaneChange::Left ? Indicator::Left : Indicator::Right;
  if (bot.indicator != signal) {
    bot.indicator = signal;
    bot.indicator_steps = 1;
    return;
  }
  ++bot.indicator_steps;
  if (bot.indicator_steps <= config::kIndicatorLeadSteps) return;
  const auto& target = wish == LaneChange::Left ? in.left : in.right;
  if (!target || !lane_change_safe(*target, bot.v, bot.params, weather_.friction)) return;
  const std::size_t lane = wish == LaneChange::Left ? *left : *right;
  move_to_lane(bot, lane, bot.s * lanes[lane].length() / cur.length());
  off();
}

bool World::force_lane_change(const std::string& id, LaneChange dir) {
  VehicleState* bot = find(id);
  if (!bot || !bot->is_bot() || dir == LaneChange::Stay) return false;
  const auto& lanes = network_->lanes();
  const net::Lane& cur = lanes[bot->lane];
  if (cur.is_internal()) return false;
  const net::Edge& edge = network_->edges()[cur.edge_index];
  const int index = cur.index + (dir == LaneChange::Left ? 1 : -1);
  if (index < 0 || index >= static_cast<int>(edge.lanes.size())) return false;
  const std::size_t lane = edge.lanes[static_cast<std::size_t>(index)];
  move_to_lane(*bot, lane, bot->s * lanes[lane].length() / cur.length());
  bot->indicator = Indicator::Off;
  bot->indicator_steps = 0;
  return true;
}

bool World::advance_bot(VehicleState& bot, double v_new) {
  const auto& lanes = network_->lanes();
  const double t = time();
  double s = bot.s + v_new * kDt;
  std::size_t lane = bot.lane;
  while (s > lanes[lane].length()) {
    auto link = route_link(lane, bot, bot.route_pos);
    if (!link) {
      if (route_ends_on(lane, bot, bot.route_pos)) return false;
      s = lanes[lane].length();
      v_new = 0.0;
      break;
    }
    const net::Connection& conn = network_->connections()[link->connection];
    if (link->stop_line && conn.signal && net::signal_state(*network_, link->connection, t) == net::SignalColor::Red) {
      ++red_light_violations_;
    }
    if (bot.stop_latch == link->connection) bot.stop_latch.reset();
    s -= lanes[lane].length();
    lane = link->lane;
    if (!lanes[lane].is_internal()) ++bot.route_pos;
  }
  occupy(bot, lane, true);
  bot.s = s;
  bot.pose = lanes[lane].shape.at(s);
  bot.a = (v_new - bot.v) / kDt;
  bot.v = v_new;
  bot.brake_light = bot.a < -config::kBrakeLightDecel;
  return true;
}

void World::advance_agent(VehicleState& agent) {
  if (agent.path) {
    AgentPath& p = *agent.path;
    const double v_old = agent.v;
    p.s = std::min(p.s + p.speed * kDt, p.path.length());
    const bool moving = p.s < p.path.length();
    agent.pose = p.path.at(p.s);
    agent.v = moving ? p.speed : 0.0;
    agent.a = (agent.v - v_old) / kDt;
  }
  project_on_lanes(agent);
}

void World::project_on_lanes(VehicleState& v) {
  const auto& lanes = network_->lanes();
  const bool ego = v.kind == AgentKind::EgoCar;
  std::size_t best = net::kNoIndex;
  Projection best_p;
  for (std::size_t i = 0; i < lanes.size(); ++i) {
    const Projection p = lanes[i].shape.project(v.pose.position());
    if (ego && std::abs(wrap_angle(v.pose.heading - p.heading)) >= kPi / 2.0) continue;
    if (best == net::kNoIndex || p.distance < best_p.distance) {
      best = i;
      best_p = p;
    }
  }
  bool on = false;
  if (best != net::kNoIndex) {
    const double dh = std::abs(wrap_angle(v.pose.heading - best_p.heading));
    on = best_p.distance <= (lanes[best].width + v.width) / 2.0 && (!ego || dh < kPi / 4.0);
    v.s = best_p.s;
    v.lateral = best_p.lateral;
  }
  occupy(v, best, on);
}

bool World::entry_is_free(std::size_t lane, double s, double v0, double length, const DriverParams& p) const {
  const auto& lanes = network_->lanes();
  const net::Lane& l = lanes[lane];
  const auto leader_ok = [&](double gap, double v_l) {
    return gap >= 0.0 && safe_speed(v_l, gap, v0, p, weather_.friction) >= v0;
  };
  const auto follower_ok = [&](double gap, const VehicleState& f, double v_f) {
    const DriverParams fp = f.is_bot() ? f.params : DriverParams{};
    return gap >= 0.0 && safe_speed(v0, gap, v_f, fp, weather_.friction) >= v_f - fp.b_max * weather_.friction * kDt;
  };
  for (const VehicleState* o : occupancy_[lane]) {
    const double v_o = along_speed(*o, l);
    if (o->s >= s) {
      if (!leader_ok(back(*o) - s - kMinGap, v_o)) return false;
    } else if (!follower_ok(s - length - o->s - kMinGap, *o, v_o)) {
      return false;
    }
  }
  for (const net::LaneLink& nx : l.next) {
    for (const VehicleState* o : occupancy_[nx.lane]) {
      if (!leader_ok(l.length() - s + back(*o) - kMinGap, along_speed(*o, lanes[nx.lane]))) return false;
    }
  }
  for (const net::LaneLink& pv : l.prev) {
    const net::Lane& pl = lanes[pv.lane];
    for (const VehicleState* o : occupancy_[pv.lane]) {
      if (!follower_ok(s - length + pl.length() - o->s - kMinGap, *o, along_speed(*o, pl))) return false;
    }
  }
  return true;
}

bool World::try_spawn_bot(const std::string& id, std::size_t lane, double s, const std::vector<std::size_t>& route,
                          double v0, const DriverParams& params) {
  const auto& lanes = network_->lanes();
  if (lane >= lanes.size() || lanes[lane].is_internal() || vehicles_.contains(id)) return false;
  if (route.empty() || route.front() != lanes[lane].edge_index) return false;
  if (s < config::kCarLength || s > lanes[lane].length()) return false;
  if (!entry_is_free(lane, s, v0, config::kCarLength, params)) return false;
  VehicleState v;
  v.id = id;
  v.kind = AgentKind::BotCar;
  v.lane = lane;
  v.s = s;
  v.v = v0;
  v.route = route;
  v.params = params;
  add_vehicle(std::move(v));
  return true;
}

void World::run_flows() {
  for (Flow& f : flows_) {
    const double u = rng_.uniform01();
    if (u >= f.rate * kDt) continue;
    const auto& edge = network_->edges()[f.entry_edge];
    const std::size_t lane = edge.lanes.front();
    const double s = std::min(config::kCarLength, network_->lanes()[lane].length());
    // Arrivals that find the entry occupied are dropped.
    if (try_spawn_bot(f.id + "." + std::to_string(f.spawned), lane, s, f.route, f.v0, f.params)) ++f.spawned;
  }
}

std::vector<CollisionEvent> World::step() {
  std::vector<std::string> leaving;
  for (auto& [id, v] : vehicles_) {
    switch (v.kind) {
      case AgentKind::BotCar: {
        Search found = search(v);
        const std::size_t lane_before = v.lane;
        update_lane_change(v, found);
        if (v.lane != lane_before) found = search(v);
        if (found.latch) v.stop_latch = found.latch;
        if (v.stop_latch &&
            net::signal_state(*network_, *v.stop_latch, time()) == net::SignalColor::Green) {
          v.stop_latch.reset();
        }
        double v_new = 0.0;
        if (v.speed_override) {
          const SpeedOverride& o = *v.speed_override;
          if (o.rate <= 0.0) {
            v_new = o.target;
          } else if (v.v > o.target) {
            v_new = std::max(o.target, v.v - o.rate * kDt);
          } else {
            v_new = std::min(o.target, v.v + o.rate * kDt);
          }
        } else {
          v_new = bot_step_speed(v.v, network_->lanes()[v.lane].speed_limit, found.restrictive.info, v.params,
                                 weather_.friction, rng_);
        }
        if (!advance_bot(v, v_new)) leaving.push_back(id);
        break;
      }
      case AgentKind::EgoCar: {
        VehicleState next = ego_step(v, ego_controls_, weather_);
        v.pose = next.pose;
        v.v = next.v;
        v.a = next.a;
        v.controls = next.controls;
        v.brake_light = next.brake_light;
        project_on_lanes(v);
        break;
      }
      case AgentKind::Pedestrian:
      case AgentKind::Deer:
        advance_agent(v);
        break;
    }
  }
  for (const std::string& id : leaving) remove_vehicle(id);
  run_flows();
  ++step_index_;
  return detect_collisions();
}

std::set<std::pair<std::string, std::string>> World::overlapping_pairs() const {
  struct Item {
    OrientedBox box;
    double radius;
    const std::string* id;
  };
  std::vector<Item> items;
  items.reserve(vehicles_.size());
  double max_radius = 0.0;
  for (const auto& [id, v] : vehicles_) {
    const OrientedBox box = footprint(v);
    const double r = std::hypot(box.half_length, box.half_width);
    max_radius = std::max(max_radius, r);
    items.push_back({box, r, &id});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    return a.box.center.x < b.box.center.x || (a.box.center.x == b.box.center.x && *a.id < *b.id);
  });
  std::set<std::pair<std::string, std::string>> out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    for (std::size_t j = i + 1; j < items.size(); ++j) {
      if (items[j].box.center.x - items[i].box.center.x > items[i].radius + max_radius + 1e-6) break;
      if (!overlaps(items[i].box, items[j].box)) continue;
      const std::string& a = *items[i].id;
      const std::string& b = *items[j].id;
      out.emplace(std::min(a, b), std::max(a, b));
    }
  }
  return out;
}

std::vector<CollisionEvent> World::detect_collisions() {
  auto now = overlapping_pairs();
  std::vector<CollisionEvent> fresh;
  for (const auto& pair : now) {
    if (contacts_.contains(pair)) continue;
    const VehicleState& a = vehicles_.at(pair.first);
    const VehicleState& b = vehicles_.at(pair.second);
    const Vec2 ca = footprint(a).center;
    const Vec2 cb = footprint(b).center;
    fresh.push_back({time(), step_index_, pair.first, pair.second, (ca + cb) * 0.5});
  }
  contacts_ = std::move(now);
  collisions_.insert(collisions_.end(), fresh.begin(), fresh.end());
  return fresh;
}

std::vector<std::size_t> random_route(const net::RoadNetwork& network, std::size_t start_edge, std::size_t length,
                                      Rng& rng) {
  const auto& edges = network.edges();
  std::vector<std::size_t> out{start_edge};
  while (out.size() < length) {
    const net::Edge& cur = edges[out.back()];
    std::vector<std::size_t> options;
    for (std::size_t lane : cur.lanes) {
      for (std::size_t c : network.lanes()[lane].outgoing) {
        const std::size_t e = network.lanes()[network.connections()[c].to_lane].edge_index;
        if (edges[e].to_node == cur.from_node && edges.size() > 1) continue;
        if (std::find(options.begin(), options.end(), e) == options.end()) options.push_back(e);
      }
    }
    if (options.empty()) break;
    std::sort(options.begin(), options.end());
    out.push_back(options[rng.below(options.size())]);
  }
  return out;
}

std::string serialize(const World& world) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["step_index"] = world.step_index();
  doc["time"] = world.time();
  doc["rng"] = world.rng().state();
  doc["friction"] = world.weather().friction;
  doc["visibility"] = world.weather().visibility;
  doc["red_light_violations"] = world.red_light_violations();
  ordered_json vehicles = ordered_json::array();
  const auto& lanes = world.network().lanes();
  for (const auto& [id, v] : world.vehicles()) {
    ordered_json j;
    j["id"] = id;
    j["kind"] = to_string(v.kind);
    j["lane"] = v.lane == net::kNoIndex ? std::string() : lanes[v.lane].id;
    j["s"] = v.s;
    j["lateral"] = v.lateral;
    j["on_lane"] = v.on_lane;
    j["x"] = v.pose.x;
    j["y"] = v.pose.y;
    j["heading"] = v.pose.heading;
    j["v"] = v.v;
    j["a"] = v.a;
    j["length"] = v.length;
    j["width"] = v.width;
    ordered_json route = ordered_json::array();
    for (std::size_t i = v.route_pos; i < v.route.size(); ++i) route.push_back(world.network().edges()[v.route[i]].id);
    j["route"] = route;
    j["controls"] = {{"throttle", v.controls.throttle},
                     {"brake", v.controls.brake},
                     {"steer", v.controls.steer},
                     {"gear", to_string(v.controls.gear)}};
    j["brake_light"] = v.brake_light;
    j["indicator"] = to_string(v.indicator);
    j["indicator_steps"] = v.indicator_steps;
    j["stop_latch"] = v.stop_latch ? static_cast<std::int64_t>(*v.stop_latch) : -1;
    if (v.path) j["path_s"] = v.path->s;
    vehicles.push_back(std::move(j));
  }
  doc["vehicles"] = std::move(vehicles);
  ordered_json signals = ordered_json::array();
  for (const auto& program : world.network().signals()) {
    std::string states;
    for (std::size_t l = 0; l < program.link_count(); ++l) {
      states += to_string(net::signal_state(program, l, world.time())).front();
    }
    signals.push_back({{"id", program.id}, {"state", states}});
  }
  doc["signals"] = std::move(signals);
  ordered_json collisions = ordered_json::array();
  for (const auto& c : world.collisions()) {
    collisions.push_back({{"time", c.time}, {"a", c.id_a}, {"b", c.id_b}, {"x", c.position.x}, {"y", c.position.y}});
  }
  doc["collisions"] = std::move(collisions);
  return doc.dump();
}

}  // namespace precrash::traffic
