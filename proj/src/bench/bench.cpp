#include "precrash/bench/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace precrash::bench {

using traffic::World;

namespace {

constexpr std::size_t kRouteEdges = 400;
constexpr std::size_t kAttemptsPerBot = 200;
constexpr double kPursuitLookahead = 8.0;  // m
constexpr double kSpeedGain = 0.5;         // pedal per m/s of speed error

std::string bot_id(std::size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "bot_%04zu", i);
  return buf;
}

// Arc-length point `ahead` metres past the ego's projection, following the
// first successor at lane ends.
Vec2 pursuit_point(const net::RoadNetwork& net, std::size_t lane, double s, double ahead) {
  double remaining = s + ahead;
  for (int hops = 0; hops < 8; ++hops) {
    const net::Lane& l = net.lanes()[lane];
    if (remaining <= l.length() || l.next.empty()) return l.shape.at(remaining).position();
    remaining -= l.length();
    lane = l.next.front().lane;
  }
  return net.lanes()[lane].shape.at(remaining).position();
}

World make_world(const std::shared_ptr<const net::RoadNetwork>& network, std::size_t count,
                 const BenchOptions& options, std::size_t* placed) {
  World world(network, options.seed);
  if (options.ego_speed_cap) {
    const net::RoadNetwork& net = *network;
    for (std::size_t i = 0; i < net.lanes().size(); ++i) {
      if (net.lanes()[i].is_internal()) continue;
      traffic::VehicleState ego;
      ego.id = "ego";
      ego.kind = traffic::AgentKind::EgoCar;
      ego.pose = net.lanes()[i].shape.at(std::min(20.0, net.lanes()[i].length()));
      world.add_vehicle(ego);
      break;
    }
  }
  *placed = populate(world, count);
  return world;
}

}  // namespace

std::size_t populate(World& world, std::size_t count, const traffic::DriverParams& params) {
  const net::RoadNetwork& net = world.network();
  std::vector<std::size_t> lanes;
  for (std::size_t i = 0; i < net.lanes().size(); ++i) {
    if (!net.lanes()[i].is_internal()) lanes.push_back(i);
  }
  if (lanes.empty()) return 0;
  std::size_t placed = 0;
  std::size_t next_id = 0;
  while (world.find(bot_id(next_id))) ++next_id;
  for (std::size_t attempt = 0; placed < count && attempt < kAttemptsPerBot * count; ++attempt) {
    const std::size_t lane = lanes[world.rng().below(lanes.size())];
    const net::Lane& l = net.lanes()[lane];
    const double lo = traffic::config::kCarLength;
    if (l.length() <= lo + 1.0) continue;
    const double s = lo + world.rng().uniform01() * (l.length() - lo - 1.0);
    const auto route = traffic::random_route(net, l.edge_index, kRouteEdges, world.rng());
    if (world.try_spawn_bot(bot_id(next_id), lane, s, route, 0.0, params)) {
      ++placed;
      ++next_id;
    }
  }
  return placed;
}

traffic::Controls cruise_controls(const World& world, double cap) {
  traffic::Controls c;
  const traffic::VehicleState* ego = world.find("ego");
  if (!ego || ego->lane == net::kNoIndex) return c;
  const net::RoadNetwork& net = world.network();

  const Vec2 target = pursuit_point(net, ego->lane, ego->s, kPursuitLookahead);
  const Vec2 rear{ego->pose.x - ego->ego.wheelbase * std::cos(ego->pose.heading),
                  ego->pose.y - ego->ego.wheelbase * std::sin(ego->pose.heading)};
  const double bearing = std::atan2(target.y - rear.y, target.x - rear.x) - ego->pose.heading;
  const double alpha = std::atan2(std::sin(bearing), std::cos(bearing));
  const double dist = std::max(1.0, distance(target, rear));
  const double wheel = std::atan(2.0 * ego->ego.wheelbase * std::sin(alpha) / dist);
  c.steer = std::clamp(wheel / ego->ego.max_steer, -1.0, 1.0);

  double v_target = cap;
  for (const auto& [id, other] : world.vehicles()) {
    if (&other == ego || other.lane != ego->lane || !other.on_lane || other.s <= ego->s) continue;
    const double gap = other.s - other.length - ego->s - traffic::config::kMinGap;
    v_target = std::min(v_target, traffic::safe_speed(other.v, gap, ego->v, ego->params));
  }
  const double error = v_target - ego->v;
  if (error >= 0.0) {
    c.throttle = std::clamp(kSpeedGain * error, 0.0, 1.0);
  } else {
    c.brake = std::clamp(-kSpeedGain * error, 0.0, 1.0);
  }
  return c;
}

std::vector<BenchResult> run_bench(std::shared_ptr<const net::RoadNetwork> network,
                                   const std::vector<std::size_t>& vehicle_counts, const BenchOptions& options) {
  if (options.steps <= 0 || options.repetitions <= 0 || options.warmup < 0) {
    throw std::invalid_argument("bench: steps and repetitions must be positive");
  }
  for (std::size_t i = 0; i < vehicle_counts.size(); ++i) {
    if (vehicle_counts[i] == 0 || (i > 0 && vehicle_counts[i] <= vehicle_counts[i - 1])) {
      throw std::invalid_argument("bench: vehicle counts must be positive and ascending");
    }
  }
  std::vector<BenchResult> rows;
  for (const std::size_t count : vehicle_counts) {
    BenchResult row;
    row.vehicle_count = count;
    row.total_steps = options.steps;
    std::vector<double> walls;
    for (int rep = 0; rep < options.repetitions; ++rep) {
      std::size_t placed = 0;
      World world = make_world(network, count, options, &placed);
      if (placed < count) row.status = "SpawnSaturation";
      const auto drive = [&] {
        if (options.ego_speed_cap) world.set_ego_controls(cruise_controls(world, *options.ego_speed_cap));
        world.step();
      };
      for (std::int64_t k = 0; k < options.warmup; ++k) drive();
      const auto start = std::chrono::steady_clock::now();
      for (std::int64_t k = 0; k < options.steps; ++k) drive();
      const auto stop = std::chrono::steady_clock::now();
      walls.push_back(std::chrono::duration<double>(stop - start).count());
      row.end_state_hash = traffic::fnv1a(traffic::serialize(world));
    }
    std::sort(walls.begin(), walls.end());
    row.wall_seconds = std::max(walls[walls.size() / 2], 1e-9);
    row.steps_per_sec = static_cast<double>(row.total_steps) / row.wall_seconds;
    row.realtime_ratio = row.steps_per_sec * traffic::config::kDt;
    rows.push_back(row);
  }
  return rows;
}

std::string to_csv(const std::vector<BenchResult>& rows) {
  std::ostringstream out;
  out << "vehicle_count,total_steps,wall_seconds,steps_per_sec,realtime_ratio\n";
  for (const BenchResult& r : rows) {
    out << r.vehicle_count << ',' << r.total_steps << ',' << r.wall_seconds << ',' << r.steps_per_sec << ','
        << r.realtime_ratio << '\n';
  }
  return out.str();
}

}  // namespace precrash::bench
