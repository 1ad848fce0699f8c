#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "precrash/road_network.hpp"
#include "precrash/traffic/models.hpp"
#include "precrash/traffic/vehicle.hpp"

namespace precrash::traffic {

struct CollisionEvent {
  double time = 0.0;
  std::int64_t step_index = 0;
  std::string id_a;  // id_a < id_b
  std::string id_b;
  Vec2 position;
};

/// Poisson-like source of bots entering lane 0 of an edge.
struct Flow {
  std::string id;
  std::size_t entry_edge = 0;
  std::vector<std::size_t> route;  // starts with entry_edge
  double rate = 0.0;               // vehicles per second
  double v0 = 0.0;
  DriverParams params;
  std::int64_t spawned = 0;
};

/// One obstacle a bot must respect, as seen along its planned path.
struct Obstacle {
  LeaderInfo info;
  bool vehicle = false;  // false for stop lines and blocked lane ends
};

/// The mutable simulation state. Owned by a single stepping context.
class World {
 public:
  World(std::shared_ptr<const net::RoadNetwork> network, std::uint64_t seed, Weather weather = {});

  const net::RoadNetwork& network() const { return *network_; }
  std::shared_ptr<const net::RoadNetwork> network_ptr() const { return network_; }

  std::int64_t step_index() const { return step_index_; }
  /// Always step_index * dt, never an accumulated sum.
  double time() const { return static_cast<double>(step_index_) * config::kDt; }

  const std::map<std::string, VehicleState>& vehicles() const { return vehicles_; }
  VehicleState* find(const std::string& id);
  const VehicleState* find(const std::string& id) const;

  const Weather& weather() const { return weather_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }

  /// Inserts a vehicle and derives its pose (bots) or lane projection
  /// (ego, agents). Existing ids are replaced.
  void add_vehicle(VehicleState v);
  void remove_vehicle(const std::string& id);
  void add_flow(Flow f);
  const std::vector<Flow>& flows() const { return flows_; }

  /// Controls used by the ego on the next step (zero-order hold).
  void set_ego_controls(const Controls& c) { ego_controls_ = c; }
  const Controls& ego_controls() const { return ego_controls_; }

  /// Advances one dt: lane changes, Krauss speeds, integration, ego
  /// kinematics, agents, flows, collision detection. Returns the collisions
  /// first detected during this step.
  std::vector<CollisionEvent> step();

  /// Immediate lateral move of a bot, bypassing gap acceptance.
  bool force_lane_change(const std::string& id, LaneChange dir);

  /// Inserts a bot with its front at `s` on `lane` if the position is free
  /// and neither it nor its new follower would have to brake beyond b_max.
  /// The route must start with the lane's edge.
  bool try_spawn_bot(const std::string& id, std::size_t lane, double s, const std::vector<std::size_t>& route,
                     double v0, const DriverParams& params);

  const std::vector<CollisionEvent>& collisions() const { return collisions_; }
  std::int64_t red_light_violations() const { return red_light_violations_; }

  /// Pairs whose footprints currently overlap, ordered.
  std::set<std::pair<std::string, std::string>> overlapping_pairs() const;
  /// Reports pairs that overlap now but did not on the previous call.
  std::vector<CollisionEvent> detect_collisions();

  /// Most restrictive obstacle ahead of a bot at the current instant.
  Obstacle leader_of(const VehicleState& bot) const { return search(bot).restrictive; }

  /// Projects a free-moving body (ego, agent) onto the nearest lane.
  void project_on_lanes(VehicleState& v);

 private:
  struct PathStep {
    std::size_t lane;
    double offset;  // distance from the bot's front to the lane start (<= 0 for the current lane)
    std::size_t route_pos;
    std::optional<net::LaneLink> via;  // link used to enter `lane`
  };
  struct Search {
    Obstacle restrictive;
    double restrictive_speed = kInf;
    std::optional<LeaderInfo> nearest_vehicle;
    std::optional<std::size_t> latch;  // yellow stop the bot commits to
  };

  void occupy(VehicleState& v, std::size_t lane, bool on_lane);
  void rebuild_occupancy();
  std::optional<net::LaneLink> route_link(std::size_t lane, const VehicleState& v, std::size_t route_pos) const;
  bool route_ends_on(std::size_t lane, const VehicleState& v, std::size_t route_pos) const;
  Search search(const VehicleState& bot) const;
  void consider(Search& out, const VehicleState& bot, const LeaderInfo& info, bool vehicle) const;
  void merge_foes(Search& out, const VehicleState& bot, const PathStep& step, std::size_t own_prev) const;
  void diverging(Search& out, const VehicleState& bot, std::size_t from_lane, std::size_t own_lane, double offset,
                 double min_back) const;
  bool foe_held_by_signal(const VehicleState& foe, const net::LaneLink& link) const;
  std::optional<LaneChangeTarget> target_lane(const VehicleState& bot, std::size_t lane) const;
  LaneChange route_requirement(const VehicleState& bot) const;
  void move_to_lane(VehicleState& bot, std::size_t lane, double s);
  void update_lane_change(VehicleState& bot, const Search& found);
  bool advance_bot(VehicleState& bot, double v_new);
  void advance_agent(VehicleState& agent);
  void run_flows();
  bool entry_is_free(std::size_t lane, double s, double v0, double length, const DriverParams& p) const;

  std::shared_ptr<const net::RoadNetwork> network_;
  std::int64_t step_index_ = 0;
  std::map<std::string, VehicleState> vehicles_;
  Rng rng_;
  Weather weather_;
  Controls ego_controls_;
  std::vector<Flow> flows_;
  std::vector<CollisionEvent> collisions_;
  std::set<std::pair<std::string, std::string>> contacts_;
  std::int64_t red_light_violations_ = 0;
  std::vector<std::vector<VehicleState*>> occupancy_;  // per lane, unordered
};

/// Random walk over the edge graph without immediate U-turns, starting at
/// `start_edge`; `length` edges at most (stops early at dead ends).
std::vector<std::size_t> random_route(const net::RoadNetwork& network, std::size_t start_edge, std::size_t length,
                                      Rng& rng);

/// Deep, deterministic JSON text of the world (time, rng state, vehicles,
/// signal states, collisions); used for snapshots and determinism hashing.
std::string serialize(const World& world);

/// 64-bit FNV-1a over a byte string.
std::uint64_t fnv1a(std::string_view bytes);

/// Closed-overlap footprint of a vehicle.
OrientedBox footprint(const VehicleState& v);

}  // namespace precrash::traffic
