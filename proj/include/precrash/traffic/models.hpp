#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>

#include "precrash/road_network.hpp"
#include "precrash/traffic/vehicle.hpp"

namespace precrash::traffic {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// The single random stream of a world. Bit-reproducible across platforms:
/// mt19937_64 is fully specified and the conversions below avoid the
/// implementation-defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  /// Uniform in [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform integer in [0, n), rejection sampled; n > 0.
  std::uint64_t below(std::uint64_t n);

  std::string state() const;
  bool operator==(const Rng&) const = default;

 private:
  std::mt19937_64 engine_;
};

/// Gap (already net of the minimum gap) and speed of whatever the follower
/// has to respect: a vehicle, a stop line or a blocked lane end.
struct LeaderInfo {
  double gap = kInf;
  double v = 0.0;

  bool exists() const { return gap != kInf; }
};

/// Krauss safe speed, with b = b_max * friction. Infinite gap yields infinity.
double safe_speed(double leader_v, double gap, double follower_v, const DriverParams& p, double friction = 1.0);

/// One Krauss update: acceleration-, limit- and safety-bounded speed, minus
/// a dawdling term that always consumes one draw from `rng`.
double bot_step_speed(double v, double lane_speed_limit, const LeaderInfo& leader, const DriverParams& p,
                      double friction, Rng& rng, double dt = config::kDt);

/// Virtual standing leader for a signal `distance` metres ahead. Yellow only
/// holds a vehicle that can still stop comfortably.
std::optional<LeaderInfo> red_light_as_leader(double v, double distance, net::SignalColor state,
                                              const DriverParams& p, double friction = 1.0);

enum class LaneChange { Stay, Left, Right };

struct LaneChangeTarget {
  LeaderInfo leader;
  std::optional<LeaderInfo> follower;  // gap behind us; `v` = follower speed
  DriverParams follower_params;
  bool serves_route = true;
};

struct LaneChangeInputs {
  double v = 0.0;
  std::optional<LeaderInfo> current_leader;  // nearest real vehicle ahead
  std::optional<LaneChangeTarget> left;
  std::optional<LaneChangeTarget> right;
  LaneChange route_requires = LaneChange::Stay;
};

/// Direction the driver wants to move, ignoring gap acceptance.
LaneChange lane_change_request(const LaneChangeInputs& in, const DriverParams& p);

/// Gap acceptance on one target lane.
bool lane_change_safe(const LaneChangeTarget& target, double v, const DriverParams& p, double friction = 1.0,
                      double dt = config::kDt);

/// Request filtered by gap acceptance.
LaneChange lane_change_decision(const LaneChangeInputs& in, const DriverParams& p, double friction = 1.0);

/// Kinematic bicycle update of the ego vehicle (pose, v, a); lane fields are
/// left for the caller to re-project.
VehicleState ego_step(const VehicleState& ego, const Controls& c, const Weather& weather,
                      double dt = config::kDt);

}  // namespace precrash::traffic
