#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "precrash/geometry.hpp"
#include "precrash/road_network.hpp"

namespace precrash::traffic {

/// Tunable defaults of the simulation core. Everything that shapes the
/// dynamics lives here.
namespace config {
inline constexpr double kDt = 0.02;  // s, fixed step (50 Hz)
inline constexpr double kMinGap = 2.5;  // m, standstill bumper gap kept by bots
inline constexpr double kCarLength = 4.5;
inline constexpr double kCarWidth = 1.8;
inline constexpr double kPedestrianLength = 0.6;
inline constexpr double kPedestrianWidth = 0.6;
inline constexpr double kDeerLength = 1.5;
inline constexpr double kDeerWidth = 0.6;
inline constexpr double kBrakeLightDecel = 1.0;  // m/s^2, bot brake light threshold
inline constexpr double kIndicatorLeadTime = 1.0;  // s of signalling before a lane change
inline constexpr int kIndicatorLeadSteps = 50;  // kIndicatorLeadTime / kDt
inline constexpr double kSlowLeaderFraction = 0.8;  // of v_desired, triggers overtaking wish
inline constexpr double kLookaheadBase = 50.0;  // m, added to the braking horizon
inline constexpr double kLaneChangeMinS = 7.0;  // m from lane start before changing
}  // namespace config

enum class AgentKind { BotCar, EgoCar, Pedestrian, Deer };
enum class Gear { D, R };
enum class Indicator { Off, Left, Right };

std::string_view to_string(AgentKind k);
std::string_view to_string(Gear g);
std::string_view to_string(Indicator i);
std::optional<AgentKind> agent_kind_from(std::string_view s);
std::optional<Gear> gear_from(std::string_view s);

/// Default footprint (length, width) of a kind.
std::pair<double, double> default_dimensions(AgentKind k);

struct Controls {
  double throttle = 0.0;  // [0, 1]
  double brake = 0.0;     // [0, 1]
  double steer = 0.0;     // [-1, 1], positive = left
  Gear gear = Gear::D;

  /// Ranges are enforced here; NaN inputs become 0.
  static Controls clamped(double throttle, double brake, double steer, Gear gear);
  bool operator==(const Controls&) const = default;
};

/// Krauss car-following parameters of a bot driver.
struct DriverParams {
  double a_max = 2.6;       // m/s^2
  double b_max = 4.5;       // m/s^2, comfortable deceleration
  double tau = 1.0;         // s, reaction time
  double sigma = 0.5;       // dawdling in [0, 1]
  double v_desired = 13.9;  // m/s
};

/// Kinematic bicycle parameters of the ego vehicle.
struct EgoParams {
  double a_max = 3.0;
  double b_max = 8.0;
  double wheelbase = 2.8;
  double max_steer = 0.5;  // rad at steer = 1
  double v_rev_max = 5.0;
  double v_fwd_max = 40.0;
};

struct Weather {
  double friction = 1.0;       // (0, 1], scales deceleration limits
  double visibility = 1000.0;  // m, informational
};

/// Scenario-imposed speed target. `rate` <= 0 means the target applies at once.
struct SpeedOverride {
  double target = 0.0;
  double rate = 0.0;
};

/// Constant-speed motion along a polyline (pedestrians, deer).
struct AgentPath {
  Polyline path;
  double s = 0.0;
  double speed = 0.0;
};

struct VehicleState {
  std::string id;
  AgentKind kind = AgentKind::BotCar;

  // Lane frame. For bots this is authoritative; for ego and agents it is the
  // projection of the pose on the nearest lane.
  std::size_t lane = net::kNoIndex;
  double s = 0.0;  // arc length of the front bumper
  double lateral = 0.0;
  bool on_lane = false;  // counts as an obstacle in `lane` for bots

  Pose pose;  // front bumper centre
  double v = 0.0;
  double a = 0.0;
  double length = config::kCarLength;
  double width = config::kCarWidth;

  std::vector<std::size_t> route;  // edge indices
  std::size_t route_pos = 0;       // index of the current edge in `route`

  Controls controls;
  bool brake_light = false;
  Indicator indicator = Indicator::Off;

  DriverParams params;
  EgoParams ego;

  std::optional<SpeedOverride> speed_override;
  bool ignore_red = false;
  bool yield_at_merges = true;
  int indicator_steps = 0;
  std::optional<std::size_t> stop_latch;  // connection a bot committed to stop at
  std::optional<AgentPath> path;

  bool is_bot() const { return kind == AgentKind::BotCar; }
  std::optional<std::size_t> next_route_edge() const {
    return route_pos + 1 < route.size() ? std::optional(route[route_pos + 1]) : std::nullopt;
  }
};

}  // namespace precrash::traffic
