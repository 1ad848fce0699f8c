#include "precrash/traffic/vehicle.hpp"

#include <algorithm>
#include <cmath>

namespace precrash::traffic {

std::string_view to_string(AgentKind k) {
  switch (k) {
    case AgentKind::BotCar: return "bot_car";
    case AgentKind::EgoCar: return "ego_car";
    case AgentKind::Pedestrian: return "pedestrian";
    case AgentKind::Deer: return "deer";
  }
  return "bot_car";
}

std::string_view to_string(Gear g) { return g == Gear::D ? "D" : "R"; }

std::string_view to_string(Indicator i) {
  switch (i) {
    case Indicator::Off: return "off";
    case Indicator::Left: return "left";
    case Indicator::Right: return "right";
  }
  return "off";
}

std::optional<AgentKind> agent_kind_from(std::string_view s) {
  for (AgentKind k : {AgentKind::BotCar, AgentKind::EgoCar, AgentKind::Pedestrian, AgentKind::Deer}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

std::optional<Gear> gear_from(std::string_view s) {
  if (s == "D") return Gear::D;
  if (s == "R") return Gear::R;
  return std::nullopt;
}

std::pair<double, double> default_dimensions(AgentKind k) {
  switch (k) {
    case AgentKind::Pedestrian: return {config::kPedestrianLength, config::kPedestrianWidth};
    case AgentKind::Deer: return {config::kDeerLength, config::kDeerWidth};
    default: return {config::kCarLength, config::kCarWidth};
  }
}

Controls Controls::clamped(double throttle, double brake, double steer, Gear gear) {
  const auto fix = [](double x, double lo, double hi) { return std::isnan(x) ? 0.0 : std::clamp(x, lo, hi); };
  return {fix(throttle, 0.0, 1.0), fix(brake, 0.0, 1.0), fix(steer, -1.0, 1.0), gear};
}

}  // namespace precrash::traffic
