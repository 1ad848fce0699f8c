#include "precrash/traffic/models.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace precrash::traffic {

std::uint64_t Rng::below(std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
  for (;;) {
    const std::uint64_t x = engine_();
    if (x >= threshold) return x % n;
  }
}

std::string Rng::state() const {
  std::ostringstream out;
  out << engine_;
  return out.str();
}

double safe_speed(double leader_v, double gap, double follower_v, const DriverParams& p, double friction) {
  if (gap == kInf) return kInf;
  const double b = p.b_max * friction;
  const double v = leader_v + (gap - leader_v * p.tau) / ((leader_v + follower_v) / (2.0 * b) + p.tau);
  return std::max(0.0, v);
}

double bot_step_speed(double v, double lane_speed_limit, const LeaderInfo& leader, const DriverParams& p,
                      double friction, Rng& rng, double dt) {
  const double v_safe = safe_speed(leader.v, std::max(0.0, leader.gap), v, p, friction);
  const double v_des = std::min({v + p.a_max * dt, lane_speed_limit, p.v_desired, v_safe});
  const double u = rng.uniform01();
  return std::max(0.0, v_des - p.sigma * p.a_max * dt * u);
}

std::optional<LeaderInfo> red_light_as_leader(double v, double distance, net::SignalColor state,
                                              const DriverParams& p, double friction) {
  switch (state) {
    case net::SignalColor::Green:
      return std::nullopt;
    case net::SignalColor::Red:
      return LeaderInfo{distance, 0.0};
    case net::SignalColor::Yellow:
      if (distance > v * v / (2.0 * p.b_max * friction)) return LeaderInfo{distance, 0.0};
      return std::nullopt;
  }
  return std::nullopt;
}

LaneChange lane_change_request(const LaneChangeInputs& in, const DriverParams& p) {
  if (in.route_requires != LaneChange::Stay) return in.route_requires;
  if (!in.current_leader || in.current_leader->v >= config::kSlowLeaderFraction * p.v_desired) {
    return LaneChange::Stay;
  }
  const auto wants = [&](const std::optional<LaneChangeTarget>& t) {
    return t && t->serves_route && (!t->leader.exists() || t->leader.v > in.current_leader->v);
  };
  if (wants(in.left)) return LaneChange::Left;
  if (wants(in.right)) return LaneChange::Right;
  return LaneChange::Stay;
}

bool lane_change_safe(const LaneChangeTarget& target, double v, const DriverParams& p, double friction,
                      double dt) {
  if (target.leader.gap < std::max(0.0, v * p.tau)) return false;
  if (target.follower) {
    const LeaderInfo& f = *target.follower;
    if (f.gap < 0.0) return false;
    const DriverParams& fp = target.follower_params;
    if (safe_speed(v, f.gap, f.v, fp, friction) < f.v - fp.b_max * dt) return false;
  }
  return true;
}

LaneChange lane_change_decision(const LaneChangeInputs& in, const DriverParams& p, double friction) {
  const LaneChange wish = lane_change_request(in, p);
  if (wish == LaneChange::Stay) return wish;
  const auto& target = wish == LaneChange::Left ? in.left : in.right;
  return target && lane_change_safe(*target, in.v, p, friction) ? wish : LaneChange::Stay;
}

VehicleState ego_step(const VehicleState& ego, const Controls& c, const Weather& weather, double dt) {
  VehicleState out = ego;
  const EgoParams& e = ego.ego;
  const double brake = c.brake * e.b_max * weather.friction;
  double v = ego.v;
  if (c.gear == Gear::D) {
    v = std::clamp(v + (c.throttle * e.a_max - brake) * dt, 0.0, e.v_fwd_max);
  } else {
    // Braking opposes the (backward) motion.
    v = std::clamp(v + (-c.throttle * e.a_max + brake) * dt, -e.v_rev_max, 0.0);
  }
  const double yaw_rate = v / e.wheelbase * std::tan(c.steer * e.max_steer);
  out.pose.x = ego.pose.x + v * std::cos(ego.pose.heading) * dt;
  out.pose.y = ego.pose.y + v * std::sin(ego.pose.heading) * dt;
  out.pose.heading = wrap_angle(ego.pose.heading + yaw_rate * dt);
  out.a = (v - ego.v) / dt;
  out.v = v;
  out.controls = c;
  out.brake_light = c.brake > 0.0;
  return out;
}

}  // namespace precrash::traffic
