#include "precrash/scenario/run.hpp"

#include <chrono>
#include <cmath>
#include <ctime>

namespace precrash::scenario {

using datalog::FcdFrame;
using datalog::LogEvent;
using traffic::Controls;
using traffic::World;

namespace {

constexpr double kPredictionStep = 0.05;  // s

template <typename T>
nlohmann::ordered_json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::int64_t grace_steps() { return std::llround(kCollisionGrace / traffic::config::kDt); }

}  // namespace

nlohmann::ordered_json RunOutcome::to_json() const {
  nlohmann::ordered_json j;
  j["scenario_id"] = scenario_id;
  j["collided"] = collided;
  j["ego_collided"] = ego_collided;
  j["collision_time"] = optional_json(collision_time);
  j["collision_parties"] = collision_parties;
  j["min_ttc"] = optional_json(min_ttc);
  j["reaction_time"] = optional_json(reaction_time);
  j["first_trigger_time"] = optional_json(first_trigger_time);
  j["triggers_fired"] = triggers_fired;
  j["mean_ego_speed"] = mean_ego_speed;
  j["reached_goal"] = reached_goal;
  j["duration"] = duration;
  j["end_reason"] = end_reason;
  return j;
}

RunOutcome compute_outcome(const datalog::RunLog& log) {
  if (log.frames.empty()) throw datalog::LogError(datalog::LogError::Kind::EmptyLog, "log has no frames");
  RunOutcome out;
  out.scenario_id = log.header.scenario_id;
  const std::string ego_kind(traffic::to_string(traffic::AgentKind::EgoCar));

  std::optional<std::int64_t> trigger_step;
  for (const LogEvent& e : log.events) {
    if (e.type == "trigger_fired") {
      ++out.triggers_fired;
      if (!trigger_step) {
        trigger_step = e.step_index;
        out.first_trigger_time = e.t;
      }
    } else if (e.type == "collision") {
      const std::string a = e.detail.value("a", "");
      const std::string b = e.detail.value("b", "");
      if (!out.collided) {
        out.collided = true;
        out.collision_time = e.t;
        out.collision_parties = {a, b};
      }
      if (a == kEgoId || b == kEgoId) out.ego_collided = true;
    } else if (e.type == "scenario_end" && out.end_reason.empty()) {
      out.end_reason = e.detail.value("reason", "");
      out.reached_goal = out.end_reason == "goal";
    }
  }

  double speed_sum = 0.0;
  std::size_t ego_frames = 0;
  std::optional<std::int64_t> brake_step;
  std::size_t i = 0;
  while (i < log.frames.size()) {
    std::size_t j = i;
    const FcdFrame* ego = nullptr;
    while (j < log.frames.size() && log.frames[j].step_index == log.frames[i].step_index) {
      if (log.frames[j].kind == ego_kind) ego = &log.frames[j];
      ++j;
    }
    if (ego) {
      speed_sum += std::abs(ego->v);
      ++ego_frames;
      if (trigger_step && !brake_step && ego->step_index >= *trigger_step &&
          ego->brake.value_or(0.0) > kReactionBrakeThreshold) {
        brake_step = ego->step_index;
      }
      for (std::size_t k = i; k < j && ego->lane_id; ++k) {
        const FcdFrame& o = log.frames[k];
        if (&o == ego || o.lane_id != ego->lane_id || o.s <= ego->s) continue;
        const auto kind = traffic::agent_kind_from(o.kind);
        const double length = kind ? traffic::default_dimensions(*kind).first : traffic::config::kCarLength;
        const double gap = o.s - length - ego->s;
        const double closing = ego->v - o.v * std::cos(o.heading - ego->heading);
        if (gap > 0.0 && closing > 0.0) {
          const double ttc = gap / closing;
          if (!out.min_ttc || ttc < *out.min_ttc) out.min_ttc = ttc;
        }
      }
    }
    i = j;
  }
  if (ego_frames) out.mean_ego_speed = speed_sum / static_cast<double>(ego_frames);
  if (brake_step) out.reaction_time = static_cast<double>(*brake_step - *trigger_step) * traffic::config::kDt;
  out.duration = log.frames.back().t;
  return out;
}

EgoController noop_ego() {
  return [](const World&) { return Controls{}; };
}

double predicted_time_to_overlap(const World& world, double horizon) {
  const traffic::VehicleState* ego = world.find(std::string(kEgoId));
  if (!ego) return traffic::kInf;
  const auto moved = [](const traffic::VehicleState& v, double dt) {
    Pose p = v.pose;
    p.x += v.v * std::cos(p.heading) * dt;
    p.y += v.v * std::sin(p.heading) * dt;
    return box_from_front(p, v.length, v.width);
  };
  const OrientedBox ego_now = traffic::footprint(*ego);
  const double ego_r = std::hypot(ego_now.half_length, ego_now.half_width);
  double earliest = traffic::kInf;
  for (const auto& [id, other] : world.vehicles()) {
    if (&other == ego) continue;
    const OrientedBox now = traffic::footprint(other);
    const double reach = (std::abs(ego->v) + std::abs(other.v)) * horizon + ego_r +
                         std::hypot(now.half_length, now.half_width);
    if (distance(now.center, ego_now.center) > reach) continue;
    for (int k = 0; k * kPredictionStep <= horizon + 1e-12; ++k) {
      const double t = k * kPredictionStep;
      if (t >= earliest) break;
      if (overlaps(moved(*ego, t), moved(other, t))) {
        earliest = t;
        break;
      }
    }
  }
  return earliest;
}

EgoController defensive_ego(double horizon) {
  return [horizon](const World& world) {
    Controls c;
    if (predicted_time_to_overlap(world, horizon) < horizon) c.brake = 1.0;
    return c;
  };
}

ScenarioRun::ScenarioRun(ScenarioSpec spec, std::shared_ptr<const net::RoadNetwork> network, std::uint64_t seed)
    : spec_(std::move(spec)), seed_(seed), world_(build_world(spec_, std::move(network), seed)),
      triggers_(spec_.triggers) {}

datalog::LogHeader ScenarioRun::header(const std::string& ego_name) const {
  datalog::LogHeader h;
  h.scenario_id = spec_.id;
  h.scenario_file = spec_.source_path.string();
  h.network_file = spec_.network_file;
  h.seed = seed_;
  h.ego = ego_name;
  h.started_at = utc_timestamp();
  return h;
}

ScenarioRun::StepOutput ScenarioRun::step(const Controls& controls) {
  StepOutput out;
  world_.set_ego_controls(controls);
  for (const traffic::CollisionEvent& c : world_.step()) {
    LogEvent e{c.time, c.step_index, "collision", {}};
    e.detail["a"] = c.id_a;
    e.detail["b"] = c.id_b;
    e.detail["x"] = c.position.x;
    e.detail["y"] = c.position.y;
    out.events.push_back(std::move(e));
    if (!collision_step_) collision_step_ = c.step_index;
  }
  for (LogEvent& e : triggers_.evaluate(world_)) out.events.push_back(std::move(e));

  if (!ended_) {
    const std::int64_t step = world_.step_index();
    const traffic::VehicleState* ego = world_.find(std::string(kEgoId));
    if (collision_step_ && step >= *collision_step_ + grace_steps()) {
      end_reason_ = "collision";
    } else if (spec_.goal && ego && distance(ego->pose.position(), spec_.goal->center) <= spec_.goal->radius) {
      end_reason_ = "goal";
    } else if (step >= spec_.duration_steps()) {
      end_reason_ = "duration";
    }
    if (!end_reason_.empty()) {
      ended_ = true;
      LogEvent e{world_.time(), step, "scenario_end", {}};
      e.detail["reason"] = end_reason_;
      out.events.push_back(std::move(e));
    }
  }
  out.frames = datalog::make_frames(world_);
  return out;
}

RunResult run_scenario(const ScenarioSpec& spec, std::shared_ptr<const net::RoadNetwork> network,
                       std::uint64_t seed, const EgoController& ego, const std::string& ego_name,
                       datalog::LogWriter* sink) {
  ScenarioRun run(spec, std::move(network), seed);
  RunResult result;
  result.log.header = run.header(ego_name);
  if (sink) sink->header(result.log.header);
  while (!run.ended()) {
    auto out = run.step(ego(run.world()));
    if (sink) {
      for (const FcdFrame& f : out.frames) sink->frame(f);
      for (const LogEvent& e : out.events) sink->event(e);
      if (run.world().step_index() % 50 == 0) sink->flush();
    }
    result.log.frames.insert(result.log.frames.end(), std::make_move_iterator(out.frames.begin()),
                             std::make_move_iterator(out.frames.end()));
    result.log.events.insert(result.log.events.end(), std::make_move_iterator(out.events.begin()),
                             std::make_move_iterator(out.events.end()));
  }
  result.outcome = compute_outcome(result.log);
  return result;
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace precrash::scenario
