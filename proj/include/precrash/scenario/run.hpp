#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "precrash/data_log/fcd.hpp"
#include "precrash/data_log/writer.hpp"
#include "precrash/scenario/scenario.hpp"

namespace precrash::scenario {

inline constexpr double kCollisionGrace = 3.0;        // s simulated after the first collision
inline constexpr double kReactionBrakeThreshold = 0.1;  // brake input counted as a reaction
inline constexpr double kDefensiveHorizon = 2.0;      // s, defensive ego brakes below this time to overlap

struct RunOutcome {
  std::string scenario_id;
  bool collided = false;
  bool ego_collided = false;
  std::optional<double> collision_time;
  std::vector<std::string> collision_parties;  // of the first collision
  std::optional<double> min_ttc;
  std::optional<double> reaction_time;
  std::optional<double> first_trigger_time;
  std::size_t triggers_fired = 0;
  double mean_ego_speed = 0.0;
  bool reached_goal = false;
  double duration = 0.0;
  std::string end_reason;

  nlohmann::ordered_json to_json() const;
};

/// Metrics of a finished run from its log alone (EmptyLog without frames).
RunOutcome compute_outcome(const datalog::RunLog& log);

/// Source of ego controls, asked once before every step.
using EgoController = std::function<traffic::Controls(const traffic::World&)>;

EgoController noop_ego();
/// Full brake whenever some body is predicted to overlap the ego within
/// `horizon` seconds at constant velocities; no input otherwise.
EgoController defensive_ego(double horizon = kDefensiveHorizon);

/// Earliest predicted footprint overlap between the ego and any other body,
/// sampling constant-velocity motion every 0.05 s; infinity when none.
double predicted_time_to_overlap(const traffic::World& world, double horizon);

/// A scenario being stepped: world, armed triggers and termination rules.
class ScenarioRun {
 public:
  ScenarioRun(ScenarioSpec spec, std::shared_ptr<const net::RoadNetwork> network, std::uint64_t seed);

  struct StepOutput {
    std::vector<datalog::FcdFrame> frames;
    std::vector<datalog::LogEvent> events;
  };

  /// Applies `controls` to the ego and advances one step. Stepping past the
  /// end is allowed; scenario_end is emitted exactly once.
  StepOutput step(const traffic::Controls& controls);

  const traffic::World& world() const { return world_; }
  traffic::World& world() { return world_; }
  const ScenarioSpec& spec() const { return spec_; }
  std::uint64_t seed() const { return seed_; }
  bool ended() const { return ended_; }
  const std::string& end_reason() const { return end_reason_; }
  datalog::LogHeader header(const std::string& ego_name) const;

 private:
  ScenarioSpec spec_;
  std::uint64_t seed_;
  traffic::World world_;
  TriggerSet triggers_;
  std::optional<std::int64_t> collision_step_;
  bool ended_ = false;
  std::string end_reason_;
};

struct RunResult {
  RunOutcome outcome;
  datalog::RunLog log;
};

/// Steps until the run ends (collision plus grace, goal, or duration). The
/// log is kept in memory and, when `sink` is given, streamed to it.
RunResult run_scenario(const ScenarioSpec& spec, std::shared_ptr<const net::RoadNetwork> network,
                       std::uint64_t seed, const EgoController& ego, const std::string& ego_name,
                       datalog::LogWriter* sink = nullptr);

/// UTC wall-clock timestamp for informational headers.
std::string utc_timestamp();

}  // namespace precrash::scenario
