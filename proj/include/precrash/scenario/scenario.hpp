#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "precrash/data_log/fcd.hpp"
#include "precrash/road_network.hpp"
#include "precrash/traffic/world.hpp"

namespace precrash::scenario {

inline constexpr int kScenarioFormatVersion = 1;
inline constexpr double kMinDuration = 60.0;   // s
inline constexpr double kMaxDuration = 180.0;  // s
inline constexpr std::string_view kEgoId = "ego";

class ValidationError : public std::runtime_error {
 public:
  enum class Kind {
    Syntax,
    VersionMismatch,
    MissingFile,
    InvalidValue,
    DuplicateId,
    UnknownLane,
    UnknownEdge,
    UnknownActor,
    BadRoute,
    Overlap,
    WrongCount,
  };

  ValidationError(Kind kind, std::string subject, const std::string& message)
      : std::runtime_error(message), kind_(kind), subject_(std::move(subject)) {}

  Kind kind() const { return kind_; }
  const std::string& subject() const { return subject_; }

 private:
  Kind kind_;
  std::string subject_;
};

struct EgoSpawn {
  std::string lane;
  double s = 0.0;
  double v0 = 0.0;
  std::vector<std::string> route;  // informational
};

/// Scenario-placed vehicle or agent. Bots use lane/s/route; pedestrians and
/// deer either walk `path` at `v0` or stand at lane/s.
struct ActorSpawn {
  std::string id;
  traffic::AgentKind kind = traffic::AgentKind::BotCar;
  std::string lane;
  double s = 0.0;
  double v0 = 0.0;
  std::vector<std::string> route;
  traffic::DriverParams params;
  bool yield_at_merges = true;
  bool ignore_red = false;
  std::vector<Vec2> path;
};

struct FlowSpec {
  std::string id;
  std::string entry_edge;
  std::vector<std::string> route;  // defaults to the entry edge alone
  double rate = 0.0;               // vehicles per second
  double v0 = 0.0;
  traffic::DriverParams params;
};

struct Condition {
  enum class Type { EgoInRegion, EgoGapBelow, TimeElapsed, EgoSpeedAbove };
  Type type = Type::TimeElapsed;
  Vec2 center;
  double radius = 0.0;
  std::string actor;
  double gap = 0.0;
  double time = 0.0;
  double speed = 0.0;
};

struct Action {
  enum class Type { SetSpeed, ForceLaneChange, RunRedLight, HardStop, SpawnAgent };
  Type type = Type::SetSpeed;
  std::string actor;            // also the id of a spawned agent
  double speed = 0.0;           // set_speed target, spawn_agent walking speed
  std::optional<double> rate;   // set_speed decel_limit, hard_stop decel
  traffic::LaneChange direction = traffic::LaneChange::Stay;
  traffic::AgentKind kind = traffic::AgentKind::Pedestrian;
  std::vector<Vec2> path;
};

struct TriggerRule {
  std::string id;
  Condition condition;
  std::vector<Action> actions;
};

struct GoalRegion {
  Vec2 center;
  double radius = 0.0;
};

struct ScenarioSpec {
  std::string id;
  std::string title;
  std::string network_file;              // as written in the file
  std::filesystem::path network_path;    // resolved against the scenario file
  std::filesystem::path source_path;     // the scenario file itself, when loaded from disk
  double duration_s = 90.0;
  traffic::Weather weather;
  EgoSpawn ego;
  std::vector<ActorSpawn> actors;
  std::vector<FlowSpec> flows;
  std::vector<TriggerRule> triggers;
  std::optional<GoalRegion> goal;

  bool is_practice() const { return triggers.empty(); }
  std::int64_t duration_steps() const;
};

/// Parses the JSON text of a `.scenario.json`; `base_dir` resolves the
/// network path. Structural errors only: references are checked by validate().
ScenarioSpec parse_scenario(std::string_view text, const std::filesystem::path& base_dir);
ScenarioSpec load_scenario_file(const std::filesystem::path& path);

/// Loads the network a spec refers to (MissingFile / Syntax).
std::shared_ptr<const net::RoadNetwork> load_network_for(const ScenarioSpec& spec);

/// Reference checks against the network: lanes, edges, route continuity,
/// actor ids used by triggers, duration bounds.
void validate(const ScenarioSpec& spec, const net::RoadNetwork& network);

/// Initial world: ego, actors and flows placed at time 0. Validates first and
/// rejects overlapping initial footprints.
traffic::World build_world(const ScenarioSpec& spec, std::shared_ptr<const net::RoadNetwork> network,
                           std::uint64_t seed);

bool condition_holds(const Condition& c, const traffic::World& world);

/// Bumper-to-bumper style distance used by ego_gap_below: centre distance
/// minus the two half lengths.
double ego_gap(const traffic::World& world, const std::string& actor);

/// One-shot trigger rules bound to a run.
class TriggerSet {
 public:
  explicit TriggerSet(std::vector<TriggerRule> rules) : rules_(std::move(rules)) {}

  /// Fires every unfired rule whose condition holds, in file order, applying
  /// its actions. Returns trigger_fired and action_noop events.
  std::vector<datalog::LogEvent> evaluate(traffic::World& world);

  const std::set<std::string>& fired() const { return fired_; }
  std::optional<double> first_fire_time() const { return first_fire_; }

 private:
  std::vector<TriggerRule> rules_;
  std::set<std::string> fired_;
  std::optional<double> first_fire_;
};

/// Seeded Fisher-Yates over exactly 8 distinct scenario ids (WrongCount
/// otherwise). The practice scenario is not part of the input.
std::vector<std::string> randomize_order(std::uint64_t seed, std::vector<std::string> scenarios);

/// Scenario files (`*.scenario.json`) in a directory, sorted by id.
std::vector<ScenarioSpec> load_scenario_dir(const std::filesystem::path& dir);

}  // namespace precrash::scenario
