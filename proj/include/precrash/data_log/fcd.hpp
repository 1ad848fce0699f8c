#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "precrash/traffic/world.hpp"

namespace precrash::datalog {

inline constexpr int kLogFormatVersion = 1;

class LogError : public std::runtime_error {
 public:
  enum class Kind { Io, Syntax, VersionMismatch, MissingFixture, DivergenceDetected, EmptyLog };

  LogError(Kind kind, const std::string& message, std::int64_t step = -1)
      : std::runtime_error(message), kind_(kind), step_(step) {}

  Kind kind() const { return kind_; }
  /// First differing step for DivergenceDetected, line number for Syntax.
  std::int64_t step() const { return step_; }

 private:
  Kind kind_;
  std::int64_t step_;
};

/// One vehicle at one step. Field order is the serialization order of both
/// the JSONL record and the CSV columns.
struct FcdFrame {
  double t = 0.0;
  std::int64_t step_index = 0;
  std::string vehicle_id;
  std::string kind;
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double v = 0.0;
  double a = 0.0;
  std::optional<std::string> lane_id;  // null when not on a lane
  double s = 0.0;
  std::optional<double> throttle;  // control fields: ego only
  std::optional<double> brake;
  std::optional<double> steer;
  std::optional<std::string> gear;
  bool brake_light = false;
  std::string indicator = "off";
  std::optional<double> gaze_x;  // gaze columns are reserved and always null here
  std::optional<double> gaze_y;
  std::optional<double> eye_openness;
  std::optional<double> blink;

  bool operator==(const FcdFrame&) const = default;
};

inline constexpr std::string_view kFcdColumns[] = {
    "t",     "step_index", "vehicle_id", "kind",   "x",           "y",         "heading",
    "v",     "a",          "lane_id",    "s",      "throttle",    "brake",     "steer",
    "gear",  "brake_light", "indicator", "gaze_x", "gaze_y",      "eye_openness", "blink"};

struct LogEvent {
  double t = 0.0;
  std::int64_t step_index = 0;
  std::string type;  // trigger_fired | collision | scenario_end | action_noop
  nlohmann::ordered_json detail = nlohmann::ordered_json::object();
};

struct LogHeader {
  int format_version = kLogFormatVersion;
  std::string scenario_id;
  std::string scenario_file;
  std::string network_file;
  std::uint64_t seed = 0;
  double dt = traffic::config::kDt;
  std::string ego;
  std::string started_at;  // informational, excluded from comparisons
};

struct RunLog {
  LogHeader header;
  std::vector<FcdFrame> frames;
  std::vector<LogEvent> events;
};

/// Shortest decimal text that parses back to the same double.
std::string format_number(double value);

/// Frames of every vehicle in the world, ascending id.
std::vector<FcdFrame> make_frames(const traffic::World& world);

std::string to_jsonl(const FcdFrame& frame);
std::string to_jsonl(const LogEvent& event);
std::string to_jsonl(const LogHeader& header);
nlohmann::ordered_json to_json(const FcdFrame& frame);
nlohmann::ordered_json to_json(const LogEvent& event);

FcdFrame frame_from_json(const nlohmann::json& j);
LogEvent event_from_json(const nlohmann::json& j);
LogHeader header_from_json(const nlohmann::json& j);

/// Parses a whole `.run.jsonl` text / file (Syntax, VersionMismatch, Io).
RunLog parse_log(std::string_view text);
RunLog read_log(const std::filesystem::path& path);

/// Non-empty lines of a log file, in order.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Checks the (step_index, vehicle_id) frame order and event time order.
bool well_ordered(const RunLog& log);

/// CSV with a header row and one row per selected frame (RFC 4180 quoting,
/// nulls as empty fields). An empty selector keeps every vehicle.
std::string export_csv(const RunLog& log, std::string_view vehicle_id = {});

/// Splits one CSV document into records (RFC 4180).
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

}  // namespace precrash::datalog
