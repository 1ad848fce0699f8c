#include "precrash/data_log/replay.hpp"

#include <map>

namespace precrash::datalog {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path resolve_scenario(const LogHeader& header, const fs::path& log_path, const fs::path& data_dir) {
  std::vector<fs::path> candidates;
  if (!header.scenario_file.empty()) {
    const fs::path recorded(header.scenario_file);
    candidates.push_back(recorded);
    if (recorded.is_relative()) candidates.push_back(log_path.parent_path() / recorded);
  }
  if (!header.scenario_id.empty()) {
    candidates.push_back(data_dir / "scenarios" / (header.scenario_id + ".scenario.json"));
  }
  for (const fs::path& p : candidates) {
    if (fs::is_regular_file(p)) return p;
  }
  throw LogError(LogError::Kind::MissingFixture, "scenario for '" + header.scenario_id + "' not found");
}

ReplayResult replay(const fs::path& log_path, bool verify, const fs::path& data_dir) {
  const std::vector<std::string> lines = read_lines(log_path);
  if (lines.empty()) throw LogError(LogError::Kind::Syntax, "empty log file");

  LogHeader header;
  std::map<std::int64_t, std::vector<const std::string*>> by_step;
  std::map<std::int64_t, traffic::Controls> controls;
  try {
    const json first = json::parse(lines.front());
    if (first.at("rec") != "hdr") throw LogError(LogError::Kind::Syntax, "first line is not a header", 1);
    header = header_from_json(first);
    for (std::size_t i = 1; i < lines.size(); ++i) {
      const json j = json::parse(lines[i]);
      const std::string rec = j.at("rec").get<std::string>();
      if (rec == "trunc") continue;
      const std::int64_t step = j.at("step_index").get<std::int64_t>();
      by_step[step].push_back(&lines[i]);
      if (rec == "fcd" && j.at("vehicle_id") == scenario::kEgoId) {
        const FcdFrame f = frame_from_json(j);
        const auto gear = traffic::gear_from(f.gear.value_or("D")).value_or(traffic::Gear::D);
        controls[step] = traffic::Controls::clamped(f.throttle.value_or(0.0), f.brake.value_or(0.0),
                                                    f.steer.value_or(0.0), gear);
      }
    }
  } catch (const LogError&) {
    throw;
  } catch (const std::exception& e) {
    throw LogError(LogError::Kind::Syntax, std::string("log: ") + e.what());
  }

  const fs::path scenario_path = resolve_scenario(header, log_path, data_dir);
  scenario::ScenarioSpec spec;
  std::shared_ptr<const net::RoadNetwork> network;
  try {
    spec = scenario::load_scenario_file(scenario_path);
    network = scenario::load_network_for(spec);
  } catch (const scenario::ValidationError& e) {
    throw LogError(LogError::Kind::MissingFixture, e.what());
  }

  ReplayResult result;
  result.log.header = header;
  result.steps = by_step.empty() ? 0 : by_step.rbegin()->first;
  scenario::ScenarioRun run(spec, network, header.seed);
  static const std::vector<const std::string*> kNone;
  for (std::int64_t k = 1; k <= result.steps; ++k) {
    auto c = controls.find(k);
    auto out = run.step(c == controls.end() ? traffic::Controls{} : c->second);
    std::vector<std::string> regenerated;
    for (const FcdFrame& f : out.frames) regenerated.push_back(to_jsonl(f));
    for (const LogEvent& e : out.events) regenerated.push_back(to_jsonl(e));
    if (verify) {
      auto logged_it = by_step.find(k);
      const auto& logged = logged_it == by_step.end() ? kNone : logged_it->second;
      bool same = logged.size() == regenerated.size();
      for (std::size_t i = 0; same && i < logged.size(); ++i) same = *logged[i] == regenerated[i];
      if (!same) {
        throw LogError(LogError::Kind::DivergenceDetected,
                       "replay diverged at step " + std::to_string(k) + " (t=" + format_number(run.world().time()) + ")",
                       k);
      }
      result.lines_compared += logged.size();
    }
    result.log.frames.insert(result.log.frames.end(), out.frames.begin(), out.frames.end());
    result.log.events.insert(result.log.events.end(), out.events.begin(), out.events.end());
  }
  try {
    result.outcome = scenario::compute_outcome(result.log);
  } catch (const LogError& e) {
    result.outcome_error = e.what();
  }
  return result;
}

}  // namespace precrash::datalog
