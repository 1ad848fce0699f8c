#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "precrash/data_log/fcd.hpp"
#include "precrash/scenario/run.hpp"

namespace precrash::datalog {

struct ReplayResult {
  RunLog log;  // regenerated stream under the original header
  std::int64_t steps = 0;
  std::size_t lines_compared = 0;
  std::optional<scenario::RunOutcome> outcome;  // none for a log without frames
  std::optional<std::string> outcome_error;
};

/// Scenario file a log refers to: the recorded path (absolute, relative to
/// the working directory, or relative to the log), then
/// `<data_dir>/scenarios/<scenario_id>.scenario.json`. MissingFixture if none.
std::filesystem::path resolve_scenario(const LogHeader& header, const std::filesystem::path& log_path,
                                       const std::filesystem::path& data_dir);

/// Re-runs the logged scenario from its seed, feeding the logged ego controls,
/// for exactly the logged number of steps. With `verify`, every regenerated
/// fcd/evt line must equal the logged one byte for byte; the first mismatch
/// raises DivergenceDetected carrying its step.
ReplayResult replay(const std::filesystem::path& log_path, bool verify, const std::filesystem::path& data_dir);

}  // namespace precrash::datalog
