#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "precrash/traffic/world.hpp"

namespace precrash::bench {

struct BenchResult {
  std::size_t vehicle_count = 0;
  std::int64_t total_steps = 0;
  double wall_seconds = 0.0;
  double steps_per_sec = 0.0;
  double realtime_ratio = 0.0;       // steps_per_sec * dt
  std::uint64_t end_state_hash = 0;  // FNV-1a of the serialized final world
  std::string status = "ok";         // ok | SpawnSaturation
};

struct BenchOptions {
  std::int64_t steps = 5000;
  std::uint64_t seed = 7;
  int repetitions = 3;  // the median wall time is reported
  std::int64_t warmup = 200;
  std::optional<double> ego_speed_cap;  // adds a lane-keeping ego cruising at this speed
};

/// Places up to `count` bots at rest on random regular lanes with long random
/// routes, using the world's RNG. Returns how many were placed.
std::size_t populate(traffic::World& world, std::size_t count, const traffic::DriverParams& params = {});

/// Lane-keeping cruise controls for the ego: pure pursuit on its lane and a
/// speed target of min(cap, safe following speed).
traffic::Controls cruise_controls(const traffic::World& world, double cap);

/// Headless step rate per vehicle count (ascending, positive). Parsing,
/// spawning and warm-up are excluded from the timed section.
std::vector<BenchResult> run_bench(std::shared_ptr<const net::RoadNetwork> network,
                                   const std::vector<std::size_t>& vehicle_counts, const BenchOptions& options);

/// Columns: vehicle_count,total_steps,wall_seconds,steps_per_sec,realtime_ratio.
std::string to_csv(const std::vector<BenchResult>& rows);

}  // namespace precrash::bench
