// Acceptance gate: one PASS/FAIL line per acceptance criterion. Exit status is
// the number of failed criteria.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "precrash/bench/bench.hpp"
#include "precrash/data_log/replay.hpp"
#include "precrash/data_log/writer.hpp"
#include "precrash/scenario/run.hpp"
#include "precrash/server/server.hpp"
#include "precrash/study/study.hpp"
#include "protocol_client.hpp"
#include "transcript.hpp"

namespace {

namespace fs = std::filesystem;
using namespace precrash;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

const double kNaN = std::numeric_limits<double>::quiet_NaN();
#include "t_test_oracle.inc"

const fs::path kData = PRECRASH_DATA_DIR;
const fs::path kTests = PRECRASH_TEST_DIR;

const std::vector<std::uint64_t> kSeeds = {1, 7, 42};
const std::vector<std::string> kDefensiveSafe = {"sudden_stop", "red_light_runner", "deer_crossing", "jaywalker"};
constexpr double kNoopTtcBound = 1.5;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct Verdict {
  bool pass = true;
  std::string detail;
};

// Collects failure reasons; the first few are kept for the report line.
struct Checker {
  int failures = 0;
  std::vector<std::string> reasons;

  void expect(bool ok, const std::string& what) {
    if (ok) return;
    ++failures;
    if (reasons.size() < 3) reasons.push_back(what);
  }
  Verdict verdict(const std::string& summary) const {
    if (failures == 0) return {true, summary};
    std::string detail = fmt::format("{} failure(s): ", failures);
    for (std::size_t i = 0; i < reasons.size(); ++i) detail += (i ? "; " : "") + reasons[i];
    return {false, detail};
  }
};

struct TempDir {
  fs::path path;
  TempDir() {
    std::string tmpl = (fs::temp_directory_path() / "precrash-acceptance-XXXXXX").string();
    path = mkdtemp(tmpl.data());
  }
  ~TempDir() { fs::remove_all(path); }
};

// Log bytes with the informational wall-clock header field blanked.
std::string comparable_log(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream all;
  all << in.rdbuf();
  static const std::regex started_at(R"("started_at":"[^"]*")");
  return std::regex_replace(all.str(), started_at, R"("started_at":"")", std::regex_constants::format_first_only);
}

struct RecordedRun {
  std::string scenario_id;
  std::uint64_t seed = 0;
  std::string ego;
  fs::path log;
  scenario::RunOutcome outcome;
};

// Every bundled scenario x seed x scripted ego, each run twice.
struct Corpus {
  TempDir dir;
  std::vector<scenario::ScenarioSpec> specs;
  std::vector<RecordedRun> runs;
  std::vector<std::string> mismatches;
  double seconds = 0.0;
  bool built = false;
};

Corpus& corpus() {
  static Corpus c;
  if (c.built) return c;
  c.built = true;
  const auto start = Clock::now();
  c.specs = scenario::load_scenario_dir(kData / "scenarios");
  const std::map<std::string, scenario::EgoController> egos = {{"noop", scenario::noop_ego()},
                                                               {"defensive", scenario::defensive_ego()}};
  for (const auto& spec : c.specs) {
    const auto network = scenario::load_network_for(spec);
    for (const std::uint64_t seed : kSeeds) {
      for (const auto& [ego_name, ego] : egos) {
        std::string first_bytes;
        for (int pass = 0; pass < 2; ++pass) {
          const fs::path path = c.dir.path / fmt::format("{}_{}_{}_{}.run.jsonl", spec.id, seed, ego_name, pass);
          datalog::LogWriter writer(path);
          auto result = scenario::run_scenario(spec, network, seed, ego, ego_name, &writer);
          writer.close();
          if (pass == 0) {
            first_bytes = comparable_log(path);
            c.runs.push_back({spec.id, seed, ego_name, path, std::move(result.outcome)});
          } else if (comparable_log(path) != first_bytes) {
            c.mismatches.push_back(fmt::format("{}/{}/{}", spec.id, seed, ego_name));
          }
        }
      }
    }
  }
  c.seconds = seconds_since(start);
  return c;
}

Verdict determinism() {
  const Corpus& c = corpus();
  Checker check;
  check.expect(c.specs.size() == 9, fmt::format("{} scenarios bundled", c.specs.size()));
  check.expect(c.runs.size() == c.specs.size() * kSeeds.size() * 2, "run count");
  for (const auto& m : c.mismatches) check.expect(false, "logs differ for " + m);
  check.expect(c.seconds < 60.0, fmt::format("took {:.1f} s", c.seconds));
  return check.verdict(fmt::format("{} run pairs byte-identical in {:.1f} s", c.runs.size(), c.seconds));
}

Verdict replay_fixed_point() {
  const Corpus& c = corpus();
  Checker check;
  std::size_t lines = 0;
  for (const auto& run : c.runs) {
    try {
      lines += datalog::replay(run.log, true, kData).lines_compared;
    } catch (const std::exception& e) {
      check.expect(false, run.log.filename().string() + ": " + e.what());
    }
  }
  check.expect(!c.runs.empty(), "no logs");
  return check.verdict(fmt::format("{} logs, {} lines compared, zero divergence", c.runs.size(), lines));
}

Verdict car_following_safety() {
  Checker check;
  const auto start = Clock::now();
  std::int64_t collisions = 0, violations = 0;
  for (const std::string name : {"ring", "grid"}) {
    auto network =
        std::make_shared<const net::RoadNetwork>(net::load_network(kData / "networks" / (name + ".net.json")));
    traffic::World world(network, 2024);
    traffic::DriverParams params;
    params.sigma = 0.5;
    const std::size_t placed = bench::populate(world, 100, params);
    check.expect(placed == 100, fmt::format("{}: placed {} bots", name, placed));
    for (int k = 0; k < 10000; ++k) world.step();
    collisions += static_cast<std::int64_t>(world.collisions().size());
    violations += world.red_light_violations();
    check.expect(world.collisions().empty(), fmt::format("{}: {} collisions", name, world.collisions().size()));
    check.expect(world.red_light_violations() == 0, fmt::format("{}: {} red violations", name, world.red_light_violations()));
  }
  const double secs = seconds_since(start);
  check.expect(secs < 10.0, fmt::format("took {:.1f} s", secs));
  return check.verdict(fmt::format("ring+grid, 100 bots x 10000 steps: {} collisions, {} red violations, {:.1f} s",
                                   collisions, violations, secs));
}

Verdict scenario_efficacy() {
  const Corpus& c = corpus();
  Checker check;
  int adversarial = 0;
  for (const auto& spec : c.specs) {
    if (!spec.is_practice()) ++adversarial;
  }
  check.expect(adversarial == 8, fmt::format("{} adversarial scenarios", adversarial));
  for (const auto& run : c.runs) {
    const auto spec = std::find_if(c.specs.begin(), c.specs.end(), [&](const auto& s) { return s.id == run.scenario_id; });
    if (spec->is_practice()) continue;
    const std::string tag = fmt::format("{}/{}/{}", run.scenario_id, run.seed, run.ego);
    if (run.ego == "noop") {
      check.expect(run.outcome.triggers_fired >= 1, tag + " trigger never fired");
      const bool close_call = run.outcome.min_ttc && *run.outcome.min_ttc < kNoopTtcBound;
      check.expect(run.outcome.collided || close_call, tag + " neither collision nor close call");
    } else if (std::find(kDefensiveSafe.begin(), kDefensiveSafe.end(), run.scenario_id) != kDefensiveSafe.end()) {
      check.expect(!run.outcome.collided, tag + " collided");
    }
  }
  return check.verdict(fmt::format(
      "8 scenarios x {} seeds: noop always collides or min TTC < {}, defensive collision-free on {} scenarios",
      kSeeds.size(), kNoopTtcBound, kDefensiveSafe.size()));
}

Verdict duration_bound() {
  Checker check;
  const auto specs = scenario::load_scenario_dir(kData / "scenarios");
  double lo = 1e9, hi = 0.0;
  for (const auto& spec : specs) {
    lo = std::min(lo, spec.duration_s);
    hi = std::max(hi, spec.duration_s);
    check.expect(spec.duration_s >= 60.0 && spec.duration_s <= 180.0,
                 fmt::format("{} lasts {} s", spec.id, spec.duration_s));
  }
  check.expect(specs.size() == 9, "scenario count");
  return check.verdict(fmt::format("{} scenarios, durations in [{}, {}] s", specs.size(), lo, hi));
}

Verdict randomized_ordering() {
  Checker check;
  std::vector<std::string> ids;
  for (const auto& spec : scenario::load_scenario_dir(kData / "scenarios")) {
    if (!spec.is_practice()) ids.push_back(spec.id);
  }
  const std::set<std::string> all(ids.begin(), ids.end());
  std::map<std::string, int> first;
  constexpr int kTrials = 10000;
  for (std::uint64_t seed = 0; seed < kTrials; ++seed) {
    const auto order = scenario::randomize_order(seed, ids);
    if (order.size() != ids.size() || std::set<std::string>(order.begin(), order.end()) != all) {
      check.expect(false, fmt::format("seed {} is not a permutation", seed));
    }
    ++first[order.front()];
  }
  double lo = 1.0, hi = 0.0;
  for (const auto& id : ids) {
    const double share = static_cast<double>(first[id]) / kTrials;
    lo = std::min(lo, share);
    hi = std::max(hi, share);
    check.expect(share >= 0.095 && share <= 0.155, fmt::format("{} first in {:.2f}%", id, 100 * share));
  }
  return check.verdict(
      fmt::format("{} seeds, first-position share in [{:.2f}%, {:.2f}%]", kTrials, 100 * lo, 100 * hi));
}

Verdict fidelity_rubric() {
  using namespace study;
  Checker check;
  const int hmd_wheel = fidelity_score({MotionBase::None, Visual::SurroundOrHmd, ControlSet::WheelWithSeat});
  const int flat_wheel = fidelity_score({MotionBase::None, Visual::SingleFlat, ControlSet::WheelWithSeat});
  const int hmd_cab = fidelity_score({MotionBase::None, Visual::SurroundOrHmd, ControlSet::FullCab});
  check.expect(hmd_wheel == 9, fmt::format("headset + wheel scored {}", hmd_wheel));
  check.expect(flat_wheel == 6, fmt::format("flat screen + wheel scored {}", flat_wheel));
  check.expect(hmd_cab == 11, fmt::format("headset + cab scored {}", hmd_cab));
  return check.verdict(fmt::format("{}, {}, {} points", hmd_wheel, flat_wheel, hmd_cab));
}

Verdict statistics() {
  using namespace study;
  Checker check;
  double max_dt = 0.0, max_dp = 0.0;
  int compared = 0;
  for (const SampleCase& c : kSamples) {
    const TestResult w = welch_t_test(c.a, c.b);
    max_dt = std::max(max_dt, std::abs(w.t_statistic - c.welch_t));
    max_dp = std::max(max_dp, std::abs(w.p_value - c.welch_p));
    ++compared;
    if (std::isnan(c.paired_t)) continue;
    const TestResult p = paired_t_test(c.a, c.b);
    max_dt = std::max(max_dt, std::abs(p.t_statistic - c.paired_t));
    max_dp = std::max(max_dp, std::abs(p.p_value - c.paired_p));
    ++compared;
  }
  const int samples = static_cast<int>(std::size(kSamples));
  check.expect(samples == 20, fmt::format("{} oracle samples", samples));
  check.expect(max_dt <= 1e-9, fmt::format("max |dt| = {:.3g}", max_dt));
  check.expect(max_dp <= 1e-9, fmt::format("max |dp| = {:.3g}", max_dp));

  // Reference p-values and their expected decisions at alpha 0.05.
  struct Row {
    double p;
    bool significant;
  };
  const Row rows[] = {{2.49e-4, true},  {3.22e-7, true}, {2.45e-3, true}, {3.41e-5, true}, {4.52e-2, true},
                      {1.08e-5, true},  {5.37e-1, false}, {7.89e-5, true}, {5.76e-7, true}};
  int agree = 0;
  for (const Row& r : rows) agree += reject(r.p, 0.05) == r.significant;
  check.expect(agree == 9, fmt::format("decision rule agrees on {}/9 rows", agree));
  return check.verdict(fmt::format("{} oracle comparisons over {} samples, max |dt| {:.2g}, max |dp| {:.2g}; decisions {}/9",
                                   compared, samples, max_dt, max_dp, agree));
}

std::unique_ptr<server::Server> start_server() {
  server::ServerOptions options;
  options.port = 0;
  options.engine.scenario_dir = kData / "scenarios";
  auto s = std::make_unique<server::Server>(options);
  s->start();
  return s;
}

bool is_push(const std::string& body) {
  const auto j = json::parse(body, nullptr, false);
  if (j.is_discarded() || !j.contains("type")) return false;
  const auto& type = j["type"];
  return type == "fcd_frame" || type == "event" || type == "clock";
}

Verdict protocol_conformance() {
  Checker check;

  std::vector<std::string> tcp, ws;
  {
    auto s = start_server();
    testing::TcpClient client(s->port());
    tcp = testing::run_golden_script(client);
  }
  {
    auto s = start_server();
    testing::WsClient client(s->port());
    ws = testing::run_golden_script(client);
  }
  check.expect(tcp == ws, "TCP and WebSocket transcripts differ");
  check.expect(tcp == testing::read_transcript((kTests / "golden" / "transcript.jsonl").string()),
               "transcript differs from the stored golden file");

  auto s = start_server();
  {
    testing::TcpClient client(s->port());
    client.call(1, "hello", {{"version", "1.0"}, {"role", "controller"}});
    std::int64_t rid = 2;
    for (const std::int64_t n : {0, 1, 50, 1000}) {
      client.call(rid++, "load_scenario", {{"id", "practice"}, {"seed", 5}});
      client.call(rid++, "step", {{"n", n}});
      const json state = client.call(rid++, "get_state");
      const double t = state["payload"]["t"].get<double>();
      check.expect(state["payload"]["step_index"] == n && t == static_cast<double>(n) * traffic::config::kDt,
                   fmt::format("step {} reported t = {}", n, t));
    }
  }

  std::mt19937_64 gen(77);
  const std::vector<std::string> types = {"hello", "step", "get_state", "set_control", "subscribe", "load_scenario",
                                          "set_mode", "end_run", "list_scenarios", "randomize_order", "bogus"};
  auto client = std::make_unique<testing::TcpClient>(s->port(), std::chrono::seconds(10));
  int unanswered = 0;
  for (int k = 0; k < 10000; ++k) {
    std::string body;
    switch (gen() % 3) {
      case 0:
        body.resize(gen() % 64);
        for (char& ch : body) ch = static_cast<char>(gen() & 0xff);
        break;
      case 1: {
        json payload = json::object();
        if (gen() % 2) payload["n"] = static_cast<int>(gen() % 5) - 1;
        if (gen() % 2) payload["version"] = gen() % 3 ? json("1.0") : json(static_cast<int>(gen() % 4));
        if (gen() % 2) payload["throttle"] = static_cast<double>(gen() % 300) / 100.0 - 1.0;
        if (gen() % 2) payload["id"] = gen() % 2 ? "practice" : "sudden_stop";
        if (gen() % 2) payload["channels"] = json::array({gen() % 2 ? "fcd" : "events"});
        if (gen() % 3 == 0) payload["mode"] = gen() % 2 ? "stepped" : "warp";
        body = json{{"id", 1 + static_cast<int>(gen() % 999)}, {"type", types[gen() % types.size()]}, {"payload", payload}}
                   .dump();
        break;
      }
      default:
        body = json{{"id", static_cast<int>(gen() % 1000)}, {"type", types[gen() % types.size()]}}.dump();
        body.resize(gen() % (body.size() + 1));
    }
    client->send_body(body);
    auto reply = client->receive();
    while (reply && is_push(*reply)) reply = client->receive();
    if (!reply) {
      ++unanswered;
      client = std::make_unique<testing::TcpClient>(s->port(), std::chrono::seconds(10));
    }
  }
  check.expect(unanswered == 0, fmt::format("{} fuzz frames went unanswered", unanswered));
  testing::TcpClient fresh(s->port());
  check.expect(fresh.call(1, "hello", {{"version", "1.0"}, {"role", "observer"}})["type"] == "hello",
               "server unresponsive after fuzzing");

  return check.verdict(fmt::format("{} transcript messages equal over TCP/WS/golden; n*dt exact for n in {{0,1,50,1000}}; "
                                   "10000 fuzz frames answered",
                                   tcp.size()));
}

Verdict throughput_trend() {
  Checker check;
  auto network = std::make_shared<const net::RoadNetwork>(net::load_network(kData / "networks" / "grid.net.json"));
  bench::BenchOptions options;
  options.steps = 2000;
  options.repetitions = 3;
  const auto rows = bench::run_bench(network, {10, 50, 100, 200, 400}, options);
  std::string series;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    series += fmt::format("{}{}:{:.0f}", i ? " " : "", rows[i].vehicle_count, rows[i].steps_per_sec);
    check.expect(rows[i].status == "ok", fmt::format("{} vehicles: {}", rows[i].vehicle_count, rows[i].status));
    if (i > 0) {
      check.expect(rows[i].steps_per_sec <= 1.10 * rows[i - 1].steps_per_sec,
                   fmt::format("{} -> {} vehicles rose beyond 10%", rows[i - 1].vehicle_count, rows[i].vehicle_count));
    }
  }
  const double at50 = rows.size() > 1 ? rows[1].steps_per_sec : 0.0;
  check.expect(at50 >= 2500.0, fmt::format("{:.0f} steps/s at 50 vehicles", at50));
  return check.verdict("steps/s by vehicle count " + series);
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria = {
      {"determinism", determinism},
      {"replay_fixed_point", replay_fixed_point},
      {"car_following_safety", car_following_safety},
      {"scenario_efficacy", scenario_efficacy},
      {"duration_bound", duration_bound},
      {"randomized_ordering", randomized_ordering},
      {"fidelity_rubric", fidelity_rubric},
      {"statistics", statistics},
      {"protocol_conformance", protocol_conformance},
      {"throughput_trend", throughput_trend},
  };
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    const auto start = Clock::now();
    Verdict v;
    try {
      v = run();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    failed += v.pass ? 0 : 1;
    std::printf("%s %-22s %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str(), seconds_since(start));
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed;
}
