// Command-line front end: run, replay, export, order, serve, bench, analyze.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <thread>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>

#include "precrash/bench/bench.hpp"
#include "precrash/data_log/replay.hpp"
#include "precrash/scenario/run.hpp"
#include "precrash/server/server.hpp"
#include "precrash/study/study.hpp"

#ifndef PRECRASH_DEFAULT_DATA_DIR
#define PRECRASH_DEFAULT_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace precrash;

namespace {

// Blocks until SIGINT/SIGTERM or server.request_stop().
void serve_until_stopped(server::Server& srv) {
  boost::asio::io_context signals_io;
  boost::asio::signal_set signals(signals_io, SIGINT, SIGTERM);
  signals.async_wait([&srv](const boost::system::error_code& ec, int) {
    if (!ec) srv.request_stop();
  });
  std::thread watcher([&signals_io] { signals_io.run(); });
  srv.wait();
  signals_io.stop();
  watcher.join();
  srv.stop();
}

int cmd_run_hosted(const scenario::ScenarioSpec& spec, std::uint64_t seed, const std::string& log_path,
                   const std::string& bind, std::uint16_t port, const std::string& data_dir) {
  server::ServerOptions options;
  options.bind_address = bind;
  options.port = port;
  options.engine.scenario_dir = fs::path(data_dir) / "scenarios";
  options.engine.realtime_on_controller = 1.0 / traffic::config::kDt;
  server::Server srv(options);
  std::optional<nlohmann::ordered_json> outcome;
  srv.engine().on_run_end = [&](const scenario::RunOutcome& o, const datalog::RunLog&) {
    outcome = o.to_json();
    srv.request_stop();
  };
  srv.engine().load(spec, seed, log_path.empty() ? std::nullopt : std::optional<fs::path>(log_path));
  srv.start();
  std::cerr << "waiting for a controller on port " << srv.port() << "\n";
  serve_until_stopped(srv);
  if (!outcome) {
    std::cerr << "error: stopped before the scenario ended\n";
    return 2;
  }
  std::cout << outcome->dump() << "\n";
  return 0;
}

int cmd_run(const std::string& scenario_file, std::uint64_t seed, const std::string& ego, const std::string& log_path,
            const std::string& bind, std::uint16_t port, const std::string& data_dir) {
  const scenario::ScenarioSpec spec = scenario::load_scenario_file(scenario_file);
  if (ego == "server") return cmd_run_hosted(spec, seed, log_path, bind, port, data_dir);
  auto network = scenario::load_network_for(spec);
  const scenario::EgoController controller = ego == "noop" ? scenario::noop_ego() : scenario::defensive_ego();
  std::optional<datalog::LogWriter> sink;
  if (!log_path.empty()) sink.emplace(log_path);
  const scenario::RunResult result =
      scenario::run_scenario(spec, network, seed, controller, ego, sink ? &*sink : nullptr);
  if (sink) sink->close();
  std::cout << result.outcome.to_json().dump() << "\n";
  return 0;
}

int cmd_serve(const std::string& bind, std::uint16_t port, const std::string& log_dir, const std::string& data_dir) {
  server::ServerOptions options;
  options.bind_address = bind;
  options.port = port;
  options.engine.scenario_dir = fs::path(data_dir) / "scenarios";
  if (!log_dir.empty()) {
    fs::create_directories(log_dir);
    options.engine.log_dir = log_dir;
  }
  server::Server srv(options);
  srv.start();
  std::cerr << "listening on " << bind << ":" << srv.port() << " (WebSocket path " << server::kWebSocketPath << ")\n";
  serve_until_stopped(srv);
  return 0;
}

int cmd_bench(const std::string& network_file, const std::vector<std::size_t>& vehicles, std::int64_t steps,
              std::uint64_t seed, int repetitions, const std::optional<double>& cap, const std::string& out_path) {
  auto network = std::make_shared<const net::RoadNetwork>(net::load_network(network_file));
  bench::BenchOptions options;
  options.steps = steps;
  options.seed = seed;
  options.repetitions = repetitions;
  options.ego_speed_cap = cap;
  const auto rows = bench::run_bench(network, vehicles, options);
  for (const auto& r : rows) {
    if (r.status != "ok") std::cerr << "warning: " << r.status << " at " << r.vehicle_count << " vehicles\n";
  }
  const std::string csv = bench::to_csv(rows);
  if (out_path.empty() || out_path == "-") {
    std::cout << csv;
  } else {
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + out_path);
    out << csv;
  }
  return 0;
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw study::StudyError(study::StudyError::Kind::Syntax, path + ": " + e.what());
  }
}

// "file.csv:column"; the column is taken after the last colon.
std::vector<double> read_sample(const std::string& spec) {
  const auto colon = spec.rfind(':');
  if (colon == std::string::npos || colon == 0 || colon + 1 == spec.size()) {
    throw CLI::ValidationError("sample", "expected <file.csv>:<column>, got '" + spec + "'");
  }
  const std::string path = spec.substr(0, colon);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::stringstream text;
  text << in.rdbuf();
  return study::csv_column(text.str(), spec.substr(colon + 1));
}

int cmd_sickness(const std::string& path) {
  const auto rows = study::sickness_table(study::parse_responses(read_json(path)));
  nlohmann::ordered_json out;
  nlohmann::ordered_json list = nlohmann::ordered_json::array();
  std::map<std::string, std::pair<study::SicknessScores, int>> sums;
  for (const auto& r : rows) {
    nlohmann::ordered_json j;
    j["participant_id"] = r.participant_id;
    j["simulator"] = r.simulator;
    j.update(study::to_json(r.scores));
    list.push_back(std::move(j));
    auto& [sum, n] = sums[r.simulator];
    sum.nausea += r.scores.nausea;
    sum.oculomotor += r.scores.oculomotor;
    sum.disorientation += r.scores.disorientation;
    sum.total += r.scores.total;
    ++n;
  }
  nlohmann::ordered_json means = nlohmann::ordered_json::object();
  for (auto& [sim, entry] : sums) {
    auto [sum, n] = entry;
    sum.nausea /= n;
    sum.oculomotor /= n;
    sum.disorientation /= n;
    sum.total /= n;
    means[sim] = study::to_json(sum);
  }
  out["scores"] = std::move(list);
  out["means"] = std::move(means);
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_ttest(const std::string& a_spec, const std::string& b_spec, bool paired, double alpha) {
  const auto a = read_sample(a_spec);
  const auto b = read_sample(b_spec);
  const study::TestResult r = paired ? study::paired_t_test(a, b, alpha) : study::welch_t_test(a, b, alpha);
  nlohmann::ordered_json out;
  out["test"] = paired ? "paired" : "welch";
  out["n_a"] = a.size();
  out["n_b"] = b.size();
  out.update(study::to_json(r));
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_fidelity(const std::string& motion, const std::string& visual, const std::string& controls) {
  const study::FidelityConfig config{*study::motion_from(motion), *study::visual_from(visual),
                                     *study::controls_from(controls)};
  nlohmann::ordered_json out;
  out["motion"] = motion;
  out["visual"] = visual;
  out["controls"] = controls;
  out["score"] = study::fidelity_score(config);
  out["max"] = study::kFidelityMax;
  std::cout << out.dump() << "\n";
  return 0;
}

int cmd_prefs(const std::string& path) {
  const study::FinalDocument doc = study::parse_final(read_json(path));
  std::cout << study::to_json(study::preference_tally(doc.simulators, doc.responses)).dump() << "\n";
  return 0;
}

int cmd_replay(const std::string& log_path, bool verify, const std::string& data_dir) {
  const datalog::ReplayResult r = datalog::replay(log_path, verify, data_dir);
  nlohmann::ordered_json j;
  j["steps"] = r.steps;
  j["verified"] = verify;
  j["lines_compared"] = r.lines_compared;
  j["outcome"] = r.outcome ? r.outcome->to_json() : nlohmann::ordered_json(nullptr);
  if (r.outcome_error) j["outcome_error"] = *r.outcome_error;
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_export(const std::string& log_path, const std::string& csv_path, const std::string& vehicle) {
  const datalog::RunLog log = datalog::read_log(log_path);
  const std::string csv = datalog::export_csv(log, vehicle);
  if (csv_path.empty() || csv_path == "-") {
    std::cout << csv;
  } else {
    std::ofstream out(csv_path, std::ios::binary);
    if (!out) throw datalog::LogError(datalog::LogError::Kind::Io, "cannot write " + csv_path);
    out << csv;
  }
  return 0;
}

int cmd_order(std::uint64_t seed, const std::string& dir) {
  std::vector<std::string> ids;
  for (const scenario::ScenarioSpec& s : scenario::load_scenario_dir(dir)) {
    if (!s.is_practice()) ids.push_back(s.id);
  }
  std::cout << nlohmann::json(scenario::randomize_order(seed, ids)).dump() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Pre-crash scenario co-simulation tools"};
  app.require_subcommand(1);
  std::string data_dir = PRECRASH_DEFAULT_DATA_DIR;
  app.add_option("--data-dir", data_dir, "Directory holding networks/ and scenarios/");

  std::string scenario_file, ego = "noop", log_path, bind = "127.0.0.1";
  std::uint64_t seed = 1;
  std::uint16_t port = server::kDefaultPort;
  auto* run = app.add_subcommand("run", "Run one scenario with a scripted or remote ego");
  run->add_option("--scenario", scenario_file, "Scenario file")->required();
  run->add_option("--seed", seed, "Random seed");
  run->add_option("--ego", ego, "noop | defensive | server")->check(CLI::IsMember({"noop", "defensive", "server"}));
  run->add_option("--log", log_path, "Write the JSONL run log here");
  run->add_option("--port", port, "Port for --ego server");
  run->add_option("--bind", bind, "Listen address for --ego server");

  std::string replay_log;
  bool verify = false;
  auto* replay = app.add_subcommand("replay", "Re-run a logged session");
  replay->add_option("--log", replay_log, "Run log")->required();
  replay->add_flag("--verify", verify, "Compare every regenerated line with the log");

  std::string export_log, csv_path, vehicle;
  auto* exp = app.add_subcommand("export", "Convert a run log to CSV");
  exp->add_option("--log", export_log, "Run log")->required();
  exp->add_option("--csv", csv_path, "Output CSV ('-' for stdout)");
  exp->add_option("--vehicle", vehicle, "Keep only this vehicle");

  std::uint64_t order_seed = 0;
  std::string order_dir;
  auto* order = app.add_subcommand("order", "Seeded presentation order of the scenarios");
  order->add_option("--seed", order_seed, "Participant seed")->required();
  order->add_option("--dir", order_dir, "Scenario directory (default <data-dir>/scenarios)");

  std::string serve_bind = "127.0.0.1", log_dir;
  std::uint16_t serve_port = server::kDefaultPort;
  auto* serve = app.add_subcommand("serve", "Control server for TCP and WebSocket clients");
  serve->add_option("--port", serve_port, "TCP port (0 picks a free one)");
  serve->add_option("--bind", serve_bind, "Listen address");
  serve->add_option("--log-dir", log_dir, "Write one run log per loaded scenario here");

  std::string bench_network, bench_out;
  std::vector<std::size_t> bench_vehicles = {10, 50, 100, 200};
  std::int64_t bench_steps = 5000;
  std::uint64_t bench_seed = 7;
  int bench_reps = 3;
  std::optional<double> bench_cap;
  auto* bench_cmd = app.add_subcommand("bench", "Headless step rate by vehicle count");
  bench_cmd->add_option("--network", bench_network, "Network file")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--vehicles", bench_vehicles, "Ascending vehicle counts")->delimiter(',');
  bench_cmd->add_option("--steps", bench_steps, "Timed steps per row")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench_seed, "Random seed");
  bench_cmd->add_option("--repetitions", bench_reps, "Runs per row; the median is reported")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--ego-speed-cap", bench_cap, "Add a cruising ego capped at this speed (m/s)");
  bench_cmd->add_option("--out", bench_out, "CSV output ('-' for stdout)");

  auto* analyze = app.add_subcommand("analyze", "Questionnaire and statistics tools");
  analyze->require_subcommand(1);
  std::string sickness_in, prefs_in, sample_a, sample_b;
  bool paired = false;
  double alpha = 0.05;
  std::string motion, visual, controls;
  auto* sickness = analyze->add_subcommand("sickness", "Sickness subscores from pre/post responses");
  sickness->add_option("--in", sickness_in, "responses.json")->required();
  auto* ttest = analyze->add_subcommand("ttest", "Two-sided t-test on two CSV columns");
  ttest->add_option("--a", sample_a, "<file.csv>:<column>")->required();
  ttest->add_option("--b", sample_b, "<file.csv>:<column>")->required();
  ttest->add_flag("--paired", paired, "Paired test instead of Welch");
  ttest->add_option("--alpha", alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  auto* fidelity = analyze->add_subcommand("fidelity", "Simulator fidelity points out of 15");
  fidelity->add_option("--motion", motion, "none | three_dof | six_dof_plus")
      ->required()
      ->check(CLI::IsMember({"none", "three_dof", "six_dof_plus"}));
  fidelity->add_option("--visual", visual, "single_flat | triple_flat | surround_or_hmd")
      ->required()
      ->check(CLI::IsMember({"single_flat", "triple_flat", "surround_or_hmd"}));
  fidelity->add_option("--controls", controls, "keyboard_or_gamepad | wheel_with_seat | full_cab")
      ->required()
      ->check(CLI::IsMember({"keyboard_or_gamepad", "wheel_with_seat", "full_cab"}));
  auto* prefs = analyze->add_subcommand("prefs", "Preference tally from final questionnaires");
  prefs->add_option("--in", prefs_in, "final.json")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(scenario_file, seed, ego, log_path, bind, port, data_dir);
    if (*serve) return cmd_serve(serve_bind, serve_port, log_dir, data_dir);
    if (*bench_cmd) return cmd_bench(bench_network, bench_vehicles, bench_steps, bench_seed, bench_reps, bench_cap, bench_out);
    if (*sickness) return cmd_sickness(sickness_in);
    if (*ttest) return cmd_ttest(sample_a, sample_b, paired, alpha);
    if (*fidelity) return cmd_fidelity(motion, visual, controls);
    if (*prefs) return cmd_prefs(prefs_in);
    if (*replay) return cmd_replay(replay_log, verify, data_dir);
    if (*exp) return cmd_export(export_log, csv_path, vehicle);
    if (*order) return cmd_order(order_seed, order_dir.empty() ? (fs::path(data_dir) / "scenarios").string() : order_dir);
  } catch (const datalog::LogError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.kind() == datalog::LogError::Kind::DivergenceDetected ? 3 : 2;
  } catch (const study::StudyError& e) {
    std::cerr << "error: " << study::to_string(e.kind()) << ": " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
