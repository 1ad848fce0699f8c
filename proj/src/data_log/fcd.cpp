#include "precrash/data_log/fcd.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace precrash::datalog {

using nlohmann::json;
using nlohmann::ordered_json;

std::string format_number(double value) {
  if (!std::isfinite(value)) return "null";
  if (value == 0.0) return "0";  // folds -0
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, end);
}

namespace {

void append_key(std::string& out, std::string_view key) {
  out += '"';
  out += key;
  out += "\":";
}

void append(std::string& out, std::string_view key, double v) {
  append_key(out, key);
  out += format_number(v);
  out += ',';
}

void append(std::string& out, std::string_view key, std::int64_t v) {
  append_key(out, key);
  out += std::to_string(v);
  out += ',';
}

void append(std::string& out, std::string_view key, const std::string& v) {
  append_key(out, key);
  out += json(v).dump();
  out += ',';
}

void append(std::string& out, std::string_view key, bool v) {
  append_key(out, key);
  out += v ? "true" : "false";
  out += ',';
}

template <typename T>
void append(std::string& out, std::string_view key, const std::optional<T>& v) {
  if (v) {
    append(out, key, *v);
  } else {
    append_key(out, key);
    out += "null,";
  }
}

void close_object(std::string& out) {
  out.back() = '}';
}

std::optional<double> opt_number(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<double>();
}

std::optional<std::string> opt_string(const json& j, const char* key) {
  const json& v = j.at(key);
  if (v.is_null()) return std::nullopt;
  return v.get<std::string>();
}

double number(const json& j, const char* key) {
  const json& v = j.at(key);
  return v.is_null() ? std::nan("") : v.get<double>();
}

}  // namespace

std::vector<FcdFrame> make_frames(const traffic::World& world) {
  std::vector<FcdFrame> out;
  out.reserve(world.vehicles().size());
  const auto& lanes = world.network().lanes();
  for (const auto& [id, v] : world.vehicles()) {
    FcdFrame f;
    f.t = world.time();
    f.step_index = world.step_index();
    f.vehicle_id = id;
    f.kind = std::string(traffic::to_string(v.kind));
    f.x = v.pose.x;
    f.y = v.pose.y;
    f.heading = v.pose.heading;
    f.v = v.v;
    f.a = v.a;
    if (v.on_lane && v.lane != net::kNoIndex) f.lane_id = lanes[v.lane].id;
    f.s = v.s;
    if (v.kind == traffic::AgentKind::EgoCar) {
      f.throttle = v.controls.throttle;
      f.brake = v.controls.brake;
      f.steer = v.controls.steer;
      f.gear = std::string(traffic::to_string(v.controls.gear));
    }
    f.brake_light = v.brake_light;
    f.indicator = std::string(traffic::to_string(v.indicator));
    out.push_back(std::move(f));
  }
  return out;
}

std::string to_jsonl(const FcdFrame& f) {
  std::string out = "{\"rec\":\"fcd\",";
  out.reserve(400);
  append(out, "t", f.t);
  append(out, "step_index", f.step_index);
  append(out, "vehicle_id", f.vehicle_id);
  append(out, "kind", f.kind);
  append(out, "x", f.x);
  append(out, "y", f.y);
  append(out, "heading", f.heading);
  append(out, "v", f.v);
  append(out, "a", f.a);
  append(out, "lane_id", f.lane_id);
  append(out, "s", f.s);
  append(out, "throttle", f.throttle);
  append(out, "brake", f.brake);
  append(out, "steer", f.steer);
  append(out, "gear", f.gear);
  append(out, "brake_light", f.brake_light);
  append(out, "indicator", f.indicator);
  append(out, "gaze_x", f.gaze_x);
  append(out, "gaze_y", f.gaze_y);
  append(out, "eye_openness", f.eye_openness);
  append(out, "blink", f.blink);
  close_object(out);
  return out;
}

ordered_json to_json(const FcdFrame& f) { return ordered_json::parse(to_jsonl(f)); }

ordered_json to_json(const LogEvent& e) {
  ordered_json j;
  j["rec"] = "evt";
  j["t"] = e.t;
  j["step_index"] = e.step_index;
  j["type"] = e.type;
  j["detail"] = e.detail;
  return j;
}

std::string to_jsonl(const LogEvent& e) {
  std::string out = "{\"rec\":\"evt\",";
  append(out, "t", e.t);
  append(out, "step_index", e.step_index);
  append(out, "type", e.type);
  append_key(out, "detail");
  out += e.detail.dump();
  out += '}';
  return out;
}

std::string to_jsonl(const LogHeader& h) {
  ordered_json j;
  j["rec"] = "hdr";
  j["format_version"] = h.format_version;
  j["scenario_id"] = h.scenario_id;
  j["scenario_file"] = h.scenario_file;
  j["network_file"] = h.network_file;
  j["seed"] = h.seed;
  j["dt"] = h.dt;
  j["ego"] = h.ego;
  j["started_at"] = h.started_at;
  return j.dump();
}

FcdFrame frame_from_json(const json& j) {
  FcdFrame f;
  f.t = number(j, "t");
  f.step_index = j.at("step_index").get<std::int64_t>();
  f.vehicle_id = j.at("vehicle_id").get<std::string>();
  f.kind = j.at("kind").get<std::string>();
  f.x = number(j, "x");
  f.y = number(j, "y");
  f.heading = number(j, "heading");
  f.v = number(j, "v");
  f.a = number(j, "a");
  f.lane_id = opt_string(j, "lane_id");
  f.s = number(j, "s");
  f.throttle = opt_number(j, "throttle");
  f.brake = opt_number(j, "brake");
  f.steer = opt_number(j, "steer");
  f.gear = opt_string(j, "gear");
  f.brake_light = j.at("brake_light").get<bool>();
  f.indicator = j.at("indicator").get<std::string>();
  f.gaze_x = opt_number(j, "gaze_x");
  f.gaze_y = opt_number(j, "gaze_y");
  f.eye_openness = opt_number(j, "eye_openness");
  f.blink = opt_number(j, "blink");
  return f;
}

LogEvent event_from_json(const json& j) {
  LogEvent e;
  e.t = j.at("t").get<double>();
  e.step_index = j.at("step_index").get<std::int64_t>();
  e.type = j.at("type").get<std::string>();
  e.detail = ordered_json::parse(j.at("detail").dump());
  return e;
}

LogHeader header_from_json(const json& j) {
  LogHeader h;
  h.format_version = j.at("format_version").get<int>();
  if (h.format_version != kLogFormatVersion) {
    throw LogError(LogError::Kind::VersionMismatch,
                   "unsupported log format_version " + std::to_string(h.format_version));
  }
  h.scenario_id = j.value("scenario_id", "");
  h.scenario_file = j.value("scenario_file", "");
  h.network_file = j.value("network_file", "");
  h.seed = j.value("seed", std::uint64_t{0});
  h.dt = j.value("dt", traffic::config::kDt);
  h.ego = j.value("ego", "");
  h.started_at = j.value("started_at", "");
  return h;
}

RunLog parse_log(std::string_view text) {
  RunLog log;
  bool have_header = false;
  std::int64_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string rec = j.at("rec").get<std::string>();
      if (rec == "hdr") {
        if (have_header) throw LogError(LogError::Kind::Syntax, "second header", line_no);
        log.header = header_from_json(j);
        have_header = true;
      } else if (!have_header) {
        throw LogError(LogError::Kind::Syntax, "record before header", line_no);
      } else if (rec == "fcd") {
        log.frames.push_back(frame_from_json(j));
      } else if (rec == "evt") {
        log.events.push_back(event_from_json(j));
      } else if (rec != "trunc") {
        throw LogError(LogError::Kind::Syntax, "unknown record type '" + rec + "'", line_no);
      }
    } catch (const LogError&) {
      throw;
    } catch (const std::exception& e) {
      throw LogError(LogError::Kind::Syntax, "line " + std::to_string(line_no) + ": " + e.what(), line_no);
    }
  }
  if (!have_header) throw LogError(LogError::Kind::Syntax, "missing header");
  return log;
}

RunLog read_log(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LogError(LogError::Kind::Io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_log(buf.str());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LogError(LogError::Kind::Io, "cannot open " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(std::move(line));
  }
  return lines;
}

bool well_ordered(const RunLog& log) {
  for (std::size_t i = 1; i < log.frames.size(); ++i) {
    const FcdFrame& a = log.frames[i - 1];
    const FcdFrame& b = log.frames[i];
    if (a.step_index > b.step_index || (a.step_index == b.step_index && a.vehicle_id >= b.vehicle_id)) return false;
  }
  for (std::size_t i = 1; i < log.events.size(); ++i) {
    if (log.events[i - 1].t > log.events[i].t) return false;
  }
  return true;
}

namespace {

std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(v);
  std::string out = "\"";
  for (char c : v) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

template <typename T>
std::string csv_opt(const std::optional<T>& v) {
  if (!v) return {};
  if constexpr (std::is_same_v<T, double>) {
    return format_number(*v);
  } else {
    return csv_field(*v);
  }
}

}  // namespace

std::string export_csv(const RunLog& log, std::string_view vehicle_id) {
  std::string out;
  for (std::size_t i = 0; i < std::size(kFcdColumns); ++i) {
    if (i) out += ',';
    out += kFcdColumns[i];
  }
  out += "\r\n";
  for (const FcdFrame& f : log.frames) {
    if (!vehicle_id.empty() && f.vehicle_id != vehicle_id) continue;
    const std::string cells[] = {format_number(f.t),
                                 std::to_string(f.step_index),
                                 csv_field(f.vehicle_id),
                                 csv_field(f.kind),
                                 format_number(f.x),
                                 format_number(f.y),
                                 format_number(f.heading),
                                 format_number(f.v),
                                 format_number(f.a),
                                 csv_opt(f.lane_id),
                                 format_number(f.s),
                                 csv_opt(f.throttle),
                                 csv_opt(f.brake),
                                 csv_opt(f.steer),
                                 csv_opt(f.gear),
                                 f.brake_light ? "true" : "false",
                                 csv_field(f.indicator),
                                 csv_opt(f.gaze_x),
                                 csv_opt(f.gaze_y),
                                 csv_opt(f.eye_openness),
                                 csv_opt(f.blink)};
    for (std::size_t i = 0; i < std::size(cells); ++i) {
      if (i) out += ',';
      out += cells[i];
    }
    out += "\r\n";
  }
  return out;
}

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string cell;
  bool quoted = false;
  bool any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          cell += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cell += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(cell));
      cell.clear();
      any = true;
    } else if (c == '\r' || c == '\n') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      row.push_back(std::move(cell));
      cell.clear();
      rows.push_back(std::move(row));
      row.clear();
      any = false;
    } else {
      cell += c;
      any = true;
    }
  }
  if (any || !cell.empty()) {
    row.push_back(std::move(cell));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace precrash::datalog
