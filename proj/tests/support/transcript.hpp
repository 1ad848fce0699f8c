#pragma once

// Scripted session used to compare transports against each other and
// against the stored golden transcript.

#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "protocol_client.hpp"

namespace precrash::testing {

/// (raw body, id of the reply that closes this exchange)
inline std::vector<std::pair<std::string, std::int64_t>> golden_script() {
  return {
      {R"({"id":1,"type":"list_scenarios","payload":{}})", 1},
      {R"({"id":2,"type":"hello","payload":{"version":"1.0","role":"controller"}})", 2},
      {R"({"id":3,"type":"list_scenarios","payload":{}})", 3},
      {R"({"id":4,"type":"randomize_order","payload":{"seed":7}})", 4},
      {R"({"id":5,"type":"step","payload":{"n":1}})", 5},
      {R"({"id":6,"type":"load_scenario","payload":{"id":"practice","seed":3}})", 6},
      {R"({"id":7,"type":"subscribe","payload":{"channels":["fcd","events"]}})", 7},
      {R"({"id":8,"type":"step","payload":{"n":2}})", 8},
      {R"({"id":9,"type":"set_control","payload":{"throttle":0.5,"brake":0,"steer":0.1,"gear":"D"}})", 9},
      {R"({"id":10,"type":"step","payload":{"n":1}})", 10},
      {R"({"id":11,"type":"get_state","payload":{}})", 11},
      {R"({"id":12,"type":"step","payload":{"n":0}})", 12},
      {R"({oops)", 0},
      {R"({"id":13,"type":"set_mode","payload":{"mode":"sideways"}})", 13},
      {R"({"id":14,"type":"warp","payload":{}})", 14},
      {R"({"id":15,"type":"hello","payload":{"version":"1.0"}})", 15},
      {R"({"id":16,"type":"end_run","payload":{}})", 16},
      {R"({"id":17,"type":"get_state","payload":{}})", 17},
  };
}

/// Every message the server sends during the script, in arrival order.
inline std::vector<std::string> run_golden_script(ProtocolClient& client) {
  std::vector<std::string> transcript;
  for (const auto& [body, reply_id] : golden_script()) {
    client.send_body(body);
    if (reply_id == 0) {
      auto reply = client.receive();
      if (!reply) throw std::runtime_error("no reply to malformed body");
      transcript.push_back(*reply);
      continue;
    }
    for (auto& m : client.until_reply(reply_id)) transcript.push_back(std::move(m));
  }
  return transcript;
}

inline std::vector<std::string> read_transcript(const std::string& path) {
  std::ifstream in(path);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace precrash::testing
