#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "precrash/geometry.hpp"

namespace precrash::net {

inline constexpr int kNetworkFormatVersion = 1;
inline constexpr double kDefaultLaneWidth = 3.5;
inline constexpr std::size_t kNoIndex = static_cast<std::size_t>(-1);

enum class SignalColor { Green, Yellow, Red };

std::string_view to_string(SignalColor c);

class NetworkError : public std::runtime_error {
 public:
  enum class Kind {
    Syntax,
    DanglingReference,
    DuplicateId,
    EmptyNetwork,
    InvalidValue,
    OutOfRange,
    UnknownLane,
    UnknownEdge,
    UnknownConnection,
    NoPath,
  };

  NetworkError(Kind kind, std::string subject, const std::string& message)
      : std::runtime_error(message), kind_(kind), subject_(std::move(subject)) {}

  Kind kind() const { return kind_; }
  /// The offending id (missing reference, duplicate id, ...), when there is one.
  const std::string& subject() const { return subject_; }

 private:
  Kind kind_;
  std::string subject_;
};

struct Node {
  std::string id;
  Vec2 position;
};

/// Edge of the lane motion graph. `stop_line` marks a move that leaves a
/// regular lane through `connection`, where that connection's signal applies.
struct LaneLink {
  std::size_t lane = 0;
  std::size_t connection = 0;
  bool stop_line = false;
};

struct Lane {
  std::string id;
  std::string edge;  // empty for junction-internal lanes
  std::size_t edge_index = kNoIndex;
  int index = 0;  // 0 = rightmost
  Polyline shape;
  double width = kDefaultLaneWidth;
  double speed_limit = 0.0;
  std::vector<std::size_t> outgoing;  // connections leaving the lane end
  std::optional<std::size_t> internal_of;  // connection this lane realizes, if internal
  std::vector<LaneLink> next;  // lanes a vehicle can drive onto from the lane end
  std::vector<LaneLink> prev;  // lanes feeding the lane start (`lane` = predecessor)

  double length() const { return shape.length(); }
  bool is_internal() const { return internal_of.has_value(); }
};

struct Edge {
  std::string id;
  std::string from_node;
  std::string to_node;
  double speed_limit = 0.0;
  std::vector<std::size_t> lanes;  // lane indices, rightmost first

  double length(const std::vector<Lane>& all) const { return all[lanes.front()].length(); }
};

struct SignalRef {
  std::size_t program = 0;
  std::size_t link = 0;
};

/// Lane-to-lane movement across a node. When the end of `from_lane` and the
/// start of `to_lane` do not coincide, vehicles traverse `internal_lane`.
struct Connection {
  std::size_t from_lane = 0;
  std::size_t to_lane = 0;
  std::string via_node;
  std::optional<SignalRef> signal;
  std::optional<std::size_t> internal_lane;
};

struct Phase {
  std::vector<SignalColor> states;  // one entry per controlled link
  double duration = 0.0;
};

struct SignalProgram {
  std::string id;
  std::vector<Phase> phases;
  double offset = 0.0;

  double cycle() const;
  std::size_t link_count() const { return phases.empty() ? 0 : phases.front().states.size(); }
};

/// Immutable road environment. Edges are stored in id order, their lanes
/// follow in edge order and junction-internal lanes come last; indices are
/// stable for the network lifetime.
class RoadNetwork {
 public:
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<Edge>& edges() const { return edges_; }
  const std::vector<Lane>& lanes() const { return lanes_; }
  const std::vector<Connection>& connections() const { return connections_; }
  const std::vector<SignalProgram>& signals() const { return signals_; }

  std::optional<std::size_t> find_lane(std::string_view id) const;
  std::optional<std::size_t> find_edge(std::string_view id) const;
  std::optional<std::size_t> find_node(std::string_view id) const;
  std::optional<std::size_t> find_signal(std::string_view id) const;

  /// Throwing lookups (UnknownLane / UnknownEdge).
  const Lane& lane(std::string_view id) const;
  const Edge& edge(std::string_view id) const;

  /// Connection leaving `lane` towards any lane of `edge`; prefers the lane
  /// with the same index, then the lowest index.
  std::optional<std::size_t> connection_towards(std::size_t lane, std::size_t edge) const;

  /// Lane following `conn` for a vehicle at the end of its from-lane.
  std::size_t next_lane(std::size_t conn) const;

  /// Free-flow travel time along an edge.
  double travel_time(std::size_t edge) const;

 private:
  friend RoadNetwork parse_network(std::string_view text);

  std::vector<Node> nodes_;
  std::vector<Edge> edges_;
  std::vector<Lane> lanes_;
  std::vector<Connection> connections_;
  std::vector<SignalProgram> signals_;
  std::map<std::string, std::size_t, std::less<>> node_index_;
  std::map<std::string, std::size_t, std::less<>> edge_index_;
  std::map<std::string, std::size_t, std::less<>> lane_index_;
  std::map<std::string, std::size_t, std::less<>> signal_index_;
};

/// Parses and validates a `.net.json` document. Never throws anything but
/// NetworkError.
RoadNetwork parse_network(std::string_view text);
RoadNetwork load_network(const std::filesystem::path& path);

/// Id used for the junction-internal lane of a connection.
std::string internal_lane_id(std::string_view from_lane, std::string_view to_lane);

Pose locate(const RoadNetwork& network, std::string_view lane_id, double s);

/// Minimum free-flow travel time edge sequence from `from_edge` to `to_edge`
/// (both inclusive). Equal-cost paths resolve to the lexicographically
/// smallest id sequence.
std::vector<std::string> route(const RoadNetwork& network, std::string_view from_edge,
                               std::string_view to_edge);

/// Color of `link` at time t. Times exactly on a phase end belong to the
/// next phase.
SignalColor signal_state(const SignalProgram& program, std::size_t link, double t);
SignalColor signal_state(const RoadNetwork& network, std::size_t connection, double t);

}  // namespace precrash::net
