#include "precrash/road_network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

#include <json.hpp>

namespace precrash::net {

using nlohmann::json;
using Kind = NetworkError::Kind;

std::string_view to_string(SignalColor c) {
  switch (c) {
    case SignalColor::Green: return "green";
    case SignalColor::Yellow: return "yellow";
    case SignalColor::Red: return "red";
  }
  return "red";
}

double SignalProgram::cycle() const {
  double total = 0.0;
  for (const Phase& p : phases) total += p.duration;
  return total;
}

std::string internal_lane_id(std::string_view from_lane, std::string_view to_lane) {
  std::string id = ":";
  id.append(from_lane).append("->").append(to_lane);
  return id;
}

namespace {

[[noreturn]] void fail(Kind kind, std::string subject, const std::string& message) {
  throw NetworkError(kind, std::move(subject), message);
}

[[noreturn]] void syntax(const std::string& where, const std::string& what) {
  fail(Kind::Syntax, where, where + ": " + what);
}

const json& member(const json& obj, const char* key, const std::string& where) {
  if (!obj.is_object()) syntax(where, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) syntax(where, std::string("missing field '") + key + "'");
  return *it;
}

const json* optional_member(const json& obj, const char* key) {
  auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) syntax(where, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(Kind::InvalidValue, where, where + ": number is not finite");
  return d;
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) syntax(where, "expected a string");
  return v.get<std::string>();
}

const json& array(const json& v, const std::string& where) {
  if (!v.is_array()) syntax(where, "expected an array");
  return v;
}

std::vector<Vec2> points(const json& v, const std::string& where) {
  std::vector<Vec2> out;
  for (std::size_t i = 0; i < array(v, where).size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    const json& p = v[i];
    if (!p.is_array() || p.size() != 2) syntax(at, "expected [x, y]");
    out.push_back({number(p[0], at), number(p[1], at)});
  }
  return out;
}

Polyline checked_shape(std::vector<Vec2> pts, const std::string& where) {
  Polyline line(std::move(pts));
  if (line.points().size() < 2 || !(line.length() > 0.0)) {
    fail(Kind::InvalidValue, where, where + ": polyline needs at least two distinct points");
  }
  return line;
}

SignalColor color(char c, const std::string& where) {
  switch (c) {
    case 'G': case 'g': return SignalColor::Green;
    case 'Y': case 'y': return SignalColor::Yellow;
    case 'R': case 'r': return SignalColor::Red;
    default: break;
  }
  fail(Kind::InvalidValue, where, where + ": signal state characters must be G, y or r");
}

std::pair<std::size_t, std::size_t> line_column(std::string_view textv, std::size_t byte) {
  std::size_t line = 1;
  std::size_t col = 1;
  for (std::size_t i = 0; i < byte && i < textv.size(); ++i) {
    if (textv[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

}  // namespace

std::optional<std::size_t> RoadNetwork::find_lane(std::string_view id) const {
  auto it = lane_index_.find(id);
  return it == lane_index_.end() ? std::nullopt : std::optional(it->second);
}
std::optional<std::size_t> RoadNetwork::find_edge(std::string_view id) const {
  auto it = edge_index_.find(id);
  return it == edge_index_.end() ? std::nullopt : std::optional(it->second);
}
std::optional<std::size_t> RoadNetwork::find_node(std::string_view id) const {
  auto it = node_index_.find(id);
  return it == node_index_.end() ? std::nullopt : std::optional(it->second);
}
std::optional<std::size_t> RoadNetwork::find_signal(std::string_view id) const {
  auto it = signal_index_.find(id);
  return it == signal_index_.end() ? std::nullopt : std::optional(it->second);
}

const Lane& RoadNetwork::lane(std::string_view id) const {
  auto idx = find_lane(id);
  if (!idx) fail(Kind::UnknownLane, std::string(id), "unknown lane '" + std::string(id) + "'");
  return lanes_[*idx];
}

const Edge& RoadNetwork::edge(std::string_view id) const {
  auto idx = find_edge(id);
  if (!idx) fail(Kind::UnknownEdge, std::string(id), "unknown edge '" + std::string(id) + "'");
  return edges_[*idx];
}

std::optional<std::size_t> RoadNetwork::connection_towards(std::size_t lane, std::size_t edge) const {
  std::optional<std::size_t> best;
  int best_index = std::numeric_limits<int>::max();
  const int own = lanes_[lane].index;
  for (std::size_t c : lanes_[lane].outgoing) {
    const Lane& to = lanes_[connections_[c].to_lane];
    if (to.edge_index != edge) continue;
    if (to.index == own) return c;
    if (to.index < best_index) {
      best_index = to.index;
      best = c;
    }
  }
  return best;
}

std::size_t RoadNetwork::next_lane(std::size_t conn) const {
  const Connection& c = connections_[conn];
  return c.internal_lane ? *c.internal_lane : c.to_lane;
}

double RoadNetwork::travel_time(std::size_t edge) const {
  return edges_[edge].length(lanes_) / edges_[edge].speed_limit;
}

RoadNetwork parse_network(std::string_view text_in) {
  json doc;
  try {
    doc = json::parse(text_in.begin(), text_in.end());
  } catch (const json::parse_error& e) {
    auto [line, col] = line_column(text_in, e.byte == 0 ? 0 : e.byte - 1);
    fail(Kind::Syntax, "",
         "syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
  }

  try {
    if (!doc.is_object()) syntax("document", "expected an object");
    const json& version = member(doc, "format_version", "document");
    if (!version.is_number_integer() || version.get<long long>() != kNetworkFormatVersion) {
      fail(Kind::InvalidValue, "format_version",
           "unsupported format_version (expected " + std::to_string(kNetworkFormatVersion) + ")");
    }

    RoadNetwork net;

    const json& nodes = array(member(doc, "nodes", "document"), "nodes");
    std::map<std::string, Vec2, std::less<>> node_pos;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const std::string where = "nodes[" + std::to_string(i) + "]";
      const json& n = nodes[i];
      std::string id = text(member(n, "id", where), where + ".id");
      Vec2 p{number(member(n, "x", where), where + ".x"), number(member(n, "y", where), where + ".y")};
      if (!node_pos.emplace(id, p).second) fail(Kind::DuplicateId, id, "duplicate node id '" + id + "'");
    }
    for (const auto& [id, p] : node_pos) {
      net.node_index_.emplace(id, net.nodes_.size());
      net.nodes_.push_back({id, p});
    }

    const json& edges = array(member(doc, "edges", "document"), "edges");
    if (edges.empty()) fail(Kind::EmptyNetwork, "", "network has no edges");
    std::map<std::string, const json*, std::less<>> edge_docs;
    for (std::size_t i = 0; i < edges.size(); ++i) {
      const std::string where = "edges[" + std::to_string(i) + "]";
      std::string id = text(member(edges[i], "id", where), where + ".id");
      if (!edge_docs.emplace(id, &edges[i]).second) fail(Kind::DuplicateId, id, "duplicate edge id '" + id + "'");
    }

    for (const auto& [id, e] : edge_docs) {
      const std::string where = "edge '" + id + "'";
      Edge edge;
      edge.id = id;
      edge.from_node = text(member(*e, "from", where), where + ".from");
      edge.to_node = text(member(*e, "to", where), where + ".to");
      for (const std::string* ref : {&edge.from_node, &edge.to_node}) {
        if (!net.node_index_.contains(*ref)) {
          fail(Kind::DanglingReference, *ref, where + " references missing node '" + *ref + "'");
        }
      }
      edge.speed_limit = number(member(*e, "speed_limit", where), where + ".speed_limit");
      if (!(edge.speed_limit > 0.0)) fail(Kind::InvalidValue, id, where + ": speed_limit must be > 0");

      std::optional<Polyline> reference;
      if (const json* shape = optional_member(*e, "shape")) {
        reference = checked_shape(points(*shape, where + ".shape"), where + ".shape");
      }

      const json& lanes = member(*e, "lanes", where);
      std::vector<const json*> lane_docs;
      static const json kEmpty = json::object();
      if (lanes.is_number_integer()) {
        const long long n = lanes.get<long long>();
        if (n < 1 || n > 16) fail(Kind::InvalidValue, id, where + ": lane count must be in [1, 16]");
        lane_docs.assign(static_cast<std::size_t>(n), &kEmpty);
      } else if (lanes.is_array()) {
        if (lanes.empty()) fail(Kind::InvalidValue, id, where + ": edge needs at least one lane");
        for (const json& l : lanes) {
          if (!l.is_object()) syntax(where + ".lanes", "expected lane objects");
          lane_docs.push_back(&l);
        }
      } else {
        syntax(where + ".lanes", "expected a lane count or an array of lanes");
      }

      double offset = 0.0;
      double prev_width = 0.0;
      const std::size_t edge_idx = net.edges_.size();
      for (std::size_t i = 0; i < lane_docs.size(); ++i) {
        const std::string lwhere = where + ".lanes[" + std::to_string(i) + "]";
        Lane lane;
        lane.id = id + "_" + std::to_string(i);
        lane.edge = id;
        lane.edge_index = edge_idx;
        lane.index = static_cast<int>(i);
        lane.speed_limit = edge.speed_limit;
        if (const json* w = optional_member(*lane_docs[i], "width")) lane.width = number(*w, lwhere + ".width");
        if (!(lane.width > 0.0)) fail(Kind::InvalidValue, lane.id, lwhere + ": width must be > 0");
        if (i > 0) offset += 0.5 * (prev_width + lane.width);
        prev_width = lane.width;
        if (const json* shape = optional_member(*lane_docs[i], "shape")) {
          lane.shape = checked_shape(points(*shape, lwhere + ".shape"), lwhere + ".shape");
        } else if (reference) {
          const Polyline shifted = reference->offset(offset);
          lane.shape = checked_shape({shifted.points().begin(), shifted.points().end()}, lwhere);
        } else {
          syntax(lwhere, "lane has no shape and its edge has no reference shape");
        }
        if (net.lane_index_.contains(lane.id)) fail(Kind::DuplicateId, lane.id, "duplicate lane id '" + lane.id + "'");
        net.lane_index_.emplace(lane.id, net.lanes_.size());
        edge.lanes.push_back(net.lanes_.size());
        net.lanes_.push_back(std::move(lane));
      }
      net.edge_index_.emplace(id, edge_idx);
      net.edges_.push_back(std::move(edge));
    }

    if (const json* signals = optional_member(doc, "signals")) {
      array(*signals, "signals");
      std::map<std::string, SignalProgram, std::less<>> programs;
      for (std::size_t i = 0; i < signals->size(); ++i) {
        const std::string where = "signals[" + std::to_string(i) + "]";
        const json& s = (*signals)[i];
        SignalProgram prog;
        prog.id = text(member(s, "id", where), where + ".id");
        if (const json* off = optional_member(s, "offset")) prog.offset = number(*off, where + ".offset");
        const json& phases = array(member(s, "phases", where), where + ".phases");
        if (phases.empty()) fail(Kind::InvalidValue, prog.id, where + ": program needs at least one phase");
        for (std::size_t k = 0; k < phases.size(); ++k) {
          const std::string pwhere = where + ".phases[" + std::to_string(k) + "]";
          Phase ph;
          ph.duration = number(member(phases[k], "duration", pwhere), pwhere + ".duration");
          if (!(ph.duration > 0.0)) fail(Kind::InvalidValue, prog.id, pwhere + ": duration must be > 0");
          for (char c : text(member(phases[k], "state", pwhere), pwhere + ".state")) {
            ph.states.push_back(color(c, pwhere));
          }
          if (ph.states.empty() || (!prog.phases.empty() && ph.states.size() != prog.phases.front().states.size())) {
            fail(Kind::InvalidValue, prog.id, pwhere + ": every phase must control the same non-zero link count");
          }
          prog.phases.push_back(std::move(ph));
        }
        std::string key = prog.id;
        if (!programs.emplace(key, std::move(prog)).second) {
          fail(Kind::DuplicateId, key, "duplicate signal id '" + key + "'");
        }
      }
      for (auto& [id, prog] : programs) {
        net.signal_index_.emplace(id, net.signals_.size());
        net.signals_.push_back(std::move(prog));
      }
    }

    const json* conns = optional_member(doc, "connections");
    std::set<std::pair<std::size_t, std::size_t>> seen;
    std::vector<std::pair<std::size_t, Polyline>> internal_shapes;
    if (conns) {
      array(*conns, "connections");
      for (std::size_t i = 0; i < conns->size(); ++i) {
        const std::string where = "connections[" + std::to_string(i) + "]";
        const json& c = (*conns)[i];
        Connection conn;
        const std::string from = text(member(c, "from", where), where + ".from");
        const std::string to = text(member(c, "to", where), where + ".to");
        auto from_idx = net.find_lane(from);
        if (!from_idx) fail(Kind::DanglingReference, from, where + " references missing lane '" + from + "'");
        auto to_idx = net.find_lane(to);
        if (!to_idx) fail(Kind::DanglingReference, to, where + " references missing lane '" + to + "'");
        conn.from_lane = *from_idx;
        conn.to_lane = *to_idx;
        if (!seen.emplace(conn.from_lane, conn.to_lane).second) {
          fail(Kind::DuplicateId, from + "->" + to, "duplicate connection " + from + "->" + to);
        }
        if (const json* via = optional_member(c, "via")) {
          conn.via_node = text(*via, where + ".via");
          if (!net.node_index_.contains(conn.via_node)) {
            fail(Kind::DanglingReference, conn.via_node, where + " references missing node '" + conn.via_node + "'");
          }
        } else {
          conn.via_node = net.edges_[net.lanes_[conn.from_lane].edge_index].to_node;
        }
        if (const json* sig = optional_member(c, "signal")) {
          const std::string sid = text(*sig, where + ".signal");
          auto prog = net.find_signal(sid);
          if (!prog) fail(Kind::DanglingReference, sid, where + " references missing signal '" + sid + "'");
          const json& link = member(c, "link", where);
          if (!link.is_number_integer()) syntax(where + ".link", "expected an integer");
          const long long l = link.get<long long>();
          if (l < 0 || static_cast<std::size_t>(l) >= net.signals_[*prog].link_count()) {
            fail(Kind::InvalidValue, sid, where + ": link index outside the signal program");
          }
          conn.signal = SignalRef{*prog, static_cast<std::size_t>(l)};
        }
        const Vec2 start = net.lanes_[conn.from_lane].shape.points().back();
        const Vec2 end = net.lanes_[conn.to_lane].shape.points().front();
        std::vector<Vec2> internal;
        if (const json* shape = optional_member(c, "shape")) {
          internal = points(*shape, where + ".shape");
          internal.insert(internal.begin(), start);
          internal.push_back(end);
        } else if (distance(start, end) > 1e-6) {
          internal = {start, end};
        }
        const std::size_t conn_idx = net.connections_.size();
        if (!internal.empty()) {
          internal_shapes.emplace_back(conn_idx, checked_shape(std::move(internal), where + ".shape"));
        }
        net.connections_.push_back(std::move(conn));
      }
    }

    for (auto& [conn_idx, shape] : internal_shapes) {
      Connection& conn = net.connections_[conn_idx];
      const Lane& from = net.lanes_[conn.from_lane];
      const Lane& to = net.lanes_[conn.to_lane];
      Lane lane;
      lane.id = internal_lane_id(from.id, to.id);
      lane.width = from.width;
      lane.speed_limit = std::min(from.speed_limit, to.speed_limit);
      lane.shape = std::move(shape);
      lane.internal_of = conn_idx;
      if (net.lane_index_.contains(lane.id)) fail(Kind::DuplicateId, lane.id, "duplicate lane id '" + lane.id + "'");
      conn.internal_lane = net.lanes_.size();
      net.lane_index_.emplace(lane.id, net.lanes_.size());
      net.lanes_.push_back(std::move(lane));
    }

    for (std::size_t c = 0; c < net.connections_.size(); ++c) {
      const Connection& conn = net.connections_[c];
      net.lanes_[conn.from_lane].outgoing.push_back(c);
      if (conn.internal_lane) {
        net.lanes_[conn.from_lane].next.push_back({*conn.internal_lane, c, true});
        net.lanes_[*conn.internal_lane].prev.push_back({conn.from_lane, c, true});
        net.lanes_[*conn.internal_lane].next.push_back({conn.to_lane, c, false});
        net.lanes_[conn.to_lane].prev.push_back({*conn.internal_lane, c, false});
      } else {
        net.lanes_[conn.from_lane].next.push_back({conn.to_lane, c, true});
        net.lanes_[conn.to_lane].prev.push_back({conn.from_lane, c, true});
      }
    }
    return net;
  } catch (const NetworkError&) {
    throw;
  } catch (const std::exception& e) {
    fail(Kind::Syntax, "", std::string("malformed network document: ") + e.what());
  }
}

RoadNetwork load_network(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Kind::Syntax, path.string(), "cannot open network file '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_network(buf.str());
}

Pose locate(const RoadNetwork& network, std::string_view lane_id, double s) {
  const Lane& lane = network.lane(lane_id);
  if (!(s >= 0.0 && s <= lane.length())) {
    fail(Kind::OutOfRange, std::string(lane_id),
         "position " + std::to_string(s) + " outside lane '" + std::string(lane_id) + "'");
  }
  return lane.shape.at(s);
}

std::vector<std::string> route(const RoadNetwork& network, std::string_view from_edge, std::string_view to_edge) {
  auto from = network.find_edge(from_edge);
  if (!from) fail(Kind::UnknownEdge, std::string(from_edge), "unknown edge '" + std::string(from_edge) + "'");
  auto to = network.find_edge(to_edge);
  if (!to) fail(Kind::UnknownEdge, std::string(to_edge), "unknown edge '" + std::string(to_edge) + "'");

  const auto& edges = network.edges();
  const auto& lanes = network.lanes();
  const auto& conns = network.connections();
  std::vector<std::vector<std::size_t>> succ(edges.size());
  for (const Connection& c : conns) {
    const std::size_t a = lanes[c.from_lane].edge_index;
    const std::size_t b = lanes[c.to_lane].edge_index;
    if (std::find(succ[a].begin(), succ[a].end(), b) == succ[a].end()) succ[a].push_back(b);
  }

  // Labels carry the full id path so equal costs resolve lexicographically.
  struct Label {
    double cost;
    std::vector<std::string> path;
    std::size_t edge;
  };
  auto worse = [](const Label& a, const Label& b) {
    if (a.cost != b.cost) return a.cost > b.cost;
    return a.path > b.path;
  };
  std::priority_queue<Label, std::vector<Label>, decltype(worse)> open(worse);
  std::vector<bool> done(edges.size(), false);
  open.push({network.travel_time(*from), {edges[*from].id}, *from});
  while (!open.empty()) {
    Label cur = open.top();
    open.pop();
    if (done[cur.edge]) continue;
    done[cur.edge] = true;
    if (cur.edge == *to) return cur.path;
    for (std::size_t n : succ[cur.edge]) {
      if (done[n]) continue;
      Label next{cur.cost + network.travel_time(n), cur.path, n};
      next.path.push_back(edges[n].id);
      open.push(std::move(next));
    }
  }
  fail(Kind::NoPath, std::string(to_edge),
       "no path from '" + std::string(from_edge) + "' to '" + std::string(to_edge) + "'");
}

SignalColor signal_state(const SignalProgram& program, std::size_t link, double t) {
  if (link >= program.link_count()) {
    fail(Kind::UnknownConnection, program.id, "link " + std::to_string(link) + " not controlled by '" + program.id + "'");
  }
  const double cycle = program.cycle();
  double local = std::fmod(t + program.offset, cycle);
  if (local < 0.0) local += cycle;
  double end = 0.0;
  for (const Phase& p : program.phases) {
    end += p.duration;
    if (local < end) return p.states[link];
  }
  return program.phases.front().states[link];
}

SignalColor signal_state(const RoadNetwork& network, std::size_t connection, double t) {
  if (connection >= network.connections().size()) {
    fail(Kind::UnknownConnection, std::to_string(connection), "unknown connection " + std::to_string(connection));
  }
  const Connection& c = network.connections()[connection];
  if (!c.signal) return SignalColor::Green;
  return signal_state(network.signals()[c.signal->program], c.signal->link, t);
}

}  // namespace precrash::net
