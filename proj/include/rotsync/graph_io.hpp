#pragma once

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rotsync/error.hpp"
#include "rotsync/so3.hpp"
#include "rotsync/view_graph.hpp"

namespace rotsync {

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Result of reading a g2o file: the graph, any VERTEX rotations present, and
/// non-fatal diagnostics for the caller to log.
struct G2oData {
  ViewGraph graph;
  std::map<NodeId, Rotation> vertices;
  std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t k = 0;
  while (k < line.size()) {
    while (k < line.size() && std::isspace(static_cast<unsigned char>(line[k]))) ++k;
    const std::size_t start = k;
    while (k < line.size() && !std::isspace(static_cast<unsigned char>(line[k]))) ++k;
    if (k > start) out.push_back(line.substr(start, k - start));
  }
  return out;
}

inline double parse_number(std::string_view tok, const std::string& source,
                           std::size_t line) {
  double v = 0.0;
  if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size() || !std::isfinite(v))
    throw ParseError(source, line, "expected a number, got '" + std::string(tok) + "'");
  return v;
}

inline std::size_t parse_id(std::string_view tok, const std::string& source,
                            std::size_t line) {
  std::size_t v = 0;
  auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (res.ec != std::errc() || res.ptr != tok.data() + tok.size())
    throw ParseError(source, line, "expected a node id, got '" + std::string(tok) + "'");
  if (v > 100'000'000)
    throw ParseError(source, line, "node id " + std::string(tok) + " is too large");
  return v;
}

}  // namespace detail

/// Reads the SO(3) subset of g2o:
///   VERTEX_SO3:QUAT id qx qy qz qw
///   EDGE_SO3:QUAT i j qx qy qz qw [information entries]
/// `#` starts a comment. The node count is one past the largest id seen.
/// Information-matrix entries are parsed and discarded with one warning.
inline G2oData read_g2o(std::istream& in, const std::string& source = "<g2o>") {
  struct RawEdge {
    NodeId i, j;
    Rotation q;
    std::size_t line;
  };
  std::vector<RawEdge> raw_edges;
  G2oData out;
  std::size_t max_id = 0;
  bool any_node = false;
  std::size_t info_lines = 0;

  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view sv(line);
    if (auto hash = sv.find('#'); hash != std::string_view::npos) sv = sv.substr(0, hash);
    const auto tok = detail::split_ws(sv);
    if (tok.empty()) continue;

    auto quat = [&](std::size_t at) {
      const double qx = detail::parse_number(tok[at], source, lineno);
      const double qy = detail::parse_number(tok[at + 1], source, lineno);
      const double qz = detail::parse_number(tok[at + 2], source, lineno);
      const double qw = detail::parse_number(tok[at + 3], source, lineno);
      if (qw * qw + qx * qx + qy * qy + qz * qz < 1e-12)
        throw ParseError(source, lineno, "zero quaternion");
      return Rotation::from_wxyz(qw, qx, qy, qz);
    };

    if (tok[0] == "VERTEX_SO3:QUAT") {
      if (tok.size() != 6)
        throw ParseError(source, lineno, "VERTEX_SO3:QUAT expects 5 fields");
      const NodeId id = detail::parse_id(tok[1], source, lineno);
      if (out.vertices.count(id))
        throw ParseError(source, lineno, "duplicate vertex " + std::to_string(id));
      out.vertices.emplace(id, quat(2));
      max_id = std::max(max_id, id);
      any_node = true;
    } else if (tok[0] == "EDGE_SO3:QUAT") {
      if (tok.size() < 7)
        throw ParseError(source, lineno, "EDGE_SO3:QUAT expects at least 6 fields");
      const NodeId i = detail::parse_id(tok[1], source, lineno);
      const NodeId j = detail::parse_id(tok[2], source, lineno);
      const Rotation q = quat(3);
      if (tok.size() > 7) {
        for (std::size_t k = 7; k < tok.size(); ++k)
          detail::parse_number(tok[k], source, lineno);
        ++info_lines;
      }
      raw_edges.push_back({i, j, q, lineno});
      max_id = std::max({max_id, i, j});
      any_node = true;
    } else {
      throw ParseError(source, lineno, "unknown record '" + std::string(tok[0]) + "'");
    }
  }

  out.graph = ViewGraph(any_node ? max_id + 1 : 0);
  for (const auto& e : raw_edges) {
    try {
      out.graph.add_edge(e.i, e.j, e.q);
    } catch (const GraphError& err) {
      throw ParseError(source, e.line, err.what());
    }
  }
  if (info_lines > 0)
    out.warnings.push_back(source + ": ignored information-matrix fields on " +
                           std::to_string(info_lines) + " edge line(s)");
  return out;
}

/// Writes VERTEX lines for every node (identity unless `vertices` has one)
/// followed by EDGE lines in edge order. Output of this function is the
/// canonical form: reading and re-writing it is byte-identical.
inline void write_g2o(std::ostream& out, const ViewGraph& g,
                      const std::map<NodeId, Rotation>& vertices = {}) {
  auto quat = [&](const Rotation& r) {
    out << format_double(r.x()) << ' ' << format_double(r.y()) << ' '
        << format_double(r.z()) << ' ' << format_double(r.w());
  };
  for (NodeId u = 0; u < g.node_count(); ++u) {
    auto it = vertices.find(u);
    out << "VERTEX_SO3:QUAT " << u << ' ';
    quat(it == vertices.end() ? Rotation() : it->second);
    out << '\n';
  }
  for (const Edge& e : g.edges()) {
    out << "EDGE_SO3:QUAT " << e.i << ' ' << e.j << ' ';
    quat(e.measurement);
    out << '\n';
  }
}

/// Rotation sets as g2o VERTEX lines only.
inline void write_g2o_vertices(std::ostream& out, std::span<const Rotation> rotations) {
  for (NodeId u = 0; u < rotations.size(); ++u) {
    const Rotation& r = rotations[u];
    out << "VERTEX_SO3:QUAT " << u << ' ' << format_double(r.x()) << ' '
        << format_double(r.y()) << ' ' << format_double(r.z()) << ' '
        << format_double(r.w()) << '\n';
  }
}

inline nlohmann::json rotation_to_json(const Rotation& r) {
  return nlohmann::json::array({r.w(), r.x(), r.y(), r.z()});
}

inline Rotation rotation_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 4)
    throw DomainError("rotation must be an array [w, x, y, z]");
  for (const auto& c : j)
    if (!c.is_number()) throw DomainError("rotation components must be numbers");
  const double w = j[0].get<double>(), x = j[1].get<double>(),
               y = j[2].get<double>(), z = j[3].get<double>();
  if (w * w + x * x + y * y + z * z < 1e-12) throw DomainError("zero quaternion");
  return Rotation::from_wxyz(w, x, y, z);
}

/// {"nodes": [0..n-1], "edges": [{"i", "j", "q": [w,x,y,z], "weight"}]}
inline nlohmann::json graph_to_json(const ViewGraph& g) {
  nlohmann::json nodes = nlohmann::json::array();
  for (NodeId u = 0; u < g.node_count(); ++u) nodes.push_back(u);
  nlohmann::json edges = nlohmann::json::array();
  for (const Edge& e : g.edges()) {
    edges.push_back({{"i", e.i},
                     {"j", e.j},
                     {"q", rotation_to_json(e.measurement)},
                     {"weight", e.weight}});
  }
  return {{"nodes", std::move(nodes)}, {"edges", std::move(edges)}};
}

inline ViewGraph graph_from_json(const nlohmann::json& doc,
                                 const std::string& source = "<json>") {
  try {
    if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges"))
      throw ParseError(source, "expected an object with 'nodes' and 'edges'");
    const auto& nodes = doc.at("nodes");
    if (!nodes.is_array()) throw ParseError(source, "'nodes' must be an array");
    std::vector<bool> seen(nodes.size(), false);
    for (const auto& n : nodes) {
      if (!n.is_number_unsigned()) throw ParseError(source, "node ids must be unsigned integers");
      const auto id = n.get<std::size_t>();
      if (id >= nodes.size() || seen[id])
        throw ParseError(source, "node ids must be exactly 0..n-1 without repeats");
      seen[id] = true;
    }
    ViewGraph g(nodes.size());
    std::size_t k = 0;
    for (const auto& e : doc.at("edges")) {
      const double weight = e.contains("weight") ? e.at("weight").get<double>() : 1.0;
      try {
        g.add_edge(e.at("i").get<NodeId>(), e.at("j").get<NodeId>(),
                   rotation_from_json(e.at("q")), weight);
      } catch (const Error& err) {
        throw ParseError(source, "edge #" + std::to_string(k) + ": " + err.what());
      }
      ++k;
    }
    return g;
  } catch (const nlohmann::json::exception& err) {
    throw ParseError(source, err.what());
  }
}

inline nlohmann::json parse_json_stream(std::istream& in, const std::string& source) {
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& err) {
    // The byte offset is the most precise location nlohmann reports.
    throw ParseError(source, "byte " + std::to_string(err.byte) + ": " + err.what());
  }
}

inline bool has_json_extension(const std::string& path) {
  return path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
}

/// Reads a graph from `path`, choosing JSON for *.json and g2o otherwise.
inline G2oData read_graph_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  if (has_json_extension(path)) {
    G2oData out;
    out.graph = graph_from_json(parse_json_stream(in, path), path);
    return out;
  }
  return read_g2o(in, path);
}

inline void write_graph_file(const std::string& path, const ViewGraph& g) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  if (has_json_extension(path)) {
    out << graph_to_json(g).dump(2) << '\n';
  } else {
    write_g2o(out, g);
  }
}

inline nlohmann::json rotations_to_json(std::span<const Rotation> rotations) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rotations) arr.push_back(rotation_to_json(r));
  return arr;
}

/// Reads a rotation set from JSON ({"rotations": [[w,x,y,z], ...]}) or from
/// g2o VERTEX lines. Vertex ids must be dense 0..n-1.
inline std::vector<Rotation> read_rotations_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path, "cannot open file");
  std::vector<Rotation> out;
  if (has_json_extension(path)) {
    const auto doc = parse_json_stream(in, path);
    if (!doc.is_object() || !doc.contains("rotations"))
      throw ParseError(path, "expected an object with 'rotations'");
    try {
      for (const auto& r : doc.at("rotations")) out.push_back(rotation_from_json(r));
    } catch (const DomainError& err) {
      throw ParseError(path, err.what());
    }
    return out;
  }
  G2oData data = read_g2o(in, path);
  for (NodeId u = 0; u < data.vertices.size(); ++u) {
    auto it = data.vertices.find(u);
    if (it == data.vertices.end())
      throw ParseError(path, "vertex ids are not dense: missing " + std::to_string(u));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace rotsync
