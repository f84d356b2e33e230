#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rotsync/error.hpp"
#include "rotsync/so3.hpp"

namespace rotsync {

using NodeId = std::size_t;
using EdgeId = std::size_t;

inline constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

/// Undirected edge {i, j} with i < j. `measurement` is the relative rotation
/// from i to j, i.e. consistent absolute rotations satisfy
/// lambda_i * measurement == lambda_j.
struct Edge {
  NodeId i = 0;
  NodeId j = 0;
  Rotation measurement;
  double weight = 1.0;
};

struct Neighbor {
  NodeId node;
  EdgeId edge;
};

/// Simple undirected graph of relative rotation measurements over dense node
/// ids 0..n-1. Immutable once built apart from add_edge; queries are const
/// and safe to share across threads.
class ViewGraph {
 public:
  ViewGraph() = default;
  explicit ViewGraph(std::size_t num_nodes) : adjacency_(num_nodes) {}

  /// Adds the measurement sigma(i, j). If i > j the edge is stored in the
  /// (j, i) orientation with the inverse rotation. Rejects self-loops,
  /// out-of-range ids, duplicate pairs and weights outside (0, 1].
  EdgeId add_edge(NodeId i, NodeId j, const Rotation& measurement_ij,
                  double weight = 1.0) {
    if (i == j) throw GraphError("self-loop on node " + std::to_string(i));
    if (i >= node_count() || j >= node_count())
      throw GraphError("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                       ") references a node outside 0.." +
                       std::to_string(node_count()));
    if (!(weight > 0.0 && weight <= 1.0))
      throw GraphError("edge weight " + std::to_string(weight) +
                       " outside (0, 1]");
    if (find_edge(i, j))
      throw GraphError("duplicate measurement for pair (" + std::to_string(i) +
                       ", " + std::to_string(j) + ")");
    Edge e;
    if (i < j) {
      e = {i, j, measurement_ij, weight};
    } else {
      e = {j, i, inverse(measurement_ij), weight};
    }
    const EdgeId id = edges_.size();
    edges_.push_back(e);
    index_.emplace(key(e.i, e.j), id);
    adjacency_[e.i].push_back({e.j, id});
    adjacency_[e.j].push_back({e.i, id});
    return id;
  }

  std::size_t node_count() const { return adjacency_.size(); }
  std::size_t edge_count() const { return edges_.size(); }

  std::span<const Edge> edges() const { return edges_; }
  const Edge& edge(EdgeId id) const { return edges_.at(id); }
  std::span<const Neighbor> neighbors(NodeId i) const { return adjacency_.at(i); }

  std::optional<EdgeId> find_edge(NodeId i, NodeId j) const {
    if (i == j) return std::nullopt;
    auto it = index_.find(key(std::min(i, j), std::max(i, j)));
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  /// sigma(from, to); the reverse orientation is computed as the inverse of
  /// the stored one, never stored separately.
  Rotation oriented(EdgeId id, NodeId from) const {
    const Edge& e = edges_.at(id);
    return from == e.i ? e.measurement : inverse(e.measurement);
  }

  /// Copy with per-edge weights replaced (indexed by EdgeId).
  ViewGraph with_weights(std::span<const double> weights) const {
    if (weights.size() != edges_.size())
      throw GraphError("weight vector size does not match edge count");
    ViewGraph out = *this;
    for (EdgeId id = 0; id < edges_.size(); ++id) {
      if (!(weights[id] > 0.0 && weights[id] <= 1.0))
        throw GraphError("edge weight outside (0, 1]");
      out.edges_[id].weight = weights[id];
    }
    return out;
  }

 private:
  static std::uint64_t key(NodeId a, NodeId b) {
    return (static_cast<std::uint64_t>(a) << 32) ^ static_cast<std::uint64_t>(b);
  }

  std::vector<Edge> edges_;
  std::vector<std::vector<Neighbor>> adjacency_;
  std::unordered_map<std::uint64_t, EdgeId> index_;
};

/// sigma(i, j); throws MissingEdgeError when {i, j} is not an edge.
inline Rotation oriented_measurement(const ViewGraph& g, NodeId i, NodeId j) {
  const auto id = g.find_edge(i, j);
  if (!id) throw MissingEdgeError(i, j);
  return g.oriented(*id, i);
}

/// Component label per node (labels dense from 0 in order of first node).
inline std::vector<std::size_t> connected_components(const ViewGraph& g) {
  std::vector<std::size_t> label(g.node_count(), kNone);
  std::size_t next = 0;
  std::vector<NodeId> stack;
  for (NodeId s = 0; s < g.node_count(); ++s) {
    if (label[s] != kNone) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (const Neighbor& nb : g.neighbors(u)) {
        if (label[nb.node] == kNone) {
          label[nb.node] = next;
          stack.push_back(nb.node);
        }
      }
    }
    ++next;
  }
  return label;
}

inline bool is_connected(const ViewGraph& g) {
  const auto label = connected_components(g);
  return std::all_of(label.begin(), label.end(),
                     [](std::size_t l) { return l == 0; });
}

struct ComponentResult {
  ViewGraph graph;
  /// old node id -> new id, kNone for dropped nodes.
  std::vector<NodeId> old_to_new;
  std::vector<NodeId> new_to_old;
  std::size_t dropped_nodes = 0;
};

/// Subgraph induced by the largest connected component (ties go to the
/// component containing the smallest node id), re-indexed densely in
/// increasing old-id order. Edge order is preserved.
inline ComponentResult largest_component(const ViewGraph& g) {
  if (g.node_count() == 0) throw GraphError("empty graph");
  const auto label = connected_components(g);
  const std::size_t count = *std::max_element(label.begin(), label.end()) + 1;
  std::vector<std::size_t> sizes(count, 0);
  for (auto l : label) ++sizes[l];
  const std::size_t best = static_cast<std::size_t>(
      std::max_element(sizes.begin(), sizes.end()) - sizes.begin());

  ComponentResult out;
  out.old_to_new.assign(g.node_count(), kNone);
  for (NodeId u = 0; u < g.node_count(); ++u) {
    if (label[u] == best) {
      out.old_to_new[u] = out.new_to_old.size();
      out.new_to_old.push_back(u);
    }
  }
  out.dropped_nodes = g.node_count() - out.new_to_old.size();
  out.graph = ViewGraph(out.new_to_old.size());
  for (const Edge& e : g.edges()) {
    if (label[e.i] == best)
      out.graph.add_edge(out.old_to_new[e.i], out.old_to_new[e.j], e.measurement,
                         e.weight);
  }
  return out;
}

/// BFS tree. parent[root] == kNone, as do parent entries of unreached nodes
/// when built over a subgraph.
struct SpanningTree {
  NodeId root = 0;
  std::vector<NodeId> parent;
  std::vector<EdgeId> parent_edge;
  std::vector<std::size_t> depth;
  /// Reached nodes in BFS order, root first.
  std::vector<NodeId> order;
  std::vector<EdgeId> tree_edges;
  std::vector<bool> in_tree;  // indexed by EdgeId

  bool reached(NodeId u) const { return u == root || parent[u] != kNone; }
};

namespace detail {

inline SpanningTree bfs_tree(const ViewGraph& g, NodeId root,
                             const std::function<bool(EdgeId)>& allowed) {
  SpanningTree t;
  t.root = root;
  t.parent.assign(g.node_count(), kNone);
  t.parent_edge.assign(g.node_count(), kNone);
  t.depth.assign(g.node_count(), 0);
  t.in_tree.assign(g.edge_count(), false);
  std::vector<bool> seen(g.node_count(), false);
  std::deque<NodeId> queue{root};
  seen[root] = true;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    t.order.push_back(u);
    for (const Neighbor& nb : g.neighbors(u)) {
      if (seen[nb.node] || (allowed && !allowed(nb.edge))) continue;
      seen[nb.node] = true;
      t.parent[nb.node] = u;
      t.parent_edge[nb.node] = nb.edge;
      t.depth[nb.node] = t.depth[u] + 1;
      t.in_tree[nb.edge] = true;
      t.tree_edges.push_back(nb.edge);
      queue.push_back(nb.node);
    }
  }
  return t;
}

}  // namespace detail

/// BFS spanning tree rooted at `root`; throws GraphError if g is disconnected.
inline SpanningTree spanning_tree(const ViewGraph& g, NodeId root = 0) {
  if (root >= g.node_count()) throw GraphError("spanning tree root out of range");
  SpanningTree t = detail::bfs_tree(g, root, {});
  if (t.order.size() != g.node_count())
    throw GraphError("graph is disconnected: spanning tree reaches " +
                     std::to_string(t.order.size()) + " of " +
                     std::to_string(g.node_count()) + " nodes");
  return t;
}

struct OrientedEdge {
  EdgeId edge;
  int sign;  // +1: traversed i -> j (stored orientation), -1: j -> i
};

/// Closed walk v0 -> v1 -> ... -> v_{L-1} -> v0; edges[k] joins nodes[k] and
/// nodes[(k+1) % L].
struct Cycle {
  std::vector<NodeId> nodes;
  std::vector<OrientedEdge> edges;
  bool over_length = false;

  std::size_t length() const { return edges.size(); }
};

/// Fundamental cycles with per-edge membership. Edges with nonempty
/// membership form the cyclic edge set; the rest are bridges.
struct CycleSet {
  std::vector<Cycle> cycles;
  /// EdgeId -> ids of cycles containing it.
  std::vector<std::vector<std::size_t>> membership;

  std::size_t size() const { return cycles.size(); }
  bool empty() const { return cycles.empty(); }

  std::vector<bool> cyclic_edges() const {
    std::vector<bool> out(membership.size());
    for (std::size_t e = 0; e < membership.size(); ++e)
      out[e] = !membership[e].empty();
    return out;
  }

  std::size_t cyclic_edge_count() const {
    return static_cast<std::size_t>(
        std::count_if(membership.begin(), membership.end(),
                      [](const auto& m) { return !m.empty(); }));
  }
};

/// One cycle per non-tree edge of a BFS spanning tree rooted at node 0:
/// the tree path between the endpoints closed by the non-tree edge.
/// Cycles longer than `max_len` are kept and flagged.
inline CycleSet cycle_basis(const ViewGraph& g,
                            std::size_t max_len = std::numeric_limits<std::size_t>::max()) {
  CycleSet cs;
  cs.membership.assign(g.edge_count(), {});
  if (g.node_count() == 0) return cs;
  const SpanningTree t = spanning_tree(g, 0);

  auto orient = [&](EdgeId id, NodeId from) {
    return OrientedEdge{id, g.edge(id).i == from ? +1 : -1};
  };

  for (EdgeId id = 0; id < g.edge_count(); ++id) {
    if (t.in_tree[id]) continue;
    const Edge& e = g.edge(id);
    // Walk both endpoints up to their lowest common ancestor.
    std::vector<NodeId> up_u{e.i}, up_v{e.j};
    NodeId a = e.i, b = e.j;
    while (t.depth[a] > t.depth[b]) up_u.push_back(a = t.parent[a]);
    while (t.depth[b] > t.depth[a]) up_v.push_back(b = t.parent[b]);
    while (a != b) {
      up_u.push_back(a = t.parent[a]);
      up_v.push_back(b = t.parent[b]);
    }
    up_v.pop_back();  // lca already ends up_u

    Cycle c;
    c.nodes = up_u;
    c.nodes.insert(c.nodes.end(), up_v.rbegin(), up_v.rend());
    const std::size_t len = c.nodes.size();
    for (std::size_t k = 0; k < len; ++k) {
      const NodeId from = c.nodes[k];
      const NodeId to = c.nodes[(k + 1) % len];
      const EdgeId eid = k + 1 == len ? id : *g.find_edge(from, to);
      c.edges.push_back(orient(eid, from));
    }
    c.over_length = len > max_len;
    const std::size_t cid = cs.cycles.size();
    for (const auto& oe : c.edges) cs.membership[oe.edge].push_back(cid);
    cs.cycles.push_back(std::move(c));
  }
  return cs;
}

/// Ordered product of oriented measurements around the cycle, each raised to
/// its edge weight when `use_weights` is set.
inline Rotation cycle_product(const ViewGraph& g, const Cycle& c, bool use_weights) {
  Rotation acc;
  for (std::size_t k = 0; k < c.edges.size(); ++k) {
    const auto& oe = c.edges[k];
    Rotation s = g.oriented(oe.edge, c.nodes[k]);
    if (use_weights) s = pow(s, g.edge(oe.edge).weight);
    acc = acc * s;
  }
  return acc;
}

/// Angular distance from the composed cycle to identity, in radians.
inline double cycle_residual(const ViewGraph& g, const Cycle& c, bool use_weights) {
  return cycle_product(g, c, use_weights).angle();
}

}  // namespace rotsync
