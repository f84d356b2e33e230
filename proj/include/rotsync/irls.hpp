#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <json.hpp>

#include "rotsync/cost.hpp"
#include "rotsync/error.hpp"
#include "rotsync/graph_io.hpp"
#include "rotsync/parallel.hpp"
#include "rotsync/so3.hpp"
#include "rotsync/view_graph.hpp"

namespace rotsync {

enum class InitMode { identity, spanning_tree };
enum class TauSchedule { reciprocal, constant };

struct SolverConfig {
  /// Stop once the weighted residual sum drops to this value.
  double alpha = 1e-5;
  int max_iters = 100;
  InitMode init_mode = InitMode::spanning_tree;
  /// Multiply the robust weights by the per-edge graph weights.
  bool use_denoise_weights = true;
  TauSchedule tau_schedule = TauSchedule::reciprocal;
  /// Initial tau; the constant schedule keeps it throughout.
  double tau0 = 1.0;
  /// Output frame: this node's rotation is exactly identity.
  NodeId gauge_node = 0;
  /// When positive, also stop once the largest per-node update (radians)
  /// falls to this value. Such a stop is reported as stationary, not
  /// converged; the rotations no longer change but res may still exceed alpha.
  double step_tolerance = 0.0;
  /// Residual floor in the per-edge tangent weights w / max(delta, floor).
  /// Starts at smoothing_start and shrinks by smoothing_decay per iteration
  /// down to smoothing_min.
  double smoothing_start = 0.05;
  double smoothing_decay = 0.5;
  double smoothing_min = 1e-9;
  unsigned threads = 1;

  void validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be > 0");
    if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
    if (!(tau0 > 0.0)) throw ConfigError("tau0 must be > 0");
    if (!(step_tolerance >= 0.0)) throw ConfigError("step_tolerance must be >= 0");
    if (!(smoothing_min > 0.0 && smoothing_start >= smoothing_min))
      throw ConfigError("smoothing_start >= smoothing_min > 0 required");
    if (!(smoothing_decay > 0.0 && smoothing_decay <= 1.0))
      throw ConfigError("smoothing_decay must lie in (0, 1]");
  }
};

/// d(sigma_ij, lambda_i^-1 lambda_j).
inline double edge_residual(const Rotation& lambda_i, const Rotation& lambda_j,
                            const Rotation& sigma_ij) {
  return geodesic_distance(sigma_ij, inverse(lambda_i) * lambda_j);
}

/// Edges and anchors the iteration runs over. `fixed` nodes never move.
struct IrlsProblem {
  const ViewGraph* graph = nullptr;
  std::vector<EdgeId> edges;
  std::vector<bool> fixed;
  /// Per entry of `edges`; multiplies the robust weight.
  std::vector<double> prior;
};

/// Per-edge quantities of one iteration.
struct EdgeTerms {
  double delta = 0.0;  // residual angle
  double r = 0.0;      // rho(delta)
  double phi = 0.0;    // rho'(r)
  double h = 0.0;      // rho''(r)
  double w = 0.0;      // s * phi * prior
};

struct IrlsState {
  std::vector<Rotation> rotations;
  /// Iteration counter; incremented at the start of every iteration.
  int k = 1;
  double tau = 1.0;
  double residual = 1e8;
  /// Current robust weights, parallel to IrlsProblem::edges.
  std::vector<double> weights;
  std::vector<EdgeTerms> terms;
  /// Scalar step s = sum(phi^2) / |sum(phi^2 h)|.
  double step = 0.0;
  /// True when sum(phi^2 h) vanished and s fell back to 1.
  bool degenerate_step = false;
  double smoothing = 0.05;
  double max_update = 0.0;
};

inline IrlsState make_irls_state(const IrlsProblem& problem, std::vector<Rotation> initial,
                                 const SolverConfig& cfg) {
  IrlsState s;
  s.rotations = std::move(initial);
  s.tau = cfg.tau0;
  s.weights = problem.prior;
  s.smoothing = cfg.smoothing_start;
  return s;
}

/// One reweighting pass:
///   1. k <- k + 1
///   2. delta_ij = d(sigma_ij, lambda_i^-1 lambda_j)
///   3-5. r = rho(delta), phi = rho'(r), h = rho''(r)
///   6. s = sum phi^2 / |sum phi^2 h|
///   7. w_ij = s phi_ij prior_ij
///   8. world-frame increments x minimizing
///        sum w_ij / max(delta_ij, floor) * |x_i - x_j - log(lambda_j sigma_ij^-1 lambda_i^-1)|^2
///      with fixed nodes held at x = 0, then lambda_i <- exp(x_i) lambda_i
///   9. res = sum w delta exp(tau w delta)
///  10. tau <- 1/k (reciprocal schedule)
/// Per-edge terms are evaluated in parallel against a snapshot of the
/// rotations; step 8 is one sparse solve shared by the three axes.
inline void irls_iteration(IrlsState& state, const IrlsProblem& problem,
                           const CostFunction& cost_template, const SolverConfig& cfg) {
  const ViewGraph& g = *problem.graph;
  const std::size_t m = problem.edges.size();
  const std::size_t n = state.rotations.size();
  state.k += 1;
  const CostFunction cost = cost_template.with_tau(state.tau);

  state.terms.assign(m, {});
  std::vector<TangentVector> gap(m);
  parallel_for(m, cfg.threads, [&](std::size_t k) {
    const Edge& e = g.edge(problem.edges[k]);
    const Rotation& li = state.rotations[e.i];
    const Rotation& lj = state.rotations[e.j];
    EdgeTerms& t = state.terms[k];
    t.delta = geodesic_distance(e.measurement, inverse(li) * lj);
    const CostValues at_delta = cost.eval(t.delta);
    t.r = at_delta.rho;
    const CostValues at_r = cost.eval(t.r);
    t.phi = at_r.grad;
    t.h = at_r.hess;
    gap[k] = log_map(lj * inverse(e.measurement) * inverse(li));
  });

  double sum_phi2 = 0.0, sum_phi2h = 0.0;
  for (const auto& t : state.terms) {
    sum_phi2 += t.phi * t.phi;
    sum_phi2h += t.phi * t.phi * t.h;
  }
  sum_phi2h = std::abs(sum_phi2h);
  state.degenerate_step = !(sum_phi2h > 1e-300) || !std::isfinite(sum_phi2 / sum_phi2h);
  state.step = state.degenerate_step ? 1.0 : sum_phi2 / sum_phi2h;

  state.weights.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    state.terms[k].w = state.step * state.terms[k].phi * problem.prior[k];
    state.weights[k] = state.terms[k].w;
  }

  std::vector<std::size_t> slot(n, kNone);
  std::size_t free_count = 0;
  for (NodeId u = 0; u < n; ++u)
    if (!problem.fixed[u]) slot[u] = free_count++;
  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(4 * m + free_count);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(free_count), 3);
  std::vector<double> diag(free_count, 0.0);
  for (std::size_t k = 0; k < m; ++k) {
    const Edge& e = g.edge(problem.edges[k]);
    const double omega = state.terms[k].w / std::max(state.terms[k].delta, state.smoothing);
    const std::size_t a = slot[e.i], b = slot[e.j];
    if (a != kNone) {
      diag[a] += omega;
      rhs.row(static_cast<Eigen::Index>(a)) += omega * gap[k].transpose();
    }
    if (b != kNone) {
      diag[b] += omega;
      rhs.row(static_cast<Eigen::Index>(b)) -= omega * gap[k].transpose();
    }
    if (a != kNone && b != kNone) {
      entries.emplace_back(static_cast<int>(a), static_cast<int>(b), -omega);
      entries.emplace_back(static_cast<int>(b), static_cast<int>(a), -omega);
    }
  }
  // Free nodes without any edge stay put.
  for (std::size_t a = 0; a < free_count; ++a)
    entries.emplace_back(static_cast<int>(a), static_cast<int>(a), diag[a] > 0.0 ? diag[a] : 1.0);

  state.max_update = 0.0;
  if (free_count > 0) {
    Eigen::SparseMatrix<double> lap(static_cast<Eigen::Index>(free_count),
                                    static_cast<Eigen::Index>(free_count));
    lap.setFromTriplets(entries.begin(), entries.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(lap);
    // Zero weights (l2 or huber on an exactly satisfied edge) can cut nodes
    // off from every anchor; a tiny ridge then pins their common motion.
    auto degenerate = [&] {
      if (ldlt.info() != Eigen::Success) return true;
      const Eigen::VectorXd d = ldlt.vectorD();
      return !(d.minCoeff() > 1e-13 * d.maxCoeff());
    };
    if (degenerate()) {
      const double ridge = 1e-12 * *std::max_element(diag.begin(), diag.end());
      for (std::size_t a = 0; a < free_count; ++a)
        lap.coeffRef(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)) += ridge;
      ldlt.compute(lap);
      if (ldlt.info() != Eigen::Success) throw GraphError("weighted Laplacian is singular");
    }
    const Eigen::MatrixXd x = ldlt.solve(rhs);
    for (NodeId u = 0; u < n; ++u) {
      if (slot[u] == kNone) continue;
      const TangentVector step = x.row(static_cast<Eigen::Index>(slot[u])).transpose();
      state.max_update = std::max(state.max_update, step.norm());
      state.rotations[u] = exp_map(step) * state.rotations[u];
    }
  }

  double res = 0.0;
  for (const auto& t : state.terms) res += t.w * t.delta * std::exp(state.tau * t.w * t.delta);
  state.residual = res;

  if (cfg.tau_schedule == TauSchedule::reciprocal) state.tau = 1.0 / state.k;
  state.smoothing = std::max(cfg.smoothing_min, state.smoothing * cfg.smoothing_decay);
}

struct SolveReport {
  std::vector<Rotation> rotations;
  int iterations = 0;
  std::vector<double> residual_trace;
  /// res <= alpha was reached.
  bool converged = false;
  /// Stopped on step_tolerance without reaching alpha.
  bool stationary = false;
  double wall_time = 0.0;
  std::size_t cyclic_edges = 0;
  std::size_t edge_count = 0;
  std::vector<std::string> warnings;
};

inline nlohmann::json to_json(const SolveReport& r) {
  return {{"rotations", rotations_to_json(r.rotations)},
          {"iterations", r.iterations},
          {"residual_trace", r.residual_trace},
          {"converged", r.converged},
          {"stationary", r.stationary},
          {"wall_time", r.wall_time},
          {"cyclic_edges", r.cyclic_edges},
          {"edge_count", r.edge_count}};
}

/// Sum over edges of weight * rho(delta) (weight 1 when `use_weights` is off).
inline double objective_value(const ViewGraph& g, std::span<const Rotation> rotations,
                              const CostFunction& cost, bool use_weights) {
  double total = 0.0;
  for (const Edge& e : g.edges()) {
    const double d = edge_residual(rotations[e.i], rotations[e.j], e.measurement);
    total += (use_weights ? e.weight : 1.0) * cost.rho(d);
  }
  return total;
}

/// Robust rotation averaging over a connected view graph.
///
/// Only cyclic edges (those on some cycle) enter the reweighted iteration;
/// each 2-edge-connected block is anchored at its smallest node. Blocks are
/// then stitched together rigidly across the bridge edges, which are always
/// satisfied exactly, and the result is expressed in the frame where
/// `gauge_node` is the identity. Because the anchors do not depend on the
/// gauge node, changing it only changes the output by a global rotation.
inline SolveReport solve(const ViewGraph& g, const SolverConfig& cfg,
                         const CostFunction& cost) {
  cfg.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t n = g.node_count();
  if (n == 0) throw GraphError("cannot solve an empty graph");
  if (cfg.gauge_node >= n) throw ConfigError("gauge_node out of range");
  if (!is_connected(g)) throw GraphError("solve requires a connected graph");

  SolveReport report;
  report.edge_count = g.edge_count();
  const CycleSet cycles = cycle_basis(g);
  const std::vector<bool> cyclic = cycles.cyclic_edges();
  report.cyclic_edges = cycles.cyclic_edge_count();
  if (2 * report.cyclic_edges <= g.edge_count())
    report.warnings.push_back("only " + std::to_string(report.cyclic_edges) + " of " +
                              std::to_string(g.edge_count()) +
                              " edges lie on a cycle (expected more than half)");

  // 2-edge-connected blocks: components over cyclic edges.
  std::vector<std::size_t> block(n, kNone);
  std::vector<std::vector<NodeId>> members;
  for (NodeId s = 0; s < n; ++s) {
    if (block[s] != kNone) continue;
    const std::size_t b = members.size();
    members.emplace_back();
    std::vector<NodeId> stack{s};
    block[s] = b;
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      members[b].push_back(u);
      for (const Neighbor& nb : g.neighbors(u)) {
        if (!cyclic[nb.edge] || block[nb.node] != kNone) continue;
        block[nb.node] = b;
        stack.push_back(nb.node);
      }
    }
  }

  std::vector<Rotation> rotations(n);
  IrlsProblem problem;
  problem.graph = &g;
  problem.fixed.assign(n, false);
  for (const auto& mem : members) {
    const NodeId anchor = *std::min_element(mem.begin(), mem.end());
    problem.fixed[anchor] = true;
    if (cfg.init_mode == InitMode::spanning_tree && mem.size() > 1) {
      const SpanningTree t =
          detail::bfs_tree(g, anchor, [&](EdgeId e) { return cyclic[e]; });
      for (NodeId u : t.order) {
        if (u == anchor) continue;
        rotations[u] = rotations[t.parent[u]] * g.oriented(t.parent_edge[u], t.parent[u]);
      }
    }
  }
  for (EdgeId e = 0; e < g.edge_count(); ++e) {
    if (!cyclic[e]) continue;
    problem.edges.push_back(e);
    problem.prior.push_back(cfg.use_denoise_weights ? g.edge(e).weight : 1.0);
  }

  if (problem.edges.empty()) {
    report.converged = true;
  } else {
    IrlsState state = make_irls_state(problem, rotations, cfg);
    for (int it = 0; it < cfg.max_iters; ++it) {
      irls_iteration(state, problem, cost, cfg);
      report.residual_trace.push_back(state.residual);
      report.iterations = it + 1;
      if (state.residual <= cfg.alpha) {
        report.converged = true;
        break;
      }
      if (cfg.step_tolerance > 0.0 && state.max_update <= cfg.step_tolerance) {
        report.stationary = true;
        break;
      }
    }
    rotations = std::move(state.rotations);
  }

  // Stitch blocks across bridges, starting from the block of node 0.
  std::vector<bool> placed(members.size(), false);
  std::deque<NodeId> queue(members[block[0]].begin(), members[block[0]].end());
  placed[block[0]] = true;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    for (const Neighbor& nb : g.neighbors(u)) {
      const std::size_t b = block[nb.node];
      if (cyclic[nb.edge] || placed[b]) continue;
      const Rotation target = rotations[u] * g.oriented(nb.edge, u);
      const Rotation shift = target * inverse(rotations[nb.node]);
      for (NodeId x : members[b]) rotations[x] = shift * rotations[x];
      rotations[nb.node] = target;
      placed[b] = true;
      queue.insert(queue.end(), members[b].begin(), members[b].end());
    }
  }

  const Rotation to_gauge = inverse(rotations[cfg.gauge_node]);
  for (auto& r : rotations) r = to_gauge * r;
  rotations[cfg.gauge_node] = Rotation::identity();

  report.rotations = std::move(rotations);
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return report;
}

}  // namespace rotsync
