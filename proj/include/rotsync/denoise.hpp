#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "rotsync/error.hpp"
#include "rotsync/parallel.hpp"
#include "rotsync/so3.hpp"
#include "rotsync/view_graph.hpp"

namespace rotsync {

struct DenoiseConfig {
  /// Target cycle residual in radians.
  double epsilon = 0.01;
  /// Multiplier on floor(sqrt(|V_C|)) triples per cycle.
  double sample_rounds_scale = 1.0;
  /// Coordinate-descent sweeps per triangle solve.
  int inner_iters = 50;
  /// Floor on every emitted weight.
  double min_weight = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  /// Cycles longer than this are flagged in the cycle set (still processed).
  std::size_t max_cycle_len = std::numeric_limits<std::size_t>::max();

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    if (!(min_weight > 0.0 && min_weight < 1.0))
      throw ConfigError("min_weight must lie in (0, 1)");
    if (!(sample_rounds_scale > 0.0))
      throw ConfigError("sample_rounds_scale must be > 0");
    if (inner_iters < 1) throw ConfigError("inner_iters must be >= 1");
  }
};

class BrokenPathError : public GraphError {
 public:
  using GraphError::GraphError;
};

/// A node walk; consecutive entries must be adjacent.
using Path = std::vector<NodeId>;

/// Three distinct cycle positions and the arcs they cut the cycle into:
/// arcs[0] runs positions[0] -> positions[1], arcs[1] positions[1] ->
/// positions[2], arcs[2] positions[2] -> positions[0] (wrapping).
struct TripleSample {
  std::array<std::size_t, 3> positions{};
  std::array<Path, 3> arcs;
};

inline std::size_t default_sample_rounds(std::size_t cycle_nodes, double scale = 1.0) {
  const auto base = static_cast<double>(
      static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(cycle_nodes)))));
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(base * scale)));
}

template <class URBG>
std::vector<TripleSample> sample_triples(const Cycle& cycle, std::size_t rounds,
                                         URBG& rng) {
  const std::size_t len = cycle.nodes.size();
  if (len < 3) throw GraphError("cycle shorter than 3");
  std::uniform_int_distribution<std::size_t> pick(0, len - 1);
  std::vector<TripleSample> out;
  out.reserve(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    std::array<std::size_t, 3> p{};
    p[0] = pick(rng);
    do p[1] = pick(rng); while (p[1] == p[0]);
    do p[2] = pick(rng); while (p[2] == p[0] || p[2] == p[1]);
    std::sort(p.begin(), p.end());

    TripleSample s;
    s.positions = p;
    for (int a = 0; a < 3; ++a) {
      const std::size_t from = p[a];
      const std::size_t to = p[(a + 1) % 3];
      Path& arc = s.arcs[a];
      for (std::size_t k = from;; k = (k + 1) % len) {
        arc.push_back(cycle.nodes[k]);
        if (k == to && arc.size() > 1) break;
      }
    }
    out.push_back(std::move(s));
  }
  return out;
}

/// Ordered product sigma(p0, p1) * sigma(p1, p2) * ... along the path.
inline Rotation compose_path(const ViewGraph& g, const Path& path) {
  if (path.size() < 2) throw BrokenPathError("path needs at least two nodes");
  Rotation acc;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const auto id = g.find_edge(path[k], path[k + 1]);
    if (!id)
      throw BrokenPathError("broken path: no edge between " + std::to_string(path[k]) +
                            " and " + std::to_string(path[k + 1]));
    acc = acc * g.oriented(*id, path[k]);
  }
  return acc;
}

inline std::vector<EdgeId> path_edges(const ViewGraph& g, const Path& path) {
  std::vector<EdgeId> out;
  for (std::size_t k = 0; k + 1 < path.size(); ++k) {
    const auto id = g.find_edge(path[k], path[k + 1]);
    if (!id)
      throw BrokenPathError("broken path: no edge between " + std::to_string(path[k]) +
                            " and " + std::to_string(path[k + 1]));
    out.push_back(*id);
  }
  return out;
}

struct TriangleSolution {
  std::array<double, 3> weights{1.0, 1.0, 1.0};
  /// d(a^wa b^wb c^wc, I) at the returned weights.
  double residual = 0.0;
  /// residual + epsilon * sum(1 - w).
  double objective = 0.0;
  /// Objective at w = (1, 1, 1), i.e. the unweighted residual.
  double initial_objective = 0.0;
  /// True when residual <= epsilon.
  bool converged = false;
  int sweeps = 0;
};

/// Objective minimized by triangle_weights.
inline double triangle_objective(const Rotation& a, const Rotation& b, const Rotation& c,
                                 const std::array<double, 3>& w, double penalty) {
  const double res = (pow(a, w[0]) * pow(b, w[1]) * pow(c, w[2])).angle();
  return res + penalty * ((1.0 - w[0]) + (1.0 - w[1]) + (1.0 - w[2]));
}

/// Weights in [min_weight, 1] on the three arc rotations minimizing
///   d(a^wa * b^wb * c^wc, I) + epsilon * sum(1 - w).
/// Starting from (1, 1, 1), a damped Gauss-Newton pass drives
/// log(a^wa b^wb c^wc) toward zero inside the box; cyclic coordinate descent
/// (coarse scan plus golden-section refinement per weight) then polishes the
/// result, and a projected Gauss-Newton pass on a smoothed residual moves off
/// the non-differentiable point F = 0. The same pipeline is rerun from the
/// best point of a coarse grid. Only strict objective decreases are accepted,
/// so the result never scores worse than the unweighted triangle. Returns
/// immediately if (1, 1, 1) is already within epsilon.
inline TriangleSolution triangle_weights(const Rotation& a, const Rotation& b,
                                         const Rotation& c, const DenoiseConfig& cfg) {
  const std::array<TangentVector, 3> logs{log_map(a), log_map(b), log_map(c)};
  const double mu = cfg.epsilon;
  const double lo = cfg.min_weight;
  using Weights = std::array<double, 3>;

  auto product = [&](const Weights& w) {
    return exp_map(w[0] * logs[0]) * exp_map(w[1] * logs[1]) * exp_map(w[2] * logs[2]);
  };
  auto penalty = [&](const Weights& w) {
    return mu * ((1.0 - w[0]) + (1.0 - w[1]) + (1.0 - w[2]));
  };
  auto objective_at = [&](const Weights& w) { return product(w).angle() + penalty(w); };

  TriangleSolution sol;
  sol.initial_objective = product(sol.weights).angle();
  sol.residual = sol.initial_objective;
  sol.objective = sol.initial_objective;
  if (sol.residual <= cfg.epsilon) {
    sol.converged = true;
    return sol;
  }

  int sweeps = 0;
  auto refine = [&](Weights& w, double& best) {

    // Levenberg-Marquardt on F(w) = log(a^wa b^wb c^wc), projected onto the box.
    double damping = 1e-6;
    for (int it = 0; it < 30; ++it) {
      const TangentVector f = log_map(product(w));
      if (f.norm() < 1e-12) break;
      Eigen::Matrix3d jac;
      for (int k = 0; k < 3; ++k) {
        constexpr double h = 1e-7;
        Weights wp = w, wm = w;
        wp[k] += h;
        wm[k] -= h;
        jac.col(k) = (log_map(product(wp)) - log_map(product(wm))) / (2.0 * h);
      }
      bool improved = false;
      while (damping < 1e6) {
        const Eigen::Matrix3d normal =
            jac.transpose() * jac + damping * Eigen::Matrix3d::Identity();
        const Eigen::Vector3d delta = normal.ldlt().solve(-jac.transpose() * f);
        Weights trial;
        for (int k = 0; k < 3; ++k) trial[k] = std::clamp(w[k] + delta(k), lo, 1.0);
        const double v = objective_at(trial);
        if (v < best) {
          w = trial;
          best = v;
          damping = std::max(1e-9, damping * 0.3);
          improved = true;
          break;
        }
        damping *= 10.0;
      }
      if (!improved) break;
    }

    constexpr int kScan = 24;
    constexpr double kInvPhi = 0.6180339887498949;
    for (int sweep = 0; sweep < cfg.inner_iters; ++sweep) {
      const double sweep_start = best;
      for (int axis = 0; axis < 3; ++axis) {
        Rotation before, after;
        for (int k = 0; k < axis; ++k) before = before * exp_map(w[k] * logs[k]);
        for (int k = axis + 1; k < 3; ++k) after = after * exp_map(w[k] * logs[k]);
        double fixed_penalty = 0.0;
        for (int k = 0; k < 3; ++k)
          if (k != axis) fixed_penalty += mu * (1.0 - w[k]);
        auto f = [&](double t) {
          return (before * exp_map(t * logs[axis]) * after).angle() + fixed_penalty +
                 mu * (1.0 - t);
        };
        // Coarse scan.
        const double step = (1.0 - lo) / kScan;
        int arg = 0;
        double fbest = std::numeric_limits<double>::infinity();
        for (int s = 0; s <= kScan; ++s) {
          const double v = f(lo + s * step);
          if (v < fbest) {
            fbest = v;
            arg = s;
          }
        }
        // Golden-section refinement on the bracketing cells.
        double left = lo + std::max(0, arg - 1) * step;
        double right = lo + std::min(kScan, arg + 1) * step;
        double x1 = right - kInvPhi * (right - left);
        double x2 = left + kInvPhi * (right - left);
        double f1 = f(x1), f2 = f(x2);
        while (right - left > 1e-8) {
          if (f1 <= f2) {
            right = x2;
            x2 = x1;
            f2 = f1;
            x1 = right - kInvPhi * (right - left);
            f1 = f(x1);
          } else {
            left = x1;
            x1 = x2;
            f1 = f2;
            x2 = left + kInvPhi * (right - left);
            f2 = f(x2);
          }
        }
        double cand = f1 <= f2 ? x1 : x2;
        double fcand = std::min(f1, f2);
        if (fbest < fcand) {
          cand = lo + arg * step;
          fcand = fbest;
        }
        if (fcand < best) {
          w[axis] = std::clamp(cand, lo, 1.0);
          best = fcand;
        }
      }
      sweeps = std::max(sweeps, sweep + 1);
      if (sweep_start - best <= 1e-12) break;
    }
  };

  auto jacobian = [&](const Weights& w) {
    Eigen::Matrix3d jac;
    for (int k = 0; k < 3; ++k) {
      constexpr double h = 1e-7;
      Weights wp = w, wm = w;
      wp[k] = std::min(1.0, w[k] + h);
      wm[k] = std::max(lo, w[k] - h);
      jac.col(k) = (log_map(product(wp)) - log_map(product(wm))) / (wp[k] - wm[k]);
    }
    return jac;
  };

  // Projected Gauss-Newton on sqrt(|F|^2 + eta^2) - mu * sum(w) with eta
  // shrinking toward zero; leaves the kink at F = 0 that traps axis moves.
  auto smooth = [&](Weights& w, double& best) {
    Weights x = w;
    for (double eta = 1e-2; eta >= 1e-8; eta *= 0.1) {
      auto value = [&](const Weights& v) {
        return std::hypot(log_map(product(v)).norm(), eta) + penalty(v);
      };
      double fx = value(x);
      for (int it = 0; it < 20; ++it) {
        const TangentVector f = log_map(product(x));
        const Eigen::Matrix3d jac = jacobian(x);
        const double sn = std::hypot(f.norm(), eta);
        const Eigen::Vector3d jf = jac.transpose() * f;
        const Eigen::Vector3d grad = jf / sn - mu * Eigen::Vector3d::Ones();
        Eigen::Matrix3d hess = jac.transpose() * jac / sn - jf * jf.transpose() / (sn * sn * sn);
        std::array<bool, 3> free{};
        for (int k = 0; k < 3; ++k)
          free[k] = !((x[k] <= lo && grad(k) > 0.0) || (x[k] >= 1.0 && grad(k) < 0.0));
        for (int k = 0; k < 3; ++k)
          if (!free[k]) {
            hess.row(k).setZero();
            hess.col(k).setZero();
            hess(k, k) = 1.0;
          }
        Eigen::Vector3d g = grad;
        for (int k = 0; k < 3; ++k)
          if (!free[k]) g(k) = 0.0;
        if (g.norm() < 1e-12) break;
        hess += 1e-12 * Eigen::Matrix3d::Identity();
        Eigen::Vector3d dir = -hess.ldlt().solve(g);
        if (!(dir.dot(g) < 0.0)) dir = -g;
        bool moved = false;
        for (double t = 1.0; t > 1e-10; t *= 0.5) {
          Weights trial;
          for (int k = 0; k < 3; ++k) trial[k] = std::clamp(x[k] + t * dir(k), lo, 1.0);
          const double ft = value(trial);
          if (ft < fx) {
            x = trial;
            fx = ft;
            moved = true;
            break;
          }
        }
        if (!moved) break;
      }
    }
    const double v = objective_at(x);
    if (v < best) {
      w = x;
      best = v;
      refine(w, best);
    }
  };

  // Second start: best point of a coarse grid over the box, which catches
  // minima far from (1, 1, 1) such as all weights at the floor.
  constexpr int kGrid = 5;
  Weights seed{1.0, 1.0, 1.0};
  double seed_value = std::numeric_limits<double>::infinity();
  for (int i = 0; i < kGrid; ++i)
    for (int j = 0; j < kGrid; ++j)
      for (int k = 0; k < kGrid; ++k) {
        const double h = (1.0 - lo) / (kGrid - 1);
        const Weights trial{lo + i * h, lo + j * h, lo + k * h};
        const double v = objective_at(trial);
        if (v < seed_value) {
          seed_value = v;
          seed = trial;
        }
      }

  Weights w = sol.weights;
  double best = sol.objective;
  refine(w, best);
  smooth(w, best);
  if (seed_value < sol.objective && seed != Weights{1.0, 1.0, 1.0}) {
    Weights w2 = seed;
    double best2 = seed_value;
    refine(w2, best2);
    smooth(w2, best2);
    if (best2 < best) {
      w = w2;
      best = best2;
    }
  }
  sol.sweeps = sweeps;

  sol.weights = w;
  sol.residual = product(w).angle();
  sol.objective = sol.residual + penalty(w);
  sol.converged = sol.residual <= cfg.epsilon;
  return sol;
}

struct LedgerEntry {
  std::size_t cycle_id;
  std::size_t cycle_edges;
  double weight;
};

/// Per-edge record of the weights each cycle assigned.
class WeightLedger {
 public:
  WeightLedger(std::size_t edge_count, double min_weight)
      : entries_(edge_count), min_weight_(min_weight) {}

  void add(EdgeId edge, LedgerEntry entry) {
    entry.weight = std::clamp(entry.weight, min_weight_, 1.0);
    entries_.at(edge).push_back(entry);
  }

  std::span<const LedgerEntry> entries(EdgeId edge) const { return entries_.at(edge); }
  std::size_t edge_count() const { return entries_.size(); }
  double min_weight() const { return min_weight_; }

  void merge(const WeightLedger& other) {
    for (EdgeId e = 0; e < entries_.size(); ++e)
      entries_[e].insert(entries_[e].end(), other.entries_[e].begin(),
                         other.entries_[e].end());
  }

 private:
  std::vector<std::vector<LedgerEntry>> entries_;
  double min_weight_;
};

/// Spreads an arc's down-weighting evenly over its edges:
/// each edge gets 1 - (1 - arc_weight) / |path|. `Ledger` is WeightLedger or
/// anything else with add(EdgeId, LedgerEntry).
template <class Ledger>
void propagate_path_weights(Ledger& ledger, std::span<const EdgeId> path,
                            double arc_weight, std::size_t cycle_id,
                            std::size_t cycle_len) {
  if (path.empty()) return;
  const double w = 1.0 - (1.0 - arc_weight) / static_cast<double>(path.size());
  for (EdgeId e : path) ledger.add(e, {cycle_id, cycle_len, w});
}

/// Cycle-size-weighted mean of each edge's entries; 1 for edges without any.
inline std::vector<double> aggregate_weights(const WeightLedger& ledger) {
  std::vector<double> out(ledger.edge_count(), 1.0);
  for (EdgeId e = 0; e < ledger.edge_count(); ++e) {
    double num = 0.0, den = 0.0;
    for (const auto& entry : ledger.entries(e)) {
      num += static_cast<double>(entry.cycle_edges) * entry.weight;
      den += static_cast<double>(entry.cycle_edges);
    }
    if (den > 0.0) out[e] = std::clamp(num / den, ledger.min_weight(), 1.0);
  }
  return out;
}

struct DenoiseReport {
  std::size_t cycles = 0;
  std::size_t samples = 0;
  double pre_residual_max = 0.0;
  double post_residual_max = 0.0;
  /// Ten equal bins over [0, 1]; the last bin includes 1.
  std::vector<std::size_t> weights_histogram = std::vector<std::size_t>(10, 0);
  /// Per sampled triangle: residual of the composed arcs before weighting and
  /// with the weights its triangle solve assigned. Max fields summarize these.
  std::vector<double> pre_residuals;
  std::vector<double> post_residuals;
  /// Per fundamental cycle: residual unweighted and with the aggregated edge
  /// weights applied edge by edge.
  std::vector<double> cycle_pre_residuals;
  std::vector<double> cycle_post_residuals;
  std::size_t unconverged_triangles = 0;
};

inline nlohmann::json to_json(const DenoiseReport& r) {
  return {{"cycles", r.cycles},
          {"samples", r.samples},
          {"pre_residual_max", r.pre_residual_max},
          {"post_residual_max", r.post_residual_max},
          {"weights_histogram", r.weights_histogram}};
}

struct DenoiseResult {
  ViewGraph graph;
  std::vector<double> weights;
  DenoiseReport report;
};

/// Cycle-consistency reweighting. For every fundamental cycle, samples
/// triples of nodes, solves the triangle weights on the three composed arcs,
/// spreads each arc weight over its edges and finally averages per edge
/// weighted by cycle length. Measurements are untouched; only weights change.
/// Each cycle draws from its own RNG stream, so results do not depend on the
/// thread count.
inline DenoiseResult denoise(const ViewGraph& g, const DenoiseConfig& cfg) {
  cfg.validate();
  if (!is_connected(g)) throw GraphError("denoise requires a connected graph");
  const CycleSet cycles = cycle_basis(g, cfg.max_cycle_len);

  struct CycleWork {
    std::vector<std::pair<EdgeId, LedgerEntry>> entries;
    std::size_t samples = 0;
    std::size_t unconverged = 0;
    std::vector<double> pre, post;

    void add(EdgeId e, LedgerEntry entry) { entries.emplace_back(e, entry); }
  };
  std::vector<CycleWork> work(cycles.size());

  parallel_for(cycles.size(), cfg.threads, [&](std::size_t cid) {
    const Cycle& cycle = cycles.cycles[cid];
    std::mt19937_64 rng(mix_seed(cfg.seed, cid));
    const auto triples = sample_triples(
        cycle, default_sample_rounds(cycle.nodes.size(), cfg.sample_rounds_scale), rng);
    CycleWork& out = work[cid];
    for (const auto& t : triples) {
      const TriangleSolution sol =
          triangle_weights(compose_path(g, t.arcs[0]), compose_path(g, t.arcs[1]),
                           compose_path(g, t.arcs[2]), cfg);
      if (!sol.converged) ++out.unconverged;
      out.pre.push_back(sol.initial_objective);
      out.post.push_back(sol.residual);
      for (int a = 0; a < 3; ++a)
        propagate_path_weights(out, path_edges(g, t.arcs[a]), sol.weights[a], cid,
                               cycle.length());
    }
    out.samples = triples.size();
  });

  WeightLedger ledger(g.edge_count(), cfg.min_weight);
  DenoiseReport report;
  report.cycles = cycles.size();
  for (const auto& w : work) {
    for (const auto& [e, entry] : w.entries) ledger.add(e, entry);
    report.samples += w.samples;
    report.unconverged_triangles += w.unconverged;
    report.pre_residuals.insert(report.pre_residuals.end(), w.pre.begin(), w.pre.end());
    report.post_residuals.insert(report.post_residuals.end(), w.post.begin(), w.post.end());
  }

  DenoiseResult result;
  result.weights = aggregate_weights(ledger);
  result.graph = g.with_weights(result.weights);

  for (const Cycle& c : cycles.cycles) {
    report.cycle_pre_residuals.push_back(cycle_residual(g, c, false));
    report.cycle_post_residuals.push_back(cycle_residual(result.graph, c, true));
  }
  for (double v : report.pre_residuals)
    report.pre_residual_max = std::max(report.pre_residual_max, v);
  for (double v : report.post_residuals)
    report.post_residual_max = std::max(report.post_residual_max, v);
  for (double w : result.weights) {
    const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(w * 10.0));
    ++report.weights_histogram[bin];
  }
  result.report = std::move(report);
  return result;
}

}  // namespace rotsync
