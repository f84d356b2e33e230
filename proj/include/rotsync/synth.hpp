#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <mutex>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "rotsync/cost.hpp"
#include "rotsync/denoise.hpp"
#include "rotsync/error.hpp"
#include "rotsync/irls.hpp"
#include "rotsync/parallel.hpp"
#include "rotsync/so3.hpp"
#include "rotsync/view_graph.hpp"

namespace rotsync {

struct SyntheticSpec {
  std::size_t n = 100;
  /// Probability of each node pair being an edge.
  double edge_density = 0.3;
  double outlier_fraction = 0.0;
  /// Radians.
  double outlier_angle = deg_to_rad(5.0);
  /// Draw each outlier angle uniformly from [0, outlier_angle] instead.
  bool uniform_outlier_angle = false;
  /// Standard deviation (radians) of the isotropic tangent noise on every edge.
  double inlier_sigma = 0.0;
  std::uint64_t seed = 0;
  /// Applied to the ground truth after the measurements are drawn.
  Rotation gauge = Rotation::identity();

  void validate() const {
    if (n < 2) throw ConfigError("n: need at least 2 nodes");
    if (!(edge_density > 0.0 && edge_density <= 1.0))
      throw ConfigError("edge_density: must lie in (0, 1]");
    if (!(outlier_fraction >= 0.0 && outlier_fraction < 1.0))
      throw ConfigError("outlier_fraction: must lie in [0, 1)");
    if (!(outlier_angle >= 0.0 && outlier_angle <= std::numbers::pi))
      throw ConfigError("outlier_angle: must lie in [0, pi]");
    if (!(inlier_sigma >= 0.0)) throw ConfigError("inlier_sigma: must be >= 0");
  }
};

struct SyntheticInstance {
  ViewGraph graph;
  std::vector<Rotation> truth;
  /// Per edge: true if the measurement was corrupted.
  std::vector<bool> outlier;
};

/// Erdos-Renyi graph (resampled until connected) over Haar-random ground
/// truth. Edge (i, j) measures lambda_i^-1 lambda_j, so that
/// lambda_i * sigma_ij = lambda_j. Exactly floor(outlier_fraction * m) edges are
/// perturbed by outlier_angle about a random axis.
inline SyntheticInstance generate(const SyntheticSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  std::bernoulli_distribution coin(spec.edge_density);

  std::vector<std::pair<NodeId, NodeId>> pairs;
  bool connected = false;
  for (int attempt = 0; attempt < 100 && !connected; ++attempt) {
    pairs.clear();
    ViewGraph topo(spec.n);
    for (NodeId i = 0; i < spec.n; ++i)
      for (NodeId j = i + 1; j < spec.n; ++j)
        if (coin(rng)) {
          pairs.emplace_back(i, j);
          topo.add_edge(i, j, Rotation::identity());
        }
    connected = is_connected(topo);
  }
  if (!connected)
    throw GraphError("edge_density too low: no connected graph after 100 resamples");

  SyntheticInstance out;
  out.truth.reserve(spec.n);
  for (std::size_t i = 0; i < spec.n; ++i) out.truth.push_back(random_rotation(rng));

  const std::size_t m = pairs.size();
  const auto corrupted = static_cast<std::size_t>(std::floor(spec.outlier_fraction * m));
  std::vector<std::size_t> order(m);
  for (std::size_t k = 0; k < m; ++k) order[k] = k;
  std::shuffle(order.begin(), order.end(), rng);
  out.outlier.assign(m, false);
  for (std::size_t k = 0; k < corrupted; ++k) out.outlier[order[k]] = true;

  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  out.graph = ViewGraph(spec.n);
  for (std::size_t k = 0; k < m; ++k) {
    const auto [i, j] = pairs[k];
    Rotation sigma = inverse(out.truth[i]) * out.truth[j];
    if (spec.inlier_sigma > 0.0) {
      const TangentVector v(gauss(rng), gauss(rng), gauss(rng));
      sigma = sigma * exp_map(spec.inlier_sigma * v);
    }
    if (out.outlier[k]) {
      const double angle =
          spec.uniform_outlier_angle ? spec.outlier_angle * unit(rng) : spec.outlier_angle;
      sigma = perturb(sigma, angle, rng);
    }
    out.graph.add_edge(i, j, sigma);
  }
  if (!(spec.gauge == Rotation::identity()))
    for (auto& r : out.truth) r = spec.gauge * r;
  return out;
}

struct EvalResult {
  double mean_deg = 0.0;
  double median_deg = 0.0;
  std::vector<double> per_node_errors;
  /// G with G * estimate_i ~ truth_i.
  Rotation aligning_rotation;
};

inline nlohmann::json to_json(const EvalResult& r) {
  return {{"mean_deg", r.mean_deg},
          {"median_deg", r.median_deg},
          {"per_node_errors", r.per_node_errors},
          {"aligning_rotation", rotation_to_json(r.aligning_rotation)}};
}

/// Average of unit quaternions: dominant eigenvector of sum q q^T.
inline Rotation chordal_mean(std::span<const Rotation> rotations) {
  if (rotations.empty()) throw DomainError("chordal_mean of an empty set");
  Eigen::Matrix4d acc = Eigen::Matrix4d::Zero();
  for (const auto& r : rotations) {
    const Eigen::Vector4d q(r.w(), r.x(), r.y(), r.z());
    acc += q * q.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> eig(acc);
  const Eigen::Vector4d v = eig.eigenvectors().col(3);
  return Rotation::from_wxyz(v(0), v(1), v(2), v(3));
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

inline EvalResult align(std::span<const Rotation> estimate, std::span<const Rotation> truth) {
  if (estimate.size() != truth.size())
    throw DomainError("align: " + std::to_string(estimate.size()) + " estimated vs " +
                      std::to_string(truth.size()) + " true rotations");
  if (estimate.empty()) throw DomainError("align: empty rotation sets");
  std::vector<Rotation> offsets;
  offsets.reserve(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i)
    offsets.push_back(truth[i] * inverse(estimate[i]));

  EvalResult out;
  out.aligning_rotation = chordal_mean(offsets);
  out.per_node_errors.reserve(truth.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = rad_to_deg(geodesic_distance(out.aligning_rotation * estimate[i], truth[i]));
    out.per_node_errors.push_back(e);
    sum += e;
  }
  out.mean_deg = sum / static_cast<double>(truth.size());
  out.median_deg = median_of(out.per_node_errors);
  return out;
}

/// One pipeline variant in an ablation: optional denoising, then a solve.
struct MethodSpec {
  std::string name;
  bool denoise = true;
  CostFunction cost = CostFunction::exponential();
  SolverConfig solver;
  DenoiseConfig denoiser;
};

/// Parses "denoise+exp", "none+l2", ... into a method with default configs.
inline MethodSpec method_from_name(const std::string& name) {
  const auto plus = name.find('+');
  if (plus == std::string::npos)
    throw ConfigError("method '" + name + "': expected <denoise|none>+<cost>");
  const std::string filter = name.substr(0, plus);
  if (filter != "denoise" && filter != "none")
    throw ConfigError("method '" + name + "': filter must be denoise or none");
  MethodSpec m;
  m.name = name;
  m.denoise = filter == "denoise";
  m.cost = CostFunction::from_name(name.substr(plus + 1));
  m.solver.use_denoise_weights = m.denoise;
  return m;
}

struct AblationRow {
  std::string method;
  double level = 0.0;
  double mean_deg = 0.0;
  double median_deg = 0.0;
  double iters = 0.0;
  double seconds = 0.0;
  /// Repeats that completed; failed cells are excluded from the means.
  std::size_t runs = 0;
  std::size_t failures = 0;
  std::vector<std::string> errors;
};

/// Every (level, repeat) pair draws one instance from its own seed, shared by
/// all methods. Rows come out level-major, then in method order.
inline std::vector<AblationRow> run_ablation(std::span<const double> levels,
                                             const SyntheticSpec& base,
                                             std::span<const MethodSpec> methods,
                                             std::size_t repeats, unsigned threads = 1) {
  if (repeats < 1) throw ConfigError("repeats: must be >= 1");
  if (methods.empty()) throw ConfigError("methods: at least one method required");
  for (double l : levels)
    if (!(l >= 0.0 && l < 1.0)) throw ConfigError("levels: fractions must lie in [0, 1)");

  struct Cell {
    bool ok = false;
    double mean = 0, median = 0, iters = 0, seconds = 0;
    std::string error;
  };
  const std::size_t L = levels.size(), M = methods.size(), R = repeats;
  std::vector<Cell> cells(L * M * R);
  parallel_for(cells.size(), threads, [&](std::size_t c) {
    const std::size_t l = c / (M * R), k = (c / R) % M, r = c % R;
    Cell& cell = cells[c];
    try {
      SyntheticSpec spec = base;
      spec.outlier_fraction = levels[l];
      spec.seed = mix_seed(base.seed, l * R + r);
      const SyntheticInstance inst = generate(spec);
      const MethodSpec& method = methods[k];
      const auto t0 = std::chrono::steady_clock::now();
      ViewGraph g = inst.graph;
      if (method.denoise) {
        DenoiseConfig dc = method.denoiser;
        dc.seed = mix_seed(spec.seed, 0xD0);
        g = rotsync::denoise(g, dc).graph;
      }
      const SolveReport rep = solve(g, method.solver, method.cost);
      cell.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      const EvalResult ev = align(rep.rotations, inst.truth);
      cell.mean = ev.mean_deg;
      cell.median = ev.median_deg;
      cell.iters = rep.iterations;
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.error = e.what();
    }
  });

  std::vector<AblationRow> rows;
  for (std::size_t l = 0; l < L; ++l)
    for (std::size_t k = 0; k < M; ++k) {
      AblationRow row;
      row.method = methods[k].name;
      row.level = levels[l];
      for (std::size_t r = 0; r < R; ++r) {
        const Cell& cell = cells[(l * M + k) * R + r];
        if (!cell.ok) {
          ++row.failures;
          row.errors.push_back(cell.error);
          continue;
        }
        ++row.runs;
        row.mean_deg += cell.mean;
        row.median_deg += cell.median;
        row.iters += cell.iters;
        row.seconds += cell.seconds;
      }
      if (row.runs > 0) {
        const double d = static_cast<double>(row.runs);
        row.mean_deg /= d;
        row.median_deg /= d;
        row.iters /= d;
        row.seconds /= d;
      } else {
        row.mean_deg = row.median_deg = row.iters = row.seconds = std::nan("");
      }
      rows.push_back(std::move(row));
    }
  return rows;
}

inline void write_ablation_csv(std::ostream& os, std::span<const AblationRow> rows) {
  os << "method,level,mean_deg,median_deg,iters,seconds\n";
  for (const auto& r : rows)
    os << r.method << ',' << format_double(r.level) << ',' << format_double(r.mean_deg) << ','
       << format_double(r.median_deg) << ',' << format_double(r.iters) << ','
       << format_double(r.seconds) << '\n';
}

}  // namespace rotsync
