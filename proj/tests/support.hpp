#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include <rotsync/rotsync.hpp>

namespace rotsync::testing {

inline Rotation rz_deg(double deg) {
  return Rotation::about_axis(Eigen::Vector3d::UnitZ(), deg_to_rad(deg));
}

/// arccos((tr(A^T B) - 1) / 2) from the matrix forms.
inline double matrix_geodesic(const Eigen::Matrix3d& a, const Eigen::Matrix3d& b) {
  const double c = std::clamp(((a.transpose() * b).trace() - 1.0) / 2.0, -1.0, 1.0);
  return std::acos(c);
}

inline double matrix_distance(const Rotation& a, const Rotation& b) {
  return (a.matrix() - b.matrix()).cwiseAbs().maxCoeff();
}

/// Graph whose measurements are exactly consistent with `truth`.
inline ViewGraph consistent_graph(const std::vector<Rotation>& truth,
                                  const std::vector<std::pair<NodeId, NodeId>>& pairs) {
  ViewGraph g(truth.size());
  for (auto [i, j] : pairs) g.add_edge(i, j, inverse(truth[i]) * truth[j]);
  return g;
}

inline std::vector<Rotation> random_rotations(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Rotation> out;
  for (std::size_t k = 0; k < n; ++k) out.push_back(random_rotation(rng));
  return out;
}

/// Node count of the largest component by repeated flood fill over an
/// explicit adjacency matrix.
inline std::size_t flood_fill_max_component(const ViewGraph& g) {
  const std::size_t n = g.node_count();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  for (const Edge& e : g.edges()) adj[e.i][e.j] = adj[e.j][e.i] = true;
  std::vector<bool> seen(n, false);
  std::size_t best = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::size_t size = 0;
    std::vector<std::size_t> stack{s};
    seen[s] = true;
    while (!stack.empty()) {
      const std::size_t u = stack.back();
      stack.pop_back();
      ++size;
      for (std::size_t v = 0; v < n; ++v)
        if (adj[u][v] && !seen[v]) {
          seen[v] = true;
          stack.push_back(v);
        }
    }
    best = std::max(best, size);
  }
  return best;
}

struct UnionFind {
  std::vector<std::size_t> parent;
  explicit UnionFind(std::size_t n) : parent(n) {
    for (std::size_t k = 0; k < n; ++k) parent[k] = k;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

struct GridOptimum {
  double objective = 0.0;
  double residual = 0.0;
  std::array<double, 3> weights{};
};

/// Exhaustive search for the triangle-weight objective: every point of the
/// 0.01 lattice over [lo, 1]^3, then the 0.001 lattice in a +-0.01 box around
/// each of the `keep` best coarse points.
inline GridOptimum grid_triangle_weights(const Rotation& a, const Rotation& b,
                                         const Rotation& c, double lo, double penalty,
                                         int keep = 20) {
  const std::array<Eigen::Vector3d, 3> l{log_map(a), log_map(b), log_map(c)};
  auto eval = [&](double x, double y, double z, double* res) {
    const double r = (exp_map(x * l[0]) * exp_map(y * l[1]) * exp_map(z * l[2])).angle();
    if (res) *res = r;
    return r + penalty * (3.0 - x - y - z);
  };
  const int steps = static_cast<int>(std::round((1.0 - lo) / 0.01));
  std::vector<std::pair<double, std::array<double, 3>>> coarse;
  coarse.reserve(static_cast<std::size_t>((steps + 1) * (steps + 1) * (steps + 1)));
  for (int i = 0; i <= steps; ++i)
    for (int j = 0; j <= steps; ++j)
      for (int k = 0; k <= steps; ++k) {
        const double x = std::min(1.0, lo + 0.01 * i);
        const double y = std::min(1.0, lo + 0.01 * j);
        const double z = std::min(1.0, lo + 0.01 * k);
        coarse.push_back({eval(x, y, z, nullptr), {x, y, z}});
      }
  keep = std::min<int>(keep, static_cast<int>(coarse.size()));
  std::partial_sort(coarse.begin(), coarse.begin() + keep, coarse.end(),
                    [](const auto& p, const auto& q) { return p.first < q.first; });
  GridOptimum best;
  best.objective = std::numeric_limits<double>::infinity();
  for (int c2 = 0; c2 < keep; ++c2) {
    const auto w = coarse[static_cast<std::size_t>(c2)].second;
    for (int i = -10; i <= 10; ++i)
      for (int j = -10; j <= 10; ++j)
        for (int k = -10; k <= 10; ++k) {
          const double x = std::clamp(w[0] + 0.001 * i, lo, 1.0);
          const double y = std::clamp(w[1] + 0.001 * j, lo, 1.0);
          const double z = std::clamp(w[2] + 0.001 * k, lo, 1.0);
          double r = 0.0;
          const double o = eval(x, y, z, &r);
          if (o < best.objective) best = {o, r, {x, y, z}};
        }
  }
  return best;
}

}  // namespace rotsync::testing
