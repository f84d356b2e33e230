#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include "support.hpp"

namespace rotsync::testing {

/// Matrix-only rendition of one reweighting pass, written independently of
/// the library: residuals and tangents from 3x3 matrices, the update from a
/// dense solve of the normal equations.
struct ReferenceStep {
  std::vector<double> delta, r, phi, h, w;
  double s = 0, res = 0, tau_after = 0;
  std::vector<Eigen::Matrix3d> rotations;
};

/// Rotation angle of R^T S from atan2(|skew part|, (trace - 1) / 2), which
/// keeps full precision for small angles.
inline double matrix_angle_between(const Eigen::Matrix3d& r, const Eigen::Matrix3d& s) {
  const Eigen::Matrix3d m = r.transpose() * s;
  const Eigen::Vector3d axis(m(2, 1) - m(1, 2), m(0, 2) - m(2, 0), m(1, 0) - m(0, 1));
  return std::atan2(0.5 * axis.norm(), 0.5 * (m.trace() - 1.0));
}

inline Eigen::Vector3d matrix_log(const Eigen::Matrix3d& m) {
  const Eigen::AngleAxisd aa(m);
  return aa.axis() * aa.angle();
}

inline ReferenceStep reference_step(const std::vector<Eigen::Matrix3d>& lambda,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    const std::vector<Eigen::Matrix3d>& sigma,
                                    const std::vector<double>& prior, const std::vector<bool>& fixed,
                                    int k_before, double tau, double floor) {
  ReferenceStep out;
  const int k = k_before + 1;
  const std::size_t m = pairs.size();
  double sum_phi2 = 0, sum_phi2h = 0;
  for (std::size_t e = 0; e < m; ++e) {
    const auto [i, j] = pairs[e];
    const double d = matrix_angle_between(sigma[e], lambda[i].transpose() * lambda[j]);
    const double r = d * std::exp(tau * d);
    const double phi = (1 + tau * r) * std::exp(tau * r);
    const double h = (2 * tau + tau * tau * r) * std::exp(tau * r);
    out.delta.push_back(d);
    out.r.push_back(r);
    out.phi.push_back(phi);
    out.h.push_back(h);
    sum_phi2 += phi * phi;
    sum_phi2h += phi * phi * h;
  }
  out.s = sum_phi2 / std::abs(sum_phi2h);
  for (std::size_t e = 0; e < m; ++e) out.w.push_back(out.s * out.phi[e] * prior[e]);

  // Dense normal equations over the free nodes.
  std::vector<int> slot(lambda.size(), -1);
  int free_count = 0;
  for (std::size_t u = 0; u < lambda.size(); ++u)
    if (!fixed[u]) slot[u] = free_count++;
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(free_count, free_count);
  Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(free_count, 3);
  for (std::size_t e = 0; e < m; ++e) {
    const auto [i, j] = pairs[e];
    const double omega = out.w[e] / std::max(out.delta[e], floor);
    const Eigen::Vector3d gap = matrix_log(lambda[j] * sigma[e].transpose() * lambda[i].transpose());
    const int a = slot[i], b = slot[j];
    if (a >= 0) {
      lap(a, a) += omega;
      rhs.row(a) += omega * gap.transpose();
    }
    if (b >= 0) {
      lap(b, b) += omega;
      rhs.row(b) -= omega * gap.transpose();
    }
    if (a >= 0 && b >= 0) {
      lap(a, b) -= omega;
      lap(b, a) -= omega;
    }
  }
  const Eigen::MatrixXd x = lap.fullPivLu().solve(rhs);
  out.rotations = lambda;
  for (std::size_t u = 0; u < lambda.size(); ++u) {
    if (slot[u] < 0) continue;
    const Eigen::Vector3d v = x.row(slot[u]).transpose();
    out.rotations[u] = Eigen::AngleAxisd(v.norm(), v.normalized()).toRotationMatrix() * lambda[u];
  }
  for (std::size_t e = 0; e < m; ++e)
    out.res += out.w[e] * out.delta[e] * std::exp(tau * out.w[e] * out.delta[e]);
  out.tau_after = 1.0 / k;
  return out;
}

}  // namespace rotsync::testing
