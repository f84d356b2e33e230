#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Core>

#include "rotsync/error.hpp"

namespace rotsync {

/// Axis-angle tangent vector; the rotation angle in radians is its norm.
using TangentVector = Eigen::Vector3d;

/// Unit quaternion (w, x, y, z) on the canonical hemisphere.
///
/// Every SO(3) element has exactly one representative: w >= 0, and when
/// w == 0 the first nonzero of (x, y, z) is positive. All factory functions
/// and group operations return canonical, unit-norm values.
class Rotation {
 public:
  Rotation() = default;

  /// Builds a rotation from raw quaternion components. Inputs already within
  /// 1e-14 of unit norm are kept bit-exact (so text round trips are stable);
  /// anything else is renormalized. Zero or non-finite input throws
  /// DomainError.
  static Rotation from_wxyz(double w, double x, double y, double z) {
    Rotation r;
    r.q_ = {w, x, y, z};
    const double n2 = w * w + x * x + y * y + z * z;
    if (!(n2 > 0.0) || !std::isfinite(n2))
      throw DomainError("quaternion must be finite and nonzero");
    if (std::abs(n2 - 1.0) > 1e-14) r.normalize();
    r.canonicalize();
    return r;
  }

  static Rotation identity() { return Rotation(); }

  /// Rotation by `angle` radians about `axis` (need not be unit).
  static Rotation about_axis(const Eigen::Vector3d& axis, double angle);

  /// Row-major 3x3 matrix; orthogonality is assumed, not enforced.
  static Rotation from_matrix(const std::array<double, 9>& m);
  static Rotation from_matrix(const Eigen::Matrix3d& m);

  double w() const { return q_[0]; }
  double x() const { return q_[1]; }
  double y() const { return q_[2]; }
  double z() const { return q_[3]; }
  std::array<double, 4> wxyz() const { return q_; }
  Eigen::Vector3d vec() const { return {q_[1], q_[2], q_[3]}; }

  Eigen::Matrix3d matrix() const;
  std::array<double, 9> matrix_row_major() const;

  /// Rotation angle in [0, pi].
  double angle() const {
    return 2.0 * std::atan2(vec().norm(), std::abs(q_[0]));
  }

  bool operator==(const Rotation&) const = default;

  friend Rotation operator*(const Rotation& a, const Rotation& b);

 private:
  void normalize() {
    const double n = std::sqrt(q_[0] * q_[0] + q_[1] * q_[1] + q_[2] * q_[2] +
                               q_[3] * q_[3]);
    for (double& c : q_) c /= n;
  }

  void canonicalize() {
    bool flip = q_[0] < 0.0;
    if (q_[0] == 0.0) {
      for (int k = 1; k < 4; ++k) {
        if (q_[k] != 0.0) {
          flip = q_[k] < 0.0;
          break;
        }
      }
    }
    if (flip) {
      for (double& c : q_) c = -c;
    }
    // -0.0 compares equal to 0.0 but prints differently.
    for (double& c : q_) {
      if (c == 0.0) c = 0.0;
    }
  }

  static Rotation raw(double w, double x, double y, double z) {
    Rotation r;
    r.q_ = {w, x, y, z};
    const double n2 = w * w + x * x + y * y + z * z;
    if (std::abs(n2 - 1.0) > 1e-14) r.normalize();
    r.canonicalize();
    return r;
  }

  std::array<double, 4> q_{1.0, 0.0, 0.0, 0.0};

  friend Rotation inverse(const Rotation& r);
  friend Rotation exp_map(const TangentVector& v);
  friend Rotation compose(const Rotation& a, const Rotation& b);
};

/// Hamilton product a*b (apply b first, then a, as matrices), renormalized
/// unless already within 1e-14 of unit norm.
inline Rotation compose(const Rotation& a, const Rotation& b) {
  const auto& p = a.q_;
  const auto& q = b.q_;
  return Rotation::raw(p[0] * q[0] - p[1] * q[1] - p[2] * q[2] - p[3] * q[3],
                       p[0] * q[1] + p[1] * q[0] + p[2] * q[3] - p[3] * q[2],
                       p[0] * q[2] - p[1] * q[3] + p[2] * q[0] + p[3] * q[1],
                       p[0] * q[3] + p[1] * q[2] - p[2] * q[1] + p[3] * q[0]);
}

inline Rotation operator*(const Rotation& a, const Rotation& b) {
  return compose(a, b);
}

inline Rotation inverse(const Rotation& r) {
  Rotation out;
  out.q_ = {r.q_[0], -r.q_[1], -r.q_[2], -r.q_[3]};
  out.canonicalize();
  return out;
}

/// Exponential map from axis-angle to a rotation. Uses the series
/// sin(t/2)/t ~ 1/2 - t^2/48 below t = 1e-8.
inline Rotation exp_map(const TangentVector& v) {
  const double theta = v.norm();
  const double half = 0.5 * theta;
  const double k =
      theta < 1e-8 ? 0.5 - theta * theta / 48.0 : std::sin(half) / theta;
  return Rotation::raw(std::cos(half), k * v.x(), k * v.y(), k * v.z());
}

/// Logarithm map; the result has norm in [0, pi]. At exactly pi the sign of
/// the axis follows the canonical hemisphere of the input (first nonzero
/// vector component positive), which is the only discontinuity of the map.
inline TangentVector log_map(const Rotation& r) {
  const Eigen::Vector3d v = r.vec();
  const double n = v.norm();
  if (n == 0.0) return TangentVector::Zero();
  const double theta = 2.0 * std::atan2(n, r.w());
  return v * (theta / n);
}

/// Angle of a^-1 b in [0, pi].
inline double geodesic_distance(const Rotation& a, const Rotation& b) {
  // Scalar and vector parts of conj(a) * b without renormalizing.
  const double w = a.w() * b.w() + a.x() * b.x() + a.y() * b.y() + a.z() * b.z();
  const double x = a.w() * b.x() - a.x() * b.w() - a.y() * b.z() + a.z() * b.y();
  const double y = a.w() * b.y() + a.x() * b.z() - a.y() * b.w() - a.z() * b.x();
  const double z = a.w() * b.z() - a.x() * b.y() + a.y() * b.x() - a.z() * b.w();
  return 2.0 * std::atan2(std::sqrt(x * x + y * y + z * z), std::abs(w));
}

/// Same axis, angle scaled by t: exp(t * log r).
inline Rotation pow(const Rotation& r, double t) {
  if (t == 1.0) return r;
  if (t == 0.0) return Rotation::identity();
  return exp_map(t * log_map(r));
}

inline Rotation Rotation::about_axis(const Eigen::Vector3d& axis, double angle) {
  if (!(axis.norm() > 0.0)) throw DomainError("rotation axis must be nonzero");
  return exp_map(axis.normalized() * angle);
}

inline Eigen::Matrix3d Rotation::matrix() const {
  const double w = q_[0], x = q_[1], y = q_[2], z = q_[3];
  Eigen::Matrix3d m;
  m << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
      2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
      2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
  return m;
}

inline std::array<double, 9> Rotation::matrix_row_major() const {
  const Eigen::Matrix3d m = matrix();
  std::array<double, 9> out{};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) out[3 * r + c] = m(r, c);
  return out;
}

inline Rotation Rotation::from_matrix(const Eigen::Matrix3d& m) {
  // Shepperd: pivot on the largest of the four squared components.
  const double tr = m.trace();
  const std::array<double, 4> d{tr, m(0, 0), m(1, 1), m(2, 2)};
  int k = 0;
  for (int i = 1; i < 4; ++i)
    if (d[i] > d[k]) k = i;
  double w, x, y, z;
  if (k == 0) {
    const double s = 2.0 * std::sqrt(1.0 + tr);
    w = 0.25 * s;
    x = (m(2, 1) - m(1, 2)) / s;
    y = (m(0, 2) - m(2, 0)) / s;
    z = (m(1, 0) - m(0, 1)) / s;
  } else if (k == 1) {
    const double s = 2.0 * std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2));
    w = (m(2, 1) - m(1, 2)) / s;
    x = 0.25 * s;
    y = (m(0, 1) + m(1, 0)) / s;
    z = (m(0, 2) + m(2, 0)) / s;
  } else if (k == 2) {
    const double s = 2.0 * std::sqrt(1.0 - m(0, 0) + m(1, 1) - m(2, 2));
    w = (m(0, 2) - m(2, 0)) / s;
    x = (m(0, 1) + m(1, 0)) / s;
    y = 0.25 * s;
    z = (m(1, 2) + m(2, 1)) / s;
  } else {
    const double s = 2.0 * std::sqrt(1.0 - m(0, 0) - m(1, 1) + m(2, 2));
    w = (m(1, 0) - m(0, 1)) / s;
    x = (m(0, 2) + m(2, 0)) / s;
    y = (m(1, 2) + m(2, 1)) / s;
    z = 0.25 * s;
  }
  return raw(w, x, y, z);
}

inline Rotation Rotation::from_matrix(const std::array<double, 9>& m) {
  Eigen::Matrix3d mm;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) mm(r, c) = m[3 * r + c];
  return from_matrix(mm);
}

/// Haar-uniform rotation from a normalized 4-D Gaussian.
template <class URBG>
Rotation random_rotation(URBG& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    const double w = normal(rng), x = normal(rng), y = normal(rng),
                 z = normal(rng);
    const double n2 = w * w + x * x + y * y + z * z;
    if (n2 > 1e-12) return Rotation::from_wxyz(w, x, y, z);
  }
}

inline Rotation random_rotation(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  return random_rotation(rng);
}

template <class URBG>
Eigen::Vector3d random_unit_vector(URBG& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (;;) {
    Eigen::Vector3d v(normal(rng), normal(rng), normal(rng));
    const double n = v.norm();
    if (n > 1e-9) return v / n;
  }
}

/// r composed with a rotation of exactly `angle` radians about a uniformly
/// random axis, so geodesic_distance(r, result) == angle for angle <= pi.
template <class URBG>
Rotation perturb(const Rotation& r, double angle, URBG& rng) {
  if (angle == 0.0) return r;
  return r * exp_map(random_unit_vector(rng) * angle);
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

}  // namespace rotsync
