#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "support.hpp"

using namespace rotsync;
using rotsync::testing::matrix_geodesic;
using rotsync::testing::rz_deg;

namespace {

constexpr double kPi = std::numbers::pi;

void expect_same_rotation(const Rotation& a, const Rotation& b, double tol) {
  EXPECT_LE(rotsync::testing::matrix_distance(a, b), tol) << "a=(" << a.w() << "," << a.x()
                                                           << "," << a.y() << "," << a.z()
                                                           << ") b=(" << b.w() << "," << b.x()
                                                           << "," << b.y() << "," << b.z() << ")";
}

double quat_norm(const Rotation& r) {
  return std::sqrt(r.w() * r.w() + r.x() * r.x() + r.y() * r.y() + r.z() * r.z());
}

}  // namespace

TEST(Rotation, FromWxyzNormalizesAndCanonicalizes) {
  const Rotation r = Rotation::from_wxyz(-2.0, 0.0, 0.0, 2.0);
  EXPECT_NEAR(quat_norm(r), 1.0, 1e-15);
  EXPECT_GE(r.w(), 0.0);
  EXPECT_NEAR(r.z(), -std::sqrt(0.5), 1e-15);
  EXPECT_THROW(Rotation::from_wxyz(0, 0, 0, 0), DomainError);
  EXPECT_THROW(Rotation::from_wxyz(NAN, 0, 0, 1), DomainError);
}

TEST(Rotation, HemisphereTieBreakAtHalfTurn) {
  const Rotation r = Rotation::from_wxyz(0.0, 0.0, -1.0, 0.0);
  EXPECT_EQ(r.w(), 0.0);
  EXPECT_EQ(r.y(), 1.0);
  const Rotation s = Rotation::from_wxyz(0.0, 0.0, 0.0, -1.0);
  EXPECT_EQ(s.z(), 1.0);
}

TEST(Rotation, CanonicalizationPreservesMatrixAndIsIdempotent) {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> n01;
  for (int t = 0; t < 200; ++t) {
    const double w = n01(rng), x = n01(rng), y = n01(rng), z = n01(rng);
    const Rotation a = Rotation::from_wxyz(w, x, y, z);
    const Rotation b = Rotation::from_wxyz(-w, -x, -y, -z);
    EXPECT_EQ(a, b);
    EXPECT_EQ(Rotation::from_wxyz(a.w(), a.x(), a.y(), a.z()), a);
    const double s = 1.0 / std::sqrt(w * w + x * x + y * y + z * z);
    // Matrix of the raw (possibly southern) quaternion.
    const double qw = w * s, qx = x * s, qy = y * s, qz = z * s;
    Eigen::Matrix3d raw;
    raw << 1 - 2 * (qy * qy + qz * qz), 2 * (qx * qy - qz * qw), 2 * (qx * qz + qy * qw),
        2 * (qx * qy + qz * qw), 1 - 2 * (qx * qx + qz * qz), 2 * (qy * qz - qx * qw),
        2 * (qx * qz - qy * qw), 2 * (qy * qz + qx * qw), 1 - 2 * (qx * qx + qy * qy);
    EXPECT_LE((a.matrix() - raw).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Compose, IdentityIsNeutral) {
  const Rotation r = random_rotation(std::uint64_t{3});
  EXPECT_EQ(compose(Rotation::identity(), r), r);
  EXPECT_EQ(compose(r, Rotation::identity()), r);
}

TEST(Compose, SameAxisAnglesAdd) {
  expect_same_rotation(compose(rz_deg(90), rz_deg(90)), rz_deg(180), 1e-15);
  EXPECT_NEAR(compose(rz_deg(90), rz_deg(90)).angle(), kPi, 1e-15);
}

TEST(Compose, MatchesMatrixProduct) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 500; ++t) {
    const Rotation a = random_rotation(rng), b = random_rotation(rng);
    const Eigen::Matrix3d m = a.matrix() * b.matrix();
    expect_same_rotation(compose(a, b), Rotation::from_matrix(m), 1e-12);
    EXPECT_NEAR(quat_norm(compose(a, b)), 1.0, 1e-12);
  }
}

TEST(Compose, NormStaysUnitOverLongChains) {
  std::mt19937_64 rng(6);
  Rotation acc;
  for (int t = 0; t < 100000; ++t) acc = acc * random_rotation(rng);
  EXPECT_NEAR(quat_norm(acc), 1.0, 1e-12);
}

TEST(Inverse, Basics) {
  EXPECT_EQ(inverse(Rotation::identity()), Rotation::identity());
  expect_same_rotation(inverse(rz_deg(90)), rz_deg(-90), 1e-15);
}

TEST(Inverse, RoundTripIsIdentity) {
  std::mt19937_64 rng(7);
  for (int t = 0; t < 1000; ++t) {
    const Rotation r = random_rotation(rng);
    EXPECT_LE(geodesic_distance(compose(r, inverse(r)), Rotation::identity()), 1e-12);
    EXPECT_LE(geodesic_distance(compose(inverse(r), r), Rotation::identity()), 1e-12);
  }
}

TEST(ExpLog, Basics) {
  EXPECT_EQ(exp_map(TangentVector::Zero()), Rotation::identity());
  expect_same_rotation(exp_map(TangentVector(0, 0, kPi / 2)), rz_deg(90), 1e-15);
  EXPECT_LE(log_map(Rotation::identity()).norm(), 0.0);
}

TEST(ExpLog, RoundTrip) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> len(0.0, kPi - 0.01);
  for (int t = 0; t < 1000; ++t) {
    const TangentVector v = random_unit_vector(rng) * len(rng);
    EXPECT_LT((log_map(exp_map(v)) - v).norm(), 1e-10);
  }
  // Tiny tangents go through the series branch.
  const TangentVector tiny(1e-12, -2e-12, 3e-13);
  EXPECT_LT((log_map(exp_map(tiny)) - tiny).norm(), 1e-24);
}

TEST(ExpLog, LogNormBoundedByPi) {
  std::mt19937_64 rng(9);
  for (int t = 0; t < 2000; ++t) EXPECT_LE(log_map(random_rotation(rng)).norm(), kPi + 1e-9);
  EXPECT_NEAR(log_map(rz_deg(180)).norm(), kPi, 1e-12);
}

TEST(Geodesic, Basics) {
  const Rotation r = random_rotation(std::uint64_t{10});
  EXPECT_EQ(geodesic_distance(r, r), 0.0);
  EXPECT_NEAR(geodesic_distance(Rotation::identity(), rz_deg(90)), kPi / 2, 1e-15);
}

TEST(Geodesic, MatchesMatrixTraceFormula) {
  std::mt19937_64 rng(12);
  for (int t = 0; t < 2000; ++t) {
    const Rotation a = random_rotation(rng), b = random_rotation(rng);
    EXPECT_NEAR(geodesic_distance(a, b), matrix_geodesic(a.matrix(), b.matrix()), 1e-9);
  }
}

TEST(Geodesic, MetricAxiomsAndBiInvariance) {
  std::mt19937_64 rng(13);
  for (int t = 0; t < 2000; ++t) {
    const Rotation a = random_rotation(rng), b = random_rotation(rng), c = random_rotation(rng);
    const Rotation g = random_rotation(rng);
    EXPECT_NEAR(geodesic_distance(a, b), geodesic_distance(b, a), 1e-15);
    EXPECT_LE(geodesic_distance(a, c), geodesic_distance(a, b) + geodesic_distance(b, c) + 1e-9);
    EXPECT_NEAR(geodesic_distance(g * a, g * b), geodesic_distance(a, b), 1e-12);
    EXPECT_NEAR(geodesic_distance(a * g, b * g), geodesic_distance(a, b), 1e-12);
    EXPECT_GE(geodesic_distance(a, b), 0.0);
    EXPECT_LE(geodesic_distance(a, b), kPi);
  }
}

TEST(Pow, Basics) {
  EXPECT_EQ(rotsync::pow(random_rotation(std::uint64_t{14}), 0.0), Rotation::identity());
  expect_same_rotation(rotsync::pow(rz_deg(90), 0.5), rz_deg(45), 1e-15);
}

TEST(Pow, InversePower) {
  std::mt19937_64 rng(15);
  std::uniform_real_distribution<double> ang(0.0, 3.0);
  for (int t = 0; t < 1000; ++t) {
    const Rotation r = exp_map(random_unit_vector(rng) * ang(rng));
    EXPECT_LE(geodesic_distance(rotsync::pow(rotsync::pow(r, 0.3), 1.0 / 0.3), r), 1e-10);
  }
}

TEST(Pow, ExponentsAdd) {
  std::mt19937_64 rng(16);
  std::uniform_real_distribution<double> ang(0.0, 1.5), wd(0.0, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const Rotation r = exp_map(random_unit_vector(rng) * ang(rng));
    const double w1 = wd(rng), w2 = wd(rng);
    EXPECT_LE(geodesic_distance(rotsync::pow(r, w1) * rotsync::pow(r, w2),
                                rotsync::pow(r, w1 + w2)),
              1e-10);
  }
}

TEST(Perturb, ExactAngle) {
  std::mt19937_64 rng(17);
  const Rotation r = random_rotation(rng);
  EXPECT_EQ(perturb(r, 0.0, rng), r);
  for (int t = 0; t < 1000; ++t) {
    const Rotation base = random_rotation(rng);
    EXPECT_NEAR(geodesic_distance(base, perturb(base, 0.0873, rng)), 0.0873, 1e-9);
  }
}

TEST(RandomRotation, SeedOverloadIsDeterministic) {
  EXPECT_EQ(random_rotation(std::uint64_t{99}), random_rotation(std::uint64_t{99}));
  EXPECT_FALSE(random_rotation(std::uint64_t{99}) == random_rotation(std::uint64_t{100}));
}

namespace {

/// Independent Haar sampler: Shoemake's subgroup algorithm.
Rotation shoemake(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double u1 = u(rng), u2 = u(rng), u3 = u(rng);
  const double a = std::sqrt(1 - u1), b = std::sqrt(u1);
  return Rotation::from_wxyz(b * std::cos(2 * kPi * u3), a * std::sin(2 * kPi * u2),
                             a * std::cos(2 * kPi * u2), b * std::sin(2 * kPi * u3));
}

struct TraceStats {
  double mean_trace = 0, mean_trace2 = 0, mean_w2 = 0;
};

template <class Sampler>
TraceStats trace_stats(Sampler&& sample, int count) {
  TraceStats s;
  for (int t = 0; t < count; ++t) {
    const Rotation r = sample();
    const double tr = r.matrix().trace();
    s.mean_trace += tr;
    s.mean_trace2 += tr * tr;
    s.mean_w2 += r.w() * r.w();
  }
  s.mean_trace /= count;
  s.mean_trace2 /= count;
  s.mean_w2 /= count;
  return s;
}

}  // namespace

TEST(RandomRotation, HaarTraceMoments) {
  // Haar on SO(3): E[tr] = 0 (sd 1), E[tr^2] = 1 (sd sqrt 2), E[w^2] = 1/4.
  constexpr int kN = 10000;
  std::mt19937_64 rng(18);
  const TraceStats ours = trace_stats([&] { return random_rotation(rng); }, kN);
  const double se = 1.0 / std::sqrt(static_cast<double>(kN));
  EXPECT_NEAR(ours.mean_trace, 0.0, 4 * se);
  EXPECT_NEAR(ours.mean_trace2, 1.0, 4 * std::sqrt(2.0) * se);
  EXPECT_NEAR(ours.mean_w2, 0.25, 4 * 0.2 * se);

  std::mt19937_64 rng2(19);
  const TraceStats ref = trace_stats([&] { return shoemake(rng2); }, kN);
  EXPECT_NEAR(ours.mean_trace, ref.mean_trace, 4 * std::sqrt(2.0) * se);
  EXPECT_NEAR(ours.mean_trace2, ref.mean_trace2, 4 * 2.0 * se);
}

TEST(Matrix, RoundTrip) {
  std::mt19937_64 rng(20);
  for (int t = 0; t < 1000; ++t) {
    const Rotation r = random_rotation(rng);
    const Rotation back = Rotation::from_matrix(r.matrix());
    EXPECT_LE(geodesic_distance(r, back), 1e-12);
    const auto rm = r.matrix_row_major();
    EXPECT_LE(geodesic_distance(r, Rotation::from_matrix(rm)), 1e-12);
  }
  expect_same_rotation(Rotation::from_matrix(rz_deg(180).matrix()), rz_deg(180), 1e-15);
}

TEST(Matrix, IsOrthonormal) {
  std::mt19937_64 rng(21);
  for (int t = 0; t < 500; ++t) {
    const Eigen::Matrix3d m = random_rotation(rng).matrix();
    EXPECT_LE((m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff(), 1e-14);
    EXPECT_NEAR(m.determinant(), 1.0, 1e-14);
  }
}

TEST(AboutAxis, RejectsZeroAxis) {
  EXPECT_THROW(Rotation::about_axis(Eigen::Vector3d::Zero(), 1.0), DomainError);
}
