#pragma once

#include <cmath>
#include <string>

#include "rotsync/error.hpp"

namespace rotsync {

enum class CostKind { exponential, l2, l1, l_half, huber };

struct CostValues {
  double rho = 0.0;
  double grad = 0.0;
  double hess = 0.0;
};

/// Robust cost rho(x) on residual angles x >= 0, with analytic first and
/// second derivatives.
///
///   exponential(tau)  x e^{tau x}
///   l2                x^2
///   l1                x
///   l_half            sqrt(x + k) - sqrt(k), k = 1e-8 keeps the slope finite at 0
///   huber(delta)      x^2 / 2 below delta, delta (x - delta / 2) above
class CostFunction {
 public:
  static constexpr double kHalfSmoothing = 1e-8;

  static CostFunction exponential(double tau = 1.0) {
    if (!(tau > 0.0)) throw DomainError("exponential cost needs tau > 0");
    return {CostKind::exponential, tau};
  }
  static CostFunction l2() { return {CostKind::l2, 0.0}; }
  static CostFunction l1() { return {CostKind::l1, 0.0}; }
  static CostFunction l_half() { return {CostKind::l_half, 0.0}; }
  static CostFunction huber(double delta = 0.1) {
    if (!(delta > 0.0)) throw DomainError("huber cost needs delta > 0");
    return {CostKind::huber, delta};
  }

  /// Parses the CLI spelling: exp, l1, l2, lhalf, huber.
  static CostFunction from_name(const std::string& name, double param = 0.0) {
    if (name == "exp" || name == "exponential") return exponential(param > 0 ? param : 1.0);
    if (name == "l2") return l2();
    if (name == "l1") return l1();
    if (name == "lhalf" || name == "l_half") return l_half();
    if (name == "huber") return huber(param > 0 ? param : 0.1);
    throw DomainError("unknown cost '" + name + "' (expected exp, l1, l2, lhalf, huber)");
  }

  CostKind kind() const { return kind_; }
  /// tau for exponential, delta for huber, unused otherwise.
  double param() const { return param_; }

  /// Same kind with a new penalty parameter; no-op for kinds without tau.
  CostFunction with_tau(double tau) const {
    if (kind_ != CostKind::exponential) return *this;
    return exponential(tau);
  }

  std::string name() const {
    switch (kind_) {
      case CostKind::exponential: return "exp";
      case CostKind::l2: return "l2";
      case CostKind::l1: return "l1";
      case CostKind::l_half: return "lhalf";
      case CostKind::huber: return "huber";
    }
    return "?";
  }

  CostValues eval(double x) const {
    if (!(x >= 0.0)) throw DomainError("cost evaluated at negative residual " + std::to_string(x));
    switch (kind_) {
      case CostKind::exponential: {
        const double t = param_;
        const double e = std::exp(t * x);
        return {x * e, (1.0 + t * x) * e, (2.0 * t + t * t * x) * e};
      }
      case CostKind::l2:
        return {x * x, 2.0 * x, 2.0};
      case CostKind::l1:
        return {x, 1.0, 0.0};
      case CostKind::l_half: {
        const double s = std::sqrt(x + kHalfSmoothing);
        return {s - std::sqrt(kHalfSmoothing), 0.5 / s, -0.25 / (s * s * s)};
      }
      case CostKind::huber: {
        const double d = param_;
        if (x <= d) return {0.5 * x * x, x, 1.0};
        return {d * (x - 0.5 * d), d, 0.0};
      }
    }
    return {};
  }

  double rho(double x) const { return eval(x).rho; }
  double grad(double x) const { return eval(x).grad; }
  double hess(double x) const { return eval(x).hess; }

 private:
  CostFunction(CostKind kind, double param) : kind_(kind), param_(param) {}

  CostKind kind_;
  double param_;
};

}  // namespace rotsync
