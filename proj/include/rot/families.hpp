#pragma once

// Per-family scalar kernels. Each family exposes
//   phi(x, k), phi1(x, k)           primal generator and its derivative
//   psi12(t, k, d1, d2)             ψ′(t) and ψ″(t) in one pass
// where k is the flat entry index (only the weighted Euclidean family uses it).
// Formulas share one power/exponential per evaluation where possible.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

namespace rot::family {

inline constexpr double kInf = std::numeric_limits<double>::infinity();
inline constexpr double kExpClamp = 700.0;

inline double xlogx(double x) { return x == 0.0 ? 0.0 : x * std::log(x); }

struct Bskl {
  double phi(double x, std::size_t) const { return xlogx(x) - x + 1.0; }
  double phi1(double x, std::size_t) const { return std::log(x); }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    d1 = std::exp(std::min(t, kExpClamp));
    d2 = d1;
  }
};

struct Bis {
  double phi(double x, std::size_t) const { return x - std::log(x) - 1.0; }
  double phi1(double x, std::size_t) const { return 1.0 - 1.0 / x; }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    d1 = 1.0 / (1.0 - t);
    d2 = d1 * d1;
  }
};

struct Fdlog {
  double phi(double x, std::size_t) const { return xlogx(x) + xlogx(1.0 - x); }
  double phi1(double x, std::size_t) const { return std::log(x) - std::log1p(-x); }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    const double e = std::exp(-std::fabs(t));
    const double r = 1.0 / (1.0 + e);
    d1 = t >= 0.0 ? r : e * r;
    d2 = e * r * r;
  }
};

struct Beta {
  double beta;
  double c;  // β − 1
  double e;  // 1/(β − 1)

  explicit Beta(double b) : beta(b), c(b - 1.0), e(1.0 / (b - 1.0)) {}
  double phi(double x, std::size_t) const {
    return (std::pow(x, beta) - beta * x + beta - 1.0) / (beta * c);
  }
  double phi1(double x, std::size_t) const { return (std::pow(x, c) - 1.0) / c; }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    const double base = c * t + 1.0;
    d2 = std::pow(base, e - 1.0);
    d1 = d2 * base;
  }
};

struct Lpqn {
  double p;
  double e;  // 1/(p − 1), below −1
  double k;  // p^{−1/(p−1)}

  explicit Lpqn(double power)
      : p(power), e(1.0 / (power - 1.0)), k(std::pow(power, -1.0 / (power - 1.0))) {}
  double phi(double x, std::size_t) const { return -std::pow(x, p); }
  double phi1(double x, std::size_t) const { return -p * std::pow(x, p - 1.0); }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    const double m = -t;
    const double pw = std::pow(m, e - 1.0);
    d1 = k * pw * m;
    d2 = -k * e * pw;
  }
};

struct Lpn {
  double p;
  double e;  // 1/(p − 1), positive
  double k;  // p^{−1/(p−1)}

  explicit Lpn(double power)
      : p(power), e(1.0 / (power - 1.0)), k(std::pow(power, -1.0 / (power - 1.0))) {}
  double phi(double x, std::size_t) const { return std::pow(std::fabs(x), p); }
  double phi1(double x, std::size_t) const {
    const double a = std::fabs(x);
    const double v = p * std::pow(a, p - 1.0);
    return x < 0.0 ? -v : (x > 0.0 ? v : 0.0);
  }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    const double a = std::fabs(t);
    if (a == 0.0) {
      d1 = 0.0;
      // 0⁰ = 1 when p = 2; otherwise ψ″ vanishes (p < 2) or blows up (p > 2).
      d2 = e == 1.0 ? k : (e > 1.0 ? 0.0 : kInf);
      return;
    }
    const double pw = std::pow(a, e - 1.0);
    d1 = t < 0.0 ? -k * pw * a : k * pw * a;
    d2 = k * e * pw;
  }
};

struct Euc {
  double phi(double x, std::size_t) const { return 0.5 * x * x; }
  double phi1(double x, std::size_t) const { return x; }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    d1 = t;
    d2 = 1.0;
  }
};

struct Hell {
  double phi(double x, std::size_t) const { return -std::sqrt(1.0 - x * x); }
  double phi1(double x, std::size_t) const { return x / std::sqrt(1.0 - x * x); }
  void psi12(double t, std::size_t, double& d1, double& d2) const {
    const double r = 1.0 / (1.0 + t * t);
    const double s = std::sqrt(r);
    d1 = t * s;
    d2 = r * s;
  }
};

struct Weuc {
  const double* w;

  double phi(double x, std::size_t k) const { return 0.5 * w[k] * x * x; }
  double phi1(double x, std::size_t k) const { return w[k] * x; }
  void psi12(double t, std::size_t k, double& d1, double& d2) const {
    d2 = 1.0 / w[k];
    d1 = t * d2;
  }
};

}  // namespace rot::family
