#include "rot/projections.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <limits>
#include <type_traits>

namespace rot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr int kStallLimit = 5;

// Residual g(μ) = Σₖ ψ′(vₖ − μ) − target and slope Σₖ ψ″(vₖ − μ) (so g′ = −slope).
template <class F>
void residual(const F& f, const double* v, std::size_t n, std::size_t off, std::size_t stride,
              double mu, double target, double& g, double& slope, double* out) {
  CompensatedSum s;
  double d = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    double a, b;
    f.psi12(v[k] - mu, off + k * stride, a, b);
    if (out) out[k] = a;
    s.add(a);
    d += b;
  }
  s.add(-target);
  g = s.value();
  slope = d;
}

// Smallest multiplier L with every entry still at or above target/n after the shift.
template <class F>
double class_b_lower_bound(const F& f, const double* v, std::size_t n, std::size_t off,
                           std::size_t stride, double target) {
  const double share = target / static_cast<double>(n);
  if constexpr (std::is_same_v<F, family::Weuc>) {
    double lo = kInf;
    for (std::size_t k = 0; k < n; ++k)
      lo = std::min(lo, v[k] - f.phi1(share, off + k * stride));
    return lo;
  } else {
    return *std::min_element(v, v + n) - f.phi1(share, off);
  }
}

template <class F>
double solve_line(const F& f, const Regularizer& reg, const double* v, std::size_t n,
                  std::size_t off, std::size_t stride, double target,
                  const ProjectionOptions& o, double* out, NewtonTrace* tr,
                  std::vector<double>& sorted) {
  if (!(target > 0.0) || !std::isfinite(target))
    throw Error(ErrorCode::DomainViolation, "multiplier target must be positive");
  if (n == 0) throw Error(ErrorCode::EmptyInput, "empty line");

  const double vmax = *std::max_element(v, v + n);
  // μ only matters through vₖ − μ, so it is resolved to the spacing of doubles near max|vₖ|.
  double vscale = 0.0;
  for (std::size_t k = 0; k < n; ++k) vscale = std::max(vscale, std::fabs(v[k]));
  const double dual_hi = reg.dual_domain_hi();
  double lo, hi, start, bound;
  double g, slope;

  if (reg.assumption_class() == AssumptionClass::A) {
    // One entry alone reaching the target bounds μ below; all entries at
    // target/n bound it above.
    bound = vmax - f.phi1(target, off);
    hi = vmax - f.phi1(target / static_cast<double>(n), off);
    lo = o.lower_bound_clamp ? bound : -kInf;
    start = reg.kind() == RegKind::FDLOG ? vmax : 0.0;
    start = std::min(std::max(start, lo), hi);
  } else {
    bound = class_b_lower_bound(f, v, n, off, stride, target);
    lo = bound;
    hi = vmax;
    if (reg.newton_strategy() == NewtonStrategy::SplitConvexConcave) {
      // Locate the knot interval holding the root; g is decreasing in μ.
      sorted.assign(v, v + n);
      std::sort(sorted.begin(), sorted.end());
      auto point = [&](std::size_t idx) { return idx == 0 ? bound : sorted[idx - 1]; };
      std::size_t a = 0, b = n;
      while (b - a > 1) {
        const std::size_t mid = (a + b) / 2;
        residual(f, v, n, off, stride, point(mid), target, g, slope, nullptr);
        if (tr) ++tr->knot_probes;
        if (g >= 0.0)
          a = mid;
        else
          b = mid;
      }
      lo = point(a);
      hi = point(b);
      start = 0.5 * (lo + hi);
    } else {
      start = std::min(std::max(0.0, lo), hi);
    }
  }

  if (tr) {
    tr->lower_bound = bound;
    tr->bracket_lo = lo;
    tr->bracket_hi = hi;
    tr->start = start;
    tr->iterates.clear();
    tr->bisection_steps = 0;
  }

  double mu = start;
  double best = kInf;
  int stall = 0;
  bool bisect_only = false;
  // Bracket ends that came from bounds rather than evaluated iterates may be the root itself.
  bool lo_seen = false, hi_seen = false;
  for (int it = 0; it < o.max_aux_iters; ++it) {
    if (!(vmax - mu < dual_hi))
      throw Error(ErrorCode::DomainEscape,
                  "multiplier iterate left the dual domain (penalty too small?)");
    residual(f, v, n, off, stride, mu, target, g, slope, out);
    if (tr) tr->iterates.push_back(mu);
    if (!std::isfinite(g))
      throw Error(ErrorCode::DomainEscape, "non-finite residual in multiplier solve");
    if (std::fabs(g) <= o.aux_tol) return mu;

    if (g > 0.0) {
      lo = mu;
      lo_seen = true;
    } else {
      hi = mu;
      hi_seen = true;
    }
    if (std::fabs(g) < best) {
      best = std::fabs(g);
      stall = 0;
    } else if (++stall >= kStallLimit) {
      bisect_only = true;
    }

    const bool bracketed = std::isfinite(lo) && std::isfinite(hi);
    if (bracketed && hi - lo <= 4.0 * kEps * std::max({std::fabs(lo), std::fabs(hi), vscale}))
      return mu;

    double next = mu + g / slope;
    const bool inside = (lo_seen ? next > lo : next >= lo) && (hi_seen ? next < hi : next <= hi);
    const bool newton_ok =
        !bisect_only && std::isfinite(slope) && slope > 0.0 && std::isfinite(next) && inside;
    // A Newton step below the spacing of doubles cannot improve the residual.
    if (std::isfinite(next) && slope > 0.0 &&
        std::fabs(next - mu) <= 2.0 * kEps * std::max(std::fabs(mu), vscale))
      return mu;
    if (!newton_ok) {
      if (!bracketed)
        throw Error(ErrorCode::DomainEscape, "Newton step left the dual domain without a bracket");
      if (!lo_seen && next < lo) {
        next = lo;  // Newton overshot a bound that may itself be the root
      } else if (!hi_seen && next > hi) {
        next = hi;
      } else {
        next = 0.5 * (lo + hi);
        if (tr) ++tr->bisection_steps;
      }
    }
    mu = next;
  }
  throw Error(ErrorCode::AuxDidNotConverge,
              "multiplier solve exhausted max_aux_iters (best residual " + std::to_string(best) + ")");
}

template <class F>
void project_lines(const F& f, DualState& s, std::span<const double> target,
                   const Regularizer& reg, const ProjectionOptions& o, Matrix* out, bool rows) {
  Matrix& th = s.theta;
  const std::size_t m = th.rows(), n = th.cols();
  const std::size_t lines = rows ? m : n;
  const std::size_t len = rows ? n : m;
  const std::size_t stride = rows ? 1 : n;
  if (target.size() != lines)
    throw Error(ErrorCode::ShapeMismatch, "marginal length does not match the dual state");
  if (reg.weights() && (reg.weights()->rows() != m || reg.weights()->cols() != n))
    throw Error(ErrorCode::ShapeMismatch, "weight matrix shape does not match the dual state");
  if (out && (out->rows() != m || out->cols() != n)) *out = Matrix(m, n);

  const bool class_b = reg.assumption_class() == AssumptionClass::B;
  if (class_b && !s.tilde_theta)
    throw Error(ErrorCode::InvalidOption, "class B projection needs the unclamped dual matrix");
  double* tilde = class_b ? s.tilde_theta->data().data() : nullptr;
  double* theta = th.data().data();
  double* prim = out ? out->data().data() : nullptr;

  std::vector<double>& mult = rows ? s.tau : s.sigma;
  mult.assign(lines, 0.0);

  std::ptrdiff_t err_line = -1;
  std::exception_ptr err;
  const bool parallel = o.exec == ExecPolicy::Parallel;

#pragma omp parallel if (parallel)
  {
    std::vector<double> buf(len), vals(prim ? len : 0), sorted;
#pragma omp for schedule(static)
    for (std::ptrdiff_t l = 0; l < static_cast<std::ptrdiff_t>(lines); ++l) {
      const std::size_t off = rows ? static_cast<std::size_t>(l) * n : static_cast<std::size_t>(l);
      for (std::size_t k = 0; k < len; ++k) buf[k] = theta[off + k * stride];
      double mu;
      try {
        mu = solve_line(f, reg, buf.data(), len, off, stride, target[static_cast<std::size_t>(l)],
                        o, prim ? vals.data() : nullptr, nullptr, sorted);
      } catch (...) {
#pragma omp critical(rot_projection_error)
        if (err_line < 0 || l < err_line) {
          err_line = l;
          err = std::current_exception();
        }
        continue;
      }
      for (std::size_t k = 0; k < len; ++k) {
        const std::size_t idx = off + k * stride;
        theta[idx] = buf[k] - mu;
        if (tilde) tilde[idx] -= mu;
        if (prim) prim[idx] = vals[k];
      }
      mult[static_cast<std::size_t>(l)] = mu;
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace

DualState make_dual_state(Matrix theta0, const Regularizer& reg) {
  DualState s;
  if (reg.assumption_class() == AssumptionClass::B) {
    s.tilde_theta = theta0;
    s.theta = std::move(theta0);
    project_nonneg(s, reg);
  } else {
    s.theta = std::move(theta0);
  }
  return s;
}

double solve_multiplier(std::span<const double> values, double target, const Regularizer& reg,
                        const ProjectionOptions& opts, NewtonTrace* trace,
                        std::size_t flat_offset, std::size_t flat_stride) {
  std::vector<double> sorted;
  return reg.visit([&](const auto& f) {
    return solve_line(f, reg, values.data(), values.size(), flat_offset, flat_stride, target,
                      opts, nullptr, trace, sorted);
  });
}

void project_row_sums(DualState& state, const Histogram& p, const Regularizer& reg,
                      const ProjectionOptions& opts, Matrix* primal_out) {
  reg.visit([&](const auto& f) {
    project_lines(f, state, p.values(), reg, opts, primal_out, true);
  });
}

void project_col_sums(DualState& state, const Histogram& q, const Regularizer& reg,
                      const ProjectionOptions& opts, Matrix* primal_out) {
  reg.visit([&](const auto& f) {
    project_lines(f, state, q.values(), reg, opts, primal_out, false);
  });
}

void project_nonneg(DualState& state, const Regularizer& reg, ExecPolicy exec) {
  if (reg.assumption_class() != AssumptionClass::B)
    throw Error(ErrorCode::WrongClass,
                reg.describe() + " keeps entries positive already; no orthant projection");
  if (!state.tilde_theta)
    throw Error(ErrorCode::InvalidOption, "orthant projection needs the unclamped dual matrix");
  const double floor = reg.phi_prime_at_zero();
  const double* src = state.tilde_theta->data().data();
  double* dst = state.theta.data().data();
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(state.theta.size());
#pragma omp parallel for schedule(static) if (exec == ExecPolicy::Parallel)
  for (std::ptrdiff_t k = 0; k < total; ++k) dst[k] = std::max(floor, src[k]);
}

void primal_from_dual(const Matrix& theta, const Regularizer& reg, Matrix& out, ExecPolicy exec) {
  if (out.rows() != theta.rows() || out.cols() != theta.cols())
    out = Matrix(theta.rows(), theta.cols());
  const double* src = theta.data().data();
  double* dst = out.data().data();
  const std::ptrdiff_t total = static_cast<std::ptrdiff_t>(theta.size());
  reg.visit([&](const auto& f) {
#pragma omp parallel for schedule(static) if (exec == ExecPolicy::Parallel)
    for (std::ptrdiff_t k = 0; k < total; ++k) {
      double a, b;
      f.psi12(src[k], static_cast<std::size_t>(k), a, b);
      dst[k] = a;
    }
  });
}

Matrix primal_from_dual(const Matrix& theta, const Regularizer& reg, ExecPolicy exec) {
  Matrix out(theta.rows(), theta.cols());
  primal_from_dual(theta, reg, out, exec);
  return out;
}

}  // namespace rot
