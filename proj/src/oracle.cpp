#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>

#include "rot/reference.hpp"
#include "simplex.hpp"

namespace rot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr long kStallWindow = 2000;

struct Atom {
  Matrix vertex;
  double weight;
};

// φ′ at an entry, with entries rounded below the primal domain pinned to it.
template <class F>
double phi1_at(const F& f, const Regularizer& reg, double x, std::size_t k) {
  if (x <= reg.primal_domain_lo()) x = reg.primal_domain_lo();
  if (x >= reg.primal_domain_hi()) x = reg.primal_domain_hi();
  if (reg.kind() == RegKind::BIS && x <= 0.0) return -kInf;
  return f.phi1(x, k);
}

template <class F>
double phi2_at(const F& f, double x, std::size_t k) {
  double d1, d2;
  f.psi12(f.phi1(x, k), k, d1, d2);
  return 1.0 / d2;
}

// Newton's method on the marginal multipliers (u, v) with
// π = ψ′((u_i + v_j − γ_ij)/λ), clamped at φ′(0) for class B. Starts from a
// least-squares fit to the Frank–Wolfe iterate; returns nothing on failure.
template <class F>
std::optional<Matrix> newton_finish(const F& f, const Regularizer& reg, const Histogram& p,
                                    const Histogram& q, const Matrix& g, double lambda,
                                    const Matrix& x0) {
  const std::size_t m = p.size(), n = q.size();
  const bool class_b = reg.assumption_class() == AssumptionClass::B;
  const double floor = class_b ? reg.phi_prime_at_zero() : -kInf;

  // u_i + v_j ≈ γ_ij + λφ′(x_ij) on the entries carrying mass.
  Matrix c(m, n);
  std::vector<char> use(m * n, 0);
  for (std::size_t k = 0; k < m * n; ++k) {
    const double x = x0.data()[k];
    if (!(x > 0.0)) continue;
    const double t = phi1_at(f, reg, x, k);
    if (!std::isfinite(t)) continue;
    c.data()[k] = g.data()[k] + lambda * t;
    use[k] = 1;
  }
  std::vector<double> u(m, 0.0), v(n, 0.0);
  for (int sweep = 0; sweep < 500; ++sweep) {
    for (std::size_t i = 0; i < m; ++i) {
      double s = 0.0;
      int cnt = 0;
      for (std::size_t j = 0; j < n; ++j)
        if (use[i * n + j]) s += c(i, j) - v[j], ++cnt;
      if (cnt) u[i] = s / cnt;
    }
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      int cnt = 0;
      for (std::size_t i = 0; i < m; ++i)
        if (use[i * n + j]) s += c(i, j) - u[i], ++cnt;
      if (cnt) v[j] = s / cnt;
    }
  }

  Matrix x(m, n), d2(m, n);
  // Evaluates π and ψ″ at (u, v); false if some entry leaves dom ψ.
  auto evaluate = [&](const std::vector<double>& uu, const std::vector<double>& vv,
                      Eigen::VectorXd& res) {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const std::size_t k = i * n + j;
        double t = (uu[i] + vv[j] - g(i, j)) / lambda;
        bool active = true;
        if (t <= floor) {
          t = floor;
          active = false;
        }
        if (!reg.in_dual_domain(t)) return false;
        double a, b;
        f.psi12(t, k, a, b);
        if (!std::isfinite(a)) return false;
        x(i, j) = a;
        d2(i, j) = active && std::isfinite(b) ? b : 0.0;
      }
    res.resize(static_cast<Eigen::Index>(m + n));
    const auto rs = row_sums(x), cs = col_sums(x);
    for (std::size_t i = 0; i < m; ++i) res[static_cast<Eigen::Index>(i)] = rs[i] - p[i];
    for (std::size_t j = 0; j < n; ++j) res[static_cast<Eigen::Index>(m + j)] = cs[j] - q[j];
    return true;
  };

  Eigen::VectorXd res, trial_res;
  if (!evaluate(u, v, res)) return std::nullopt;
  // v_{n−1} is pinned to remove the shift invariance (u + c, v − c).
  const Eigen::Index dim = static_cast<Eigen::Index>(m + n - 1);
  for (int it = 0; it < 100; ++it) {
    if (res.lpNorm<Eigen::Infinity>() <= 8.0 * kEps) break;
    Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        const double w = d2(i, j) / lambda;
        const auto ii = static_cast<Eigen::Index>(i);
        jac(ii, ii) += w;
        if (j + 1 < n) {
          const auto jj = static_cast<Eigen::Index>(m + j);
          jac(jj, jj) += w;
          jac(ii, jj) += w;
          jac(jj, ii) += w;
        }
      }
    const Eigen::VectorXd step = jac.colPivHouseholderQr().solve(-res.head(dim));
    if (!step.allFinite()) return std::nullopt;
    const double r0 = res.norm();
    double alpha = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt, alpha *= 0.5) {
      std::vector<double> uu(u), vv(v);
      for (std::size_t i = 0; i < m; ++i) uu[i] += alpha * step[static_cast<Eigen::Index>(i)];
      for (std::size_t j = 0; j + 1 < n; ++j)
        vv[j] += alpha * step[static_cast<Eigen::Index>(m + j)];
      if (evaluate(uu, vv, trial_res) && trial_res.norm() < (1.0 - 1e-4 * alpha) * r0) {
        u.swap(uu);
        v.swap(vv);
        res = trial_res;
        moved = true;
        break;
      }
    }
    if (!moved) break;
  }
  if (!evaluate(u, v, res) || res.lpNorm<Eigen::Infinity>() > 1e-13) return std::nullopt;
  return x;
}

}  // namespace

OracleResult projection_oracle(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                               const Regularizer& reg, double lambda, double tol, long max_iters) {
  if (gamma.rows() != p.size() || gamma.cols() != q.size())
    throw Error(ErrorCode::ShapeMismatch, "cost matrix does not match the marginals");
  if (!(lambda > 0.0) || !(tol > 0.0))
    throw Error(ErrorCode::InvalidOption, "oracle needs positive lambda and tolerance");
  const std::size_t m = p.size(), n = q.size(), N = m * n;
  const Matrix& g = gamma.entries();

  return reg.visit([&](const auto& f) {
    auto objective = [&](const Matrix& x) {
      CompensatedSum s;
      for (std::size_t k = 0; k < N; ++k)
        s.add(g.data()[k] * x.data()[k] + lambda * f.phi(x.data()[k], k));
      return s.value();
    };
    auto dot = [&](const Matrix& a, const Matrix& b) {
      CompensatedSum s;
      for (std::size_t k = 0; k < N; ++k) s.add(a.data()[k] * b.data()[k]);
      return s.value();
    };
    Matrix grad(m, n), shifted(m, n);
    // Gradient at x, the exact-EMD vertex s minimizing ⟨∇, s⟩ and the gap ⟨∇, x − s⟩.
    auto linear_minimizer = [&](const Matrix& x, Matrix& s) {
      double gmin = kInf;
      for (std::size_t k = 0; k < N; ++k) {
        const double v = g.data()[k] + lambda * phi1_at(f, reg, x.data()[k], k);
        if (!std::isfinite(v)) return kInf;
        grad.data()[k] = v;
        gmin = std::min(gmin, v);
      }
      for (std::size_t k = 0; k < N; ++k) shifted.data()[k] = grad.data()[k] - gmin;
      detail::TransportSimplex lmo(shifted, p.values(), q.values());
      lmo.solve(1e-15 * (1.0 + *std::max_element(shifted.data().begin(), shifted.data().end())),
                50 * N + 1000);
      lmo.polish_exact(50 * N + 1000);
      s = lmo.plan();
      CompensatedSum gap;
      for (std::size_t k = 0; k < N; ++k) gap.add(grad.data()[k] * (x.data()[k] - s.data()[k]));
      return gap.value();
    };

    OracleResult res;
    auto accept = [&](const Matrix& x, double gap, long it, std::size_t atoms, bool finished) {
      res.plan.entries = x;
      const MarginalErrors e = marginal_errors(x, p, q);
      res.plan.row_marginal_error = e.rows;
      res.plan.col_marginal_error = e.cols;
      res.report.iterations = static_cast<int>(it);
      res.report.gap = gap;
      res.report.objective = objective(x);
      res.report.active_atoms = atoms;
      res.report.newton_finish = finished;
      return res;
    };

    // Tries the Newton finish from x; the gap of the result decides acceptance.
    auto try_finish = [&](const Matrix& x, double& gap_out) -> std::optional<Matrix> {
      auto y = newton_finish(f, reg, p, q, g, lambda, x);
      if (!y) return std::nullopt;
      Matrix s;
      const double gap = linear_minimizer(*y, s);
      if (!(gap <= tol)) return std::nullopt;
      gap_out = std::max(gap, 0.0);
      return y;
    };

    // The analytic interior point p·qᵀ is the first atom.
    std::vector<Atom> atoms{{outer_product(p, q), 1.0}};
    Matrix x = atoms[0].vertex, dir(m, n), s;
    long it = 0;
    double gap = kInf, best_gap = kInf, next_finish = 1e-6;
    long best_at = 0;
    for (; it < max_iters; ++it) {
      gap = linear_minimizer(x, s);
      if (!std::isfinite(gap))
        throw Error(ErrorCode::OracleDidNotConverge, "gradient left the finite range");
      if (gap <= tol) return accept(x, std::max(gap, 0.0), it, atoms.size(), false);
      if (gap < best_gap * (1.0 - 1e-3)) {
        best_gap = gap;
        best_at = it;
      }
      const bool stalled = it - best_at >= kStallWindow;
      if (gap <= next_finish || stalled) {
        double fgap = 0.0;
        if (auto y = try_finish(x, fgap)) return accept(*y, fgap, it, atoms.size(), true);
        next_finish = gap * 1e-2;
        if (stalled) break;
      }

      // Pairwise step: move weight from the worst active atom to the vertex.
      std::size_t away = 0;
      double worst = -kInf;
      for (std::size_t a = 0; a < atoms.size(); ++a) {
        const double val = dot(grad, atoms[a].vertex);
        if (val > worst) {
          worst = val;
          away = a;
        }
      }
      for (std::size_t k = 0; k < N; ++k)
        dir.data()[k] = s.data()[k] - atoms[away].vertex.data()[k];
      const double tmax = atoms[away].weight;

      // h(t) = ⟨γ + λφ′(x + t·dir), dir⟩ increases in t; find its root on [0, tmax].
      auto h = [&](double t, double* slope) {
        CompensatedSum acc;
        double dh = 0.0;
        for (std::size_t k = 0; k < N; ++k) {
          const double d = dir.data()[k];
          if (d == 0.0) continue;
          const double xv = x.data()[k] + t * d;
          const double p1 = phi1_at(f, reg, xv, k);
          if (std::isinf(p1)) {
            if (slope) *slope = kInf;
            return p1 * d > 0.0 ? kInf : -kInf;
          }
          acc.add((g.data()[k] + lambda * p1) * d);
          if (slope) dh += lambda * phi2_at(f, xv, k) * d * d;
        }
        if (slope) *slope = dh;
        return acc.value();
      };
      double t;
      if (h(tmax, nullptr) <= 0.0) {
        t = tmax;
      } else {
        double lo = 0.0, hi = tmax;
        t = 0.5 * tmax;
        double slope;
        for (int ls = 0; ls < 200; ++ls) {
          const double hv = h(t, &slope);
          if (hv == 0.0) break;
          if (hv < 0.0)
            lo = t;
          else
            hi = t;
          if (hi - lo <= 4.0 * kEps * std::max(tmax, 1e-300)) break;
          double next = t - hv / slope;
          const bool newton = std::isfinite(slope) && slope > 0.0 && std::isfinite(next) &&
                              next > lo && next < hi;
          if (!newton) next = 0.5 * (lo + hi);
          if (newton && std::fabs(next - t) <= 2.0 * kEps * std::max(t, 1e-300)) {
            t = next;
            break;
          }
          t = next;
        }
      }
      if (t <= 0.0) continue;

      for (std::size_t k = 0; k < N; ++k) x.data()[k] += t * dir.data()[k];
      atoms[away].weight -= t;
      auto same = std::find_if(atoms.begin(), atoms.end(),
                               [&](const Atom& a) { return a.vertex == s; });
      if (same != atoms.end())
        same->weight += t;
      else
        atoms.push_back({s, t});
      if (t == tmax || atoms[away].weight <= 0.0)
        atoms.erase(atoms.begin() + static_cast<std::ptrdiff_t>(away));

      if (it % 64 == 63) {
        // Refresh the iterate from the atoms to stop drift.
        x.fill(0.0);
        for (const Atom& a : atoms)
          for (std::size_t k = 0; k < N; ++k) x.data()[k] += a.weight * a.vertex.data()[k];
      }
    }
    throw Error(ErrorCode::OracleDidNotConverge,
                "Frank-Wolfe gap " + std::to_string(gap) + " above tolerance after " +
                    std::to_string(it) + " iterations");
  });
}

}  // namespace rot
