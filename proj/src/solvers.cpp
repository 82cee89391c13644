#include "rot/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <tuple>

#include "rot/projections.hpp"

namespace rot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kQuasiNormInfiniteLambda = 1e10;
constexpr double kQuasiNormCostFloor = 1e-12;

void require_shapes(const Histogram& p, const Histogram& q, const CostMatrix& gamma) {
  if (gamma.rows() != p.size() || gamma.cols() != q.size())
    throw Error(ErrorCode::ShapeMismatch, "cost matrix is " + std::to_string(gamma.rows()) + "x" +
                                              std::to_string(gamma.cols()) + " but marginals are " +
                                              std::to_string(p.size()) + " and " +
                                              std::to_string(q.size()));
}

// Tracks the termination test and the best iterate seen so far.
class Monitor {
 public:
  Monitor(const SolverOptions& o, const Histogram& p, const Histogram& q, const Matrix& gamma)
      : o_(o), p_(p), q_(q), gamma_(gamma) {}

  // Returns true when the main loop should stop.
  bool check(const Matrix& plan, int iteration) {
    for (double x : plan.data())
      if (!std::isfinite(x))
        throw Error(ErrorCode::NumericalUnderflow,
                    "non-finite plan entry (penalty too small for this cost scale)");
    const double err = marginal_error(plan, p_, q_);
    const double dist = frobenius_dot(plan, gamma_);
    bool stop = false;
    switch (o_.termination) {
      case Termination::MarginalLinf:
        stop = err <= o_.main_tol;
        break;
      case Termination::PlanVariation:
        stop = !prev_plan_.empty() && max_abs_diff(plan, prev_plan_) <= o_.main_tol;
        prev_plan_ = plan;
        break;
      case Termination::DistanceVariation:
        stop = have_prev_dist_ && std::fabs(dist - prev_dist_) <= o_.main_tol;
        prev_dist_ = dist;
        have_prev_dist_ = true;
        break;
    }
    last_err_ = err;
    last_iter_ = iteration;
    if (!(err >= best_err_)) {
      best_err_ = err;
      best_plan_ = plan;
      best_iter_ = iteration;
    }
    stopped_ = stop;
    return stop;
  }

  // Assembles the output: the last iterate if it met the criterion, else the best one.
  Solution finish(Matrix last_plan, double lambda_used) {
    Solution s;
    const bool ok = stopped_ && last_err_ <= o_.main_tol;
    s.plan.entries = ok || best_plan_.empty() ? std::move(last_plan) : std::move(best_plan_);
    s.report.main_iterations = last_iter_;
    s.report.converged = ok;
    s.report.lambda_used = lambda_used;
    return s;
  }

 private:
  const SolverOptions& o_;
  const Histogram& p_;
  const Histogram& q_;
  const Matrix& gamma_;
  Matrix prev_plan_;
  double prev_dist_ = 0.0;
  bool have_prev_dist_ = false;
  double last_err_ = kInf;
  int last_iter_ = 0;
  double best_err_ = kInf;
  Matrix best_plan_;
  int best_iter_ = 0;
  bool stopped_ = false;
};

void finalize(Solution& s, const Histogram& p, const Histogram& q, const Matrix& gamma,
              bool clamp_negative) {
  if (clamp_negative)
    for (double& x : s.plan.entries.data()) x = std::max(0.0, x);
  const MarginalErrors e = marginal_errors(s.plan.entries, p, q);
  s.plan.row_marginal_error = e.rows;
  s.plan.col_marginal_error = e.cols;
  s.report.final_marginal_error = e.max();
  s.report.distance = frobenius_dot(s.plan.entries, gamma);
}

double effective_lambda(const Regularizer& reg, const SolverOptions& o) {
  if (!o.lambda_infinite) return o.lambda;
  return reg.kind() == RegKind::LPQN ? kQuasiNormInfiniteLambda : kInf;
}

// θ₀ = −γ/λ, checked against dom ψ.
Matrix initial_dual(const Matrix& gamma, double lambda, const Regularizer& reg) {
  Matrix theta(gamma.rows(), gamma.cols());
  auto src = gamma.data();
  auto dst = theta.data();
  for (std::size_t k = 0; k < src.size(); ++k) {
    dst[k] = std::isinf(lambda) ? 0.0 : -src[k] / lambda;
    if (!reg.in_dual_domain(dst[k]))
      throw Error(ErrorCode::DomainViolation,
                  reg.describe() + ": -gamma/lambda leaves the dual domain (zero cost entry?)");
  }
  return theta;
}

Solution generic_solve(const Histogram& p, const Histogram& q, const Matrix& gamma,
                       const Regularizer& reg, const SolverOptions& o) {
  const double lambda = effective_lambda(reg, o);
  Matrix cost = gamma;
  if (reg.kind() == RegKind::LPQN) {
    std::size_t raised = 0;
    for (double& c : cost.data())
      if (c == 0.0) {
        c = kQuasiNormCostFloor;
        ++raised;
      }
    if (raised)
      warn(std::to_string(raised) + " zero cost entries raised to 1e-12 for the lp quasi-norm");
  }

  ProjectionOptions po;
  po.aux_tol = o.effective_aux_tol();
  po.max_aux_iters = o.max_aux_iters;
  po.exec = o.exec;

  DualState st = make_dual_state(initial_dual(cost, lambda, reg), reg);
  const bool class_a = reg.assumption_class() == AssumptionClass::A;
  Matrix plan(gamma.rows(), gamma.cols());
  Monitor mon(o, p, q, gamma);
  for (int it = 1; it <= o.max_main_iters; ++it) {
    const bool check = it % o.check_every == 0 || it == o.max_main_iters;
    if (class_a) {
      project_row_sums(st, p, reg, po);
      project_col_sums(st, q, reg, po, check ? &plan : nullptr);
    } else {
      project_row_sums(st, p, reg, po);
      project_nonneg(st, reg, o.exec);
      project_col_sums(st, q, reg, po);
      project_nonneg(st, reg, o.exec);
      if (check) primal_from_dual(st.theta, reg, plan, o.exec);
    }
    if (check && mon.check(plan, it)) break;
  }
  Solution s = mon.finish(std::move(plan), lambda);
  finalize(s, p, q, gamma, !class_a);
  return s;
}

Solution sinkhorn_impl(const Histogram& p, const Histogram& q, const Matrix& gamma, double lambda,
                       const SolverOptions& o) {
  const std::size_t m = gamma.rows(), n = gamma.cols();
  Matrix xi(m, n);
  for (std::size_t k = 0; k < xi.size(); ++k)
    xi.data()[k] = std::isinf(lambda) ? 1.0 : std::exp(-gamma.data()[k] / lambda);

  std::vector<double> u(m), v(n, 1.0), kv(m), ktu(n);
  auto matvec = [&] {
    for (std::size_t i = 0; i < m; ++i) {
      const auto r = xi.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += r[j] * v[j];
      kv[i] = s;
    }
  };
  auto underflow = [](double x) {
    return !(x > 0.0) || !std::isfinite(x);
  };
  matvec();
  Matrix plan(m, n);
  auto materialize = [&] {
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) plan(i, j) = u[i] * xi(i, j) * v[j];
  };

  Monitor mon(o, p, q, gamma);
  for (int it = 1; it <= o.max_main_iters; ++it) {
    for (std::size_t i = 0; i < m; ++i) {
      if (underflow(kv[i]))
        throw Error(ErrorCode::NumericalUnderflow,
                    "row " + std::to_string(i) + " of exp(-gamma/lambda) v vanished");
      u[i] = p[i] / kv[i];
    }
    std::fill(ktu.begin(), ktu.end(), 0.0);
    for (std::size_t i = 0; i < m; ++i) {
      const auto r = xi.row(i);
      for (std::size_t j = 0; j < n; ++j) ktu[j] += r[j] * u[i];
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (underflow(ktu[j]))
        throw Error(ErrorCode::NumericalUnderflow,
                    "column " + std::to_string(j) + " of exp(-gamma/lambda)^T u vanished");
      v[j] = q[j] / ktu[j];
    }
    matvec();
    const bool check = it % o.check_every == 0 || it == o.max_main_iters;
    if (!check) continue;
    materialize();
    if (mon.check(plan, it)) break;
  }
  Solution s = mon.finish(std::move(plan), lambda);
  finalize(s, p, q, gamma, false);
  return s;
}

Solution euclidean_impl(const Histogram& p, const Histogram& q, const Matrix& gamma, double lambda,
                        const SolverOptions& o, const Matrix* weights) {
  const std::size_t m = gamma.rows(), n = gamma.cols();
  Matrix tilde(m, n), star(m, n), plan(m, n);
  for (std::size_t k = 0; k < tilde.size(); ++k)
    tilde.data()[k] = std::isinf(lambda) ? 0.0 : -gamma.data()[k] / lambda;
  auto w = [&](std::size_t i, std::size_t j) { return weights ? (*weights)(i, j) : 1.0; };
  // Σ 1/w per row and column.
  std::vector<double> row_inv(m, 0.0), col_inv(n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      row_inv[i] += 1.0 / w(i, j);
      col_inv[j] += 1.0 / w(i, j);
    }
  auto clamp = [&] {
    for (std::size_t k = 0; k < tilde.size(); ++k) star.data()[k] = std::max(0.0, tilde.data()[k]);
  };
  clamp();

  const bool parallel = o.exec == ExecPolicy::Parallel;
  std::vector<double> sigma(n);
  Monitor mon(o, p, q, gamma);
  for (int it = 1; it <= o.max_main_iters; ++it) {
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
      const std::size_t i = static_cast<std::size_t>(ii);
      CompensatedSum s;
      for (std::size_t j = 0; j < n; ++j) s.add(star(i, j) / w(i, j));
      s.add(-p[i]);
      const double tau = s.value() / row_inv[i];
      for (std::size_t j = 0; j < n; ++j) {
        tilde(i, j) -= tau;
        star(i, j) = std::max(0.0, tilde(i, j));
      }
    }
#pragma omp parallel for schedule(static) if (parallel)
    for (std::ptrdiff_t jj = 0; jj < static_cast<std::ptrdiff_t>(n); ++jj) {
      const std::size_t j = static_cast<std::size_t>(jj);
      CompensatedSum s;
      for (std::size_t i = 0; i < m; ++i) s.add(star(i, j) / w(i, j));
      s.add(-q[j]);
      sigma[j] = s.value() / col_inv[j];
    }
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        tilde(i, j) -= sigma[j];
        star(i, j) = std::max(0.0, tilde(i, j));
      }
    const bool check = it % o.check_every == 0 || it == o.max_main_iters;
    if (!check) continue;
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) plan(i, j) = star(i, j) / w(i, j);
    if (mon.check(plan, it)) break;
  }
  Solution s = mon.finish(std::move(plan), lambda);
  finalize(s, p, q, gamma, true);
  return s;
}

// Dispatch on an already reduced problem.
Solution solve_reduced(const Histogram& p, const Histogram& q, const Matrix& gamma,
                       const Regularizer& reg, const SolverOptions& o) {
  if (!o.force_generic) {
    const double lambda = effective_lambda(reg, o);
    if (reg.kind() == RegKind::BSKL) return sinkhorn_impl(p, q, gamma, lambda, o);
    if (reg.kind() == RegKind::EUC) return euclidean_impl(p, q, gamma, lambda, o, nullptr);
    if (reg.kind() == RegKind::WEUC) return euclidean_impl(p, q, gamma, lambda, o, reg.weights());
    if (reg.routes_to_euclidean()) {
      // |π|² is twice π²/2, so the same plan comes from doubling the penalty.
      Solution s = euclidean_impl(p, q, gamma, 2.0 * lambda, o, nullptr);
      s.report.lambda_used = lambda;
      return s;
    }
  }
  return generic_solve(p, q, gamma, reg, o);
}

template <class Inner>
Solution with_support_reduction(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                                const Regularizer& reg, Inner&& inner) {
  const SupportReduction red = reduce_support(p, q, gamma);
  if (red.singleton) {
    Solution s;
    s.plan.entries = outer_product(p, q);
    s.report.converged = true;
    finalize(s, p, q, gamma.entries(), false);
    return s;
  }
  if (red.identity()) return inner(p, q, gamma.entries(), reg);
  const Regularizer sub = reg.restricted(red.row_map, red.col_map);
  Solution s = inner(red.p, red.q, red.gamma.entries(), sub);
  s.plan.entries = red.reinsert(s.plan.entries);
  const bool converged = s.report.converged;
  finalize(s, p, q, gamma.entries(), false);
  s.report.converged = converged;
  return s;
}

}  // namespace

Matrix SupportReduction::reinsert(const Matrix& reduced) const {
  Matrix full(full_rows, full_cols, 0.0);
  for (std::size_t i = 0; i < row_map.size(); ++i)
    for (std::size_t j = 0; j < col_map.size(); ++j) full(row_map[i], col_map[j]) = reduced(i, j);
  return full;
}

SupportReduction reduce_support(const Histogram& p, const Histogram& q, const CostMatrix& gamma) {
  require_shapes(p, q, gamma);
  auto support = [](const Histogram& h) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < h.size(); ++i)
      if (h[i] > 0.0) idx.push_back(i);
    return idx;
  };
  auto unit = [](const Histogram& h) {
    return std::any_of(h.values().begin(), h.values().end(), [](double x) { return x == 1.0; });
  };
  std::vector<std::size_t> rows = support(p), cols = support(q);
  if (rows.empty() || cols.empty())
    throw Error(ErrorCode::AllMassRemoved, "no positive marginal entries remain");

  auto sub = [](const Histogram& h, const std::vector<std::size_t>& idx) {
    std::vector<double> v(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) v[k] = h[idx[k]];
    return validate_histogram(std::move(v));
  };
  Matrix g(rows.size(), cols.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols.size(); ++j) g(i, j) = gamma(rows[i], cols[j]);

  return SupportReduction{sub(p, rows), sub(q, cols),      CostMatrix(std::move(g)),
                          std::move(rows), std::move(cols), p.size(),
                          q.size(),        unit(p) || unit(q)};
}

Solution solve_dual(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                    const Regularizer& reg, const SolverOptions& opts) {
  opts.validate();
  require_shapes(p, q, gamma);
  if (const Matrix* w = reg.weights(); w && (w->rows() != p.size() || w->cols() != q.size()))
    throw Error(ErrorCode::ShapeMismatch, "weight matrix shape does not match the cost matrix");
  return with_support_reduction(p, q, gamma, reg,
                                [&](const Histogram& pr, const Histogram& qr, const Matrix& g,
                                    const Regularizer& r) { return solve_reduced(pr, qr, g, r, opts); });
}

Solution sinkhorn(const Histogram& p, const Histogram& q, const CostMatrix& gamma, double lambda,
                  SolverOptions opts) {
  opts.lambda_infinite = std::isinf(lambda);
  opts.lambda = opts.lambda_infinite ? 1.0 : lambda;
  opts.validate();
  require_shapes(p, q, gamma);
  const double lam = opts.lambda_infinite ? kInf : lambda;
  return with_support_reduction(
      p, q, gamma, make_regularizer(RegKind::BSKL),
      [&](const Histogram& pr, const Histogram& qr, const Matrix& g, const Regularizer&) {
        return sinkhorn_impl(pr, qr, g, lam, opts);
      });
}

Solution euclidean_solve(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                         double lambda, SolverOptions opts, const Matrix* weights) {
  opts.lambda_infinite = std::isinf(lambda);
  opts.lambda = opts.lambda_infinite ? 1.0 : lambda;
  opts.validate();
  require_shapes(p, q, gamma);
  const double lam = opts.lambda_infinite ? kInf : lambda;
  const Regularizer reg = weights ? make_regularizer(RegKind::WEUC, RegParams{std::nullopt, std::nullopt, *weights})
                                  : make_regularizer(RegKind::EUC);
  if (weights && (weights->rows() != p.size() || weights->cols() != q.size()))
    throw Error(ErrorCode::ShapeMismatch, "weight matrix shape does not match the cost matrix");
  return with_support_reduction(
      p, q, gamma, reg,
      [&](const Histogram& pr, const Histogram& qr, const Matrix& g, const Regularizer& r) {
        return euclidean_impl(pr, qr, g, lam, opts, r.weights());
      });
}

TransportPlan minimal_information_plan(const Histogram& p, const Histogram& q,
                                       const Regularizer& reg, SolverOptions opts) {
  opts.lambda_infinite = true;
  const CostMatrix zero(Matrix(p.size(), q.size(), 0.0));
  return solve_dual(p, q, zero, reg, opts).plan;
}

double rmd(const Histogram& p, const Histogram& q, const CostMatrix& gamma, const Regularizer& reg,
           double lambda, SolverOptions opts) {
  opts.lambda_infinite = std::isinf(lambda);
  if (!opts.lambda_infinite) opts.lambda = lambda;
  const double forward = solve_dual(p, q, gamma, reg, opts).report.distance;
  if (!opts.symmetrize) return forward;
  const double backward = solve_dual(q, p, gamma.transposed(), reg.transposed(), opts).report.distance;
  return 0.5 * (forward + backward);
}

PrimalSolution solve_primal(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                            const Regularizer& reg, const PrimalSpec& spec, SolverOptions opts) {
  if (!(spec.alpha > 0.0) || !std::isfinite(spec.alpha))
    throw Error(ErrorCode::InvalidOption,
                "alpha must be positive (alpha = 0 is the minimal-information plan)");
  if (!(spec.bracket_tol > 0.0) || spec.max_steps < 1)
    throw Error(ErrorCode::InvalidOption, "bracket_tol must be positive and max_steps >= 1");
  double a, b;
  if (spec.lambda_bracket) {
    std::tie(a, b) = *spec.lambda_bracket;
  } else {
    double med = gamma.median();
    if (!(med > 0.0)) {
      double total = 0.0;
      std::size_t count = 0;
      for (double c : gamma.entries().data())
        if (c > 0.0) total += c, ++count;
      med = count ? total / static_cast<double>(count) : 0.0;
    }
    if (!(med > 0.0))
      throw Error(ErrorCode::AlphaAboveAlphaPrime, "zero cost: every plan has the same distance");
    a = 1e-6 * med;
    b = 1e6 * med;
  }
  if (!(a > 0.0 && b > a && std::isfinite(b)))
    throw Error(ErrorCode::InvalidOption, "lambda bracket must be positive and ordered");

  const double phi_min = bregman_information(reg, minimal_information_plan(p, q, reg, opts).entries);
  opts.lambda_infinite = false;

  struct Probe {
    Solution sol;
    double lambda = 0.0;
    double excess = 0.0;
  };
  auto probe = [&](double lambda) -> std::optional<Probe> {
    opts.lambda = lambda;
    try {
      Probe pr{solve_dual(p, q, gamma, reg, opts), lambda, 0.0};
      if (!pr.sol.report.converged) return std::nullopt;
      pr.excess = bregman_information(reg, pr.sol.plan.entries) - phi_min;
      return pr;
    } catch (const Error& e) {
      if (e.code() == ErrorCode::NumericalUnderflow || e.code() == ErrorCode::AuxDidNotConverge ||
          e.code() == ErrorCode::DomainEscape)
        return std::nullopt;
      throw;
    }
  };
  const double tol = spec.bracket_tol * spec.alpha;
  auto finish = [&](Probe&& pr, int steps) {
    PrimalSolution out;
    out.plan = std::move(pr.sol.plan);
    out.report = pr.sol.report;
    out.lambda = pr.lambda;
    out.excess = pr.excess;
    out.matched = std::fabs(pr.excess - spec.alpha) <= tol;
    out.steps = steps;
    return out;
  };

  // Small penalties may be numerically out of reach; move the lower end up.
  std::optional<Probe> lo = probe(a);
  int steps = 1;
  while (!lo && steps < spec.max_steps) {
    a = std::sqrt(a * b);
    if (b / a < 1.0 + 1e-12) break;
    lo = probe(a);
    ++steps;
  }
  if (!lo) throw Error(ErrorCode::BracketTooNarrow, "no penalty in the bracket could be solved");
  if (lo->excess < spec.alpha - tol)
    throw Error(ErrorCode::AlphaAboveAlphaPrime,
                "alpha exceeds the information excess reachable in the bracket (EMD regime)");
  if (std::fabs(lo->excess - spec.alpha) <= tol) return finish(std::move(*lo), steps);

  std::optional<Probe> hi = probe(b);
  ++steps;
  if (!hi) throw Error(ErrorCode::BracketTooNarrow, "upper bracket penalty could not be solved");
  if (hi->excess > spec.alpha + tol)
    throw Error(ErrorCode::BracketTooNarrow, "alpha is below the excess at the largest penalty");
  if (std::fabs(hi->excess - spec.alpha) <= tol) return finish(std::move(*hi), steps);

  Probe best = std::fabs(lo->excess - spec.alpha) < std::fabs(hi->excess - spec.alpha) ? *lo : *hi;
  double la = std::log(a), lb = std::log(b);
  while (steps < spec.max_steps) {
    const double mid = std::exp(0.5 * (la + lb));
    std::optional<Probe> pm = probe(mid);
    ++steps;
    if (!pm) {
      la = std::log(mid);
      continue;
    }
    if (std::fabs(pm->excess - spec.alpha) < std::fabs(best.excess - spec.alpha)) best = *pm;
    if (std::fabs(pm->excess - spec.alpha) <= tol) break;
    // Excess decreases as λ grows.
    if (pm->excess > spec.alpha)
      la = std::log(mid);
    else
      lb = std::log(mid);
    if (lb - la <= 1e-15 * std::max(1.0, std::fabs(la))) break;
  }
  return finish(std::move(best), steps);
}

}  // namespace rot
