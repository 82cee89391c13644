#include <chrono>
#include <cmath>
#include <cstdio>
#include <algorithm>
#include <functional>
#include <limits>
#include <optional>
#include <set>
#include <cstdlib>
#include <sstream>
#include <string>

#include "rot/reference.hpp"
#include "rot/solvers.hpp"
#include "rot/synthetic.hpp"
#include "support.hpp"

using namespace rot;
using namespace rot::testing;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail << "first failure: " << what << "; ";
    pass = pass && ok;
  }
};

int failures = 0;
std::set<int> selected;  // empty runs every criterion

void criterion(int id, const std::string& title, const std::function<void(Verdict&)>& body) {
  if (!selected.empty() && !selected.count(id)) return;
  Verdict v;
  const auto t0 = Clock::now();
  try {
    body(v);
  } catch (const std::exception& e) {
    v.require(false, std::string("exception: ") + e.what());
  }
  if (!v.pass) ++failures;
  std::printf("%s %2d %s | %s%.1fs\n", v.pass ? "PASS" : "FAIL", id, title.c_str(),
              v.detail.str().c_str(), seconds_since(t0));
  std::fflush(stdout);
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", x);
  return buf;
}

double sample_primal(Rng& rng, const Regularizer& reg) {
  const double lo = reg.primal_domain_lo(), hi = reg.primal_domain_hi();
  const double mag = std::pow(10.0, uniform(rng, -6.0, 3.0));
  const bool left = uniform(rng, 0.0, 1.0) < 0.5;
  if (std::isfinite(lo) && std::isfinite(hi)) {
    const double off = std::pow(10.0, uniform(rng, -6.0, 0.0)) * (hi - lo) * 0.5;
    return left ? lo + off : hi - off;
  }
  if (std::isfinite(lo)) return lo + mag;
  return left ? mag : -mag;
}

double kInf() { return std::numeric_limits<double>::infinity(); }

}  // namespace

int main(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
  criterion(1, "derivative and inverse identities", [](Verdict& v) {
    const auto t0 = Clock::now();
    Rng rng(1);
    double worst_inv = 0.0, worst_d2 = 0.0;
    for (const auto& c : all_regularizers()) {
      const Regularizer reg = make(c);
      for (int k = 0; k < 1000; ++k) {
        const double x = sample_primal(rng, reg);
        const double err = std::fabs(reg.eval(Fn::PsiPrime, reg.eval(Fn::PhiPrime, x)) - x) /
                           std::max(1.0, std::fabs(x));
        worst_inv = std::max(worst_inv, err);
        v.require(err <= 1e-9, c.name + " inverse at x=" + fmt(x));
      }
      // Dual points are images of plan entries in [1e−4, 1 − 1e−4].
      for (int k = 0; k < 1000; ++k) {
        const double x = std::min(std::pow(10.0, uniform(rng, -4.0, 0.0)), 1.0 - 1e-4);
        const double t = reg.eval(Fn::PhiPrime, x);
        const double h = 1e-6 * std::max(1.0, std::fabs(t));
        const double fd =
            (reg.eval(Fn::PsiPrime, t + h) - reg.eval(Fn::PsiPrime, t - h)) / (2.0 * h);
        const double d2 = reg.eval(Fn::PsiPrime2, t);
        const double err = std::fabs(d2 - fd) / std::fabs(d2);
        worst_d2 = std::max(worst_d2, err);
        v.require(err <= 1e-5, c.name + " second derivative at t=" + fmt(t));
      }
    }
    const double secs = seconds_since(t0);
    v.require(secs < 5.0, "runtime");
    v.detail << "inverse " << fmt(worst_inv) << ", psi'' " << fmt(worst_d2) << ", ";
  });

  criterion(2, "generic scaling matches sinkhorn (d=64)", [](Verdict& v) {
    Rng rng(2);
    const auto bskl = make_regularizer(RegKind::BSKL);
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      const Histogram p = random_histogram(rng, 64), q = random_histogram(rng, 64);
      const CostMatrix g = random_cost(rng, 64, 64);
      SolverOptions o;
      o.lambda = 0.05;
      o.main_tol = 1e-10;
      const Solution fast = sinkhorn(p, q, g, o.lambda, o);
      o.force_generic = true;
      const Solution slow = solve_dual(p, q, g, bskl, o);
      v.require(fast.report.converged && slow.report.converged, "convergence");
      worst = std::max(worst, max_abs_diff(fast.plan.entries, slow.plan.entries));
    }
    v.require(worst <= 1e-6, "plan gap");
    v.detail << "max plan gap " << fmt(worst) << ", ";
  });

  criterion(3, "zero-cost plan minimizes the information", [](Verdict& v) {
    Rng rng(3);
    double worst = 0.0;
    for (std::size_t d : {4u, 16u, 64u}) {
      const Histogram p = random_histogram(rng, d), q = random_histogram(rng, d);
      const CostMatrix zero(Matrix(d, d, 0.0));
      for (double lambda : {1e-3, 1.0, 1e3})
        worst = std::max(worst, max_abs_diff(sinkhorn(p, q, zero, lambda).plan.entries,
                                             outer_product(p, q)));
    }
    v.require(worst <= 1e-12, "sinkhorn p q^T");
    double margin = kInf();
    for (const auto& c : all_regularizers()) {
      const Regularizer reg = make(c);
      const Histogram p = random_histogram(rng, 16), q = random_histogram(rng, 16);
      const double best = bregman_information(reg, minimal_information_plan(p, q, reg).entries);
      for (int k = 0; k < 100; ++k) {
        const double other = bregman_information(reg, random_feasible_plan(rng, p, q));
        margin = std::min(margin, other - best);
        v.require(best <= other + 1e-8, c.name);
      }
    }
    v.detail << "p q^T gap " << fmt(worst) << ", min phi margin " << fmt(margin) << ", ";
  });

  criterion(4, "monotone approach to the EMD (d=16)", [](Verdict& v) {
    // Smallest penalty per family (the grid spans two decades above it) and
    // the iteration budget needed to converge there.
    struct Grid {
      const char* name;
      double lo;
      int iters;
    };
    const std::vector<Grid> grids{
        {"bskl", 3e-3, 100000},     {"bis", 3e-6, 1000000},      {"fdlog", 3e-3, 100000},
        {"beta0.25", 3e-5, 500000}, {"beta0.5", 3e-4, 200000},   {"beta0.75", 1e-3, 100000},
        {"lpqn0.1", 1e-4, 1000000}, {"lpqn0.5", 1e-3, 200000},   {"lpqn0.9", 1e-2, 100000},
        {"lpn1.1", 5e-2, 100000},   {"lpn1.5", 5e-2, 100000},    {"lpn2", 1e-1, 1000000},
        {"euc", 2e-1, 1000000},     {"hell", 2e-1, 1000000}};
    auto grid_for = [&](const RegCase& c) {
      return *std::find_if(grids.begin(), grids.end(), [&](const Grid& g) { return c.name == g.name; });
    };
    Rng rng(4);
    double worst_gap = 0.0, worst_step = 0.0;
    for (const auto& c : all_regularizers()) {
      const Regularizer reg = make(c);
      const Grid gr = grid_for(c);
      for (int k = 0; k < 10; ++k) {
        const Histogram p = random_histogram(rng, 16), q = random_histogram(rng, 16);
        const CostMatrix g = random_cost(rng, 16, 16);
        const double emd = emd_exact(p, q, g).distance;
        double prev = kInf(), last_gap = kInf();
        for (int s = 0; s < 10; ++s) {
          const double lambda = 100.0 * gr.lo * std::pow(0.01, s / 9.0);
          SolverOptions o;
          o.lambda = lambda;
          o.max_main_iters = 2 * gr.iters;
          // Solve below the 1e-10 monotonicity slack.
          o.main_tol = 1e-11;
          // Past the smallest numerically stable penalty the grid stops.
          std::optional<Solution> sol;
          try {
            sol = solve_dual(p, q, g, reg, o);
          } catch (const Error&) {
          }
          if (!sol || !sol->report.converged) break;
          const double d = sol->report.distance;
          worst_step = std::max(worst_step, d - prev);
          v.require(d <= prev + 1e-10, c.name + " monotone at lambda=" + fmt(lambda));
          // A plan within main_tol of the marginals can undercut the EMD by at
          // most 2 * 16 * main_tol * max cost (max cost <= 1 here).
          v.require(d >= emd - 32.0 * o.main_tol, c.name + " below EMD by " + fmt(emd - d));
          prev = d;
          last_gap = std::fabs(d - emd) / std::max(emd, 1e-6);
        }
        worst_gap = std::max(worst_gap, last_gap);
        v.require(last_gap <= 1e-2, c.name + " EMD gap " + fmt(last_gap));
      }
    }
    v.detail << "worst final gap " << fmt(worst_gap) << ", worst step " << fmt(worst_step)
             << ", ";
  });

  criterion(5, "dual solver agrees with the Frank-Wolfe oracle (d=8)", [](Verdict& v) {
    const auto t0 = Clock::now();
    Rng rng(5);
    double plan_gap = 0.0, dist_gap = 0.0;
    for (const auto& c : all_regularizers()) {
      const Regularizer reg = make(c);
      for (int k = 0; k < 20; ++k) {
        const Histogram p = random_histogram(rng, 8), q = random_histogram(rng, 8);
        const CostMatrix g = random_cost(rng, 8, 8);
        SolverOptions o;
        o.lambda = 1.0;
        o.main_tol = 1e-11;
        o.max_main_iters = 1000000;
        const Solution s = solve_dual(p, q, g, reg, o);
        v.require(s.report.converged, c.name + " dual convergence");
        const OracleResult f = projection_oracle(p, q, g, reg, 1.0, 1e-12);
        const double pg = max_abs_diff(s.plan.entries, f.plan.entries);
        const double dg =
            std::fabs(s.report.distance - frobenius_dot(f.plan.entries, g.entries())) /
            s.report.distance;
        plan_gap = std::max(plan_gap, pg);
        dist_gap = std::max(dist_gap, dg);
        v.require(pg <= 1e-4 && dg <= 1e-6, c.name + " agreement");
      }
    }
    v.require(seconds_since(t0) < 600.0, "runtime");
    v.detail << "max plan gap " << fmt(plan_gap) << ", max distance gap " << fmt(dist_gap) << ", ";
  });

  criterion(6, "primal solve recovers the dual distance (d=8)", [](Verdict& v) {
    Rng rng(6);
    double worst = 0.0;
    for (const auto& c : all_regularizers()) {
      const Regularizer reg = make(c);
      for (int k = 0; k < 10; ++k) {
        const Histogram p = random_histogram(rng, 8), q = random_histogram(rng, 8);
        const CostMatrix g = random_cost(rng, 8, 8);
        SolverOptions o;
        o.lambda = 1.0;
        o.main_tol = 1e-11;
        o.max_main_iters = 100000;
        const Solution dual = solve_dual(p, q, g, reg, o);
        v.require(dual.report.converged, c.name + " dual convergence");
        const double alpha =
            bregman_information(reg, dual.plan.entries) -
            bregman_information(reg, minimal_information_plan(p, q, reg, o).entries);
        PrimalSpec spec;
        spec.alpha = alpha;
        spec.bracket_tol = 1e-7;
        spec.max_steps = 200;
        const PrimalSolution pr = solve_primal(p, q, g, reg, spec, o);
        const double gap = std::fabs(pr.report.distance - dual.report.distance) / dual.report.distance;
        worst = std::max(worst, gap);
        v.require(gap <= 1e-4, c.name + " roundtrip gap " + fmt(gap));
      }
    }
    v.detail << "max relative gap " << fmt(worst) << ", ";
  });

  criterion(7, "euclidean closed form matches lpn p=2 (d=32)", [](Verdict& v) {
    Rng rng(7);
    const auto lpn2 = make_regularizer(RegKind::LPN, {.power = 2.0});
    double worst = 0.0;
    for (int k = 0; k < 10; ++k) {
      const Histogram p = random_histogram(rng, 32), q = random_histogram(rng, 32);
      const CostMatrix g = random_cost(rng, 32, 32);
      SolverOptions o;
      o.lambda = 0.5;
      o.main_tol = 1e-12;
      o.max_main_iters = 1000000;
      o.force_generic = true;
      const Solution a = solve_dual(p, q, g, lpn2, o);
      const Solution b = euclidean_solve(p, q, g, 2.0 * o.lambda, o);
      v.require(a.report.converged && b.report.converged, "convergence");
      worst = std::max(worst, max_abs_diff(a.plan.entries, b.plan.entries));
    }
    v.require(worst <= 1e-8, "plan gap");
    v.detail << "max plan gap " << fmt(worst) << ", ";
  });

  criterion(8, "synthetic grid d=256 converges", [](Verdict& v) {
    const auto t0 = Clock::now();
    const SyntheticInstance s = generate_synthetic(256);
    int worst_iters = 0;
    for (const ExperimentConfig& e : default_experiments()) {
      const Regularizer reg = make_regularizer(e.kind, e.params);
      for (double prime : {1e-1, 1.0, kInf()}) {
        SolverOptions o;
        o.lambda_infinite = std::isinf(prime);
        o.lambda = o.lambda_infinite ? 1.0 : e.lambda_bar * prime;
        o.max_main_iters = 10000;
        const Solution sol = solve_dual(s.p, s.q, s.gamma, reg, o);
        worst_iters = std::max(worst_iters, sol.report.main_iterations);
        v.require(sol.report.converged && sol.report.final_marginal_error <= 1e-8,
                  e.label + " lambda'=" + fmt(prime));
        if (e.kind == RegKind::BSKL && o.lambda_infinite)
          v.require(max_abs_diff(sol.plan.entries, outer_product(s.p, s.q)) <= 1e-10,
                    "bskl p q^T");
      }
    }
    v.require(seconds_since(t0) <= 600.0, "runtime");
    v.detail << "max iterations " << worst_iters << ", ";
  });

  criterion(9, "support reduction is exact (d=32)", [](Verdict& v) {
    Rng rng(9);
    for (const auto& c : all_regularizers()) {
      const Regularizer reg = make(c);
      for (int k = 1; k <= 3; ++k) {
        std::vector<double> raw(32);
        for (double& x : raw) x = uniform(rng, 0.1, 1.0);
        for (int z = 0; z < 3 * k; ++z) raw[static_cast<std::size_t>(uniform(rng, 0.0, 32.0))] = 0.0;
        const Histogram p = normalize(raw), q = random_histogram(rng, 32);
        const CostMatrix g = random_cost(rng, 32, 32);
        SolverOptions o;
        o.lambda = reg.assumption_class() == AssumptionClass::A ? 0.5 : 2.0;
        o.max_main_iters = 100000;
        const Solution full = solve_dual(p, q, g, reg, o);
        const SupportReduction red = reduce_support(p, q, g);
        const Solution part =
            solve_dual(red.p, red.q, red.gamma, reg.restricted(red.row_map, red.col_map), o);
        v.require(full.report.converged, c.name + " convergence");
        v.require(full.plan.entries == red.reinsert(part.plan.entries), c.name + " bitwise");
      }
    }
  });

  criterion(10, "EMD optimality certificates", [](Verdict& v) {
    Rng rng(10);
    int pivots = 0;
    for (int k = 0; k < 100; ++k) {
      const std::size_t m = 1 + static_cast<std::size_t>(uniform(rng, 0.0, 64.0));
      const std::size_t n = 1 + static_cast<std::size_t>(uniform(rng, 0.0, 64.0));
      const Histogram p = random_histogram(rng, m), q = random_histogram(rng, n);
      // Every other instance uses integer costs, which are highly degenerate.
      Matrix g(m, n);
      for (double& x : g.data()) x = k % 2 ? std::floor(uniform(rng, 0.0, 5.0)) : uniform(rng, 0.0, 1.0);
      const CostMatrix gamma(g);
      const EmdSolution e = emd_exact(p, q, gamma);
      pivots += e.pivots;
      v.require(e.certified && verify_emd_certificate(gamma, e.plan.entries, e.basis).ok(),
                "certificate " + std::to_string(k));
      v.require(marginal_error(e.plan, p, q) <= 1e-14, "feasibility");
    }
    v.detail << "total pivots " << pivots << ", ";
  });

  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
