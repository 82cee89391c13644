#include <cmath>
#include <limits>

#include "doctest.h"
#include "rot/projections.hpp"
#include "support.hpp"

using namespace rot;
using namespace rot::testing;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected an error");
  return ErrorCode::Io;
}

Matrix dual_of(const Regularizer& reg, const Matrix& primal) {
  Matrix t(primal.rows(), primal.cols());
  for (std::size_t k = 0; k < t.size(); ++k)
    t.data()[k] = reg.eval(Fn::PhiPrime, primal.data()[k], k);
  return t;
}

// Random entries strictly inside (0, 1/cols) so every family's domain holds them.
Matrix random_positive(Rng& rng, std::size_t m, std::size_t n) {
  Matrix x(m, n);
  for (double& v : x.data()) v = uniform(rng, 0.02, 0.9) / static_cast<double>(n);
  return x;
}

double divergence(const Regularizer& reg, const Matrix& x, const Matrix& y) {
  CompensatedSum s;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double xk = x.data()[k], yk = y.data()[k];
    const double t1 = reg.eval(Fn::Phi, xk, k) - reg.eval(Fn::Phi, yk, k);
    s.add(t1 - (xk - yk) * reg.eval(Fn::PhiPrime, yk, k));
  }
  return s.value();
}

const Histogram kHalf = validate_histogram({0.5, 0.5});

}  // namespace

TEST_CASE("row projection examples") {
  SUBCASE("bskl scales rows") {
    const auto reg = make_regularizer(RegKind::BSKL);
    const double l = std::log(0.2);
    DualState s = make_dual_state(Matrix{{l, l}, {l, l}}, reg);
    Matrix prim;
    project_row_sums(s, kHalf, reg, {}, &prim);
    for (double v : prim.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("euclidean shifts rows") {
    const auto reg = make_regularizer(RegKind::EUC);
    DualState s = make_dual_state(Matrix{{0.1, 0.3}, {0.1, 0.3}}, reg);
    project_row_sums(s, kHalf, reg, {});
    const Matrix prim = primal_from_dual(s.theta, reg);
    CHECK(prim(0, 0) == doctest::Approx(0.15).epsilon(1e-14));
    CHECK(prim(0, 1) == doctest::Approx(0.35).epsilon(1e-14));
    CHECK(s.tau[0] == doctest::Approx(-0.05).epsilon(1e-14));
  }
  SUBCASE("itakura-saito multiplier") {
    const auto reg = make_regularizer(RegKind::BIS);
    const std::vector<double> row{0.0, 0.0};
    const double mu = solve_multiplier(row, 0.5, reg, {});
    // 2/(1 + μ) = 0.5
    CHECK(mu == doctest::Approx(3.0).epsilon(1e-14));
    DualState s = make_dual_state(Matrix{{0.0, 0.0}, {0.0, 0.0}}, reg);
    Matrix prim;
    project_row_sums(s, kHalf, reg, {}, &prim);
    for (double v : prim.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }
}

TEST_CASE("column projection examples") {
  SUBCASE("bskl") {
    const auto reg = make_regularizer(RegKind::BSKL);
    const double l = std::log(0.1);
    DualState s = make_dual_state(Matrix{{l, l}, {l, l}}, reg);
    Matrix prim;
    project_col_sums(s, validate_histogram({0.4, 0.6}), reg, {}, &prim);
    CHECK(prim(0, 0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(prim(1, 0) == doctest::Approx(0.2).epsilon(1e-14));
    CHECK(prim(1, 1) == doctest::Approx(0.3).epsilon(1e-14));
  }
  SUBCASE("euclidean") {
    const auto reg = make_regularizer(RegKind::EUC);
    DualState s = make_dual_state(Matrix{{0.2, 0.2}, {0.2, 0.2}}, reg);
    project_col_sums(s, kHalf, reg, {});
    for (double v : s.theta.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-14));
  }
  SUBCASE("hellinger") {
    const auto reg = make_regularizer(RegKind::HELL);
    DualState s = make_dual_state(Matrix{{0.0}, {0.0}}, reg);
    project_col_sums(s, validate_histogram({1.0}), reg, {});
    CHECK(s.sigma[0] == doctest::Approx(-1.0 / std::sqrt(3.0)).epsilon(1e-13));
    const Matrix prim = primal_from_dual(s.theta, reg);
    CHECK(prim(0, 0) == doctest::Approx(0.5).epsilon(1e-13));
    CHECK(prim(1, 0) == doctest::Approx(0.5).epsilon(1e-13));
  }
}

TEST_CASE("non-negativity projection") {
  const auto euc = make_regularizer(RegKind::EUC);
  DualState s = make_dual_state(Matrix{{-3.0, 0.7}}, euc);
  CHECK(s.theta(0, 0) == 0.0);
  CHECK(s.theta(0, 1) == 0.7);
  CHECK(s.tilde_theta->operator()(0, 0) == -3.0);

  const auto lpn = make_regularizer(RegKind::LPN, {.power = 1.5});
  DualState t = make_dual_state(Matrix{{-0.2}}, lpn);
  CHECK(t.theta(0, 0) == 0.0);
  CHECK(primal_from_dual(t.theta, lpn)(0, 0) == 0.0);

  const auto bskl = make_regularizer(RegKind::BSKL);
  DualState a = make_dual_state(Matrix{{0.0}}, bskl);
  CHECK(code_of([&] { project_nonneg(a, bskl); }) == ErrorCode::WrongClass);
}

TEST_CASE("projection errors") {
  const auto bis = make_regularizer(RegKind::BIS);
  ProjectionOptions o;
  o.max_aux_iters = 1;
  const std::vector<double> row{-5.0, 0.0, -1.0};
  CHECK(code_of([&] { solve_multiplier(row, 0.7, bis, o); }) == ErrorCode::AuxDidNotConverge);
  const auto bskl = make_regularizer(RegKind::BSKL);
  DualState s = make_dual_state(Matrix(3, 2), bskl);
  CHECK(code_of([&] { project_row_sums(s, kHalf, bskl, {}); }) == ErrorCode::ShapeMismatch);
}

// Affine projections satisfy the variational equality and the Pythagorean identity.
TEST_CASE("projection optimality and pythagorean identity") {
  Rng rng(21);
  auto regs = all_regularizers();
  regs.push_back({"weuc", RegKind::WEUC, {.weights = Matrix(3, 4, 1.0)}});
  for (const auto& c : regs) {
    CAPTURE(c.name);
    Regularizer reg = make(c);
    if (c.kind == RegKind::WEUC) reg = random_weuc(rng, 3, 4);
    for (int trial = 0; trial < 5; ++trial) {
      const std::size_t m = 3, n = 4;
      const Histogram p = random_histogram(rng, m), q = random_histogram(rng, n);
      const Matrix y = random_positive(rng, m, n);
      for (bool rows : {true, false}) {
        CAPTURE(rows);
        DualState s = make_dual_state(dual_of(reg, y), reg);
        if (rows)
          project_row_sums(s, p, reg, {});
        else
          project_col_sums(s, q, reg, {});
        const Matrix yp = primal_from_dual(s.theta, reg);
        CHECK(marginal_error(yp, p, q) >= 0.0);
        const auto sums = rows ? row_sums(yp) : col_sums(yp);
        const Histogram& h = rows ? p : q;
        for (std::size_t l = 0; l < sums.size(); ++l) CHECK(std::fabs(sums[l] - h[l]) <= 1e-14);
        const Matrix gy = dual_of(reg, y), gyp = s.theta;
        for (int k = 0; k < 100; ++k) {
          // Feasible point of the same affine set inside the domain.
          Matrix x = random_positive(rng, m, n);
          const auto xs = rows ? row_sums(x) : col_sums(x);
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) {
              const std::size_t l = rows ? i : j;
              x(i, j) *= h[l] / xs[l];
            }
          CompensatedSum ip;
          for (std::size_t e = 0; e < x.size(); ++e)
            ip.add((x.data()[e] - yp.data()[e]) * (gy.data()[e] - gyp.data()[e]));
          CHECK(std::fabs(ip.value()) <= 1e-7);
          if (!reg.in_primal_interior(*std::min_element(yp.data().begin(), yp.data().end())))
            continue;
          const double pyth = divergence(reg, x, y) - divergence(reg, x, yp) - divergence(reg, yp, y);
          CHECK(std::fabs(pyth) <= 1e-7);
        }
      }
    }
  }
}

TEST_CASE("newton safeguards") {
  Rng rng(31);
  for (const auto& c : all_regularizers()) {
    CAPTURE(c.name);
    const Regularizer reg = make(c);
    for (int trial = 0; trial < 200; ++trial) {
      const std::size_t n = 1 + static_cast<std::size_t>(uniform(rng, 0.0, 16.0));
      std::vector<double> v(n);
      for (double& x : v) {
        const double prim = uniform(rng, 1e-4, 0.9) / static_cast<double>(n);
        x = reg.eval(Fn::PhiPrime, prim) + uniform(rng, -1.0, 1.0);
        if (reg.dual_domain_hi() < 1e300) x = std::min(x, reg.dual_domain_hi() - 1e-3);
      }
      const double target = uniform(rng, 0.01, 0.99);
      NewtonTrace tr;
      const double mu = solve_multiplier(v, target, reg, {}, &tr);
      CHECK(!tr.iterates.empty());
      if (reg.assumption_class() == AssumptionClass::A) {
        for (double it : tr.iterates) CHECK(it >= tr.lower_bound);
      }
      if (reg.newton_strategy() == NewtonStrategy::SplitConvexConcave) {
        for (double it : tr.iterates) {
          CHECK(it >= tr.bracket_lo);
          CHECK(it <= tr.bracket_hi);
        }
      }
      // Residual at the resolution of μ in double precision.
      CompensatedSum s;
      double slope = 0.0, scale = std::fabs(mu);
      for (double x : v) {
        s.add(reg.eval(Fn::PsiPrime, x - mu));
        if (reg.in_dual_domain(x - mu)) slope += reg.eval(Fn::PsiPrime2, x - mu);
        scale = std::max(scale, std::fabs(x));
      }
      const double eps = std::numeric_limits<double>::epsilon();
      CHECK(std::fabs(s.value() - target) <= 1e-14 + 4.0 * eps * slope * scale);
    }
  }
}

TEST_CASE("projections are deterministic and schedule independent") {
  Rng rng(41);
  for (const auto& c : all_regularizers()) {
    CAPTURE(c.name);
    const Regularizer reg = make(c);
    const std::size_t m = 9, n = 7;
    const Histogram p = random_histogram(rng, m), q = random_histogram(rng, n);
    const Matrix t0 = dual_of(reg, random_positive(rng, m, n));
    auto run = [&](ExecPolicy e) {
      ProjectionOptions o;
      o.exec = e;
      DualState s = make_dual_state(t0, reg);
      for (int k = 0; k < 3; ++k) {
        project_row_sums(s, p, reg, o);
        if (s.tilde_theta) project_nonneg(s, reg, e);
        project_col_sums(s, q, reg, o);
        if (s.tilde_theta) project_nonneg(s, reg, e);
      }
      return s;
    };
    const DualState a = run(ExecPolicy::Serial), b = run(ExecPolicy::Serial),
                    c2 = run(ExecPolicy::Parallel);
    CHECK(a.theta == b.theta);
    CHECK(a.theta == c2.theta);
    CHECK(a.tau == b.tau);
    CHECK(a.sigma == c2.sigma);
  }
}
