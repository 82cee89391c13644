#include <cmath>

#include "doctest.h"
#include "rot/core.hpp"
#include "rot/regularizer.hpp"
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

}  // namespace

TEST_CASE("validate_histogram accepts and rejects") {
  const Histogram h = validate_histogram({0.5, 0.5});
  CHECK(h.size() == 2);
  CHECK(h[0] == 0.5);
  CHECK(h[1] == 0.5);
  CHECK(code_of([] { validate_histogram({0.3, 0.8}); }) == ErrorCode::NotNormalized);
  CHECK(code_of([] { validate_histogram({-0.1, 1.1}); }) == ErrorCode::NegativeEntry);
  CHECK(code_of([] { validate_histogram({}); }) == ErrorCode::EmptyInput);
  CHECK(code_of([] { validate_histogram({0.5, NAN}); }) != ErrorCode::Io);
}

TEST_CASE("validate_histogram does not rescale") {
  const Histogram h = validate_histogram({0.2, 0.3, 0.5 + 5e-10});
  CHECK(h[2] == 0.5 + 5e-10);
  const Histogram n = normalize({1.0, 3.0});
  CHECK(n[0] == doctest::Approx(0.25));
  CHECK(n[1] == doctest::Approx(0.75));
}

TEST_CASE("cost matrix validation") {
  CHECK(code_of([] { CostMatrix(Matrix{{0.0, -1.0}}); }) == ErrorCode::NegativeEntry);
  CHECK(code_of([] { CostMatrix(Matrix{{0.0, INFINITY}}); }) == ErrorCode::DomainViolation);
  CHECK(CostMatrix(Matrix{{3.0, 1.0, 2.0}}).median() == 2.0);
}

TEST_CASE("bregman_divergence examples") {
  const auto bskl = make_regularizer(RegKind::BSKL);
  const auto euc = make_regularizer(RegKind::EUC);
  Rng rng(1);
  const auto p = random_histogram(rng, 3), q = random_histogram(rng, 4);
  const Matrix pi = random_feasible_plan(rng, p, q);
  CHECK(bregman_divergence(bskl, pi, pi) == 0.0);
  CHECK(bregman_divergence(euc, Matrix{{3.0}}, Matrix{{1.0}}) == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(bregman_divergence(bskl, Matrix{{2.0}}, Matrix{{1.0}}) ==
        doctest::Approx(0.386294361119890618).epsilon(1e-14));
  CHECK(code_of([&] { bregman_divergence(bskl, Matrix{{1.0}}, Matrix{{0.0}}); }) ==
        ErrorCode::DomainViolation);
  CHECK(code_of([&] { bregman_divergence(bskl, Matrix{{-1.0}}, Matrix{{1.0}}); }) ==
        ErrorCode::DomainViolation);
  CHECK(code_of([&] { bregman_divergence(bskl, Matrix{{1.0, 1.0}}, Matrix{{1.0}}); }) ==
        ErrorCode::ShapeMismatch);
}

TEST_CASE("bregman_information examples") {
  CHECK(bregman_information(make_regularizer(RegKind::BSKL), Matrix(3, 3, 1.0)) == 0.0);
  CHECK(bregman_information(make_regularizer(RegKind::EUC), Matrix(2, 2, 0.25)) ==
        doctest::Approx(0.125).epsilon(1e-15));
  CHECK(bregman_information(make_regularizer(RegKind::BIS), Matrix{{1.0}}) == 0.0);
  CHECK(code_of([] { bregman_information(make_regularizer(RegKind::BIS), Matrix{{0.0}}); }) ==
        ErrorCode::DomainViolation);
  // 0·log 0 = 0
  CHECK(bregman_information(make_regularizer(RegKind::BSKL), Matrix{{0.0}}) == 1.0);
}

TEST_CASE("marginal_error examples") {
  const auto half = validate_histogram({0.5, 0.5});
  const auto q = validate_histogram({0.4, 0.6});
  CHECK(marginal_error(Matrix(2, 2, 0.25), half, half) == 0.0);
  CHECK(marginal_error(Matrix{{0.5, 0.0}, {0.0, 0.5}}, half, q) == doctest::Approx(0.1));
  CHECK(marginal_error(Matrix{{0.3, 0.2}, {0.1, 0.4}}, half, q) <= 2e-16);
  CHECK(code_of([&] { marginal_error(Matrix(3, 2), half, q); }) == ErrorCode::ShapeMismatch);
}

TEST_CASE("solver options validation") {
  SolverOptions o;
  CHECK_NOTHROW(o.validate());
  CHECK(o.effective_aux_tol() == doctest::Approx(1e-16));
  o.aux_tol = 1e-6;
  CHECK(code_of([&] { o.validate(); }) == ErrorCode::InvalidOption);
  o = {};
  o.lambda = 0.0;
  CHECK(code_of([&] { o.validate(); }) == ErrorCode::InvalidOption);
  o = {};
  o.max_aux_iters = 0;
  CHECK(code_of([&] { o.validate(); }) == ErrorCode::InvalidOption);
}

TEST_CASE("compensated summation keeps small terms") {
  std::vector<double> v{1.0, 1e-16, 1e-16, 1e-16, 1e-16, -1.0};
  CHECK(compensated_sum(v) == doctest::Approx(4e-16).epsilon(1e-12));
}

// Property: non-negativity, identity and convexity of the divergence, plus the three-point identity.
TEST_CASE("divergence properties on random interior points") {
  Rng rng(7);
  for (const auto& c : all_regularizers()) {
    CAPTURE(c.name);
    const Regularizer reg = make(c);
    auto sample = [&]() {
      // Interior of dom φ intersected with [0, 1] (transport-plan range).
      const double lo = reg.primal_domain_lo() >= 0.0 ? 1e-6 : -0.9;
      const double hi = std::min(reg.primal_domain_hi(), 1.0) - 1e-6;
      return uniform(rng, lo, hi);
    };
    for (int k = 0; k < 1000; ++k) {
      const double x = sample(), y = sample();
      const double d = reg.divergence(x, y);
      CHECK(d >= 0.0);
      CHECK(reg.divergence(x, x) == 0.0);
      if (std::fabs(x - y) > 1e-3) CHECK(d > 0.0);
    }
    for (int k = 0; k < 200; ++k) {
      const double a = sample(), b = sample(), xi = sample(), t = uniform(rng, 0.0, 1.0);
      const double lhs = reg.divergence(t * a + (1 - t) * b, xi);
      const double rhs = t * reg.divergence(a, xi) + (1 - t) * reg.divergence(b, xi);
      CHECK(lhs <= rhs + 1e-10);
    }
    for (int k = 0; k < 200; ++k) {
      const double x = sample(), y = sample(), yp = sample();
      const double lhs = reg.divergence(x, y);
      const double rhs = reg.divergence(x, yp) + reg.divergence(yp, y) -
                         (x - yp) * (reg.eval(Fn::PhiPrime, y) - reg.eval(Fn::PhiPrime, yp));
      CHECK(std::fabs(lhs - rhs) <= 1e-9 * std::max(1.0, std::fabs(lhs)));
    }
  }
}
