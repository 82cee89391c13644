#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "rot/core.hpp"
#include "rot/regularizer.hpp"

namespace rot::testing {

using Rng = std::mt19937_64;

inline double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Strictly positive histogram; entries roughly within a factor 10 of each other.
inline Histogram random_histogram(Rng& rng, std::size_t n, double spread = 10.0) {
  std::vector<double> v(n);
  for (double& x : v) x = std::exp(uniform(rng, 0.0, std::log(spread)));
  return normalize(std::move(v));
}

inline CostMatrix random_cost(Rng& rng, std::size_t m, std::size_t n) {
  Matrix g(m, n);
  for (double& x : g.data()) x = uniform(rng, 0.0, 1.0);
  return CostMatrix(std::move(g));
}

// Squared distances between random points of [0,1].
inline CostMatrix random_metric_cost(Rng& rng, std::size_t m, std::size_t n) {
  std::vector<double> x(m), y(n);
  for (double& v : x) v = uniform(rng, 0.0, 1.0);
  for (double& v : y) v = uniform(rng, 0.0, 1.0);
  Matrix g(m, n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) g(i, j) = (x[i] - y[j]) * (x[i] - y[j]);
  return CostMatrix(std::move(g));
}

struct RegCase {
  std::string name;
  RegKind kind;
  RegParams params;
};

// Every family, with the parameter values exercised throughout the tests.
inline std::vector<RegCase> all_regularizers() {
  return {
      {"bskl", RegKind::BSKL, {}},
      {"bis", RegKind::BIS, {}},
      {"fdlog", RegKind::FDLOG, {}},
      {"beta0.25", RegKind::BETA, {.beta = 0.25}},
      {"beta0.5", RegKind::BETA, {.beta = 0.5}},
      {"beta0.75", RegKind::BETA, {.beta = 0.75}},
      {"lpqn0.1", RegKind::LPQN, {.power = 0.1}},
      {"lpqn0.5", RegKind::LPQN, {.power = 0.5}},
      {"lpqn0.9", RegKind::LPQN, {.power = 0.9}},
      {"lpn1.1", RegKind::LPN, {.power = 1.1}},
      {"lpn1.5", RegKind::LPN, {.power = 1.5}},
      {"lpn2", RegKind::LPN, {.power = 2.0}},
      {"euc", RegKind::EUC, {}},
      {"hell", RegKind::HELL, {}},
  };
}

inline Regularizer make(const RegCase& c) { return make_regularizer(c.kind, c.params); }

inline Regularizer random_weuc(Rng& rng, std::size_t m, std::size_t n) {
  Matrix w(m, n);
  for (double& x : w.data()) x = uniform(rng, 0.5, 2.0);
  return make_regularizer(RegKind::WEUC, {.weights = w});
}

// Feasible interior plan: Sinkhorn scaling of a random positive matrix.
inline Matrix random_feasible_plan(Rng& rng, const Histogram& p, const Histogram& q) {
  const std::size_t m = p.size(), n = q.size();
  Matrix k(m, n);
  for (double& x : k.data()) x = std::exp(uniform(rng, -2.0, 2.0));
  for (int it = 0; it < 5000; ++it) {
    auto r = row_sums(k);
    for (std::size_t i = 0; i < m; ++i)
      for (double& x : k.row(i)) x *= p[i] / r[i];
    auto c = col_sums(k);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) k(i, j) *= q[j] / c[j];
    if (marginal_error(k, p, q) < 1e-15) break;
  }
  return k;
}

}  // namespace rot::testing
