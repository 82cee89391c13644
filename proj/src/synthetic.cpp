#include "rot/synthetic.hpp"

#include <cmath>
#include <numbers>

namespace rot {

namespace {

double normal_density(double x, double mean, double variance) {
  const double z = x - mean;
  return std::exp(-z * z / (2.0 * variance)) / std::sqrt(2.0 * std::numbers::pi * variance);
}

}  // namespace

SyntheticInstance generate_synthetic(std::size_t d) {
  if (d < 2) throw Error(ErrorCode::InvalidOption, "synthetic instance needs d >= 2");
  std::vector<double> grid(d), p(d), q(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double x = static_cast<double>(i) / static_cast<double>(d - 1);
    grid[i] = x;
    p[i] = normal_density(x, 0.5, 0.2);
    q[i] = 0.5 * normal_density(x, 0.25, 0.1) + 0.5 * normal_density(x, 0.75, 0.1);
  }
  Matrix gamma(d, d);
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < d; ++j) gamma(i, j) = (grid[i] - grid[j]) * (grid[i] - grid[j]);
  return SyntheticInstance{std::move(grid), normalize(std::move(p)), normalize(std::move(q)),
                           CostMatrix(std::move(gamma))};
}

std::vector<ExperimentConfig> default_experiments() {
  return {
      {"fdlog", RegKind::FDLOG, {}, 1e-2},
      {"bskl", RegKind::BSKL, {}, 1e-2},
      {"beta(0.5)", RegKind::BETA, {.beta = 0.5}, 1e-4},
      {"bis", RegKind::BIS, {}, 1e-6},
      {"lpqn(0.1)", RegKind::LPQN, {.power = 0.1}, 1e-4},
      {"lpqn(0.5)", RegKind::LPQN, {.power = 0.5}, 1e-3},
      {"lpqn(0.9)", RegKind::LPQN, {.power = 0.9}, 1e-1},
      {"lpn(1.1)", RegKind::LPN, {.power = 1.1}, 1e0},
      {"lpn(1.5)", RegKind::LPN, {.power = 1.5}, 1e1},
      {"euc", RegKind::EUC, {}, 1e2},
      {"hell", RegKind::HELL, {}, 1e2},
  };
}

}  // namespace rot
