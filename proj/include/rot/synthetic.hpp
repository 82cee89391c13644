#pragma once

#include <string>
#include <vector>

#include "rot/core.hpp"
#include "rot/regularizer.hpp"

namespace rot {

struct SyntheticInstance {
  std::vector<double> grid;  // xᵢ = i/(d−1)
  Histogram p;               // discretized N(0.5, variance 0.2)
  Histogram q;               // equal mixture of N(0.25, 0.1) and N(0.75, 0.1)
  CostMatrix gamma;          // (xᵢ − xⱼ)²
};

/// Densities sampled at the grid endpoints and renormalized.
SyntheticInstance generate_synthetic(std::size_t d);

/// One regularizer of the benchmark grid with its base penalty λ̄ (λ = λ̄·λ′).
struct ExperimentConfig {
  std::string label;
  RegKind kind;
  RegParams params;
  double lambda_bar;
};

/// The eleven (regularizer, λ̄) pairs of the synthetic timing grid.
std::vector<ExperimentConfig> default_experiments();

}  // namespace rot
