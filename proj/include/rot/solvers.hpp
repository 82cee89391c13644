#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "rot/core.hpp"
#include "rot/regularizer.hpp"

namespace rot {

struct Solution {
  TransportPlan plan;
  SolverReport report;
};

/// Zero marginal entries stripped; unit entries flag the singleton polytope.
struct SupportReduction {
  Histogram p;
  Histogram q;
  CostMatrix gamma;
  std::vector<std::size_t> row_map;  // reduced row -> original row
  std::vector<std::size_t> col_map;
  std::size_t full_rows = 0;
  std::size_t full_cols = 0;
  bool singleton = false;

  bool identity() const { return row_map.size() == full_rows && col_map.size() == full_cols; }
  /// Scatters a reduced plan back into the full shape with zero rows/columns.
  Matrix reinsert(const Matrix& reduced) const;
};

SupportReduction reduce_support(const Histogram& p, const Histogram& q, const CostMatrix& gamma);

/// Regularized plan argmin ⟨π,γ⟩ + λφ(π) over the transport polytope.
Solution solve_dual(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                    const Regularizer& reg, const SolverOptions& opts);

/// Matrix scaling with ξ = exp(−γ/λ). λ = +∞ means ξ = 1.
Solution sinkhorn(const Histogram& p, const Histogram& q, const CostMatrix& gamma, double lambda,
                  SolverOptions opts = {});

/// Closed-form offsets for π²/2 (or the entry-weighted variant when weights are given).
Solution euclidean_solve(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                         double lambda, SolverOptions opts = {}, const Matrix* weights = nullptr);

/// Plan with minimal Bregman information (the γ = 0 solve).
TransportPlan minimal_information_plan(const Histogram& p, const Histogram& q,
                                       const Regularizer& reg, SolverOptions opts = {});

/// ⟨π⋆_λ, γ⟩, averaged with the swapped problem when opts.symmetrize is set.
double rmd(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
           const Regularizer& reg, double lambda, SolverOptions opts = {});

struct PrimalSpec {
  double alpha = 0.0;
  // Defaults to [1e−6, 1e6]·median(γ).
  std::optional<std::pair<double, double>> lambda_bracket;
  double bracket_tol = 1e-3;
  int max_steps = 60;
};

struct PrimalSolution {
  TransportPlan plan;
  double lambda = 0.0;
  SolverReport report;
  double excess = 0.0;  // φ(π⋆) − φ(π′) at the returned λ
  bool matched = false; // excess within bracket_tol of alpha
  int steps = 0;
};

/// Bisection on λ so that the Bregman-information excess matches spec.alpha.
PrimalSolution solve_primal(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                            const Regularizer& reg, const PrimalSpec& spec,
                            SolverOptions opts = {});

}  // namespace rot
