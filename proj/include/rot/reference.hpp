#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "rot/core.hpp"
#include "rot/regularizer.hpp"

namespace rot {

using Cell = std::pair<std::size_t, std::size_t>;

struct EmdSolution {
  TransportPlan plan;
  double distance = 0.0;
  // Spanning-tree basis of the final vertex (m + n − 1 cells, zero flows allowed).
  std::vector<Cell> basis;
  // Potentials rounded to double; the exact check works on rationals.
  std::vector<double> u;
  std::vector<double> v;
  int pivots = 0;
  bool certified = false;
};

/// Exact earth mover's plan by the transportation simplex. Every returned
/// solution has passed the rational complementary-slackness check.
EmdSolution emd_exact(const Histogram& p, const Histogram& q, const CostMatrix& gamma);

struct CertificateCheck {
  bool basis_is_spanning_tree = false;
  bool support_in_basis = false;
  bool plan_nonnegative = false;
  bool dual_feasible = false;  // u_i + v_j ≤ γ_ij for every cell, in exact arithmetic
  bool ok() const {
    return basis_is_spanning_tree && support_in_basis && plan_nonnegative && dual_feasible;
  }
};

/// Rebuilds exact potentials from the basis (u_i + v_j = γ_ij on basic cells)
/// and checks optimality over every cell with GMP rationals.
CertificateCheck verify_emd_certificate(const CostMatrix& gamma, const Matrix& plan,
                                        const std::vector<Cell>& basis);

struct OracleReport {
  int iterations = 0;
  double gap = 0.0;
  double objective = 0.0;
  std::size_t active_atoms = 0;
  bool newton_finish = false;
};

struct OracleResult {
  TransportPlan plan;
  OracleReport report;
};

/// Conditional-gradient minimizer of ⟨π,γ⟩ + λφ(π) over the polytope, with
/// exact-EMD vertices. Stops once the Frank–Wolfe gap drops to tol.
OracleResult projection_oracle(const Histogram& p, const Histogram& q, const CostMatrix& gamma,
                               const Regularizer& reg, double lambda, double tol,
                               long max_iters = 1000000);

}  // namespace rot
