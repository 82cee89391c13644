#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rot/core.hpp"
#include "rot/regularizer.hpp"

namespace rot {

/// Dual coordinates θ = φ′(π) of the current iterate. For class B regularizers
/// tilde_theta holds the unclamped matrix and theta = max(φ′(0), tilde_theta).
struct DualState {
  Matrix theta;
  std::optional<Matrix> tilde_theta;
  std::vector<double> tau;    // last row multipliers (differences for class B)
  std::vector<double> sigma;  // last column multipliers
};

/// Builds the starting state from θ₀ (typically −γ/λ).
DualState make_dual_state(Matrix theta0, const Regularizer& reg);

struct ProjectionOptions {
  double aux_tol = 1e-16;
  int max_aux_iters = 50;
  ExecPolicy exec = ExecPolicy::Serial;
  // Class A: keep every multiplier iterate above θ̂ − φ′(target).
  bool lower_bound_clamp = true;
};

/// Iterate record of one scalar multiplier solve.
struct NewtonTrace {
  double lower_bound = 0.0;  // the safeguard bound on the multiplier
  double bracket_lo = 0.0;   // bracket handed to the Newton phase
  double bracket_hi = 0.0;
  double start = 0.0;
  std::vector<double> iterates;  // every multiplier at which the residual was evaluated
  int bisection_steps = 0;
  int knot_probes = 0;
};

/// Solves Σₖ ψ′(valuesₖ − μ) = target for μ. flat_offset/flat_stride locate the
/// entries in the full matrix (used by entry-dependent regularizers).
double solve_multiplier(std::span<const double> values, double target, const Regularizer& reg,
                        const ProjectionOptions& opts, NewtonTrace* trace = nullptr,
                        std::size_t flat_offset = 0, std::size_t flat_stride = 1);

/// Projects onto {rows sum to p}. If primal_out is given it receives ψ′ of the
/// updated rows (class A only; class B needs a clamp before the primal image).
void project_row_sums(DualState& state, const Histogram& p, const Regularizer& reg,
                      const ProjectionOptions& opts, Matrix* primal_out = nullptr);

void project_col_sums(DualState& state, const Histogram& q, const Regularizer& reg,
                      const ProjectionOptions& opts, Matrix* primal_out = nullptr);

/// θ = max(φ′(0), θ̃). Class B only.
void project_nonneg(DualState& state, const Regularizer& reg,
                    ExecPolicy exec = ExecPolicy::Serial);

/// Entry-wise ψ′(θ).
void primal_from_dual(const Matrix& theta, const Regularizer& reg, Matrix& out,
                      ExecPolicy exec = ExecPolicy::Serial);
Matrix primal_from_dual(const Matrix& theta, const Regularizer& reg,
                        ExecPolicy exec = ExecPolicy::Serial);

}  // namespace rot
