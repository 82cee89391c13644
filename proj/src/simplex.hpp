#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rot/core.hpp"
#include "rot/reference.hpp"

namespace rot::detail {

// Transportation simplex on a spanning-tree basis with Bland's rule. Costs may
// be any finite values; the caller balances supply and demand.
class TransportSimplex {
 public:
  TransportSimplex(const Matrix& cost, std::span<const double> supply,
                   std::span<const double> demand);

  // Floating-point pricing with tolerance tol.
  void solve(double tol, std::size_t max_pivots);
  // Continues pivoting on exact rational reduced costs until none is negative.
  void polish_exact(std::size_t max_pivots);

  Matrix plan() const;
  const std::vector<Cell>& basis() const { return cells_; }
  void potentials(std::vector<double>& u, std::vector<double>& v) const;
  std::size_t pivots() const { return pivots_; }

 private:
  void north_west_corner();
  void add_basic(std::size_t i, std::size_t j, double flow);
  void build_adjacency(std::vector<std::vector<int>>& adj) const;
  void pivot(std::size_t i, std::size_t j);
  bool float_step(double tol);
  bool exact_step();

  std::size_t m_, n_;
  const Matrix& cost_;
  std::vector<double> a_, b_;
  std::vector<int> slot_;  // cell -> basis slot or −1
  std::vector<Cell> cells_;
  std::vector<double> flow_;
  std::size_t pivots_ = 0;
};

}  // namespace rot::detail
