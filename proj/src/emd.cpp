#include <gmpxx.h>

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>

#include "rot/reference.hpp"
#include "simplex.hpp"

namespace rot {

namespace detail {

TransportSimplex::TransportSimplex(const Matrix& cost, std::span<const double> supply,
                                   std::span<const double> demand)
    : m_(supply.size()), n_(demand.size()), cost_(cost),
      a_(supply.begin(), supply.end()), b_(demand.begin(), demand.end()),
      slot_(m_ * n_, -1) {
  if (cost.rows() != m_ || cost.cols() != n_)
    throw Error(ErrorCode::ShapeMismatch, "transport cost shape does not match marginals");
  north_west_corner();
}

// Staircase walk from (0,0) to (m−1,n−1): always m + n − 1 cells, zero flows kept.
void TransportSimplex::north_west_corner() {
  std::vector<double> a = a_, b = b_;
  std::size_t i = 0, j = 0;
  while (true) {
    const double x = std::min(a[i], b[j]);
    add_basic(i, j, std::max(0.0, x));
    a[i] -= x;
    b[j] -= x;
    if (i == m_ - 1 && j == n_ - 1) break;
    if (i == m_ - 1)
      ++j;
    else if (j == n_ - 1)
      ++i;
    else if (a[i] <= b[j])
      ++i;
    else
      ++j;
  }
}

void TransportSimplex::add_basic(std::size_t i, std::size_t j, double flow) {
  slot_[i * n_ + j] = static_cast<int>(cells_.size());
  cells_.push_back({i, j});
  flow_.push_back(flow);
}

// Tree adjacency: nodes 0..m−1 are rows, m..m+n−1 columns; edges are basis slots.
void TransportSimplex::build_adjacency(std::vector<std::vector<int>>& adj) const {
  adj.assign(m_ + n_, {});
  for (std::size_t s = 0; s < cells_.size(); ++s) {
    adj[cells_[s].first].push_back(static_cast<int>(s));
    adj[m_ + cells_[s].second].push_back(static_cast<int>(s));
  }
}

template <class T, class Conv>
static void tree_potentials(std::size_t m, std::size_t n, const std::vector<Cell>& cells,
                            const std::vector<std::vector<int>>& adj, Conv cost, std::vector<T>& u,
                            std::vector<T>& v) {
  u.assign(m, T(0));
  v.assign(n, T(0));
  std::vector<char> seen(m + n, 0);
  std::deque<std::size_t> queue{0};
  seen[0] = 1;
  while (!queue.empty()) {
    const std::size_t node = queue.front();
    queue.pop_front();
    for (int s : adj[node]) {
      const auto [i, j] = cells[static_cast<std::size_t>(s)];
      const std::size_t other = node < m ? m + j : i;
      if (seen[other]) continue;
      seen[other] = 1;
      if (node < m)
        v[j] = cost(i, j) - u[i];
      else
        u[i] = cost(i, j) - v[j];
      queue.push_back(other);
    }
  }
}

void TransportSimplex::potentials(std::vector<double>& u, std::vector<double>& v) const {
  std::vector<std::vector<int>> adj;
  build_adjacency(adj);
  tree_potentials<double>(m_, n_, cells_, adj, [&](std::size_t i, std::size_t j) { return cost_(i, j); },
                          u, v);
}

void TransportSimplex::pivot(std::size_t ei, std::size_t ej) {
  std::vector<std::vector<int>> adj;
  build_adjacency(adj);
  // Path in the tree from row node ei to column node m+ej.
  std::vector<int> via(m_ + n_, -2);
  std::deque<std::size_t> queue{ei};
  via[ei] = -1;
  const std::size_t target = m_ + ej;
  while (!queue.empty() && via[target] == -2) {
    const std::size_t node = queue.front();
    queue.pop_front();
    for (int s : adj[node]) {
      const auto [i, j] = cells_[static_cast<std::size_t>(s)];
      const std::size_t other = node < m_ ? m_ + j : i;
      if (via[other] != -2) continue;
      via[other] = s;
      queue.push_back(other);
    }
  }
  // Walk back from the column: edges alternate −, +, −, … (entering cell is +).
  std::vector<int> path;
  for (std::size_t node = target; node != ei;) {
    const int s = via[node];
    path.push_back(s);
    const auto [i, j] = cells_[static_cast<std::size_t>(s)];
    node = node >= m_ ? i : m_ + j;
  }
  double theta = std::numeric_limits<double>::infinity();
  int leave = -1;
  for (std::size_t k = 0; k < path.size(); k += 2) {
    const int s = path[k];
    const double f = flow_[static_cast<std::size_t>(s)];
    const auto key = cells_[static_cast<std::size_t>(s)];
    if (f < theta ||
        (f == theta && key.first * n_ + key.second <
                           cells_[static_cast<std::size_t>(leave)].first * n_ +
                               cells_[static_cast<std::size_t>(leave)].second)) {
      theta = f;
      leave = s;
    }
  }
  for (std::size_t k = 0; k < path.size(); ++k) {
    double& f = flow_[static_cast<std::size_t>(path[k])];
    f = k % 2 == 0 ? f - theta : f + theta;
  }
  // Replace the leaving slot with the entering cell.
  const auto old = cells_[static_cast<std::size_t>(leave)];
  slot_[old.first * n_ + old.second] = -1;
  cells_[static_cast<std::size_t>(leave)] = {ei, ej};
  flow_[static_cast<std::size_t>(leave)] = theta;
  slot_[ei * n_ + ej] = leave;
  ++pivots_;
}

bool TransportSimplex::float_step(double tol) {
  std::vector<double> u, v;
  potentials(u, v);
  for (std::size_t i = 0; i < m_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      if (slot_[i * n_ + j] >= 0) continue;
      if (cost_(i, j) - u[i] - v[j] < -tol) {
        pivot(i, j);
        return true;
      }
    }
  return false;
}

void TransportSimplex::solve(double tol, std::size_t max_pivots) {
  while (pivots_ < max_pivots && float_step(tol)) {
  }
  if (pivots_ >= max_pivots)
    throw Error(ErrorCode::OracleDidNotConverge, "transportation simplex pivot limit reached");
}

bool TransportSimplex::exact_step() {
  std::vector<std::vector<int>> adj;
  build_adjacency(adj);
  std::vector<mpq_class> u, v;
  tree_potentials<mpq_class>(m_, n_, cells_, adj,
                             [&](std::size_t i, std::size_t j) { return mpq_class(cost_(i, j)); },
                             u, v);
  mpq_class r;
  for (std::size_t i = 0; i < m_; ++i)
    for (std::size_t j = 0; j < n_; ++j) {
      if (slot_[i * n_ + j] >= 0) continue;
      r = mpq_class(cost_(i, j)) - u[i] - v[j];
      if (sgn(r) < 0) {
        pivot(i, j);
        return true;
      }
    }
  return false;
}

void TransportSimplex::polish_exact(std::size_t max_pivots) {
  const std::size_t limit = pivots_ + max_pivots;
  while (exact_step())
    if (pivots_ >= limit)
      throw Error(ErrorCode::OracleDidNotConverge, "exact polish pivot limit reached");
}

// Recomputes basic flows by peeling leaves of the tree from the marginals.
Matrix TransportSimplex::plan() const {
  std::vector<std::vector<int>> adj;
  build_adjacency(adj);
  std::vector<double> rest(m_ + n_);
  for (std::size_t i = 0; i < m_; ++i) rest[i] = a_[i];
  for (std::size_t j = 0; j < n_; ++j) rest[m_ + j] = b_[j];
  std::vector<std::size_t> degree(m_ + n_);
  for (std::size_t k = 0; k < m_ + n_; ++k) degree[k] = adj[k].size();
  std::vector<char> used(cells_.size(), 0);
  std::vector<double> flow(cells_.size(), 0.0);
  std::vector<std::size_t> leaves;
  for (std::size_t k = 0; k < m_ + n_; ++k)
    if (degree[k] == 1) leaves.push_back(k);
  while (!leaves.empty()) {
    const std::size_t node = leaves.back();
    leaves.pop_back();
    if (degree[node] != 1) continue;
    int edge = -1;
    for (int s : adj[node])
      if (!used[static_cast<std::size_t>(s)]) edge = s;
    const auto [i, j] = cells_[static_cast<std::size_t>(edge)];
    const std::size_t other = node < m_ ? m_ + j : i;
    const double f = rest[node];
    flow[static_cast<std::size_t>(edge)] = f;
    used[static_cast<std::size_t>(edge)] = 1;
    rest[other] -= f;
    --degree[node];
    if (--degree[other] == 1) leaves.push_back(other);
  }
  Matrix out(m_, n_, 0.0);
  for (std::size_t s = 0; s < cells_.size(); ++s)
    out(cells_[s].first, cells_[s].second) = std::max(0.0, flow[s]);
  return out;
}

}  // namespace detail

EmdSolution emd_exact(const Histogram& p, const Histogram& q, const CostMatrix& gamma) {
  if (gamma.rows() != p.size() || gamma.cols() != q.size())
    throw Error(ErrorCode::ShapeMismatch, "cost matrix does not match the marginals");
  detail::TransportSimplex simplex(gamma.entries(), p.values(), q.values());
  double scale = 0.0;
  for (double c : gamma.entries().data()) scale = std::max(scale, c);
  const std::size_t cells = p.size() * q.size();
  simplex.solve(1e-13 * (1.0 + scale), 50 * cells + 1000);
  simplex.polish_exact(10 * cells + 1000);

  EmdSolution sol;
  sol.plan.entries = simplex.plan();
  sol.basis = simplex.basis();
  sol.pivots = static_cast<int>(simplex.pivots());
  simplex.potentials(sol.u, sol.v);
  const MarginalErrors e = marginal_errors(sol.plan.entries, p, q);
  sol.plan.row_marginal_error = e.rows;
  sol.plan.col_marginal_error = e.cols;
  sol.distance = frobenius_dot(sol.plan.entries, gamma.entries());
  sol.certified = verify_emd_certificate(gamma, sol.plan.entries, sol.basis).ok();
  if (!sol.certified)
    throw Error(ErrorCode::OracleDidNotConverge, "EMD optimality certificate failed");
  return sol;
}

CertificateCheck verify_emd_certificate(const CostMatrix& gamma, const Matrix& plan,
                                        const std::vector<Cell>& basis) {
  CertificateCheck c;
  const std::size_t m = gamma.rows(), n = gamma.cols();
  if (plan.rows() != m || plan.cols() != n)
    throw Error(ErrorCode::ShapeMismatch, "plan does not match the cost matrix");

  // Spanning tree: m + n − 1 distinct in-range cells without a cycle.
  std::vector<std::size_t> parent(m + n);
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::vector<char> in_basis(m * n, 0);
  bool tree = basis.size() + 1 == m + n;
  for (const auto& [i, j] : basis) {
    if (i >= m || j >= n || in_basis[i * n + j]) {
      tree = false;
      break;
    }
    in_basis[i * n + j] = 1;
    const std::size_t a = find(i), b = find(m + j);
    if (a == b) {
      tree = false;
      break;
    }
    parent[a] = b;
  }
  c.basis_is_spanning_tree = tree;

  c.plan_nonnegative = true;
  c.support_in_basis = true;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const double x = plan(i, j);
      if (!(x >= 0.0)) c.plan_nonnegative = false;
      if (x > 0.0 && !in_basis[i * n + j]) c.support_in_basis = false;
    }
  if (!tree) return c;

  std::vector<std::vector<int>> adj(m + n);
  for (std::size_t s = 0; s < basis.size(); ++s) {
    adj[basis[s].first].push_back(static_cast<int>(s));
    adj[m + basis[s].second].push_back(static_cast<int>(s));
  }
  std::vector<mpq_class> u, v;
  detail::tree_potentials<mpq_class>(
      m, n, basis, adj, [&](std::size_t i, std::size_t j) { return mpq_class(gamma(i, j)); }, u, v);
  c.dual_feasible = true;
  mpq_class r;
  for (std::size_t i = 0; i < m && c.dual_feasible; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      r = mpq_class(gamma(i, j)) - u[i] - v[j];
      if (sgn(r) < 0 || (in_basis[i * n + j] && sgn(r) != 0)) {
        c.dual_feasible = false;
        break;
      }
    }
  return c;
}

}  // namespace rot
