#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace rot {

enum class ErrorCode {
  EmptyInput,
  NegativeEntry,
  NotNormalized,
  ShapeMismatch,
  DomainViolation,
  ParamOutOfRange,
  MissingParam,
  InvalidOption,
  AuxDidNotConverge,
  DomainEscape,
  WrongClass,
  NumericalUnderflow,
  BracketTooNarrow,
  AlphaAboveAlphaPrime,
  AllMassRemoved,
  OracleDidNotConverge,
  Io,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what);
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  Matrix transposed() const;
  void fill(double value);

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Neumaier-compensated accumulator.
class CompensatedSum {
 public:
  void add(double x) noexcept;
  double value() const noexcept { return sum_ + correction_; }

 private:
  double sum_ = 0.0;
  double correction_ = 0.0;
};

double compensated_sum(std::span<const double> values) noexcept;
double frobenius_dot(const Matrix& a, const Matrix& b);
double max_abs_diff(const Matrix& a, const Matrix& b);
std::vector<double> row_sums(const Matrix& m);
std::vector<double> col_sums(const Matrix& m);

/// Probability vector on the simplex. Only obtainable through validation.
class Histogram {
 public:
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

 private:
  explicit Histogram(std::vector<double> values) : values_(std::move(values)) {}
  friend Histogram validate_histogram(std::vector<double> raw);

  std::vector<double> values_;
};

inline constexpr double kNormalizationTolerance = 1e-9;

/// Rejects empty, negative or unnormalized input; never rescales.
Histogram validate_histogram(std::vector<double> raw);

/// Explicit rescaling to unit mass, then validation.
Histogram normalize(std::vector<double> raw);

/// Non-negative finite ground cost.
class CostMatrix {
 public:
  explicit CostMatrix(Matrix entries);

  const Matrix& entries() const noexcept { return entries_; }
  std::size_t rows() const noexcept { return entries_.rows(); }
  std::size_t cols() const noexcept { return entries_.cols(); }
  double operator()(std::size_t i, std::size_t j) const { return entries_(i, j); }
  CostMatrix transposed() const { return CostMatrix(entries_.transposed()); }
  double median() const;

 private:
  Matrix entries_;
};

struct TransportPlan {
  Matrix entries;
  double row_marginal_error = 0.0;
  double col_marginal_error = 0.0;
};

enum class Termination { MarginalLinf, PlanVariation, DistanceVariation };

enum class ExecPolicy { Serial, Parallel };

struct SolverOptions {
  double lambda = 1.0;
  // Use -γ/λ = 0 (λ = +∞); ℓp quasi-norms substitute λ = 1e10.
  bool lambda_infinite = false;
  double main_tol = 1e-8;
  std::optional<double> aux_tol;  // defaults to main_tol²
  int max_main_iters = 10000;
  int max_aux_iters = 50;
  Termination termination = Termination::MarginalLinf;
  int check_every = 1;
  bool symmetrize = false;
  ExecPolicy exec = ExecPolicy::Serial;
  // Skip the closed-form fast paths (Sinkhorn, Euclidean) and run the
  // Newton-based separable loops instead.
  bool force_generic = false;

  double effective_aux_tol() const { return aux_tol ? *aux_tol : main_tol * main_tol; }
  void validate() const;
};

struct SolverReport {
  int main_iterations = 0;
  double final_marginal_error = 0.0;
  double distance = 0.0;
  double lambda_used = 0.0;
  bool converged = false;
};

struct MarginalErrors {
  double rows = 0.0;
  double cols = 0.0;
  double max() const { return rows > cols ? rows : cols; }
};

MarginalErrors marginal_errors(const Matrix& plan, const Histogram& p, const Histogram& q);

/// max(‖plan·1 − p‖∞, ‖planᵀ·1 − q‖∞)
double marginal_error(const Matrix& plan, const Histogram& p, const Histogram& q);
double marginal_error(const TransportPlan& plan, const Histogram& p, const Histogram& q);

/// p·qᵀ
Matrix outer_product(const Histogram& p, const Histogram& q);

/// Warnings go to std::clog unless a handler is installed (pass {} to restore).
void set_warning_handler(std::function<void(const std::string&)> handler);
void warn(const std::string& message);

}  // namespace rot
