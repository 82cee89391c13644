#include "rot/core.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <mutex>
#include <sstream>

namespace rot {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::NegativeEntry: return "NegativeEntry";
    case ErrorCode::NotNormalized: return "NotNormalized";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::DomainViolation: return "DomainViolation";
    case ErrorCode::ParamOutOfRange: return "ParamOutOfRange";
    case ErrorCode::MissingParam: return "MissingParam";
    case ErrorCode::InvalidOption: return "InvalidOption";
    case ErrorCode::AuxDidNotConverge: return "AuxDidNotConverge";
    case ErrorCode::DomainEscape: return "DomainEscape";
    case ErrorCode::WrongClass: return "WrongClass";
    case ErrorCode::NumericalUnderflow: return "NumericalUnderflow";
    case ErrorCode::BracketTooNarrow: return "BracketTooNarrow";
    case ErrorCode::AlphaAboveAlphaPrime: return "AlphaAboveAlphaPrime";
    case ErrorCode::AllMassRemoved: return "AllMassRemoved";
    case ErrorCode::OracleDidNotConverge: return "OracleDidNotConverge";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorCode code, const std::string& what)
    : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols)
    throw Error(ErrorCode::ShapeMismatch, "matrix data length does not match shape");
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw Error(ErrorCode::ShapeMismatch, "ragged matrix literal");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

void Matrix::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void CompensatedSum::add(double x) noexcept {
  const double t = sum_ + x;
  if (std::fabs(sum_) >= std::fabs(x))
    correction_ += (sum_ - t) + x;
  else
    correction_ += (x - t) + sum_;
  sum_ = t;
}

double compensated_sum(std::span<const double> values) noexcept {
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value();
}

static void require_same_shape(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(ErrorCode::ShapeMismatch, "matrix shapes differ");
}

double frobenius_dot(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b);
  CompensatedSum s;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t k = 0; k < x.size(); ++k) s.add(x[k] * y[k]);
  return s.value();
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b);
  double m = 0.0;
  const auto x = a.data();
  const auto y = b.data();
  for (std::size_t k = 0; k < x.size(); ++k) m = std::max(m, std::fabs(x[k] - y[k]));
  return m;
}

std::vector<double> row_sums(const Matrix& m) {
  std::vector<double> out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i] = compensated_sum(m.row(i));
  return out;
}

std::vector<double> col_sums(const Matrix& m) {
  std::vector<CompensatedSum> acc(m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) acc[j].add(m(i, j));
  std::vector<double> out(m.cols());
  for (std::size_t j = 0; j < m.cols(); ++j) out[j] = acc[j].value();
  return out;
}

Histogram validate_histogram(std::vector<double> raw) {
  if (raw.empty()) throw Error(ErrorCode::EmptyInput, "histogram has no entries");
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (!std::isfinite(raw[i]) || raw[i] < 0.0) {
      std::ostringstream os;
      os << "entry " << i << " = " << raw[i] << " is not a finite non-negative value";
      throw Error(ErrorCode::NegativeEntry, os.str());
    }
  }
  const double total = compensated_sum(raw);
  if (std::fabs(total - 1.0) > kNormalizationTolerance) {
    std::ostringstream os;
    os.precision(17);
    os << "entries sum to " << total;
    throw Error(ErrorCode::NotNormalized, os.str());
  }
  for (double v : raw)
    if (v > 1.0) throw Error(ErrorCode::NotNormalized, "entry exceeds 1");
  return Histogram(std::move(raw));
}

Histogram normalize(std::vector<double> raw) {
  if (raw.empty()) throw Error(ErrorCode::EmptyInput, "histogram has no entries");
  for (double v : raw)
    if (!std::isfinite(v) || v < 0.0)
      throw Error(ErrorCode::NegativeEntry, "cannot normalize negative or non-finite entries");
  const double total = compensated_sum(raw);
  if (!(total > 0.0)) throw Error(ErrorCode::EmptyInput, "histogram has zero mass");
  for (double& v : raw) v /= total;
  return validate_histogram(std::move(raw));
}

CostMatrix::CostMatrix(Matrix entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorCode::EmptyInput, "cost matrix is empty");
  for (double v : entries_.data()) {
    if (!std::isfinite(v)) throw Error(ErrorCode::DomainViolation, "cost entry is not finite");
    if (v < 0.0) throw Error(ErrorCode::NegativeEntry, "cost entry is negative");
  }
}

double CostMatrix::median() const {
  std::vector<double> v(entries_.data().begin(), entries_.data().end());
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    const double lower =
        *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
    m = 0.5 * (m + lower);
  }
  return m;
}

void SolverOptions::validate() const {
  if (!lambda_infinite && !(lambda > 0.0 && std::isfinite(lambda)))
    throw Error(ErrorCode::InvalidOption, "lambda must be positive and finite");
  if (!(main_tol > 0.0)) throw Error(ErrorCode::InvalidOption, "main_tol must be positive");
  const double aux = effective_aux_tol();
  if (!(aux > 0.0) || aux > main_tol)
    throw Error(ErrorCode::InvalidOption, "aux_tol must be positive and at most main_tol");
  if (max_main_iters < 1 || max_aux_iters < 1 || check_every < 1)
    throw Error(ErrorCode::InvalidOption, "iteration counts must be at least 1");
}

MarginalErrors marginal_errors(const Matrix& plan, const Histogram& p, const Histogram& q) {
  if (plan.rows() != p.size() || plan.cols() != q.size())
    throw Error(ErrorCode::ShapeMismatch, "plan shape does not match marginals");
  MarginalErrors e;
  const auto r = row_sums(plan);
  const auto c = col_sums(plan);
  for (std::size_t i = 0; i < r.size(); ++i) e.rows = std::max(e.rows, std::fabs(r[i] - p[i]));
  for (std::size_t j = 0; j < c.size(); ++j) e.cols = std::max(e.cols, std::fabs(c[j] - q[j]));
  return e;
}

double marginal_error(const Matrix& plan, const Histogram& p, const Histogram& q) {
  return marginal_errors(plan, p, q).max();
}

double marginal_error(const TransportPlan& plan, const Histogram& p, const Histogram& q) {
  return marginal_error(plan.entries, p, q);
}

Matrix outer_product(const Histogram& p, const Histogram& q) {
  Matrix m(p.size(), q.size());
  for (std::size_t i = 0; i < p.size(); ++i)
    for (std::size_t j = 0; j < q.size(); ++j) m(i, j) = p[i] * q[j];
  return m;
}

namespace {
std::mutex warning_mutex;
std::function<void(const std::string&)> warning_handler;
}  // namespace

void set_warning_handler(std::function<void(const std::string&)> handler) {
  std::lock_guard lock(warning_mutex);
  warning_handler = std::move(handler);
}

void warn(const std::string& message) {
  std::lock_guard lock(warning_mutex);
  if (warning_handler)
    warning_handler(message);
  else
    std::clog << "warning: " << message << '\n';
}

}  // namespace rot
