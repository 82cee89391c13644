#include "rot/regularizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace rot {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(RegKind kind) {
  switch (kind) {
    case RegKind::BSKL: return "bskl";
    case RegKind::BIS: return "bis";
    case RegKind::FDLOG: return "fdlog";
    case RegKind::BETA: return "beta";
    case RegKind::LPQN: return "lpqn";
    case RegKind::LPN: return "lpn";
    case RegKind::EUC: return "euc";
    case RegKind::HELL: return "hell";
    case RegKind::WEUC: return "weuc";
  }
  return "?";
}

RegKind parse_reg_kind(std::string_view name) {
  for (RegKind k : {RegKind::BSKL, RegKind::BIS, RegKind::FDLOG, RegKind::BETA, RegKind::LPQN,
                    RegKind::LPN, RegKind::EUC, RegKind::HELL, RegKind::WEUC})
    if (to_string(k) == name) return k;
  throw Error(ErrorCode::InvalidOption, "unknown regularizer '" + std::string(name) + "'");
}

Regularizer make_regularizer(RegKind kind, const RegParams& params) {
  Regularizer r;
  r.kind_ = kind;
  switch (kind) {
    case RegKind::BETA:
      if (!params.beta) throw Error(ErrorCode::MissingParam, "beta regularizer needs beta");
      if (!(*params.beta > 0.0 && *params.beta < 1.0))
        throw Error(ErrorCode::ParamOutOfRange,
                    "beta must lie strictly inside (0,1); use bis or bskl for the limits");
      r.beta_ = *params.beta;
      break;
    case RegKind::LPQN:
      if (!params.power) throw Error(ErrorCode::MissingParam, "lpqn regularizer needs p");
      if (!(*params.power > 0.0 && *params.power < 1.0))
        throw Error(ErrorCode::ParamOutOfRange, "lpqn power must lie in (0,1)");
      r.power_ = *params.power;
      break;
    case RegKind::LPN:
      if (!params.power) throw Error(ErrorCode::MissingParam, "lpn regularizer needs p");
      if (!(*params.power > 1.0 && std::isfinite(*params.power)))
        throw Error(ErrorCode::ParamOutOfRange, "lpn power must lie in (1,inf)");
      r.power_ = *params.power;
      break;
    case RegKind::WEUC:
      if (!params.weights) throw Error(ErrorCode::MissingParam, "weuc regularizer needs weights");
      if (params.weights->empty()) throw Error(ErrorCode::EmptyInput, "weight matrix is empty");
      for (double w : params.weights->data())
        if (!(w > 0.0 && std::isfinite(w)))
          throw Error(ErrorCode::ParamOutOfRange, "weights must be positive and finite");
      r.weights_ = std::make_shared<const Matrix>(*params.weights);
      break;
    default:
      break;
  }
  r.fill_metadata();
  return r;
}

void Regularizer::fill_metadata() {
  switch (kind_) {
    case RegKind::BSKL:
    case RegKind::BIS:
    case RegKind::FDLOG:
    case RegKind::BETA:
    case RegKind::LPQN:
      class_ = AssumptionClass::A;
      phi_prime_zero_ = -kInf;
      break;
    default:
      class_ = AssumptionClass::B;
      phi_prime_zero_ = 0.0;
  }
  switch (kind_) {
    case RegKind::BSKL:
    case RegKind::EUC:
    case RegKind::WEUC:
      strategy_ = NewtonStrategy::ClosedForm;
      break;
    case RegKind::BIS:
    case RegKind::BETA:
    case RegKind::LPQN:
      strategy_ = NewtonStrategy::GlobalNewton;
      break;
    case RegKind::LPN:
      strategy_ = power_ == 2.0 ? NewtonStrategy::ClosedForm : NewtonStrategy::SplitConvexConcave;
      break;
    default:
      strategy_ = NewtonStrategy::SplitConvexConcave;
  }

  primal_lo_closed_ = primal_hi_closed_ = true;
  dual_hi_ = kInf;
  switch (kind_) {
    case RegKind::BSKL:
    case RegKind::BETA:
      primal_lo_ = 0.0;
      primal_hi_ = kInf;
      primal_hi_closed_ = false;
      if (kind_ == RegKind::BETA) dual_hi_ = 1.0 / (1.0 - beta_);
      break;
    case RegKind::BIS:
      primal_lo_ = 0.0;
      primal_hi_ = kInf;
      primal_lo_closed_ = primal_hi_closed_ = false;
      dual_hi_ = 1.0;
      break;
    case RegKind::LPQN:
      primal_lo_ = 0.0;
      primal_hi_ = kInf;
      primal_hi_closed_ = false;
      dual_hi_ = 0.0;
      break;
    case RegKind::FDLOG:
      primal_lo_ = 0.0;
      primal_hi_ = 1.0;
      break;
    case RegKind::HELL:
      primal_lo_ = -1.0;
      primal_hi_ = 1.0;
      break;
    default:
      primal_lo_ = -kInf;
      primal_hi_ = kInf;
      primal_lo_closed_ = primal_hi_closed_ = false;
  }

  // ψ′ must be strictly increasing; sample a grid inside the dual domain.
  const double hi = std::isfinite(dual_hi_) ? dual_hi_ : 20.0;
  const double lo = std::min(-20.0, hi - 40.0);
  const std::size_t probe = weights_ ? weights_->size() - 1 : 0;
  double prev = -kInf;
  for (int s = 0; s <= 64; ++s) {
    double t = lo + (hi - lo) * s / 64.0;
    if (s == 64) t = std::isfinite(dual_hi_) ? hi - 1e-3 * (hi - lo) : hi;
    const double v = eval(Fn::PsiPrime, t, probe);
    if (!(v > prev)) throw Error(ErrorCode::ParamOutOfRange, "psi' is not increasing on its domain");
    prev = v;
  }
}

bool Regularizer::routes_to_euclidean() const noexcept {
  return kind_ == RegKind::LPN && power_ == 2.0;
}

std::string Regularizer::describe() const {
  std::string s(to_string(kind_));
  if (kind_ == RegKind::BETA) s += "(beta=" + fmt(beta_) + ")";
  if (kind_ == RegKind::LPQN || kind_ == RegKind::LPN) s += "(p=" + fmt(power_) + ")";
  return s;
}

bool Regularizer::in_primal_domain(double x) const noexcept {
  if (std::isnan(x)) return false;
  const bool lo_ok = primal_lo_closed_ ? x >= primal_lo_ : x > primal_lo_;
  const bool hi_ok = primal_hi_closed_ ? x <= primal_hi_ : x < primal_hi_;
  return lo_ok && hi_ok;
}

bool Regularizer::in_primal_interior(double x) const noexcept {
  return !std::isnan(x) && x > primal_lo_ && x < primal_hi_;
}

bool Regularizer::in_dual_domain(double t) const noexcept {
  return !std::isnan(t) && t < dual_hi_ && t > -kInf;
}

double Regularizer::eval(Fn fn, double x, std::size_t flat_index) const {
  if (weights_ && flat_index >= weights_->size())
    throw Error(ErrorCode::ShapeMismatch, "flat index outside the weight matrix");
  const bool primal = fn == Fn::Phi || fn == Fn::PhiPrime;
  if (primal ? !in_primal_domain(x) : !in_dual_domain(x))
    throw Error(ErrorCode::DomainViolation,
                describe() + ": argument " + fmt(x) + " outside the domain of " +
                    (primal ? "phi" : "psi"));
  return visit([&](const auto& f) {
    switch (fn) {
      case Fn::Phi: return f.phi(x, flat_index);
      case Fn::PhiPrime: return f.phi1(x, flat_index);
      default: break;
    }
    double d1, d2;
    f.psi12(x, flat_index, d1, d2);
    return fn == Fn::PsiPrime ? d1 : d2;
  });
}

double Regularizer::divergence(double x, double y, std::size_t k) const {
  if (!in_primal_domain(x))
    throw Error(ErrorCode::DomainViolation, describe() + ": " + fmt(x) + " outside dom phi");
  if (!in_primal_interior(y))
    throw Error(ErrorCode::DomainViolation,
                describe() + ": " + fmt(y) + " outside the interior of dom phi");
  double b;
  switch (kind_) {
    case RegKind::BSKL:
      b = (x == 0.0 ? 0.0 : x * std::log(x / y)) - x + y;
      break;
    case RegKind::BIS:
      b = x / y - std::log(x / y) - 1.0;
      break;
    case RegKind::FDLOG:
      b = (x == 0.0 ? 0.0 : x * std::log(x / y)) +
          (x == 1.0 ? 0.0 : (1.0 - x) * std::log((1.0 - x) / (1.0 - y)));
      break;
    case RegKind::EUC:
      b = 0.5 * (x - y) * (x - y);
      break;
    case RegKind::WEUC:
      b = 0.5 * (*weights_).data()[k] * (x - y) * (x - y);
      break;
    default:
      b = visit([&](const auto& f) { return f.phi(x, k) - f.phi(y, k) - (x - y) * f.phi1(y, k); });
  }
  return std::max(0.0, b);
}

Regularizer Regularizer::restricted(const std::vector<std::size_t>& rows,
                                    const std::vector<std::size_t>& cols) const {
  Regularizer r = *this;
  if (weights_) {
    Matrix w(rows.size(), cols.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < cols.size(); ++j) w(i, j) = (*weights_)(rows[i], cols[j]);
    r.weights_ = std::make_shared<const Matrix>(std::move(w));
  }
  return r;
}

Regularizer Regularizer::transposed() const {
  Regularizer r = *this;
  if (weights_) r.weights_ = std::make_shared<const Matrix>(weights_->transposed());
  return r;
}

static void require_weight_shape(const Regularizer& reg, const Matrix& m) {
  const Matrix* w = reg.weights();
  if (w && (w->rows() != m.rows() || w->cols() != m.cols()))
    throw Error(ErrorCode::ShapeMismatch, "weight matrix shape does not match the plan");
}

double bregman_divergence(const Regularizer& reg, const Matrix& pi, const Matrix& xi) {
  if (pi.rows() != xi.rows() || pi.cols() != xi.cols())
    throw Error(ErrorCode::ShapeMismatch, "divergence arguments differ in shape");
  require_weight_shape(reg, pi);
  CompensatedSum s;
  for (std::size_t k = 0; k < pi.size(); ++k) s.add(reg.divergence(pi.data()[k], xi.data()[k], k));
  return s.value();
}

double bregman_information(const Regularizer& reg, const Matrix& pi) {
  require_weight_shape(reg, pi);
  CompensatedSum s;
  for (std::size_t k = 0; k < pi.size(); ++k) s.add(reg.eval(Fn::Phi, pi.data()[k], k));
  return s.value();
}

}  // namespace rot
