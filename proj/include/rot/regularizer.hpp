#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rot/core.hpp"
#include "rot/families.hpp"

namespace rot {

enum class RegKind { BSKL, BIS, FDLOG, BETA, LPQN, LPN, EUC, HELL, WEUC };
enum class AssumptionClass { A, B };
enum class NewtonStrategy { ClosedForm, GlobalNewton, SplitConvexConcave };
enum class Fn { Phi, PhiPrime, PsiPrime, PsiPrime2 };

std::string_view to_string(RegKind kind);
RegKind parse_reg_kind(std::string_view name);

struct RegParams {
  std::optional<double> beta = std::nullopt;
  std::optional<double> power = std::nullopt;
  std::optional<Matrix> weights = std::nullopt;
};

class Regularizer {
 public:
  RegKind kind() const noexcept { return kind_; }
  double beta() const noexcept { return beta_; }
  double power() const noexcept { return power_; }
  const Matrix* weights() const noexcept { return weights_.get(); }

  AssumptionClass assumption_class() const noexcept { return class_; }
  NewtonStrategy newton_strategy() const noexcept { return strategy_; }
  double primal_domain_lo() const noexcept { return primal_lo_; }
  double primal_domain_hi() const noexcept { return primal_hi_; }
  // Whether the primal endpoints themselves belong to dom φ.
  bool primal_lo_closed() const noexcept { return primal_lo_closed_; }
  bool primal_hi_closed() const noexcept { return primal_hi_closed_; }
  double dual_domain_hi() const noexcept { return dual_hi_; }
  double phi_prime_at_zero() const noexcept { return phi_prime_zero_; }

  // ℓp norm with p = 2: solved as half the squared Euclidean norm at 2λ.
  bool routes_to_euclidean() const noexcept;
  std::string describe() const;

  /// Checked evaluation; throws DomainViolation outside the relevant domain.
  double eval(Fn fn, double x, std::size_t flat_index = 0) const;

  bool in_primal_domain(double x) const noexcept;
  bool in_primal_interior(double x) const noexcept;
  bool in_dual_domain(double t) const noexcept;

  /// Element-wise Bregman divergence B_φ(x‖y), clamped at zero.
  double divergence(double x, double y, std::size_t flat_index = 0) const;

  /// Same family restricted to a sub-grid of entries (weights follow the maps).
  Regularizer restricted(const std::vector<std::size_t>& rows,
                         const std::vector<std::size_t>& cols) const;
  Regularizer transposed() const;

  /// Invokes f with the family kernel struct for this regularizer.
  template <class F>
  decltype(auto) visit(F&& f) const {
    switch (kind_) {
      case RegKind::BSKL: return f(family::Bskl{});
      case RegKind::BIS: return f(family::Bis{});
      case RegKind::FDLOG: return f(family::Fdlog{});
      case RegKind::BETA: return f(family::Beta{beta_});
      case RegKind::LPQN: return f(family::Lpqn{power_});
      case RegKind::LPN: return f(family::Lpn{power_});
      case RegKind::EUC: return f(family::Euc{});
      case RegKind::HELL: return f(family::Hell{});
      case RegKind::WEUC: break;
    }
    return f(family::Weuc{weights_->data().data()});
  }

 private:
  friend Regularizer make_regularizer(RegKind kind, const RegParams& params);
  Regularizer() = default;
  void fill_metadata();

  RegKind kind_ = RegKind::BSKL;
  double beta_ = 0.0;
  double power_ = 0.0;
  std::shared_ptr<const Matrix> weights_;
  AssumptionClass class_ = AssumptionClass::A;
  NewtonStrategy strategy_ = NewtonStrategy::ClosedForm;
  double primal_lo_ = 0.0;
  double primal_hi_ = 0.0;
  bool primal_lo_closed_ = true;
  bool primal_hi_closed_ = true;
  double dual_hi_ = 0.0;
  double phi_prime_zero_ = 0.0;
};

Regularizer make_regularizer(RegKind kind, const RegParams& params = {});

/// Σᵢⱼ B_φ(πᵢⱼ‖ξᵢⱼ)
double bregman_divergence(const Regularizer& reg, const Matrix& pi, const Matrix& xi);

/// Σᵢⱼ φ(πᵢⱼ)
double bregman_information(const Regularizer& reg, const Matrix& pi);

}  // namespace rot
