#pragma once

#include <optional>
#include <string>

#include "vtpm/rational.hpp"

namespace vtpm {

/// Thin porous medium regimes, determined by the exponent ell of the
/// obstacle size eps^ell relative to the film thickness eps.
enum class Regime { htpm, ptpm, vtpm };

/// Which effective law the limit model reduces to.
enum class LimitModelKind {
  newtonian_zero_shear,      ///< linear law with viscosity eta0
  newtonian_infinite_shear,  ///< linear law with viscosity eta_inf
  carreau,                   ///< nonlinear Carreau flux map
  power_law,                 ///< nonlinear power-law flux map
};

std::string to_string(Regime regime);
std::string to_string(LimitModelKind kind);

/// Carreau constitutive constants plus the viscosity scaling exponent gamma.
struct FluidParams {
  double eta0 = 1.0;
  double eta_inf = 0.5;
  double lambda = 1.0;
  Rational r{3, 2};
  Rational gamma{1};

  /// Throws ParameterError naming the violated invariant.
  void validate() const;

  double flow_index() const noexcept { return r.to_double(); }
  /// r' = r / (r - 1).
  Rational conjugate_exponent() const { return r / (r - Rational(1)); }
  double conjugate() const { return conjugate_exponent().to_double(); }
};

Regime classify_regime(const Rational& ell);

LimitModelKind limit_model_kind(const Rational& r, const Rational& gamma);

/// Viscosity of a Newtonian limit model; throws for the nonlinear kinds.
double newtonian_viscosity(LimitModelKind kind, const FluidParams& params);

/// Exponents of eps in the bounds on ||u||, ||D u|| and ||sym D u||.
struct NormExponents {
  Rational velocity;
  Rational gradient;
  Rational sym_gradient;
  friend bool operator==(const NormExponents&, const NormExponents&) = default;
};

/// A priori estimate exponents and the velocity normalization exponent k
/// such that eps^k * u_eps converges.
struct ScalingTable {
  NormExponents l2_physical;
  NormExponents l2_rescaled;
  std::optional<NormExponents> lr_physical;  ///< present for r > 2 only
  std::optional<NormExponents> lr_rescaled;
  Rational normalization;
  friend bool operator==(const ScalingTable&, const ScalingTable&) = default;
};

ScalingTable scaling_table(const Rational& r, const Rational& gamma);

}  // namespace vtpm
