#include "vtpm/params.hpp"

#include <cmath>

#include "vtpm/errors.hpp"

namespace vtpm {
namespace {

void check_flow_index(const Rational& r) {
  if (r <= Rational(1)) throw ParameterError("flow index r must exceed 1, got " + r.to_string());
  if (r == Rational(2)) throw ParameterError("flow index r = 2 is excluded");
}

}  // namespace

std::string to_string(Regime regime) {
  switch (regime) {
    case Regime::htpm: return "HTPM";
    case Regime::ptpm: return "PTPM";
    case Regime::vtpm: return "VTPM";
  }
  return "?";
}

std::string to_string(LimitModelKind kind) {
  switch (kind) {
    case LimitModelKind::newtonian_zero_shear: return "NEWTONIAN(eta0)";
    case LimitModelKind::newtonian_infinite_shear: return "NEWTONIAN(eta_inf)";
    case LimitModelKind::carreau: return "CARREAU";
    case LimitModelKind::power_law: return "POWER_LAW";
  }
  return "?";
}

void FluidParams::validate() const {
  if (!(std::isfinite(eta0) && std::isfinite(eta_inf) && std::isfinite(lambda))) {
    throw ParameterError("fluid parameters must be finite");
  }
  if (!(eta_inf > 0.0)) throw ParameterError("eta_inf must be positive");
  if (!(eta0 > eta_inf)) throw ParameterError("eta0 must exceed eta_inf");
  if (!(lambda > 0.0)) throw ParameterError("lambda must be positive");
  check_flow_index(r);
}

Regime classify_regime(const Rational& ell) {
  if (ell <= Rational(0)) throw ParameterError("ell must be positive, got " + ell.to_string());
  if (ell < Rational(1)) return Regime::vtpm;
  if (ell == Rational(1)) return Regime::ptpm;
  return Regime::htpm;
}

LimitModelKind limit_model_kind(const Rational& r, const Rational& gamma) {
  check_flow_index(r);
  if (gamma < Rational(1)) return LimitModelKind::newtonian_zero_shear;
  if (gamma == Rational(1)) return LimitModelKind::carreau;
  return r < Rational(2) ? LimitModelKind::newtonian_infinite_shear : LimitModelKind::power_law;
}

double newtonian_viscosity(LimitModelKind kind, const FluidParams& params) {
  switch (kind) {
    case LimitModelKind::newtonian_zero_shear: return params.eta0;
    case LimitModelKind::newtonian_infinite_shear: return params.eta_inf;
    default: throw ParameterError("limit model " + to_string(kind) + " is not Newtonian");
  }
}

ScalingTable scaling_table(const Rational& r, const Rational& gamma) {
  check_flow_index(r);
  const Rational one(1);
  ScalingTable t;
  t.l2_physical = {Rational(5, 2) - gamma, Rational(3, 2) - gamma, Rational(3, 2) - gamma};
  t.l2_rescaled = {Rational(2) - gamma, one - gamma, one - gamma};
  t.normalization = gamma - Rational(2);
  if (r < Rational(2)) return t;

  // L^r bounds: the physical-domain exponents carry an extra 1/r from the
  // film thickness compared with the rescaled ones.
  Rational shift;
  if (gamma < one) {
    shift = -(Rational(2) / r) * (gamma - one);
  } else if (gamma > one) {
    shift = -(gamma - one) / (r - one);
    t.normalization = (gamma - r) / (r - one);
  } else {
    shift = Rational(0);
    t.normalization = Rational(-1);
  }
  t.lr_physical = NormExponents{shift + (r + one) / r, shift + one / r, shift + one / r};
  t.lr_rescaled = NormExponents{shift + one, shift, shift};
  return t;
}

}  // namespace vtpm
