#pragma once

#include "vtpm/params.hpp"
#include "vtpm/quadrature.hpp"

namespace vtpm {

/// Carreau viscosity (eta0 - eta_inf)(1 + lambda s^2)^(r/2 - 1) + eta_inf as a
/// function of the symmetrized-gradient norm s >= 0.
double carreau_viscosity(double s, const FluidParams& params);

/// Viscosity of the reduced one-dimensional problem as a function of the shear
/// rate y = |d_z3 w|: carreau_viscosity(y / sqrt(2)).
double reduced_viscosity_1d(double y, const FluidParams& params);

/// Stress magnitude carried by shear rate y in the reduced problem: eta(y) * y.
/// Strictly increasing in y for both r < 2 and r > 2.
double reduced_stress(double y, const FluidParams& params);

/// Stress magnitude expressed through the viscosity zeta on the admissible
/// branch (zeta in (eta_inf, eta0] for r < 2, zeta >= eta0 for r > 2):
/// zeta * sqrt((2 / lambda) * (((zeta - eta_inf) / (eta0 - eta_inf))^(2/(r-2)) - 1)).
/// Ill-conditioned near zeta = eta0; prefer reduced_stress for round trips.
double stress_from_viscosity(double zeta, const FluidParams& params);

/// Shear rate, viscosity and stress of the unique reduced state with the
/// requested stress magnitude.
struct ShearState {
  double rate = 0.0;
  double viscosity = 0.0;
  double stress = 0.0;
};

/// Solves reduced_stress(y) = tau for y by safeguarded Newton inside the
/// global bracket [0, tau / eta_inf]. Throws NumericalError (carrying the last
/// bracket) if the 200-iteration cap is reached.
ShearState invert_stress(double tau, const FluidParams& params);

/// Effective viscosity psi(tau): the inverse of the stress-viscosity relation.
double psi(double tau, const FluidParams& params);

/// Complementary energy G(tau) = int_0^tau t / psi(t) dt in closed form.
double complementary_energy(double tau, const FluidParams& params);

/// Carreau mobility M(s) = 2 int_{-1/2}^{1/2} xi^2 / psi(2 s |xi|) dxi.
/// M(0) = 1 / (6 eta0).
double mobility(double s, const FluidParams& params, const MobilityQuadrature& quad = {});

/// Mobility together with the flux potential Phi(s) = int_0^s t M(t) dt,
/// computed from the same viscosity evaluations.
struct MobilityValue {
  double mobility = 0.0;
  double potential = 0.0;
};

MobilityValue mobility_and_potential(double s, const FluidParams& params, const MobilityQuadrature& quad = {});

/// Positive constant c_r such that the mean of the reduced power-law profile
/// driven by g is -c_r |g|^(r'-2) g. Requires r > 2.
double powerlaw_prefactor(const FluidParams& params);

}  // namespace vtpm
