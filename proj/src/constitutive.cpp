#include "vtpm/constitutive.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "vtpm/errors.hpp"

namespace vtpm {
namespace {

void require_nonnegative(double v, const char* name) {
  if (!(v >= 0.0)) throw ParameterError(std::string(name) + " must be non-negative");
}

/// eta(y) and d eta / dy of the reduced viscosity.
struct ReducedViscosity {
  double value;
  double slope;
};

ReducedViscosity reduced_viscosity_with_slope(double y, const FluidParams& p) {
  const double a = 0.5 * p.lambda;
  const double k = 0.5 * p.flow_index() - 1.0;
  const double base = 1.0 + a * y * y;
  const double powk = std::pow(base, k);
  const double span = p.eta0 - p.eta_inf;
  return {span * powk + p.eta_inf, span * k * powk / base * 2.0 * a * y};
}

}  // namespace

double carreau_viscosity(double s, const FluidParams& params) {
  require_nonnegative(s, "symmetrized-gradient norm");
  const double k = 0.5 * params.flow_index() - 1.0;
  return (params.eta0 - params.eta_inf) * std::pow(1.0 + params.lambda * s * s, k) + params.eta_inf;
}

double reduced_viscosity_1d(double y, const FluidParams& params) {
  require_nonnegative(y, "shear rate");
  return reduced_viscosity_with_slope(y, params).value;
}

double reduced_stress(double y, const FluidParams& params) {
  return reduced_viscosity_1d(y, params) * y;
}

double stress_from_viscosity(double zeta, const FluidParams& params) {
  const double ratio = (zeta - params.eta_inf) / (params.eta0 - params.eta_inf);
  if (!(ratio > 0.0)) throw ParameterError("viscosity must exceed eta_inf");
  const double exponent = 2.0 / (params.flow_index() - 2.0);
  const double bracket = std::expm1(exponent * std::log(ratio));
  if (bracket < 0.0) throw ParameterError("viscosity lies outside the admissible branch");
  return zeta * std::sqrt(2.0 / params.lambda * bracket);
}

ShearState invert_stress(double tau, const FluidParams& params) {
  require_nonnegative(tau, "stress");
  if (tau == 0.0) return {0.0, params.eta0, 0.0};

  double lo = 0.0;
  double hi = tau / params.eta_inf;
  double y = std::min(tau / params.eta0, hi);
  constexpr int kMaxIter = 200;
  for (int it = 0; it < kMaxIter; ++it) {
    const ReducedViscosity v = reduced_viscosity_with_slope(y, params);
    const double f = v.value * y - tau;
    if (f == 0.0) return {y, v.value, tau};
    if (f < 0.0) {
      lo = y;
    } else {
      hi = y;
    }
    const double fp = v.value + y * v.slope;
    double next = y - f / fp;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - y) <= 4.0 * std::numeric_limits<double>::epsilon() * next || hi - lo <= 1e-300) {
      return {next, reduced_viscosity_1d(next, params), tau};
    }
    y = next;
  }
  throw NumericalError("stress inversion did not converge for tau = " + std::to_string(tau), {lo, hi});
}

double psi(double tau, const FluidParams& params) { return invert_stress(tau, params).viscosity; }

double complementary_energy(double tau, const FluidParams& params) {
  const ShearState st = invert_stress(tau, params);
  const double y = st.rate;
  const double r = params.flow_index();
  const double a = 0.5 * params.lambda;
  // int_0^Y eta(y) y dy in closed form, written with expm1/log1p so that the
  // small-lambda limit does not cancel.
  const double carreau_part =
      (params.eta0 - params.eta_inf) * 2.0 * std::expm1(0.5 * r * std::log1p(a * y * y)) / (params.lambda * r);
  const double work = carreau_part + 0.5 * params.eta_inf * y * y;
  return tau * y - work;
}

double mobility(double s, const FluidParams& params, const MobilityQuadrature& quad) {
  return mobility_and_potential(s, params, quad).mobility;
}

MobilityValue mobility_and_potential(double s, const FluidParams& params, const MobilityQuadrature& quad) {
  require_nonnegative(s, "driving-gradient magnitude");
  if (s == 0.0) return {1.0 / (6.0 * params.eta0), 0.0};
  // The integrand is even in xi, so integrate over [0, 1/2] and double.
  auto integrand = [&](double xi) -> std::array<double, 2> {
    const double tau = 2.0 * s * xi;
    const ShearState st = invert_stress(tau, params);
    const double r = params.flow_index();
    const double a = 0.5 * params.lambda;
    const double y = st.rate;
    const double work = (params.eta0 - params.eta_inf) * 2.0 * std::expm1(0.5 * r * std::log1p(a * y * y)) /
                            (params.lambda * r) +
                        0.5 * params.eta_inf * y * y;
    return {4.0 * xi * xi / st.viscosity, tau * y - work};
  };
  const auto v = adaptive_gauss_legendre<2>(integrand, 0.0, 0.5, quad);
  return {v[0], v[1]};
}

double powerlaw_prefactor(const FluidParams& params) {
  const double r = params.flow_index();
  if (!(r > 2.0)) throw ParameterError("power-law prefactor requires r > 2");
  const double rc = params.conjugate();
  return std::pow(2.0, -0.5 * rc) * std::pow(params.eta0 - params.eta_inf, 1.0 - rc) *
         std::pow(params.lambda, -(r - 2.0) / (2.0 * (r - 1.0))) / (rc + 1.0);
}

}  // namespace vtpm
