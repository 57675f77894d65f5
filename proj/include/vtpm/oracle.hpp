#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "vtpm/cellmesh.hpp"
#include "vtpm/cellsolve.hpp"
#include "vtpm/params.hpp"
#include "vtpm/reconstruct.hpp"

namespace vtpm {

/// Comparison of a computed quantity against an oracle.
struct OracleReport {
  double sup_error = 0.0;
  double mean_error = 0.0;
  int grid = 0;
  LimitModelKind kind = LimitModelKind::newtonian_zero_shear;
};

/// Reference solution of the reduced two-point problem on [0, 1].
struct BvpProfile {
  Profile profile;
  double stress_offset = 0.0;  ///< c in sigma(z3) = c + 2 |g| z3 (component along g)
  Vec2 mean;                   ///< int_0^1 w dz3
  double affinity_error = 0.0; ///< max deviation of the recovered stress from c + 2 |g| z3
};

/// Solves -(d/dz3)(eta~(|w'|) w') = const with w(0) = w(1) = 0, driven like
/// ProfileLaw(g, .). The stress is integrated exactly (it is affine in z3),
/// its offset is found by bracketed root finding on int_0^1 w' = 0, the
/// constitutive relation is inverted pointwise by bracketing and the slope is
/// integrated with tanh-sinh quadrature split at the stress sign change.
/// Requires n >= 64 and g != 0 for the power law.
BvpProfile bvp_profile_oracle(Vec2 g, const FluidParams& params, LimitModelKind kind, int n);

/// Compares the closed-form profile with the oracle on the oracle grid.
OracleReport compare_profile(const ProfileLaw& law, const BvpProfile& reference, LimitModelKind kind);

/// Minimizes the discrete convex cell energy sum_T |T| Phi(|delta + grad q|)
/// over mean-zero periodic P1 fields with damped Newton steps on dense
/// matrices and Armijo backtracking. Independent of the sparse cell solver.
CellSolution dense_energy_cell_oracle(const CellGeometry& geom, int n, Vec2 delta, LawKind kind,
                                      const FluidParams& params = {});

/// Max over `directions` random directions d of
/// |(J(x + h d) - J(x - h d)) / (2h) - grad J(x) . d| / max(|grad J . d|, |grad J| |d| / N).
double fd_gradient_check(const std::function<double(std::span<const double>)>& energy,
                         const std::function<std::vector<double>(std::span<const double>)>& gradient,
                         std::span<const double> x, double h_fd, int directions = 20, std::uint64_t seed = 1);

/// fd_gradient_check applied to CellSolver::energy and CellSolver::residual at a
/// random field of unit amplitude.
double fd_check_cell_energy(const CellSolver& solver, const FluxDensity& density, Vec2 delta, double h_fd,
                            std::uint64_t seed = 1);

}  // namespace vtpm
