#include <cmath>
#include <random>

#include "doctest.h"
#include "vtpm/errors.hpp"
#include "vtpm/oracle.hpp"

using namespace vtpm;

namespace {

FluidParams fluid(double eta0, double eta_inf, double lambda, Rational r, Rational gamma) {
  FluidParams p;
  p.eta0 = eta0;
  p.eta_inf = eta_inf;
  p.lambda = lambda;
  p.r = r;
  p.gamma = gamma;
  return p;
}

double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("profile oracle agrees with the closed forms") {
  const Vec2 g{1.5, -0.7};
  SUBCASE("newtonian") {
    const FluidParams p = fluid(2.0, 0.5, 1.0, Rational(3, 2), Rational(0));
    const BvpProfile ref = bvp_profile_oracle(g, p, LimitModelKind::newtonian_zero_shear, 64);
    const OracleReport rep = compare_profile(ProfileLaw::newtonian(2.0), ref, LimitModelKind::newtonian_zero_shear);
    CHECK(rep.sup_error < 1e-12);
    CHECK(rep.mean_error < 1e-12);
    CHECK(ref.stress_offset == doctest::Approx(-norm(g)));
    CHECK(ref.affinity_error < 1e-12);
  }
  SUBCASE("carreau") {
    const FluidParams p = fluid(1.0, 0.3, 2.0, Rational(3, 2), Rational(1));
    const BvpProfile ref = bvp_profile_oracle(g, p, LimitModelKind::carreau, 64);
    const OracleReport rep = compare_profile(ProfileLaw::carreau(p), ref, LimitModelKind::carreau);
    CHECK(rep.sup_error < 1e-10);
    CHECK(rep.mean_error < 1e-10);
  }
  SUBCASE("power law") {
    const FluidParams p = fluid(1.0, 0.3, 2.0, Rational(3), Rational(2));
    const BvpProfile ref = bvp_profile_oracle(g, p, LimitModelKind::power_law, 64);
    const OracleReport rep = compare_profile(ProfileLaw::power_law(p), ref, LimitModelKind::power_law);
    CHECK(rep.sup_error < 1e-10);
    CHECK(rep.mean_error < 1e-10);
  }
}

TEST_CASE("profile oracle input validation") {
  const FluidParams p = fluid(1.0, 0.3, 2.0, Rational(3), Rational(2));
  CHECK_THROWS_AS(bvp_profile_oracle({1.0, 0.0}, p, LimitModelKind::power_law, 32), ParameterError);
  CHECK_THROWS_AS(bvp_profile_oracle({0.0, 0.0}, p, LimitModelKind::power_law, 64), ParameterError);
}

TEST_CASE("dense energy oracle matches the sparse cell solver") {
  const CellGeometry geom = CellGeometry::disk(0.25);
  const PeriodicMesh mesh = build_cell_mesh(geom, 8);
  const Vec2 d{0.8, -0.5};
  SUBCASE("linear") {
    const CellSolution dense = dense_energy_cell_oracle(geom, 8, d, LawKind::linear);
    const PermeabilityTensor a = permeability_tensor(mesh);
    std::vector<double> q(a.correctors[0].q.size());
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = d.x * a.correctors[0].q[i] + d.y * a.correctors[1].q[i];
    CHECK(sup_diff(dense.q, q) < 1e-10);
  }
  SUBCASE("power law") {
    const FluidParams p = fluid(1.0, 0.5, 1.0, Rational(3), Rational(2));
    const CellSolution dense = dense_energy_cell_oracle(geom, 8, d, LawKind::power_law, p);
    const CellSolution sparse = solve_powerlaw_cell(mesh, d, p.conjugate());
    CHECK(sup_diff(dense.q, sparse.q) < 1e-8);
  }
  SUBCASE("carreau") {
    const FluidParams p = fluid(1.0, 0.2, 1.0, Rational(3, 2), Rational(1));
    const CellSolution dense = dense_energy_cell_oracle(geom, 8, 4.0 * d, LawKind::carreau, p);
    const CellSolution sparse = solve_carreau_cell(mesh, 4.0 * d, p);
    CHECK(sup_diff(dense.q, sparse.q) < 1e-8);
  }
  CHECK_THROWS_AS(dense_energy_cell_oracle(geom, 32, d, LawKind::linear), ParameterError);
}

TEST_CASE("finite-difference gradient check") {
  // Quadratic energy with a known gradient.
  auto energy = [](std::span<const double> x) {
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) s += 0.5 * static_cast<double>(i + 1) * x[i] * x[i];
    return s;
  };
  auto gradient = [](std::span<const double> x) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = static_cast<double>(i + 1) * x[i];
    return g;
  };
  const std::vector<double> x{0.3, -1.0, 2.0, 0.5};
  CHECK(fd_gradient_check(energy, gradient, x, 1e-5) < 1e-8);
  auto wrong = [&](std::span<const double> y) {
    std::vector<double> g = gradient(y);
    g[2] *= 1.1;
    return g;
  };
  CHECK(fd_gradient_check(energy, wrong, x, 1e-5) > 1e-3);
  CHECK_THROWS_AS(fd_gradient_check(energy, gradient, x, 1.0), ParameterError);
}

TEST_CASE("discrete cell energies have consistent gradients") {
  const PeriodicMesh mesh = build_cell_mesh(CellGeometry::disk(0.25), 8);
  const CellSolver solver(mesh);
  const Vec2 d{0.6, 0.9};
  CHECK(fd_check_cell_energy(solver, linear_density(), d, 1e-4) < 1e-8);
  CHECK(fd_check_cell_energy(solver, power_density(1.5, powerlaw_regularization(d)), d, 1e-5) < 1e-5);
  const FluidParams p = fluid(1.0, 0.2, 1.0, Rational(3, 2), Rational(1));
  MobilityQuadrature tight;
  tight.rel_tol = 1e-13;
  CHECK(fd_check_cell_energy(solver, carreau_density(p, tight), d, 1e-5) < 1e-5);
}
