#include <cmath>
#include <memory>
#include <random>
#include <thread>
#include <vector>

#include "doctest.h"
#include "vtpm/cellsolve.hpp"
#include "vtpm/errors.hpp"

using namespace vtpm;

namespace {

FluidParams fluid(double eta0, double eta_inf, double lambda, Rational r) {
  FluidParams p;
  p.eta0 = eta0;
  p.eta_inf = eta_inf;
  p.lambda = lambda;
  p.r = r;
  return p;
}

double max_abs(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("empty cell has identity permeability") {
  for (int n : {8, 16}) {
    const PeriodicMesh m = build_cell_mesh(CellGeometry::empty(), n);
    const PermeabilityTensor a = permeability_tensor(m);
    CHECK(std::abs(a.matrix.a11 - 1.0) < 1e-10);
    CHECK(std::abs(a.matrix.a22 - 1.0) < 1e-10);
    CHECK(std::abs(a.matrix.a12) < 1e-10);
    CHECK(max_abs(a.correctors[0].q) < 1e-10);
  }
}

TEST_CASE("disk permeability is isotropic, symmetric and bounded") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 16);
  const PermeabilityTensor a = permeability_tensor(m);
  CHECK(std::abs(a.matrix.a12) < 1e-9);
  CHECK(std::abs(a.matrix.a12 - a.matrix.a21) < 1e-10);
  CHECK(std::abs(a.matrix.a11 - a.matrix.a22) < 1e-9);
  // Flux and energy forms agree at the discrete solution.
  CHECK(std::abs(a.matrix.a11 - a.energy_matrix.a11) < 1e-9);
  const auto ev = a.eigenvalues();
  CHECK(ev[0] > 0.0);
  CHECK(ev[1] <= a.fluid_area + 1e-12);
  CHECK(a.matrix.a11 == doctest::Approx(0.6608).epsilon(1e-3));
}

TEST_CASE("linear solver on an anisotropic cell") {
  // A square obstacle is still symmetric, so A stays isotropic.
  const PeriodicMesh m = build_cell_mesh(CellGeometry::square(0.2), 16);
  const PermeabilityTensor a = permeability_tensor(m);
  CHECK(std::abs(a.matrix.a11 - a.matrix.a22) < 1e-9);
  CHECK(a.matrix.a11 < a.fluid_area);
}

TEST_CASE("power-law flux is odd and positively homogeneous") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 12);
  const double rp = 1.5;
  const Vec2 d{0.7, -0.3};
  const Vec2 u = powerlaw_flux(m, d, rp);
  const Vec2 um = powerlaw_flux(m, -d, rp);
  CHECK(std::abs(u.x + um.x) < 1e-10 * norm(u));
  CHECK(std::abs(u.y + um.y) < 1e-10 * norm(u));
  const double t = 3.0;
  const Vec2 ut = powerlaw_flux(m, t * d, rp);
  const double scale = std::pow(t, rp - 1.0);
  CHECK(norm(ut - scale * u) < 1e-6 * scale * norm(u));
  CHECK(dot(u, d) > 0.0);
}

TEST_CASE("power-law corrector solves the discrete equation") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 12);
  const Vec2 d{1.0, 0.4};
  const CellSolution s = solve_powerlaw_cell(m, d, 1.5);
  CHECK(s.iterations > 0);
  CHECK(s.residual < 1e-9);
  CellSolver solver(m);
  const FluxDensity density = power_density(1.5, s.regularization);
  const std::vector<double> r = solver.residual(density, d, s.q);
  CHECK(max_abs(r) < 1e-8);
  // Energy is non-increasing along accepted iterates.
  for (std::size_t i = 1; i < s.energy_history.size(); ++i)
    CHECK(s.energy_history[i] <= s.energy_history[i - 1] * (1.0 + 1e-12));
}

TEST_CASE("carreau flux approaches the zero-shear newtonian law for tiny lambda") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 12);
  const PermeabilityTensor a = permeability_tensor(m);
  const FluidParams p = fluid(2.0, 1.0, 1e-8, Rational(3, 2));
  const Vec2 d{1.0, 2.0};
  const Vec2 f = carreau_flux(m, d, p);
  const Vec2 lin = (1.0 / (6.0 * p.eta0)) * (a.matrix * d);
  CHECK(norm(f - lin) < 1e-6 * norm(lin));
}

TEST_CASE("carreau flux is odd and monotone") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 12);
  const FluidParams p = fluid(1.0, 0.2, 1.0, Rational(3, 2));
  std::mt19937 rng(3);
  std::normal_distribution<double> nd(0.0, 3.0);
  std::vector<Vec2> deltas;
  std::vector<Vec2> fluxes;
  for (int i = 0; i < 6; ++i) {
    deltas.push_back({nd(rng), nd(rng)});
    fluxes.push_back(carreau_flux(m, deltas.back(), p));
  }
  const Vec2 neg = carreau_flux(m, -deltas[0], p);
  CHECK(norm(neg + fluxes[0]) < 1e-10 * norm(fluxes[0]));
  for (std::size_t i = 0; i < deltas.size(); ++i)
    for (std::size_t j = i + 1; j < deltas.size(); ++j)
      CHECK(dot(fluxes[i] - fluxes[j], deltas[i] - deltas[j]) >= -1e-10);
}

TEST_CASE("effective law evaluation and caching") {
  auto mesh = std::make_shared<const PeriodicMesh>(build_cell_mesh(CellGeometry::disk(0.25), 12));
  FluidParams p = fluid(1.0, 0.5, 1.0, Rational(3));
  p.gamma = Rational(2);
  const EffectiveLaw law = effective_law(mesh, LimitModelKind::power_law, p);
  CHECK(law.kind() == LawKind::power_law);
  CHECK(law.prefactor() == doctest::Approx(powerlaw_prefactor(p)));
  const Vec2 d{0.3, 0.8};
  const Vec2 v1 = law(d);
  const Vec2 v2 = law(d);
  CHECK(v1 == v2);
  CHECK(law.cache_size() == 1);
  CHECK(law.cell_solves() == 1);
  const Vec2 exact = law.evaluate_exact(d);
  CHECK(norm(exact - v1) < 1e-6 * norm(exact));
  CHECK(law(Vec2{}) == Vec2{});
  CHECK_THROWS_AS(effective_law(mesh, LimitModelKind::carreau, p), ParameterError);
}

TEST_CASE("linear effective law uses the permeability tensor") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 12);
  const PermeabilityTensor a = permeability_tensor(m);
  const EffectiveLaw law = EffectiveLaw::linear(a, 2.0);
  const Vec2 d{1.0, -1.0};
  const Vec2 v = law(d);
  const Vec2 expect = (1.0 / 12.0) * (a.matrix * d);
  CHECK(norm(v - expect) < 1e-15);
  CHECK(law.prefactor() == doctest::Approx(1.0 / 12.0));
}

TEST_CASE("concurrent law evaluations agree with serial ones") {
  auto mesh = std::make_shared<const PeriodicMesh>(build_cell_mesh(CellGeometry::disk(0.25), 8));
  FluidParams p = fluid(1.0, 0.5, 1.0, Rational(3));
  p.gamma = Rational(2);
  const EffectiveLaw law = effective_law(mesh, LimitModelKind::power_law, p);
  std::vector<Vec2> deltas;
  for (int i = 0; i < 8; ++i) deltas.push_back({std::cos(0.7 * i), std::sin(0.7 * i)});
  std::vector<Vec2> serial;
  for (Vec2 d : deltas) serial.push_back(law.with_cache_quantum(law.cache_quantum())(d));
  std::vector<Vec2> parallel(deltas.size());
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < 2; ++t) {
    pool.emplace_back([&, t] {
      for (std::size_t i = t; i < deltas.size(); i += 2) parallel[i] = law(deltas[i]);
    });
  }
  for (auto& th : pool) th.join();
  for (std::size_t i = 0; i < deltas.size(); ++i) CHECK(parallel[i] == serial[i]);
}

TEST_CASE("solver options are validated") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::empty(), 8);
  CellSolverOptions bad;
  bad.tol = -1.0;
  CHECK_THROWS_AS(CellSolver(m, bad), ParameterError);
}
