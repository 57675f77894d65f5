#include <cmath>
#include <memory>
#include <numeric>

#include "doctest.h"
#include "vtpm/errors.hpp"
#include "vtpm/macro_darcy.hpp"

using namespace vtpm;

namespace {

FluidParams fluid(Rational r, Rational gamma) {
  FluidParams p;
  p.eta0 = 1.0;
  p.eta_inf = 0.5;
  p.lambda = 1.0;
  p.r = r;
  p.gamma = gamma;
  return p;
}

std::shared_ptr<const PeriodicMesh> disk_mesh(int n) {
  return std::make_shared<const PeriodicMesh>(build_cell_mesh(CellGeometry::disk(0.25), n));
}

EffectiveLaw linear_law(int n) {
  auto mesh = disk_mesh(n);
  return EffectiveLaw::linear(permeability_tensor(*mesh), 1.0, mesh);
}

double mean_pressure_error(const MacroMesh& mesh, const MacroSolution& s, const Force& f) {
  double pot_mean = 0.0;
  double mass = 0.0;
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    pot_mean += mesh.lumped_mass[static_cast<std::size_t>(i)] * *f.potential(mesh.nodes[static_cast<std::size_t>(i)]);
    mass += mesh.lumped_mass[static_cast<std::size_t>(i)];
  }
  pot_mean /= mass;
  double err = 0.0;
  for (int i = 0; i < mesh.num_nodes(); ++i)
    err = std::max(err, std::abs(s.p[static_cast<std::size_t>(i)] -
                                 (*f.potential(mesh.nodes[static_cast<std::size_t>(i)]) - pot_mean)));
  return err;
}

double max_velocity(const MacroSolution& s) {
  double v = 0.0;
  for (Vec2 x : s.V) v = std::max(v, norm(x));
  return v;
}

}  // namespace

TEST_CASE("macro mesh layout") {
  const MacroMesh m = build_macro_mesh(2.0, 1.0, 4, 3);
  CHECK(m.num_nodes() == 20);
  CHECK(m.num_triangles() == 24);
  CHECK(std::accumulate(m.lumped_mass.begin(), m.lumped_mass.end(), 0.0) == doctest::Approx(2.0));
  int boundary = 0;
  for (char b : m.boundary) boundary += b;
  CHECK(boundary == 14);
  for (const P1Element& e : m.elements) CHECK(e.area == doctest::Approx(2.0 / 24.0));
  const int t = m.locate({1.3, 0.6});
  CHECK(t >= 0);
  CHECK_THROWS_AS(m.locate({2.5, 0.1}), DomainError);
  CHECK_THROWS_AS(build_macro_mesh(1.0, 1.0, 1, 4), ParameterError);
  CHECK_THROWS_AS(build_macro_mesh(-1.0, 1.0, 4, 4), ParameterError);
}

TEST_CASE("forces and their element forcing") {
  const MacroMesh m = build_macro_mesh(1.0, 1.0, 6, 6);
  const Force g = Force::quadratic_gradient(1.0, 0.5, -1.0, 0.2, 0.0);
  const Vec2 x{0.3, 0.7};
  const Vec2 v = g(x);
  CHECK(v.x == doctest::Approx(2.0 * 0.3 + 0.5 * 0.7 + 0.2));
  CHECK(v.y == doctest::Approx(0.5 * 0.3 - 2.0 * 0.7));
  // Gradient forcing equals the gradient of the interpolated potential.
  const std::vector<Vec2> fe = element_forcing(m, g);
  std::vector<double> phi;
  for (Vec2 n : m.nodes) phi.push_back(*g.potential(n));
  for (std::size_t t = 0; t < fe.size(); ++t) CHECK(norm(fe[t] - m.elements[t].gradient(phi)) < 1e-13);

  const Force rot = Force::rotational({0.5, 0.5});
  CHECK(rot({1.0, 0.5}) == Vec2{0.0, 0.5});
  CHECK_FALSE(rot.potential(x).has_value());

  std::vector<Vec2> samples;
  for (Vec2 n : m.nodes) samples.push_back(rot(n));
  const Force nodal = Force::nodal(samples);
  CHECK(norm(nodal({0.31, 0.77}, &m) - rot({0.31, 0.77})) < 1e-13);
  CHECK_THROWS(nodal({0.31, 0.77}));
}

TEST_CASE("linear darcy absorbs gradient forcing") {
  MacroProblem pr{build_macro_mesh(1.0, 1.0, 8, 8), Force::quadratic_gradient(1.0, 0.0, -1.0), linear_law(8)};
  const MacroSolution s = solve_darcy(pr);
  CHECK(max_velocity(s) < 1e-10);
  CHECK(mean_pressure_error(pr.mesh, s, pr.force) < 1e-10);
}

TEST_CASE("linear darcy with rotational forcing is conservative") {
  MacroProblem pr{build_macro_mesh(1.0, 1.0, 8, 8), Force::rotational({0.5, 0.5}), linear_law(8)};
  const MacroSolution s = solve_darcy(pr);
  CHECK(s.divergence_residual < 1e-10);
  CHECK(s.boundary_flux < 1e-10);
  CHECK(max_velocity(s) > 1e-3);
  double mean = 0.0;
  for (std::size_t i = 0; i < s.p.size(); ++i) mean += pr.mesh.lumped_mass[i] * s.p[i];
  CHECK(std::abs(mean) < 1e-12);
}

TEST_CASE("power-law darcy") {
  auto mesh = disk_mesh(8);
  const EffectiveLaw law = EffectiveLaw::power_law(mesh, fluid(Rational(3), Rational(2)));
  SUBCASE("gradient forcing") {
    MacroProblem pr{build_macro_mesh(1.0, 1.0, 6, 6), Force::quadratic_gradient(1.0, 0.0, -1.0), law};
    const MacroSolution s = solve_darcy(pr);
    CHECK(max_velocity(s) < 1e-8);
    CHECK(mean_pressure_error(pr.mesh, s, pr.force) < 1e-8);
  }
  SUBCASE("rotational forcing") {
    MacroProblem pr{build_macro_mesh(1.0, 1.0, 6, 6), Force::rotational({0.5, 0.5}), law};
    const MacroSolution s = solve_darcy(pr);
    CHECK(s.residual <= 1e-8);
    CHECK(s.divergence_residual < 1e-8);
    CHECK(s.boundary_flux < 1e-8);
    for (std::size_t i = 1; i < s.residual_history.size(); ++i) CHECK(std::isfinite(s.residual_history[i]));
  }
}

TEST_CASE("angular table reproduces the cell flux") {
  auto mesh = disk_mesh(8);
  const EffectiveLaw law = EffectiveLaw::power_law(mesh, fluid(Rational(3), Rational(2)));
  const EvaluationPlan plan = flux_map_strategy(law, true, 64);
  CHECK(plan.kind() == PlanKind::angular_table);
  CHECK(plan.table().size() == 64);
  CHECK(plan.table_solves() == 9);
  for (Vec2 d : {Vec2{0.3, 0.1}, Vec2{-2.0, 1.3}, Vec2{0.0, -0.7}}) {
    const Vec2 exact = law.evaluate_exact(d);
    CHECK(norm(plan(d) - exact) < 1e-3 * norm(exact));
  }
  CHECK(plan(Vec2{}) == Vec2{});
}

TEST_CASE("carreau darcy with tiny lambda matches the zero-shear linear solve") {
  auto mesh = disk_mesh(8);
  FluidParams p = fluid(Rational(3, 2), Rational(1));
  p.lambda = 1e-8;
  const EffectiveLaw law = EffectiveLaw::carreau(mesh, p);
  const EffectiveLaw lin = EffectiveLaw::linear(permeability_tensor(*mesh), p.eta0, mesh);
  const MacroMesh m = build_macro_mesh(1.0, 1.0, 4, 4);
  const MacroSolution sc = solve_darcy({m, Force::rotational({0.5, 0.5}), law});
  const MacroSolution sl = solve_darcy({m, Force::rotational({0.5, 0.5}), lin});
  double err = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < sl.p.size(); ++i) {
    err = std::max(err, std::abs(sc.p[i] - sl.p[i]));
    scale = std::max(scale, std::abs(sl.p[i]));
  }
  CHECK(err < 1e-6 * scale);
  CHECK(sc.cell_solves > 0);
}

TEST_CASE("threaded nonlinear solve is deterministic") {
  auto mesh = disk_mesh(8);
  const EffectiveLaw law = EffectiveLaw::power_law(mesh, fluid(Rational(3), Rational(2)));
  MacroProblem pr{build_macro_mesh(1.0, 1.0, 5, 5), Force::rotational({0.4, 0.5}), law};
  MacroOptions one;
  MacroOptions two;
  two.threads = 2;
  const MacroSolution a = solve_darcy(pr, one);
  const MacroSolution b = solve_darcy(pr, two);
  CHECK(a.p == b.p);
}

TEST_CASE("invalid macro options") {
  MacroProblem pr{build_macro_mesh(1.0, 1.0, 4, 4), Force::rotational({0.5, 0.5}), linear_law(8)};
  MacroOptions bad;
  bad.tol = 0.0;
  CHECK_THROWS_AS(solve_darcy(pr, bad), ParameterError);
}
