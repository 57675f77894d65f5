#include <cmath>
#include <memory>

#include "doctest.h"
#include "vtpm/errors.hpp"
#include "vtpm/reconstruct.hpp"

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

}  // namespace

TEST_CASE("newtonian profile vanishes on the walls and has the Poiseuille mean") {
  const Vec2 g{1.2, -0.4};
  CHECK(newtonian_profile(g, 2.0, 0.0) == Vec2{0.0, 0.0});
  CHECK(norm(newtonian_profile(g, 2.0, 1.0)) == 0.0);
  const Vec2 mid = newtonian_profile(g, 2.0, 0.5);
  CHECK(mid.x == doctest::Approx(-0.25 * 1.2 / 2.0));
  const ProfileLaw law = ProfileLaw::newtonian(2.0);
  const Vec2 m = law.mean(g);
  CHECK(m.x == doctest::Approx(-1.2 / 12.0));
  CHECK(norm(law.quadrature_mean(g) - m) < 1e-15);
  CHECK_THROWS_AS(newtonian_profile(g, 2.0, 1.5), ParameterError);
}

TEST_CASE("carreau profile symmetry and mean") {
  const FluidParams p = fluid(1.0, 0.2, 2.0, Rational(3, 2));
  const Vec2 g{3.0, 1.0};
  CHECK(norm(carreau_profile(g, p, 0.0)) < 1e-15);
  CHECK(norm(carreau_profile(g, p, 1.0)) < 1e-15);
  for (double z : {0.1, 0.3, 0.45}) CHECK(norm(carreau_profile(g, p, z) - carreau_profile(g, p, 1.0 - z)) < 1e-13);
  // Profile is antiparallel to g.
  const Vec2 w = carreau_profile(g, p, 0.3);
  CHECK(std::abs(cross(w, g)) < 1e-13 * norm(w) * norm(g));
  CHECK(dot(w, g) < 0.0);
  const ProfileLaw law = ProfileLaw::carreau(p);
  const Vec2 m = law.mean(g);
  CHECK(m.x == doctest::Approx(-mobility(norm(g), p) * g.x).epsilon(1e-12));
  CHECK(norm(law.quadrature_mean(g) - m) < 1e-10 * norm(m));
}

TEST_CASE("carreau profile reduces to newtonian for tiny lambda") {
  const FluidParams p = fluid(1.5, 0.5, 1e-10, Rational(3, 2));
  const Vec2 g{2.0, -1.0};
  for (double z : {0.1, 0.5, 0.8}) {
    const Vec2 c = carreau_profile(g, p, z);
    const Vec2 n = newtonian_profile(g, 1.5, z);
    CHECK(norm(c - n) < 1e-8 * norm(n));
  }
}

TEST_CASE("shear-thickening carreau profile approaches the power-law profile at large driving") {
  // With eta_inf tiny the high-shear behaviour is a pure power law.
  const FluidParams p = fluid(1.0, 1e-12, 1.0, Rational(3));
  const Vec2 g{1e6, 0.0};
  const double z = 0.25;
  const Vec2 c = carreau_profile(g, p, z);
  const Vec2 w = powerlaw_profile(g, p, z);
  CHECK(norm(c - w) < 2e-2 * norm(w));
}

TEST_CASE("power-law profile constant and mean") {
  const FluidParams p = fluid(1.0, 0.5, 2.0, Rational(3));
  const double rp = p.conjugate();
  const double kappa = powerlaw_profile_constant(p);
  CHECK(kappa == doctest::Approx(powerlaw_prefactor(p) * std::pow(2.0, rp) * (rp + 1.0) / rp).epsilon(1e-14));
  const ProfileLaw law = ProfileLaw::power_law(p);
  const Vec2 g{0.5, 2.0};
  const Vec2 m = law.mean(g);
  CHECK(norm(m + powerlaw_prefactor(p) * std::pow(norm(g), rp - 2.0) * g) < 1e-14);
  CHECK(norm(law.quadrature_mean(g) - m) < 1e-10 * norm(m));
  CHECK_THROWS_AS(ProfileLaw::power_law(fluid(1.0, 0.5, 2.0, Rational(3, 2))), ParameterError);
}

TEST_CASE("sampled profile grid") {
  const Profile pr = sample_profile(ProfileLaw::newtonian(1.0), {1.0, 0.0}, 11);
  CHECK(pr.z3.size() == 11);
  CHECK(pr.z3.front() == 0.0);
  CHECK(pr.z3.back() == 1.0);
  CHECK(pr.w[5].x == doctest::Approx(-0.25));
  CHECK_THROWS_AS(sample_profile(ProfileLaw::newtonian(1.0), {1.0, 0.0}, 1), ParameterError);
}

TEST_CASE("reconstructed velocity averages to the filtration velocity") {
  auto cell = std::make_shared<const PeriodicMesh>(build_cell_mesh(CellGeometry::disk(0.25), 8));
  SUBCASE("linear law") {
    const EffectiveLaw law = EffectiveLaw::linear(permeability_tensor(*cell), 1.0, cell);
    const MacroMesh mesh = build_macro_mesh(1.0, 1.0, 4, 4);
    const MacroSolution sol = solve_darcy({mesh, Force::rotational({0.5, 0.5}), law});
    const VelocityReconstructor rec(sol, mesh, law);
    const Vec2 x{0.3, 0.6};
    const int t = mesh.locate(x);
    const Vec2 V = sol.V[static_cast<std::size_t>(t)];
    const Vec2 avg = rec.cell_average(x);
    CHECK(norm(avg - V) < 1e-10 * norm(V));
    // Zero inside the obstacle and on the walls.
    CHECK(rec(x, {0.0, 0.0, 0.5}) == Vec3{});
    const Vec3 wall = rec(x, {0.4, 0.0, 0.0});
    CHECK(std::abs(wall.x) + std::abs(wall.y) == 0.0);
    CHECK(wall.z == 0.0);
    CHECK_THROWS_AS(rec({2.0, 0.5}, {0.4, 0.0, 0.5}), DomainError);
    CHECK_THROWS_AS(rec(x, {0.4, 0.0, 1.5}), ParameterError);
  }
  SUBCASE("power law") {
    FluidParams p = fluid(1.0, 0.5, 1.0, Rational(3));
    p.gamma = Rational(2);
    const EffectiveLaw law = EffectiveLaw::power_law(cell, p);
    const MacroMesh mesh = build_macro_mesh(1.0, 1.0, 3, 3);
    const MacroSolution sol = solve_darcy({mesh, Force::rotational({0.5, 0.5}), law});
    const VelocityReconstructor rec(sol, mesh, law);
    const Vec2 x{0.2, 0.2};
    const Vec2 V = law.evaluate_exact(rec.driving(x));
    CHECK(norm(rec.cell_average(x) - V) < 1e-8 * norm(V));
  }
}
