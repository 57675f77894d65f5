#include "vtpm/reconstruct.hpp"

#include <cmath>

#include "vtpm/constitutive.hpp"
#include "vtpm/errors.hpp"
#include "vtpm/quadrature.hpp"

namespace vtpm {
namespace {

void check_height(double z3) {
  if (!(z3 >= 0.0 && z3 <= 1.0)) throw ParameterError("z3 must lie in [0, 1]");
}

}  // namespace

Vec2 newtonian_profile(Vec2 g, double eta, double z3) {
  check_height(z3);
  if (!(eta > 0.0)) throw ParameterError("viscosity must be positive");
  return ((z3 * z3 - z3) / eta) * g;
}

Vec2 carreau_profile(Vec2 g, const FluidParams& params, double z3, const MobilityQuadrature& quad) {
  check_height(z3);
  const double a = std::abs(0.5 - z3);
  const double s = norm(g);
  if (a >= 0.5 || s == 0.0) return {};
  const auto integral = adaptive_gauss_legendre<1>(
      [&](double xi) { return std::array<double, 1>{xi / psi(2.0 * s * xi, params)}; }, a, 0.5, quad);
  return (-2.0 * integral[0]) * g;
}

double powerlaw_profile_constant(const FluidParams& params) {
  const double rp = params.conjugate();
  return powerlaw_prefactor(params) * std::pow(2.0, rp) * (rp + 1.0) / rp;
}

Vec2 powerlaw_profile(Vec2 g, const FluidParams& params, double z3) {
  check_height(z3);
  const double kappa = powerlaw_profile_constant(params);
  const double rp = params.conjugate();
  const double s = norm(g);
  const double a = std::abs(0.5 - z3);
  if (s == 0.0 || a >= 0.5) return {};
  return (-kappa * (std::pow(0.5, rp) - std::pow(a, rp)) * std::pow(s, rp - 2.0)) * g;
}

ProfileLaw ProfileLaw::newtonian(double eta) {
  if (!(eta > 0.0)) throw ParameterError("viscosity must be positive");
  ProfileLaw law;
  law.kind = LawKind::linear;
  law.eta = eta;
  return law;
}

ProfileLaw ProfileLaw::carreau(const FluidParams& params, const MobilityQuadrature& quad) {
  params.validate();
  ProfileLaw law;
  law.kind = LawKind::carreau;
  law.params = params;
  law.quad = quad;
  return law;
}

ProfileLaw ProfileLaw::power_law(const FluidParams& params) {
  powerlaw_prefactor(params);
  ProfileLaw law;
  law.kind = LawKind::power_law;
  law.params = params;
  return law;
}

ProfileLaw ProfileLaw::of(const EffectiveLaw& law) {
  switch (law.kind()) {
    case LawKind::linear: return newtonian(1.0 / (6.0 * law.prefactor()));
    case LawKind::carreau: return carreau(law.params(), law.quadrature());
    case LawKind::power_law: return power_law(law.params());
  }
  return newtonian(1.0);
}

Vec2 ProfileLaw::operator()(Vec2 g, double z3) const {
  switch (kind) {
    case LawKind::linear: return newtonian_profile(g, eta, z3);
    case LawKind::carreau: return carreau_profile(g, params, z3, quad);
    case LawKind::power_law: return powerlaw_profile(g, params, z3);
  }
  return {};
}

Vec2 ProfileLaw::mean(Vec2 g) const {
  switch (kind) {
    case LawKind::linear: return (-1.0 / (6.0 * eta)) * g;
    case LawKind::carreau: return -mobility(norm(g), params, quad) * g;
    case LawKind::power_law: {
      const double s = norm(g);
      if (s == 0.0) return {};
      return (-powerlaw_prefactor(params) * std::pow(s, params.conjugate() - 2.0)) * g;
    }
  }
  return {};
}

Vec2 ProfileLaw::quadrature_mean(Vec2 g, double rel_tol) const {
  MobilityQuadrature outer;
  outer.rel_tol = rel_tol;
  auto f = [&](double z3) {
    const Vec2 w = (*this)(g, z3);
    return std::array<double, 2>{w.x, w.y};
  };
  // The profile is even about the midplane, so both halves carry the same integral.
  const auto half = adaptive_gauss_legendre<2>(f, 0.0, 0.5, outer);
  return {2.0 * half[0], 2.0 * half[1]};
}

Profile sample_profile(const ProfileLaw& law, Vec2 g, int points) {
  if (points < 2) throw ParameterError("a profile needs at least two sample points");
  Profile profile;
  profile.g = g;
  profile.kind = law.kind;
  for (int i = 0; i < points; ++i) {
    const double z3 = i == points - 1 ? 1.0 : static_cast<double>(i) / (points - 1);
    profile.z3.push_back(z3);
    profile.w.push_back(law(g, z3));
  }
  return profile;
}

VelocityReconstructor::VelocityReconstructor(const MacroSolution& solution, const MacroMesh& mesh,
                                             const EffectiveLaw& law)
    : solution_(&solution), mesh_(&mesh), law_(law), profile_(ProfileLaw::of(law)) {
  if (law.mesh() == nullptr) throw ParameterError("reconstruction needs an effective law that carries its cell mesh");
  if (solution.delta.size() != mesh.elements.size()) {
    throw ParameterError("macro solution does not match the macro mesh");
  }
  const PeriodicMesh& cell = *law.mesh();
  fluid_index_.assign(cell.triangles.size(), -1);
  for (std::size_t k = 0; k < cell.fluid_triangles.size(); ++k) {
    fluid_index_[static_cast<std::size_t>(cell.fluid_triangles[k])] = static_cast<int>(k);
  }
}

Vec2 VelocityReconstructor::driving(Vec2 x) const {
  return solution_->delta[static_cast<std::size_t>(mesh_->locate(x))];
}

const VelocityReconstructor::Entry& VelocityReconstructor::entry(Vec2 x) const {
  const int t = mesh_->locate(x);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(t); it != cache_.end()) return *it->second;
  }
  auto e = std::make_shared<Entry>();
  e->delta = solution_->delta[static_cast<std::size_t>(t)];
  const CellSolution cell = law_.cell_solution(e->delta);
  const CellSolver solver(*law_.mesh());
  e->gradients = solver.gradients(e->delta, cell.q);
  std::lock_guard lock(mutex_);
  return *cache_.emplace(t, std::move(e)).first->second;
}

Vec2 VelocityReconstructor::cell_gradient(Vec2 x, Vec2 zp) const {
  const PeriodicMesh& cell = *law_.mesh();
  const int t = cell.locate(zp);
  const int k = fluid_index_[static_cast<std::size_t>(t)];
  if (k < 0 || obstacle_indicator(cell.geometry, zp)) return {};
  return entry(x).gradients[static_cast<std::size_t>(k)];
}

Vec3 VelocityReconstructor::operator()(Vec2 x, Vec3 z) const {
  check_height(z.z);
  const Vec2 zp{z.x, z.y};
  const PeriodicMesh& cell = *law_.mesh();
  const int t = cell.locate(zp);
  if (fluid_index_[static_cast<std::size_t>(t)] < 0 || obstacle_indicator(cell.geometry, zp)) {
    mesh_->locate(x);
    return {};
  }
  // The profile of the module's convention is driven by -(delta + grad q).
  const Vec2 w = profile_(-cell_gradient(x, zp), z.z);
  return {w.x, w.y, 0.0};
}

Vec2 VelocityReconstructor::cell_average(Vec2 x) const {
  const PeriodicMesh& cell = *law_.mesh();
  const Entry& e = entry(x);
  Vec2 total;
  for (std::size_t k = 0; k < cell.fluid_triangles.size(); ++k) {
    const double area = cell.triangle_area(cell.fluid_triangles[k]);
    total += area * profile_.quadrature_mean(-e.gradients[k]);
  }
  return total;
}

Vec3 reconstruct_velocity(const MacroSolution& solution, const MacroMesh& mesh, const EffectiveLaw& law, Vec2 x,
                          Vec3 z) {
  return VelocityReconstructor(solution, mesh, law)(x, z);
}

}  // namespace vtpm
