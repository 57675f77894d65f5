#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <vector>

#include "vtpm/cellsolve.hpp"
#include "vtpm/macro_darcy.hpp"
#include "vtpm/vec.hpp"

namespace vtpm {

/// Through-thickness Poiseuille profile (1/eta)(z3^2 - z3) g. Its mean is -g/(6 eta).
Vec2 newtonian_profile(Vec2 g, double eta, double z3);

/// Carreau profile -2 g int_{|1/2 - z3|}^{1/2} xi / psi(2 |g| xi) dxi. Exactly
/// zero at both walls and symmetric about the midplane; its mean is -M(|g|) g.
Vec2 carreau_profile(Vec2 g, const FluidParams& params, double z3, const MobilityQuadrature& quad = {});

/// Power-law profile -kappa ((1/2)^r' - |1/2 - z3|^r') |g|^(r'-2) g, with kappa
/// fixed so that the mean is -c_r |g|^(r'-2) g. Requires r > 2.
Vec2 powerlaw_profile(Vec2 g, const FluidParams& params, double z3);

/// Positive kappa of powerlaw_profile.
double powerlaw_profile_constant(const FluidParams& params);

/// A profile law: the shape function together with its closed-form mean.
struct ProfileLaw {
  LawKind kind = LawKind::linear;
  double eta = 1.0;  ///< viscosity of the linear law
  FluidParams params;
  MobilityQuadrature quad;

  static ProfileLaw newtonian(double eta);
  static ProfileLaw carreau(const FluidParams& params, const MobilityQuadrature& quad = {});
  static ProfileLaw power_law(const FluidParams& params);
  /// Profile law matching an effective law (linear: eta = 1 / (6 prefactor)).
  static ProfileLaw of(const EffectiveLaw& law);

  Vec2 operator()(Vec2 g, double z3) const;
  /// Closed-form z3-mean of the profile driven by g.
  Vec2 mean(Vec2 g) const;
  /// Mean computed by adaptive quadrature of the profile over [0, 1/2] and [1/2, 1].
  Vec2 quadrature_mean(Vec2 g, double rel_tol = 1e-12) const;
};

/// Sampled profile on a uniform z3 grid including both walls.
struct Profile {
  Vec2 g;
  LawKind kind = LawKind::linear;
  std::vector<double> z3;
  std::vector<Vec2> w;
};

Profile sample_profile(const ProfileLaw& law, Vec2 g, int points);

/// Reconstructs the limit velocity (u', 0) at macro point x and cell point
/// z = (z1, z2, z3). The cell problem at the local driving f' - grad p is
/// solved once per macro element and cached. Returns zero inside the
/// obstacle; throws DomainError for x outside the macro domain or z' outside
/// the cell and ParameterError for z3 outside [0, 1].
class VelocityReconstructor {
 public:
  VelocityReconstructor(const MacroSolution& solution, const MacroMesh& mesh, const EffectiveLaw& law);

  Vec3 operator()(Vec2 x, Vec3 z) const;
  /// Driving f' - grad p on the macro element containing x.
  Vec2 driving(Vec2 x) const;
  /// Cell field g = delta + grad q on the cell triangle containing z'.
  Vec2 cell_gradient(Vec2 x, Vec2 zp) const;
  /// Average of u' over the fluid part of the cell and the thickness: the
  /// sum over fluid triangles of |T| times the quadrature mean of the profile.
  Vec2 cell_average(Vec2 x) const;
  const ProfileLaw& profile_law() const noexcept { return profile_; }

 private:
  struct Entry {
    Vec2 delta;
    std::vector<Vec2> gradients;  ///< per fluid cell triangle
  };
  const Entry& entry(Vec2 x) const;

  const MacroSolution* solution_;
  const MacroMesh* mesh_;
  EffectiveLaw law_;
  ProfileLaw profile_;
  std::vector<int> fluid_index_;  ///< cell triangle -> index in fluid_triangles, -1 if solid
  mutable std::mutex mutex_;
  mutable std::map<int, std::shared_ptr<const Entry>> cache_;
};

/// Convenience wrapper that builds a reconstructor for a single query.
Vec3 reconstruct_velocity(const MacroSolution& solution, const MacroMesh& mesh, const EffectiveLaw& law, Vec2 x,
                          Vec3 z);

}  // namespace vtpm
