#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "vtpm/cellmesh.hpp"
#include "vtpm/constitutive.hpp"
#include "vtpm/linalg.hpp"
#include "vtpm/params.hpp"
#include "vtpm/vec.hpp"

namespace vtpm {

struct CellSolverOptions {
  double tol = 1e-10;       ///< relative nonlinear residual
  int max_iter = 200;       ///< Picard iterations
  double omega = 1.0;       ///< initial relaxation factor
  double cg_tol = 1e-12;    ///< relative residual of each linear solve
  int cg_max_iter = 20000;
};

enum class CellLaw { linear, power_law, carreau };

/// Mean-zero corrector pressure on the fluid dofs of a cell mesh.
struct CellSolution {
  std::vector<double> q;
  Vec2 delta;
  CellLaw law = CellLaw::linear;
  double residual = 0.0;        ///< final relative residual
  int iterations = 0;           ///< Picard iterations (0 for linear solves)
  int cg_iterations = 0;        ///< total conjugate-gradient iterations
  double regularization = 0.0;  ///< modulus regularization of the power law
  std::vector<double> energy_history;
  std::vector<double> residual_history;
};

/// Scalar flux law j(g) = m(|g|) g with potential Phi, Phi'(s) = m(s) s.
struct FluxDensity {
  CellLaw law = CellLaw::linear;
  std::function<MobilityValue(double)> eval;
  double regularization = 0.0;
};

FluxDensity linear_density();
/// |g|^(p-2) g with |g| replaced by sqrt(|g|^2 + eps^2).
FluxDensity power_density(double p, double eps);
FluxDensity carreau_density(const FluidParams& params, const MobilityQuadrature& quad);

/// Regularization used for the power-law modulus at driving vector delta.
double powerlaw_regularization(Vec2 delta);

/// P1 discretization of the periodic cell problems on the fluid part of a mesh.
/// Immutable after construction; every solve works on its own matrix copy, so
/// concurrent solves on one instance are safe.
class CellSolver {
 public:
  explicit CellSolver(const PeriodicMesh& mesh, CellSolverOptions options = {});

  const PeriodicMesh& mesh() const noexcept { return *mesh_; }
  std::span<const P1Element> elements() const noexcept { return elements_; }
  const CellSolverOptions& options() const noexcept { return options_; }

  /// Corrector of the linear problem driven by e_axis (axis 0 or 1).
  CellSolution solve_linear(int axis) const;
  /// Damped Picard iteration for div(m(|delta + grad q|)(delta + grad q)) = 0.
  CellSolution solve(const FluxDensity& density, Vec2 delta, std::span<const double> initial = {}) const;

  /// Per-fluid-triangle g = delta + grad q.
  std::vector<Vec2> gradients(Vec2 delta, std::span<const double> q) const;
  /// sum_T |T| Phi(|g_T|).
  double energy(const FluxDensity& density, Vec2 delta, std::span<const double> q) const;
  /// Weak residual R_i = sum_T |T| m(|g_T|) g_T . grad phi_i, the gradient of energy().
  std::vector<double> residual(const FluxDensity& density, Vec2 delta, std::span<const double> q) const;
  /// sum_T |T| m(|g_T|) g_T.
  Vec2 flux(const FluxDensity& density, Vec2 delta, std::span<const double> q) const;

 private:
  const PeriodicMesh* mesh_;
  CellSolverOptions options_;
  std::vector<P1Element> elements_;
  P1Matrix pattern_;
};

CellSolution solve_linear_cell(const PeriodicMesh& mesh, int axis, const CellSolverOptions& options = {});
CellSolution solve_powerlaw_cell(const PeriodicMesh& mesh, Vec2 delta, double r_prime,
                                 const CellSolverOptions& options = {});
CellSolution solve_carreau_cell(const PeriodicMesh& mesh, Vec2 delta, const FluidParams& params,
                                const MobilityQuadrature& quad = {}, const CellSolverOptions& options = {});

/// U(delta) = int |delta + grad q|^(r'-2) (delta + grad q) over the fluid part.
Vec2 powerlaw_flux(const PeriodicMesh& mesh, Vec2 delta, double r_prime, const CellSolverOptions& options = {});
/// F(delta) = int M(|delta + grad q|) (delta + grad q) over the fluid part.
Vec2 carreau_flux(const PeriodicMesh& mesh, Vec2 delta, const FluidParams& params,
                  const MobilityQuadrature& quad = {}, const CellSolverOptions& options = {});

struct PermeabilityTensor {
  Mat2 matrix;         ///< A_ij = int (e_i + grad q^i) . e_j
  Mat2 energy_matrix;  ///< int (e_i + grad q^i) . (e_j + grad q^j)
  double fluid_area = 0.0;
  std::array<CellSolution, 2> correctors;

  /// Eigenvalues of the symmetric part, ascending.
  std::array<double, 2> eigenvalues() const;
};

PermeabilityTensor permeability_tensor(const PeriodicMesh& mesh, const CellSolverOptions& options = {});

enum class LawKind { linear, power_law, carreau };

/// Effective filtration law V' = law(delta), delta = f' - grad p. Copies share
/// the evaluation cache, which is guarded by a mutex: concurrent evaluations
/// return correct values and may recompute the same entry.
class EffectiveLaw {
 public:
  static EffectiveLaw linear(const PermeabilityTensor& permeability, double eta,
                             std::shared_ptr<const PeriodicMesh> mesh = nullptr);
  static EffectiveLaw power_law(std::shared_ptr<const PeriodicMesh> mesh, const FluidParams& params,
                                const CellSolverOptions& options = {});
  static EffectiveLaw carreau(std::shared_ptr<const PeriodicMesh> mesh, const FluidParams& params,
                              const MobilityQuadrature& quad = {}, const CellSolverOptions& options = {});

  LawKind kind() const noexcept { return kind_; }
  /// 1/(6 eta) for the linear law, c_r for the power law, 1 for Carreau.
  double prefactor() const noexcept { return prefactor_; }
  double r_prime() const noexcept { return r_prime_; }
  const Mat2& permeability() const noexcept { return permeability_; }
  const FluidParams& params() const noexcept { return params_; }
  const MobilityQuadrature& quadrature() const noexcept { return quad_; }
  const PeriodicMesh* mesh() const noexcept { return mesh_.get(); }

  /// Cached evaluation: nonlinear laws are evaluated at delta rounded to the
  /// quantum per component, so every hit returns the bitwise-identical value.
  Vec2 operator()(Vec2 delta) const;
  /// Evaluation at exactly delta, bypassing the cache.
  Vec2 evaluate_exact(Vec2 delta) const;
  /// prefactor-free cell flux: A delta, U(delta) or F(delta).
  Vec2 cell_flux(Vec2 delta) const;
  /// Corrector q_delta (a linear combination of the two correctors for the linear law).
  CellSolution cell_solution(Vec2 delta) const;
  /// Profile-law density matching this law (linear law: m = 1).
  FluxDensity density(Vec2 delta) const;

  double cache_quantum() const noexcept { return quantum_; }
  /// Returns a copy with its own empty cache and the given quantum (0 disables quantization).
  EffectiveLaw with_cache_quantum(double quantum) const;
  std::size_t cache_size() const;
  /// Number of nonlinear cell solves performed through this law and its copies.
  std::int64_t cell_solves() const noexcept;

 private:
  struct SharedState;

  EffectiveLaw() = default;
  Vec2 solve_flux(Vec2 delta) const;

  LawKind kind_ = LawKind::linear;
  double prefactor_ = 1.0;
  double r_prime_ = 2.0;
  double quantum_ = 1e-6;
  Mat2 permeability_;
  std::array<std::vector<double>, 2> linear_correctors_;
  FluidParams params_;
  MobilityQuadrature quad_;
  std::shared_ptr<const PeriodicMesh> mesh_;
  std::shared_ptr<const CellSolver> solver_;
  std::shared_ptr<SharedState> state_;
};

/// Builds the law selected by the limit model kind; throws ParameterError if
/// the kind disagrees with limit_model_kind(params.r, params.gamma).
EffectiveLaw effective_law(std::shared_ptr<const PeriodicMesh> mesh, LimitModelKind kind, const FluidParams& params,
                           const MobilityQuadrature& quad = {}, const CellSolverOptions& options = {});

}  // namespace vtpm
