#pragma once

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vtpm/cellsolve.hpp"
#include "vtpm/linalg.hpp"
#include "vtpm/vec.hpp"

namespace vtpm {

/// Uniform triangulation of the rectangle (0, L1) x (0, L2). Node (i, j) sits at
/// (i L1 / n1, j L2 / n2) with index j (n1 + 1) + i; every square is split
/// along its lower-left to upper-right diagonal.
struct MacroMesh {
  double L1 = 0.0;
  double L2 = 0.0;
  int n1 = 0;
  int n2 = 0;
  std::vector<Vec2> nodes;
  std::vector<std::array<int, 3>> triangles;  ///< counter-clockwise
  std::vector<P1Element> elements;
  std::vector<double> lumped_mass;
  std::vector<char> boundary;  ///< per-node flag

  int num_nodes() const noexcept { return static_cast<int>(nodes.size()); }
  int num_triangles() const noexcept { return static_cast<int>(triangles.size()); }
  double area() const noexcept { return L1 * L2; }
  Vec2 centroid(int t) const;
  /// Triangle containing x (closed rectangle); throws DomainError outside.
  int locate(Vec2 x) const;
};

MacroMesh build_macro_mesh(double L1, double L2, int n1, int n2);

enum class ForceKind { constant, quadratic_gradient, rotational, samples, function };

/// Body force f'. The quadratic-gradient force is the gradient of
/// phi = a x^2 + b x y + c y^2 + d x + e y; the rotational force is
/// (-(y - c2), x - c1) about a centre c.
struct Force {
  ForceKind kind = ForceKind::constant;
  Vec2 value;                          ///< constant force
  std::array<double, 5> quadratic{};   ///< a, b, c, d, e
  Vec2 centre;                         ///< rotational centre
  std::vector<Vec2> samples;           ///< per-node values
  std::function<Vec2(Vec2)> function;  ///< arbitrary field

  static Force constant(Vec2 f);
  static Force quadratic_gradient(double a, double b, double c, double d = 0.0, double e = 0.0);
  static Force rotational(Vec2 centre);
  static Force nodal(std::vector<Vec2> values);
  static Force field(std::function<Vec2(Vec2)> f);

  /// Pointwise value; for nodal samples the P1 interpolant on `mesh`.
  Vec2 operator()(Vec2 x, const MacroMesh* mesh = nullptr) const;
  /// Potential of a gradient force (constant and quadratic kinds).
  std::optional<double> potential(Vec2 x) const;
  std::string describe() const;
};

/// Per-triangle forcing: the mean of the lowest-order edge-element interpolant
/// of f'. Gradient forces are mapped onto the gradient of the P1 interpolant
/// of their potential, so gradient forcing is absorbed exactly by the pressure.
std::vector<Vec2> element_forcing(const MacroMesh& mesh, const Force& force);

enum class PlanKind { direct_linear, angular_table, cached_cell_solves };

/// How the macro solver evaluates the effective law element by element.
class EvaluationPlan {
 public:
  PlanKind kind() const noexcept { return kind_; }
  const EffectiveLaw& law() const noexcept { return law_; }
  Vec2 operator()(Vec2 delta) const;
  /// Angular table of U on the unit circle (angular_table plans only).
  const std::vector<Vec2>& table() const noexcept { return table_; }
  int table_solves() const noexcept { return table_solves_; }

 private:
  friend EvaluationPlan flux_map_strategy(const EffectiveLaw&, bool, int, int, double);
  PlanKind kind_ = PlanKind::direct_linear;
  EffectiveLaw law_;
  std::vector<Vec2> table_;
  int table_solves_ = 0;
  // Real trigonometric interpolation coefficients of both components.
  std::vector<double> ax_, bx_, ay_, by_;

  explicit EvaluationPlan(EffectiveLaw law) : law_(std::move(law)) {}
  Vec2 unit_flux(double theta) const;
};

/// LINEAR: direct product. POWER_LAW: U sampled on `angles` equispaced
/// directions (only an eighth of them when the obstacle is square symmetric),
/// extended by homogeneity and trigonometric interpolation. CARREAU: per-element
/// cell solves through a law copy whose cache quantum is `quantum`.
EvaluationPlan flux_map_strategy(const EffectiveLaw& law, bool square_symmetric, int angles = 64, int threads = 1,
                                 double quantum = 1e-6);

struct MacroOptions {
  double tol = 1e-8;        ///< relative nonlinear residual
  int max_outer = 100;
  double omega = 1.0;
  double cg_tol = 1e-13;
  int cg_max_iter = 100000;
  int threads = 1;
};

struct MacroProblem {
  MacroMesh mesh;
  Force force;
  EffectiveLaw law;
};

struct MacroSolution {
  std::vector<double> p;         ///< nodal pressure, zero mean
  std::vector<Vec2> V;           ///< per-element filtration velocity
  std::vector<Vec2> delta;       ///< per-element f' - grad p
  std::vector<Vec2> forcing;     ///< per-element f'
  int iterations = 0;
  double residual = 0.0;             ///< relative nonlinear residual
  double divergence_residual = 0.0;  ///< max |sum_T |T| V . grad phi_i| over interior nodes
  double boundary_flux = 0.0;        ///< same over boundary nodes
  std::vector<double> residual_history;
  std::int64_t cell_solves = 0;

  /// Pressure gradient on the triangle containing x.
  Vec2 pressure_gradient(const MacroMesh& mesh, Vec2 x) const;
};

/// Weak residual r_i = sum_T |T| V_T . grad phi_i.
std::vector<double> darcy_residual(const MacroMesh& mesh, const std::vector<Vec2>& V);

MacroSolution solve_linear_darcy(const MacroProblem& problem, const MacroOptions& options = {});
/// Secant (Kacanov) outer iteration; builds its evaluation plan from the law.
MacroSolution solve_nonlinear_darcy(const MacroProblem& problem, const MacroOptions& options = {});
MacroSolution solve_nonlinear_darcy(const MacroProblem& problem, const EvaluationPlan& plan,
                                    const MacroOptions& options = {});
/// Dispatches on the law kind.
MacroSolution solve_darcy(const MacroProblem& problem, const MacroOptions& options = {});

}  // namespace vtpm
