#include "vtpm/cellsolve.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vtpm/errors.hpp"

namespace vtpm {
namespace {

struct PicardState {
  std::vector<double> residual;
  std::vector<double> mobility;  ///< per element
  double energy = 0.0;
  double residual_norm = 0.0;
};

}  // namespace

FluxDensity linear_density() {
  return {CellLaw::linear, [](double s) { return MobilityValue{1.0, 0.5 * s * s}; }, 0.0};
}

FluxDensity power_density(double p, double eps) {
  if (!(p > 1.0)) throw ParameterError("power-law exponent must exceed 1");
  return {CellLaw::power_law,
          [p, eps](double s) {
            const double m2 = s * s + eps * eps;
            return MobilityValue{std::pow(m2, 0.5 * p - 1.0), std::pow(m2, 0.5 * p) / p};
          },
          eps};
}

FluxDensity carreau_density(const FluidParams& params, const MobilityQuadrature& quad) {
  params.validate();
  quad.validate();
  return {CellLaw::carreau, [params, quad](double s) { return mobility_and_potential(s, params, quad); }, 0.0};
}

double powerlaw_regularization(Vec2 delta) { return 1e-8 * std::max(1.0, norm(delta)); }

namespace {

CellSolverOptions validated(const CellSolverOptions& o) {
  if (!(o.tol > 0.0)) throw ParameterError("cell tolerance must be positive");
  if (o.max_iter < 1) throw ParameterError("cell Picard iteration cap must be positive");
  if (!(o.omega > 0.0 && o.omega <= 1.0)) throw ParameterError("cell relaxation must lie in (0, 1]");
  if (!(o.cg_tol > 0.0) || o.cg_max_iter < 1) throw ParameterError("cell CG settings must be positive");
  return o;
}

}  // namespace

CellSolver::CellSolver(const PeriodicMesh& mesh, CellSolverOptions options)
    : mesh_(&mesh),
      options_(validated(options)),
      elements_([&] {
        std::vector<P1Element> els;
        els.reserve(mesh.fluid_triangles.size());
        for (int t : mesh.fluid_triangles) {
          const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
          std::array<int, 3> dofs{};
          for (std::size_t a = 0; a < 3; ++a) dofs[a] = mesh.dof_map[static_cast<std::size_t>(tri[a])];
          els.push_back(make_p1_element(dofs, mesh.vertices[static_cast<std::size_t>(tri[0])],
                                        mesh.vertices[static_cast<std::size_t>(tri[1])],
                                        mesh.vertices[static_cast<std::size_t>(tri[2])]));
        }
        return els;
      }()),
      pattern_(elements_, mesh.num_dofs) {}

std::vector<Vec2> CellSolver::gradients(Vec2 delta, std::span<const double> q) const {
  std::vector<Vec2> g(elements_.size());
  for (std::size_t t = 0; t < elements_.size(); ++t) g[t] = delta + elements_[t].gradient(q);
  return g;
}

double CellSolver::energy(const FluxDensity& density, Vec2 delta, std::span<const double> q) const {
  double e = 0.0;
  const auto g = gradients(delta, q);
  for (std::size_t t = 0; t < elements_.size(); ++t) e += elements_[t].area * density.eval(norm(g[t])).potential;
  return e;
}

std::vector<double> CellSolver::residual(const FluxDensity& density, Vec2 delta, std::span<const double> q) const {
  std::vector<double> r(static_cast<std::size_t>(mesh_->num_dofs), 0.0);
  const auto g = gradients(delta, q);
  for (std::size_t t = 0; t < elements_.size(); ++t) {
    const auto& e = elements_[t];
    const Vec2 j = density.eval(norm(g[t])).mobility * g[t];
    for (std::size_t a = 0; a < 3; ++a) r[static_cast<std::size_t>(e.dofs[a])] += e.area * dot(j, e.grads[a]);
  }
  return r;
}

Vec2 CellSolver::flux(const FluxDensity& density, Vec2 delta, std::span<const double> q) const {
  Vec2 total;
  const auto g = gradients(delta, q);
  for (std::size_t t = 0; t < elements_.size(); ++t) {
    total += elements_[t].area * density.eval(norm(g[t])).mobility * g[t];
  }
  return total;
}

CellSolution CellSolver::solve_linear(int axis) const {
  if (axis != 0 && axis != 1) throw ParameterError("cell axis must be 0 or 1");
  const Vec2 delta = axis == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
  return solve(linear_density(), delta);
}

CellSolution CellSolver::solve(const FluxDensity& density, Vec2 delta, std::span<const double> initial) const {
  if (!(std::isfinite(delta.x) && std::isfinite(delta.y))) throw ParameterError("driving vector must be finite");
  const std::size_t ndof = static_cast<std::size_t>(mesh_->num_dofs);
  const std::size_t nel = elements_.size();

  CellSolution sol;
  sol.delta = delta;
  sol.law = density.law;
  sol.regularization = density.regularization;
  sol.q.assign(ndof, 0.0);
  if (!initial.empty()) {
    std::copy(initial.begin(), initial.end(), sol.q.begin());
    remove_weighted_mean(sol.q, mesh_->lumped_mass);
  }

  auto evaluate = [&](std::span<const double> q) {
    PicardState st;
    st.residual.assign(ndof, 0.0);
    st.mobility.resize(nel);
    for (std::size_t t = 0; t < nel; ++t) {
      const auto& e = elements_[t];
      const Vec2 g = delta + e.gradient(q);
      const MobilityValue mv = density.eval(norm(g));
      st.mobility[t] = mv.mobility;
      st.energy += e.area * mv.potential;
      const Vec2 j = mv.mobility * g;
      for (std::size_t a = 0; a < 3; ++a) st.residual[static_cast<std::size_t>(e.dofs[a])] += e.area * dot(j, e.grads[a]);
    }
    st.residual_norm = norm2(st.residual);
    return st;
  };

  // Residual scale: the norm of the element contributions taken in absolute
  // value at the initial state.
  double scale = 0.0;
  PicardState state = evaluate(sol.q);
  {
    std::vector<double> abs_contrib(ndof, 0.0);
    for (std::size_t t = 0; t < nel; ++t) {
      const auto& e = elements_[t];
      const double jn = state.mobility[t] * norm(delta + e.gradient(sol.q));
      for (std::size_t a = 0; a < 3; ++a) abs_contrib[static_cast<std::size_t>(e.dofs[a])] += e.area * jn * norm(e.grads[a]);
    }
    scale = norm2(abs_contrib);
  }
  if (scale == 0.0) {
    std::fill(sol.q.begin(), sol.q.end(), 0.0);
    sol.energy_history.push_back(state.energy);
    sol.residual_history.push_back(0.0);
    return sol;
  }

  sol.residual = state.residual_norm / scale;
  sol.energy_history.push_back(state.energy);
  sol.residual_history.push_back(sol.residual);
  const bool linear = density.law == CellLaw::linear;
  const int max_iter = linear ? 1 : options_.max_iter;

  P1Matrix matrix = pattern_;
  std::vector<Mat2> coeff(nel);
  std::vector<double> rhs(ndof);
  std::vector<double> target(ndof);
  std::vector<double> trial(ndof);
  for (int it = 1; it <= max_iter && sol.residual > options_.tol; ++it) {
    std::fill(rhs.begin(), rhs.end(), 0.0);
    for (std::size_t t = 0; t < nel; ++t) {
      const auto& e = elements_[t];
      coeff[t] = Mat2::scalar(state.mobility[t]);
      const Vec2 j = state.mobility[t] * delta;
      for (std::size_t a = 0; a < 3; ++a) rhs[static_cast<std::size_t>(e.dofs[a])] -= e.area * dot(j, e.grads[a]);
    }
    matrix.assemble(elements_, coeff);
    target = sol.q;
    const CgResult cg = solve_neumann_cg(matrix, rhs, target, options_.cg_tol, options_.cg_max_iter);
    sol.cg_iterations += cg.iterations;
    if (!cg.converged) {
      throw NumericalError("cell linear solve stalled at relative residual " + std::to_string(cg.relative_residual),
                           sol.residual_history);
    }

    double omega = linear ? 1.0 : options_.omega;
    PicardState next;
    for (;;) {
      for (std::size_t i = 0; i < ndof; ++i) trial[i] = sol.q[i] + omega * (target[i] - sol.q[i]);
      remove_weighted_mean(trial, mesh_->lumped_mass);
      next = evaluate(trial);
      const bool energy_ok = next.energy <= state.energy + 1e-12 * std::abs(state.energy);
      const bool residual_ok = next.residual_norm < state.residual_norm;
      if (linear || energy_ok || residual_ok || omega < 1.0 / 1024.0) break;
      omega *= 0.5;
    }
    sol.q = trial;
    state = std::move(next);
    sol.iterations = linear ? 0 : it;
    sol.residual = state.residual_norm / scale;
    sol.energy_history.push_back(state.energy);
    sol.residual_history.push_back(sol.residual);
  }

  if (sol.residual > options_.tol) {
    throw NumericalError("cell Picard iteration did not converge, relative residual " + std::to_string(sol.residual),
                         sol.residual_history);
  }
  return sol;
}

CellSolution solve_linear_cell(const PeriodicMesh& mesh, int axis, const CellSolverOptions& options) {
  return CellSolver(mesh, options).solve_linear(axis);
}

CellSolution solve_powerlaw_cell(const PeriodicMesh& mesh, Vec2 delta, double r_prime,
                                 const CellSolverOptions& options) {
  if (!(r_prime > 1.0 && r_prime < 2.0)) throw ParameterError("power-law cell exponent r' must lie in (1, 2)");
  return CellSolver(mesh, options).solve(power_density(r_prime, powerlaw_regularization(delta)), delta);
}

CellSolution solve_carreau_cell(const PeriodicMesh& mesh, Vec2 delta, const FluidParams& params,
                                const MobilityQuadrature& quad, const CellSolverOptions& options) {
  return CellSolver(mesh, options).solve(carreau_density(params, quad), delta);
}

Vec2 powerlaw_flux(const PeriodicMesh& mesh, Vec2 delta, double r_prime, const CellSolverOptions& options) {
  const CellSolver solver(mesh, options);
  const FluxDensity density = power_density(r_prime, powerlaw_regularization(delta));
  if (!(r_prime > 1.0 && r_prime < 2.0)) throw ParameterError("power-law cell exponent r' must lie in (1, 2)");
  const CellSolution sol = solver.solve(density, delta);
  return solver.flux(density, delta, sol.q);
}

Vec2 carreau_flux(const PeriodicMesh& mesh, Vec2 delta, const FluidParams& params, const MobilityQuadrature& quad,
                  const CellSolverOptions& options) {
  const CellSolver solver(mesh, options);
  const FluxDensity density = carreau_density(params, quad);
  const CellSolution sol = solver.solve(density, delta);
  return solver.flux(density, delta, sol.q);
}

std::array<double, 2> PermeabilityTensor::eigenvalues() const {
  const double a = matrix.a11;
  const double d = matrix.a22;
  const double b = 0.5 * (matrix.a12 + matrix.a21);
  const double mean = 0.5 * (a + d);
  const double rad = std::hypot(0.5 * (a - d), b);
  return {mean - rad, mean + rad};
}

PermeabilityTensor permeability_tensor(const PeriodicMesh& mesh, const CellSolverOptions& options) {
  const CellSolver solver(mesh, options);
  PermeabilityTensor k;
  k.fluid_area = mesh.fluid_area;
  k.correctors = {solver.solve_linear(0), solver.solve_linear(1)};
  const std::array<Vec2, 2> basis{Vec2{1.0, 0.0}, Vec2{0.0, 1.0}};
  std::array<std::vector<Vec2>, 2> g{solver.gradients(basis[0], k.correctors[0].q),
                                     solver.gradients(basis[1], k.correctors[1].q)};
  double flux[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  double energy[2][2] = {{0.0, 0.0}, {0.0, 0.0}};
  const auto els = solver.elements();
  for (std::size_t t = 0; t < els.size(); ++t) {
    for (int i = 0; i < 2; ++i) {
      const Vec2 gi = g[static_cast<std::size_t>(i)][t];
      flux[i][0] += els[t].area * gi.x;
      flux[i][1] += els[t].area * gi.y;
      for (int j = 0; j < 2; ++j) energy[i][j] += els[t].area * dot(gi, g[static_cast<std::size_t>(j)][t]);
    }
  }
  k.matrix = {flux[0][0], flux[0][1], flux[1][0], flux[1][1]};
  k.energy_matrix = {energy[0][0], energy[0][1], energy[1][0], energy[1][1]};
  return k;
}

}  // namespace vtpm
