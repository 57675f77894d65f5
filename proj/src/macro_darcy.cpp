#include "vtpm/macro_darcy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "parallel.hpp"
#include "vtpm/errors.hpp"

namespace vtpm {
namespace {

std::size_t idx(int i) { return static_cast<std::size_t>(i); }

Vec2 rotate_quarter(Vec2 v, int q) {
  for (int i = 0; i < (q & 3); ++i) v = {-v.y, v.x};
  return v;
}

// delta = f - grad p loses all significance once it drops to the rounding
// level of its two terms; such values are flushed to zero.
/// f - grad p, snapped to zero when it is below the rounding error of the
/// subtraction and of the gradient sum p_a grad phi_a.
Vec2 driving(Vec2 f, const P1Element& el, std::span<const double> p) {
  Vec2 grad_p;
  double magnitude = norm(f);
  for (std::size_t a = 0; a < 3; ++a) {
    const double pa = p[idx(el.dofs[a])];
    grad_p += pa * el.grads[a];
    magnitude += std::abs(pa) * norm(el.grads[a]);
  }
  const Vec2 d = f - grad_p;
  return norm(d) <= 64.0 * std::numeric_limits<double>::epsilon() * magnitude ? Vec2{} : d;
}

}  // namespace

Vec2 MacroMesh::centroid(int t) const {
  const auto& tri = triangles[idx(t)];
  return (1.0 / 3.0) * (nodes[idx(tri[0])] + nodes[idx(tri[1])] + nodes[idx(tri[2])]);
}

int MacroMesh::locate(Vec2 x) const {
  const double tol = 1e-12 * std::max(L1, L2);
  if (!(x.x >= -tol && x.x <= L1 + tol && x.y >= -tol && x.y <= L2 + tol)) {
    std::ostringstream msg;
    msg << "point (" << x.x << ", " << x.y << ") lies outside the macro domain";
    throw DomainError(msg.str());
  }
  const double u = x.x / L1 * n1;
  const double v = x.y / L2 * n2;
  const int i = std::clamp(static_cast<int>(std::floor(u)), 0, n1 - 1);
  const int j = std::clamp(static_cast<int>(std::floor(v)), 0, n2 - 1);
  const bool upper = (v - j) > (u - i);
  return 2 * (j * n1 + i) + (upper ? 1 : 0);
}

MacroMesh build_macro_mesh(double L1, double L2, int n1, int n2) {
  if (!(L1 > 0.0) || !(L2 > 0.0) || !std::isfinite(L1) || !std::isfinite(L2)) {
    throw ParameterError("macro domain lengths must be positive and finite");
  }
  if (n1 < 2 || n2 < 2) throw ParameterError("macro mesh needs n1, n2 >= 2");
  MacroMesh mesh;
  mesh.L1 = L1;
  mesh.L2 = L2;
  mesh.n1 = n1;
  mesh.n2 = n2;
  auto node = [n1](int i, int j) { return j * (n1 + 1) + i; };
  mesh.nodes.reserve(idx((n1 + 1) * (n2 + 1)));
  mesh.boundary.reserve(mesh.nodes.capacity());
  for (int j = 0; j <= n2; ++j) {
    for (int i = 0; i <= n1; ++i) {
      mesh.nodes.push_back({L1 * i / n1, L2 * j / n2});
      mesh.boundary.push_back(i == 0 || j == 0 || i == n1 || j == n2 ? 1 : 0);
    }
  }
  for (int j = 0; j < n2; ++j) {
    for (int i = 0; i < n1; ++i) {
      const int a = node(i, j), b = node(i + 1, j), c = node(i + 1, j + 1), d = node(i, j + 1);
      mesh.triangles.push_back({a, b, c});
      mesh.triangles.push_back({a, c, d});
    }
  }
  mesh.lumped_mass.assign(mesh.nodes.size(), 0.0);
  mesh.elements.reserve(mesh.triangles.size());
  for (const auto& tri : mesh.triangles) {
    const P1Element el = make_p1_element(tri, mesh.nodes[idx(tri[0])], mesh.nodes[idx(tri[1])], mesh.nodes[idx(tri[2])]);
    for (int v : tri) mesh.lumped_mass[idx(v)] += el.area / 3.0;
    mesh.elements.push_back(el);
  }
  return mesh;
}

Force Force::constant(Vec2 f) {
  Force force;
  force.kind = ForceKind::constant;
  force.value = f;
  return force;
}

Force Force::quadratic_gradient(double a, double b, double c, double d, double e) {
  Force force;
  force.kind = ForceKind::quadratic_gradient;
  force.quadratic = {a, b, c, d, e};
  return force;
}

Force Force::rotational(Vec2 centre) {
  Force force;
  force.kind = ForceKind::rotational;
  force.centre = centre;
  return force;
}

Force Force::nodal(std::vector<Vec2> values) {
  Force force;
  force.kind = ForceKind::samples;
  force.samples = std::move(values);
  return force;
}

Force Force::field(std::function<Vec2(Vec2)> f) {
  if (!f) throw ParameterError("force field function is empty");
  Force force;
  force.kind = ForceKind::function;
  force.function = std::move(f);
  return force;
}

Vec2 Force::operator()(Vec2 x, const MacroMesh* mesh) const {
  switch (kind) {
    case ForceKind::constant: return value;
    case ForceKind::quadratic_gradient: {
      const auto& [a, b, c, d, e] = quadratic;
      return {2.0 * a * x.x + b * x.y + d, b * x.x + 2.0 * c * x.y + e};
    }
    case ForceKind::rotational: return {-(x.y - centre.y), x.x - centre.x};
    case ForceKind::function: return function(x);
    case ForceKind::samples: {
      if (mesh == nullptr) throw ParameterError("nodal force samples need a mesh to be evaluated");
      const int t = mesh->locate(x);
      const auto& tri = mesh->triangles[idx(t)];
      const P1Element& el = mesh->elements[idx(t)];
      // Barycentric coordinates from the constant basis gradients.
      Vec2 out;
      const Vec2 x0 = mesh->nodes[idx(tri[0])];
      for (std::size_t a = 0; a < 3; ++a) {
        const double lam = (a == 0 ? 1.0 : 0.0) + dot(el.grads[a], x - x0);
        out += lam * samples[idx(tri[a])];
      }
      return out;
    }
  }
  return {};
}

std::optional<double> Force::potential(Vec2 x) const {
  switch (kind) {
    case ForceKind::constant: return value.x * x.x + value.y * x.y;
    case ForceKind::quadratic_gradient: {
      const auto& [a, b, c, d, e] = quadratic;
      return a * x.x * x.x + b * x.x * x.y + c * x.y * x.y + d * x.x + e * x.y;
    }
    default: return std::nullopt;
  }
}

std::string Force::describe() const {
  std::ostringstream out;
  switch (kind) {
    case ForceKind::constant: out << "constant(" << value.x << ", " << value.y << ")"; break;
    case ForceKind::quadratic_gradient:
      out << "gradient of " << quadratic[0] << " x^2 + " << quadratic[1] << " xy + " << quadratic[2] << " y^2 + "
          << quadratic[3] << " x + " << quadratic[4] << " y";
      break;
    case ForceKind::rotational: out << "rotational about (" << centre.x << ", " << centre.y << ")"; break;
    case ForceKind::samples: out << "nodal samples (" << samples.size() << ")"; break;
    case ForceKind::function: out << "function"; break;
  }
  return out.str();
}

std::vector<Vec2> element_forcing(const MacroMesh& mesh, const Force& force) {
  if (force.kind == ForceKind::samples && force.samples.size() != mesh.nodes.size()) {
    throw ParameterError("nodal force has " + std::to_string(force.samples.size()) + " samples but the mesh has " +
                         std::to_string(mesh.nodes.size()) + " nodes");
  }
  // Three-point Gauss rule on [0, 1]: exact for quadratic tangential traces.
  static const double gs[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
  static const double gw[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  auto circulation = [&](int i, int j) {
    const Vec2 xi = mesh.nodes[idx(i)], xj = mesh.nodes[idx(j)];
    const Vec2 t = xj - xi;
    if (force.kind == ForceKind::samples) return 0.5 * dot(force.samples[idx(i)] + force.samples[idx(j)], t);
    double c = 0.0;
    for (int q = 0; q < 3; ++q) c += gw[q] * dot(force(xi + gs[q] * t), t);
    return c;
  };
  std::vector<Vec2> out(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const auto& tri = mesh.triangles[t];
    const auto& g = mesh.elements[t].grads;
    Vec2 f;
    for (std::size_t e = 0; e < 3; ++e) {
      const std::size_t a = e, b = (e + 1) % 3;
      f += (circulation(tri[a], tri[b]) / 3.0) * (g[b] - g[a]);
    }
    out[t] = f;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation plans

Vec2 EvaluationPlan::unit_flux(double theta) const {
  const std::size_t n = table_.size();
  Vec2 v{0.5 * ax_[0], 0.5 * ay_[0]};
  for (std::size_t m = 1; m < n / 2; ++m) {
    const double c = std::cos(static_cast<double>(m) * theta), s = std::sin(static_cast<double>(m) * theta);
    v.x += ax_[m] * c + bx_[m] * s;
    v.y += ay_[m] * c + by_[m] * s;
  }
  const double c = std::cos(static_cast<double>(n / 2) * theta);
  v.x += 0.5 * ax_[n / 2] * c;
  v.y += 0.5 * ay_[n / 2] * c;
  return v;
}

Vec2 EvaluationPlan::operator()(Vec2 delta) const {
  switch (kind_) {
    case PlanKind::direct_linear:
    case PlanKind::cached_cell_solves: return law_(delta);
    case PlanKind::angular_table: {
      const double s = norm(delta);
      if (s == 0.0) return {};
      const double theta = std::atan2(delta.y, delta.x);
      return (law_.prefactor() * std::pow(s, law_.r_prime() - 1.0)) * unit_flux(theta);
    }
  }
  return {};
}

EvaluationPlan flux_map_strategy(const EffectiveLaw& law, bool square_symmetric, int angles, int threads,
                                 double quantum) {
  switch (law.kind()) {
    case LawKind::linear: {
      EvaluationPlan plan(law);
      plan.kind_ = PlanKind::direct_linear;
      return plan;
    }
    case LawKind::carreau: {
      EvaluationPlan plan(law.with_cache_quantum(quantum));
      plan.kind_ = PlanKind::cached_cell_solves;
      return plan;
    }
    case LawKind::power_law: break;
  }
  if (angles < 8 || angles % 8 != 0) throw ParameterError("angular table size must be a positive multiple of 8");
  EvaluationPlan plan(law);
  plan.kind_ = PlanKind::angular_table;
  const int n = angles;
  auto direction = [n](int k) {
    const double th = 2.0 * std::numbers::pi * k / n;
    return Vec2{std::cos(th), std::sin(th)};
  };
  std::vector<int> base;
  if (square_symmetric) {
    for (int k = 0; k <= n / 8; ++k) base.push_back(k);
  } else {
    for (int k = 0; k < n; ++k) base.push_back(k);
  }
  std::vector<Vec2> values(base.size());
  detail::parallel_for(static_cast<int>(base.size()), threads,
                       [&](int i) { values[idx(i)] = law.cell_flux(direction(base[idx(i)])); });
  plan.table_solves_ = static_cast<int>(base.size());
  plan.table_.assign(idx(n), Vec2{});
  std::vector<char> filled(idx(n), 0);
  for (std::size_t i = 0; i < base.size(); ++i) {
    const int k = base[i];
    if (!square_symmetric) {
      plan.table_[idx(k)] = values[i];
      filled[idx(k)] = 1;
      continue;
    }
    // The symmetry group acts on angle indices as k -> s k + q n / 4.
    for (int s : {1, -1}) {
      for (int q = 0; q < 4; ++q) {
        const int target = ((s * k + q * (n / 4)) % n + n) % n;
        if (filled[idx(target)]) continue;
        Vec2 v = values[i];
        if (s < 0) v.y = -v.y;
        plan.table_[idx(target)] = rotate_quarter(v, q);
        filled[idx(target)] = 1;
      }
    }
  }
  const std::size_t half = idx(n / 2);
  plan.ax_.assign(half + 1, 0.0);
  plan.bx_.assign(half + 1, 0.0);
  plan.ay_.assign(half + 1, 0.0);
  plan.by_.assign(half + 1, 0.0);
  for (std::size_t m = 0; m <= half; ++m) {
    for (int k = 0; k < n; ++k) {
      const double th = 2.0 * std::numbers::pi * k / n;
      const double c = std::cos(static_cast<double>(m) * th), s = std::sin(static_cast<double>(m) * th);
      plan.ax_[m] += plan.table_[idx(k)].x * c;
      plan.bx_[m] += plan.table_[idx(k)].x * s;
      plan.ay_[m] += plan.table_[idx(k)].y * c;
      plan.by_[m] += plan.table_[idx(k)].y * s;
    }
    plan.ax_[m] *= 2.0 / n;
    plan.bx_[m] *= 2.0 / n;
    plan.ay_[m] *= 2.0 / n;
    plan.by_[m] *= 2.0 / n;
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Solvers

Vec2 MacroSolution::pressure_gradient(const MacroMesh& mesh, Vec2 x) const {
  return mesh.elements[idx(mesh.locate(x))].gradient(p);
}

std::vector<double> darcy_residual(const MacroMesh& mesh, const std::vector<Vec2>& V) {
  std::vector<double> r(mesh.nodes.size(), 0.0);
  for (std::size_t t = 0; t < mesh.elements.size(); ++t) {
    const P1Element& el = mesh.elements[t];
    for (std::size_t a = 0; a < 3; ++a) r[idx(el.dofs[a])] += el.area * dot(V[t], el.grads[a]);
  }
  return r;
}

namespace {

void validate(const MacroOptions& options) {
  if (!(options.tol > 0.0) || options.max_outer < 1 || !(options.omega > 0.0 && options.omega <= 1.0)) {
    throw ParameterError("macro options need tol > 0, max_outer >= 1 and 0 < omega <= 1");
  }
  if (!(options.cg_tol > 0.0) || options.cg_max_iter < 1 || options.threads < 1) {
    throw ParameterError("macro options need cg_tol > 0, cg_max_iter >= 1 and threads >= 1");
  }
}

void finish(const MacroMesh& mesh, MacroSolution& sol) {
  const std::vector<double> r = darcy_residual(mesh, sol.V);
  sol.divergence_residual = 0.0;
  sol.boundary_flux = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    double& slot = mesh.boundary[i] ? sol.boundary_flux : sol.divergence_residual;
    slot = std::max(slot, std::abs(r[i]));
  }
}

std::vector<double> solve_system(const MacroMesh& mesh, const std::vector<Mat2>& S, const std::vector<double>& rhs,
                                 const MacroOptions& options) {
  P1Matrix K(mesh.elements, mesh.num_nodes());
  K.assemble(mesh.elements, S);
  std::vector<double> x(rhs.size(), 0.0);
  const CgResult cg = solve_neumann_cg(K, rhs, x, options.cg_tol, options.cg_max_iter);
  if (!cg.converged) {
    throw NumericalError("macro conjugate gradients did not converge", {cg.relative_residual});
  }
  return x;
}

}  // namespace

MacroSolution solve_linear_darcy(const MacroProblem& problem, const MacroOptions& options) {
  const EffectiveLaw& law = problem.law;
  if (law.kind() != LawKind::linear) throw ParameterError("solve_linear_darcy needs a linear effective law");
  validate(options);
  const MacroMesh& mesh = problem.mesh;
  MacroSolution sol;
  sol.forcing = element_forcing(mesh, problem.force);
  const Mat2 S = law.permeability() * law.prefactor();
  std::vector<Mat2> coeffs(mesh.elements.size(), S);
  std::vector<double> rhs(mesh.nodes.size(), 0.0);
  for (std::size_t t = 0; t < mesh.elements.size(); ++t) {
    const P1Element& el = mesh.elements[t];
    const Vec2 Sf = S * sol.forcing[t];
    for (std::size_t a = 0; a < 3; ++a) rhs[idx(el.dofs[a])] += el.area * dot(Sf, el.grads[a]);
  }
  sol.p = solve_system(mesh, coeffs, rhs, options);
  remove_weighted_mean(sol.p, mesh.lumped_mass);
  sol.V.resize(mesh.elements.size());
  sol.delta.resize(mesh.elements.size());
  for (std::size_t t = 0; t < mesh.elements.size(); ++t) {
    sol.delta[t] = driving(sol.forcing[t], mesh.elements[t], sol.p);
    sol.V[t] = S * sol.delta[t];
  }
  sol.iterations = 1;
  finish(mesh, sol);
  double bscale = 0.0;
  for (std::size_t t = 0; t < mesh.elements.size(); ++t) {
    const P1Element& el = mesh.elements[t];
    for (std::size_t a = 0; a < 3; ++a) bscale += std::pow(el.area * dot(S * sol.forcing[t], el.grads[a]), 2);
  }
  const std::vector<double> r = darcy_residual(mesh, sol.V);
  sol.residual = bscale > 0.0 ? norm2(r) / std::sqrt(bscale) : 0.0;
  sol.residual_history = {sol.residual};
  return sol;
}

MacroSolution solve_nonlinear_darcy(const MacroProblem& problem, const MacroOptions& options) {
  const MacroMesh& mesh = problem.mesh;
  const std::vector<Vec2> f = element_forcing(mesh, problem.force);
  double fscale = 0.0;
  for (const Vec2& v : f) fscale = std::max(fscale, norm(v));
  const bool symmetric = problem.law.mesh() == nullptr || problem.law.mesh()->geometry.square_symmetric();
  const double quantum = std::min(problem.law.cache_quantum(), 1e-2 * options.tol * std::max(fscale, 1e-300));
  return solve_nonlinear_darcy(problem, flux_map_strategy(problem.law, symmetric, 64, options.threads, quantum),
                               options);
}

MacroSolution solve_nonlinear_darcy(const MacroProblem& problem, const EvaluationPlan& plan,
                                    const MacroOptions& options) {
  validate(options);
  const MacroMesh& mesh = problem.mesh;
  const std::size_t ne = mesh.elements.size();
  const std::int64_t solves0 = plan.law().cell_solves();
  MacroSolution sol;
  sol.forcing = element_forcing(mesh, problem.force);
  sol.p.assign(mesh.nodes.size(), 0.0);

  auto evaluate = [&](const std::vector<double>& p, std::vector<Vec2>& delta, std::vector<Vec2>& V) {
    delta.resize(ne);
    V.resize(ne);
    for (std::size_t t = 0; t < ne; ++t) delta[t] = driving(sol.forcing[t], mesh.elements[t], p);
    detail::parallel_for(static_cast<int>(ne), options.threads, [&](int t) { V[idx(t)] = plan(delta[idx(t)]); });
  };

  evaluate(sol.p, sol.delta, sol.V);
  double ref = 0.0;
  for (std::size_t t = 0; t < ne; ++t) {
    const P1Element& el = mesh.elements[t];
    for (std::size_t a = 0; a < 3; ++a) ref += std::pow(el.area * dot(sol.V[t], el.grads[a]), 2);
  }
  ref = std::sqrt(ref);
  if (ref == 0.0) {
    finish(mesh, sol);
    return sol;
  }

  double fscale = 0.0;
  for (const Vec2& v : sol.forcing) fscale = std::max(fscale, norm(v));
  const double floor = std::max(1e-12 * fscale, std::numeric_limits<double>::min());
  const Vec2 probe{floor, 0.0};
  const double probe_mobility = dot(plan(probe), probe) / (floor * floor);

  std::vector<double> r = darcy_residual(mesh, sol.V);
  double rel = norm2(r) / ref;
  sol.residual_history.push_back(rel);
  double omega = options.omega;
  std::vector<Mat2> coeffs(ne);
  std::vector<Vec2> delta_trial, V_trial;
  while (rel > options.tol) {
    if (sol.iterations >= options.max_outer) {
      throw NumericalError("macro Picard iteration did not converge in " + std::to_string(options.max_outer) +
                               " outer iterations (relative residual " + std::to_string(rel) + ")",
                           sol.residual_history);
    }
    for (std::size_t t = 0; t < ne; ++t) {
      if (plan.kind() == PlanKind::direct_linear) {
        coeffs[t] = plan.law().permeability() * plan.law().prefactor();
      } else {
        const double s = norm(sol.delta[t]);
        coeffs[t] = Mat2::scalar(s > floor ? dot(sol.V[t], sol.delta[t]) / (s * s) : probe_mobility);
      }
    }
    const std::vector<double> dp = solve_system(mesh, coeffs, r, options);
    for (;;) {
      std::vector<double> trial = sol.p;
      for (std::size_t i = 0; i < trial.size(); ++i) trial[i] += omega * dp[i];
      remove_weighted_mean(trial, mesh.lumped_mass);
      evaluate(trial, delta_trial, V_trial);
      std::vector<double> r_trial = darcy_residual(mesh, V_trial);
      const double rel_trial = norm2(r_trial) / ref;
      if (rel_trial <= rel || omega < 1.0 / 1024.0) {
        sol.p = std::move(trial);
        sol.delta.swap(delta_trial);
        sol.V.swap(V_trial);
        r = std::move(r_trial);
        rel = rel_trial;
        omega = std::min(options.omega, 2.0 * omega);
        break;
      }
      omega *= 0.5;
    }
    ++sol.iterations;
    sol.residual_history.push_back(rel);
  }
  sol.residual = rel;
  sol.cell_solves = plan.law().cell_solves() - solves0 + plan.table_solves();
  finish(mesh, sol);
  return sol;
}

MacroSolution solve_darcy(const MacroProblem& problem, const MacroOptions& options) {
  if (problem.law.kind() == LawKind::linear) return solve_linear_darcy(problem, options);
  return solve_nonlinear_darcy(problem, options);
}

}  // namespace vtpm
