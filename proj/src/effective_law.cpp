#include <cmath>
#include <map>
#include <mutex>

#include "vtpm/cellsolve.hpp"
#include "vtpm/errors.hpp"

namespace vtpm {

struct EffectiveLaw::SharedState {
  std::mutex mutex;
  std::map<std::pair<std::int64_t, std::int64_t>, Vec2> cache;
  std::atomic<std::int64_t> solves{0};
};

EffectiveLaw EffectiveLaw::linear(const PermeabilityTensor& permeability, double eta,
                                  std::shared_ptr<const PeriodicMesh> mesh) {
  if (!(eta > 0.0)) throw ParameterError("viscosity of the linear law must be positive");
  EffectiveLaw law;
  law.kind_ = LawKind::linear;
  law.prefactor_ = 1.0 / (6.0 * eta);
  law.permeability_ = permeability.matrix;
  law.linear_correctors_ = {permeability.correctors[0].q, permeability.correctors[1].q};
  law.mesh_ = std::move(mesh);
  law.state_ = std::make_shared<SharedState>();
  return law;
}

EffectiveLaw EffectiveLaw::power_law(std::shared_ptr<const PeriodicMesh> mesh, const FluidParams& params,
                                     const CellSolverOptions& options) {
  params.validate();
  EffectiveLaw law;
  law.kind_ = LawKind::power_law;
  law.params_ = params;
  law.prefactor_ = powerlaw_prefactor(params);
  law.r_prime_ = params.conjugate();
  law.solver_ = std::make_shared<const CellSolver>(*mesh, options);
  law.mesh_ = std::move(mesh);
  law.state_ = std::make_shared<SharedState>();
  return law;
}

EffectiveLaw EffectiveLaw::carreau(std::shared_ptr<const PeriodicMesh> mesh, const FluidParams& params,
                                   const MobilityQuadrature& quad, const CellSolverOptions& options) {
  params.validate();
  quad.validate();
  EffectiveLaw law;
  law.kind_ = LawKind::carreau;
  law.params_ = params;
  law.quad_ = quad;
  law.prefactor_ = 1.0;
  law.solver_ = std::make_shared<const CellSolver>(*mesh, options);
  law.mesh_ = std::move(mesh);
  law.state_ = std::make_shared<SharedState>();
  return law;
}

FluxDensity EffectiveLaw::density(Vec2 delta) const {
  switch (kind_) {
    case LawKind::linear: return linear_density();
    case LawKind::power_law: return power_density(r_prime_, powerlaw_regularization(delta));
    case LawKind::carreau: return carreau_density(params_, quad_);
  }
  return linear_density();
}

CellSolution EffectiveLaw::cell_solution(Vec2 delta) const {
  if (kind_ == LawKind::linear) {
    CellSolution sol;
    sol.delta = delta;
    sol.q.resize(linear_correctors_[0].size());
    for (std::size_t i = 0; i < sol.q.size(); ++i) {
      sol.q[i] = delta.x * linear_correctors_[0][i] + delta.y * linear_correctors_[1][i];
    }
    return sol;
  }
  state_->solves.fetch_add(1);
  return solver_->solve(density(delta), delta);
}

Vec2 EffectiveLaw::solve_flux(Vec2 delta) const {
  if (delta.x == 0.0 && delta.y == 0.0) return {};
  const CellSolution sol = cell_solution(delta);
  return solver_->flux(density(delta), delta, sol.q);
}

Vec2 EffectiveLaw::cell_flux(Vec2 delta) const {
  if (kind_ == LawKind::linear) return permeability_ * delta;
  return solve_flux(delta);
}

Vec2 EffectiveLaw::evaluate_exact(Vec2 delta) const { return prefactor_ * cell_flux(delta); }

Vec2 EffectiveLaw::operator()(Vec2 delta) const {
  if (kind_ == LawKind::linear || quantum_ <= 0.0) return evaluate_exact(delta);
  const std::pair<std::int64_t, std::int64_t> key{std::llround(delta.x / quantum_), std::llround(delta.y / quantum_)};
  {
    std::lock_guard lock(state_->mutex);
    if (auto it = state_->cache.find(key); it != state_->cache.end()) return it->second;
  }
  const Vec2 centre{static_cast<double>(key.first) * quantum_, static_cast<double>(key.second) * quantum_};
  const Vec2 value = evaluate_exact(centre);
  std::lock_guard lock(state_->mutex);
  state_->cache.emplace(key, value);
  return value;
}

EffectiveLaw EffectiveLaw::with_cache_quantum(double quantum) const {
  if (!(quantum >= 0.0)) throw ParameterError("cache quantum must be non-negative");
  EffectiveLaw copy = *this;
  copy.quantum_ = quantum;
  copy.state_ = std::make_shared<SharedState>();
  return copy;
}

std::size_t EffectiveLaw::cache_size() const {
  std::lock_guard lock(state_->mutex);
  return state_->cache.size();
}

std::int64_t EffectiveLaw::cell_solves() const noexcept { return state_->solves.load(); }

EffectiveLaw effective_law(std::shared_ptr<const PeriodicMesh> mesh, LimitModelKind kind, const FluidParams& params,
                           const MobilityQuadrature& quad, const CellSolverOptions& options) {
  params.validate();
  if (limit_model_kind(params.r, params.gamma) != kind) {
    throw ParameterError("limit model " + to_string(kind) + " is inconsistent with r = " + params.r.to_string() +
                         ", gamma = " + params.gamma.to_string());
  }
  switch (kind) {
    case LimitModelKind::newtonian_zero_shear:
    case LimitModelKind::newtonian_infinite_shear:
      return EffectiveLaw::linear(permeability_tensor(*mesh, options), newtonian_viscosity(kind, params), mesh);
    case LimitModelKind::power_law: return EffectiveLaw::power_law(std::move(mesh), params, options);
    case LimitModelKind::carreau: return EffectiveLaw::carreau(std::move(mesh), params, quad, options);
  }
  throw ParameterError("unknown limit model");
}

}  // namespace vtpm
