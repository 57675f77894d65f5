#include "vtpm/oracle.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/tanh_sinh.hpp>
#include <boost/math/tools/roots.hpp>
#include <cmath>
#include <random>

#include "vtpm/constitutive.hpp"
#include "vtpm/errors.hpp"

namespace vtpm {
namespace {

// Reduced constitutive law written out independently of the constitutive module.
struct Reduced1D {
  LimitModelKind kind;
  FluidParams params;
  double eta = 1.0;   // Newtonian viscosity
  double K = 1.0;     // power-law consistency

  double viscosity(double y) const {
    switch (kind) {
      case LimitModelKind::newtonian_zero_shear:
      case LimitModelKind::newtonian_infinite_shear: return eta;
      case LimitModelKind::power_law: return K * std::pow(y, params.flow_index() - 2.0);
      case LimitModelKind::carreau:
        return (params.eta0 - params.eta_inf) *
                   std::pow(1.0 + 0.5 * params.lambda * y * y, 0.5 * params.flow_index() - 1.0) +
               params.eta_inf;
    }
    return eta;
  }

  // Shear rate y >= 0 carrying stress magnitude tau >= 0.
  double rate(double tau) const {
    if (tau == 0.0) return 0.0;
    switch (kind) {
      case LimitModelKind::newtonian_zero_shear:
      case LimitModelKind::newtonian_infinite_shear: return tau / eta;
      case LimitModelKind::power_law: return std::pow(tau / K, 1.0 / (params.flow_index() - 1.0));
      case LimitModelKind::carreau: break;
    }
    const bool thinning = params.flow_index() < 2.0;
    double lo = thinning ? tau / params.eta0 : 0.0;
    double hi = thinning ? tau / params.eta_inf : tau / params.eta0;
    auto f = [&](double y) { return viscosity(y) * y - tau; };
    const double flo = f(lo), fhi = f(hi);
    if (flo >= 0.0) return lo;
    if (fhi <= 0.0) return hi;
    std::uintmax_t iters = 200;
    const auto bracket =
        boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, boost::math::tools::eps_tolerance<double>(52), iters);
    return 0.5 * (bracket.first + bracket.second);
  }

  double slope(double sigma) const { return std::copysign(rate(std::abs(sigma)), sigma); }
};

Reduced1D make_reduced(const FluidParams& params, LimitModelKind kind) {
  Reduced1D law{kind, params};
  switch (kind) {
    case LimitModelKind::newtonian_zero_shear: law.eta = params.eta0; break;
    case LimitModelKind::newtonian_infinite_shear: law.eta = params.eta_inf; break;
    case LimitModelKind::power_law: {
      const double r = params.flow_index();
      if (!(r > 2.0)) throw ParameterError("power-law oracle needs r > 2");
      // Large-rate limit of the reduced Carreau viscosity without eta_inf.
      law.K = (params.eta0 - params.eta_inf) * std::pow(0.5 * params.lambda, 0.5 * (r - 2.0));
      break;
    }
    case LimitModelKind::carreau: break;
  }
  return law;
}

}  // namespace

BvpProfile bvp_profile_oracle(Vec2 g, const FluidParams& params, LimitModelKind kind, int n) {
  params.validate();
  if (n < 64) throw ParameterError("profile oracle needs at least 64 grid points");
  const double s = norm(g);
  if (kind == LimitModelKind::power_law && s == 0.0) throw ParameterError("power-law oracle is degenerate at g = 0");
  const Reduced1D law = make_reduced(params, kind);

  BvpProfile out;
  out.profile.g = g;
  out.profile.kind = kind == LimitModelKind::carreau     ? LawKind::carreau
                     : kind == LimitModelKind::power_law ? LawKind::power_law
                                                         : LawKind::linear;
  for (int k = 0; k < n; ++k) out.profile.z3.push_back(k == n - 1 ? 1.0 : static_cast<double>(k) / (n - 1));
  out.profile.w.assign(static_cast<std::size_t>(n), Vec2{});
  if (s == 0.0) return out;
  const Vec2 dir = (1.0 / s) * g;

  boost::math::quadrature::tanh_sinh<double> integrator;
  const double qtol = 1e-15;
  // int_a^b f(z) sigma-slope dz, split where the stress changes sign.
  auto integrate = [&](double c, double a, double b, auto&& weight) {
    auto f = [&](double z) { return weight(z) * law.slope(c + 2.0 * s * z); };
    const double z0 = -c / (2.0 * s);
    if (a < z0 && z0 < b) return integrator.integrate(f, a, z0, qtol) + integrator.integrate(f, z0, b, qtol);
    return b > a ? integrator.integrate(f, a, b, qtol) : 0.0;
  };
  auto one = [](double) { return 1.0; };
  auto total_slope = [&](double c) { return integrate(c, 0.0, 1.0, one); };

  // The slope integral increases with c; it is negative at c = -2s and positive at c = 0.
  std::uintmax_t iters = 200;
  const auto bracket = boost::math::tools::toms748_solve(total_slope, -2.0 * s, 0.0, total_slope(-2.0 * s),
                                                         total_slope(0.0),
                                                         boost::math::tools::eps_tolerance<double>(52), iters);
  if (iters >= 200) throw NumericalError("profile oracle root finding did not converge", {bracket.first, bracket.second});
  const double c = 0.5 * (bracket.first + bracket.second);
  out.stress_offset = c;

  double w = 0.0;
  for (int k = 1; k < n; ++k) {
    const double a = out.profile.z3[static_cast<std::size_t>(k - 1)], b = out.profile.z3[static_cast<std::size_t>(k)];
    w += integrate(c, a, b, one);
    out.profile.w[static_cast<std::size_t>(k)] = w * dir;
  }
  // The wall value at z3 = 1 is zero by construction of c.
  out.profile.w.back() = Vec2{};
  const double mean = integrate(c, 0.0, 1.0, [](double z) { return 1.0 - z; });
  out.mean = mean * dir;

  for (double z : out.profile.z3) {
    const double sigma = c + 2.0 * s * z;
    const double y = law.slope(sigma);
    const double recovered = law.viscosity(std::abs(y)) * y;
    out.affinity_error = std::max(out.affinity_error, std::abs(recovered - sigma) / std::max(1.0, s));
  }
  return out;
}

OracleReport compare_profile(const ProfileLaw& law, const BvpProfile& reference, LimitModelKind kind) {
  OracleReport report;
  report.kind = kind;
  report.grid = static_cast<int>(reference.profile.z3.size());
  for (std::size_t k = 0; k < reference.profile.z3.size(); ++k) {
    const Vec2 w = law(reference.profile.g, reference.profile.z3[k]);
    report.sup_error = std::max(report.sup_error, norm(w - reference.profile.w[k]));
  }
  report.mean_error = norm(law.mean(reference.profile.g) - reference.mean);
  return report;
}

CellSolution dense_energy_cell_oracle(const CellGeometry& geom, int n, Vec2 delta, LawKind kind,
                                      const FluidParams& params) {
  if (n > 16) throw ParameterError("dense cell oracle is limited to n <= 16");
  const PeriodicMesh mesh = build_cell_mesh(geom, n);
  const int N = mesh.num_dofs;

  struct Tri {
    std::array<int, 3> dof;
    std::array<Vec2, 3> grad;
    double area;
  };
  std::vector<Tri> tris;
  Eigen::VectorXd weight = Eigen::VectorXd::Zero(N);
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    if (!mesh.fluid[t]) continue;
    const auto& v = mesh.triangles[t];
    Tri tri;
    const Vec2 p[3] = {mesh.vertices[static_cast<std::size_t>(v[0])], mesh.vertices[static_cast<std::size_t>(v[1])],
                       mesh.vertices[static_cast<std::size_t>(v[2])]};
    const double twice = (p[1].x - p[0].x) * (p[2].y - p[0].y) - (p[2].x - p[0].x) * (p[1].y - p[0].y);
    tri.area = 0.5 * std::abs(twice);
    for (int a = 0; a < 3; ++a) {
      const Vec2 pb = p[(a + 1) % 3], pc = p[(a + 2) % 3];
      tri.grad[static_cast<std::size_t>(a)] = {(pb.y - pc.y) / twice, (pc.x - pb.x) / twice};
      tri.dof[static_cast<std::size_t>(a)] = mesh.dof_map[static_cast<std::size_t>(v[static_cast<std::size_t>(a)])];
      weight[tri.dof[static_cast<std::size_t>(a)]] += tri.area / 3.0;
    }
    tris.push_back(tri);
  }

  const double eps = 1e-8 * std::max(1.0, norm(delta));
  const double rp = kind == LawKind::power_law ? params.conjugate() : 2.0;
  MobilityQuadrature quad;
  quad.rel_tol = 1e-13;
  // Phi(s), m(s) = Phi'(s)/s and dm/ds.
  struct Density {
    double phi, m, dm;
  };
  auto density = [&](double s) -> Density {
    switch (kind) {
      case LawKind::linear: return {0.5 * s * s, 1.0, 0.0};
      case LawKind::power_law: {
        const double q = s * s + eps * eps;
        return {std::pow(q, 0.5 * rp) / rp, std::pow(q, 0.5 * rp - 1.0), (rp - 2.0) * s * std::pow(q, 0.5 * rp - 2.0)};
      }
      case LawKind::carreau: {
        const MobilityValue v = mobility_and_potential(s, params, quad);
        const double h = 1e-4 * std::max(s, 1e-2);
        const double dm = s == 0.0 ? 0.0
                                   : (mobility(s + h, params, quad) - mobility(std::max(s - h, 0.0), params, quad)) /
                                         (s + h - std::max(s - h, 0.0));
        return {v.potential, v.mobility, dm};
      }
    }
    return {0.0, 1.0, 0.0};
  };

  auto field_gradient = [&](const Tri& t, const Eigen::VectorXd& q) {
    Vec2 g = delta;
    for (int a = 0; a < 3; ++a) g += q[t.dof[static_cast<std::size_t>(a)]] * t.grad[static_cast<std::size_t>(a)];
    return g;
  };
  auto energy = [&](const Eigen::VectorXd& q) {
    double J = 0.0;
    for (const Tri& t : tris) J += t.area * density(norm(field_gradient(t, q))).phi;
    return J;
  };
  auto gradient_hessian = [&](const Eigen::VectorXd& q, Eigen::VectorXd& G, Eigen::MatrixXd* H) {
    G.setZero(N);
    if (H) H->setZero(N, N);
    for (const Tri& t : tris) {
      const Vec2 g = field_gradient(t, q);
      const double s = norm(g);
      const Density d = density(s);
      for (int a = 0; a < 3; ++a) {
        const Vec2 ga = t.grad[static_cast<std::size_t>(a)];
        G[t.dof[static_cast<std::size_t>(a)]] += t.area * d.m * dot(g, ga);
        if (!H) continue;
        for (int b = 0; b < 3; ++b) {
          const Vec2 gb = t.grad[static_cast<std::size_t>(b)];
          double hab = d.m * dot(ga, gb);
          if (s > 0.0) hab += d.dm / s * dot(g, ga) * dot(g, gb);
          (*H)(t.dof[static_cast<std::size_t>(a)], t.dof[static_cast<std::size_t>(b)]) += t.area * hab;
        }
      }
    }
  };

  CellSolution sol;
  sol.delta = delta;
  sol.law = kind == LawKind::linear ? CellLaw::linear : kind == LawKind::power_law ? CellLaw::power_law : CellLaw::carreau;
  sol.regularization = kind == LawKind::power_law ? eps : 0.0;
  Eigen::VectorXd q = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd G;
  Eigen::MatrixXd H;
  gradient_hessian(q, G, &H);
  const double g0 = G.norm();
  const double scale = std::max(1.0, g0);
  double J = energy(q);
  sol.energy_history.push_back(J);
  sol.residual_history.push_back(G.norm() / scale);
  const Eigen::MatrixXd constraint = weight * weight.transpose();
  for (int it = 0; it < 100 && G.norm() > 1e-13 * scale; ++it) {
    const Eigen::VectorXd step = (H + constraint).ldlt().solve(-G);
    const double slope = G.dot(step);
    double alpha = 1.0;
    Eigen::VectorXd trial;
    Eigen::VectorXd Gt;
    double Jt = 0.0;
    bool accepted = false;
    while (alpha > 1e-12) {
      trial = q + alpha * step;
      Jt = energy(trial);
      gradient_hessian(trial, Gt, nullptr);
      if (Jt <= J + 1e-4 * alpha * slope || Gt.norm() < G.norm()) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    q = trial;
    J = Jt;
    gradient_hessian(q, G, &H);
    sol.iterations = it + 1;
    sol.energy_history.push_back(J);
    sol.residual_history.push_back(G.norm() / scale);
  }
  sol.residual = G.norm() / scale;
  if (!(G.norm() <= 1e-10 * scale)) {
    throw NumericalError("dense energy oracle stalled before reaching the gradient tolerance", sol.residual_history);
  }
  // Pin the representative: zero lumped-mass mean.
  const double mean = weight.dot(q) / weight.sum();
  sol.q.resize(static_cast<std::size_t>(N));
  for (int i = 0; i < N; ++i) sol.q[static_cast<std::size_t>(i)] = q[i] - mean;
  return sol;
}

double fd_gradient_check(const std::function<double(std::span<const double>)>& energy,
                         const std::function<std::vector<double>(std::span<const double>)>& gradient,
                         std::span<const double> x, double h_fd, int directions, std::uint64_t seed) {
  if (!(h_fd >= 1e-7 && h_fd <= 1e-4)) throw ParameterError("finite-difference step must lie in [1e-7, 1e-4]");
  const std::size_t n = x.size();
  const std::vector<double> G = gradient(x);
  double gnorm = 0.0;
  for (double v : G) gnorm += v * v;
  gnorm = std::sqrt(gnorm);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  double worst = 0.0;
  std::vector<double> plus(n), minus(n), d(n);
  for (int k = 0; k < directions; ++k) {
    double dnorm = 0.0, gd = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      d[i] = normal(rng);
      dnorm += d[i] * d[i];
    }
    dnorm = std::sqrt(dnorm);
    for (std::size_t i = 0; i < n; ++i) {
      d[i] /= dnorm;
      gd += G[i] * d[i];
      plus[i] = x[i] + h_fd * d[i];
      minus[i] = x[i] - h_fd * d[i];
    }
    const double fd = (energy(plus) - energy(minus)) / (2.0 * h_fd);
    const double denom = std::max(std::abs(gd), gnorm / static_cast<double>(std::max<std::size_t>(n, 1)));
    if (denom == 0.0) continue;
    worst = std::max(worst, std::abs(fd - gd) / denom);
  }
  return worst;
}

double fd_check_cell_energy(const CellSolver& solver, const FluxDensity& density, Vec2 delta, double h_fd,
                            std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::uniform_real_distribution<double> uni(-1.0, 1.0);
  std::vector<double> q(static_cast<std::size_t>(solver.mesh().num_dofs));
  for (double& v : q) v = uni(rng);
  return fd_gradient_check([&](std::span<const double> u) { return solver.energy(density, delta, u); },
                           [&](std::span<const double> u) { return solver.residual(density, delta, u); }, q, h_fd, 20,
                           seed);
}

}  // namespace vtpm
