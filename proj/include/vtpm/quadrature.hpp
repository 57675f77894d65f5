#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "vtpm/errors.hpp"

namespace vtpm {

/// Gauss-Legendre nodes and weights on [-1, 1].
struct GaussLegendreRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Rules are computed once per node count and cached for the process lifetime.
const GaussLegendreRule& gauss_legendre(int n);

/// Settings of the adaptive panel quadrature used for the mobility integrals.
struct MobilityQuadrature {
  int nodes = 16;          ///< Gauss-Legendre nodes per panel
  double rel_tol = 1e-10;  ///< panel acceptance tolerance relative to the integral
  int max_levels = 40;     ///< maximum panel halvings

  void validate() const;
};

/// Integrates a K-component integrand over [a, b] by recursive panel halving:
/// a panel is accepted once its single-panel estimate and the sum over its two
/// halves agree to `rel_tol` relative to the magnitude of the whole integral.
template <std::size_t K, class F>
std::array<double, K> adaptive_gauss_legendre(F&& f, double a, double b, const MobilityQuadrature& q) {
  const GaussLegendreRule& rule = gauss_legendre(q.nodes);
  auto panel = [&](double lo, double hi) {
    std::array<double, K> sum{};
    const double half = 0.5 * (hi - lo);
    const double mid = 0.5 * (hi + lo);
    for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
      const std::array<double, K> v = f(mid + half * rule.nodes[i]);
      for (std::size_t k = 0; k < K; ++k) sum[k] += rule.weights[i] * v[k];
    }
    for (auto& s : sum) s *= half;
    return sum;
  };

  struct Panel {
    double lo, hi;
    std::array<double, K> estimate;
    int level;
  };

  const std::array<double, K> whole = panel(a, b);
  std::array<double, K> scale{};
  for (std::size_t k = 0; k < K; ++k) scale[k] = std::abs(whole[k]);

  std::array<double, K> total{};
  std::vector<Panel> stack{{a, b, whole, 0}};
  while (!stack.empty()) {
    Panel p = stack.back();
    stack.pop_back();
    const double mid = 0.5 * (p.lo + p.hi);
    const auto left = panel(p.lo, mid);
    const auto right = panel(mid, p.hi);
    bool accepted = true;
    for (std::size_t k = 0; k < K; ++k) {
      const double diff = std::abs(left[k] + right[k] - p.estimate[k]);
      const double tol = q.rel_tol * std::max(scale[k], 1e-300);
      if (diff > tol) accepted = false;
    }
    if (accepted) {
      for (std::size_t k = 0; k < K; ++k) total[k] += left[k] + right[k];
      continue;
    }
    if (p.level + 1 >= q.max_levels) {
      throw NumericalError("adaptive quadrature exceeded the maximum refinement level");
    }
    // Refine the widened estimate: the scale is re-based on the sharper sum.
    for (std::size_t k = 0; k < K; ++k) {
      scale[k] = std::max(scale[k], std::abs(left[k] + right[k]));
    }
    stack.push_back({mid, p.hi, right, p.level + 1});
    stack.push_back({p.lo, mid, left, p.level + 1});
  }
  return total;
}

}  // namespace vtpm
