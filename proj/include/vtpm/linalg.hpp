#pragma once

#include <array>
#include <span>
#include <vector>

#include "vtpm/vec.hpp"

namespace vtpm {

/// P1 triangle data: degree-of-freedom indices, constant basis gradients, area.
struct P1Element {
  std::array<int, 3> dofs{};
  std::array<Vec2, 3> grads{};
  double area = 0.0;

  /// Gradient of the P1 field with nodal values u.
  Vec2 gradient(std::span<const double> u) const {
    Vec2 g;
    for (int a = 0; a < 3; ++a) g += u[static_cast<std::size_t>(dofs[static_cast<std::size_t>(a)])] * grads[static_cast<std::size_t>(a)];
    return g;
  }
};

/// Builds a P1 element from counter-clockwise vertex coordinates.
P1Element make_p1_element(std::array<int, 3> dofs, Vec2 a, Vec2 b, Vec2 c);

/// Symmetric sparse matrix in compressed-row form whose pattern is fixed by a
/// set of P1 elements; values are reassembled in place.
class P1Matrix {
 public:
  P1Matrix(std::span<const P1Element> elements, int num_dofs);

  /// Assembles sum_T area_T * (S_T grad phi_b) . grad phi_a with one 2x2
  /// coefficient tensor per element.
  void assemble(std::span<const P1Element> elements, std::span<const Mat2> coefficients);

  void multiply(std::span<const double> x, std::span<double> y) const;
  std::vector<double> diagonal() const;
  int size() const noexcept { return n_; }

 private:
  int n_ = 0;
  std::vector<int> row_ptr_;
  std::vector<int> cols_;
  std::vector<double> vals_;
  std::vector<std::array<int, 9>> slots_;  ///< element-local (a, b) -> value index
};

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
};

/// Jacobi-preconditioned conjugate gradients for a singular Neumann-type
/// system whose kernel is the constants: the right-hand side, residual and
/// preconditioned residual are projected orthogonal to constants every
/// iteration. `x` holds the initial guess on entry.
CgResult solve_neumann_cg(const P1Matrix& matrix, std::span<const double> rhs, std::span<double> x, double rel_tol,
                          int max_iter);

/// Shifts u so that sum_i weight_i u_i = 0.
void remove_weighted_mean(std::span<double> u, std::span<const double> weights);

double norm2(std::span<const double> v);

}  // namespace vtpm
