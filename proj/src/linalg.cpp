#include "vtpm/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vtpm/errors.hpp"

namespace vtpm {

P1Element make_p1_element(std::array<int, 3> dofs, Vec2 a, Vec2 b, Vec2 c) {
  P1Element e;
  e.dofs = dofs;
  const double twice_area = cross(b - a, c - a);
  if (!(twice_area > 0.0)) throw GeometryError("degenerate or clockwise triangle");
  e.area = 0.5 * twice_area;
  const std::array<Vec2, 3> p{a, b, c};
  for (std::size_t i = 0; i < 3; ++i) {
    const Vec2 q = p[(i + 1) % 3];
    const Vec2 r = p[(i + 2) % 3];
    // Gradient of the hat function is the inward normal of the opposite edge.
    e.grads[i] = Vec2{q.y - r.y, r.x - q.x} * (1.0 / twice_area);
  }
  return e;
}

P1Matrix::P1Matrix(std::span<const P1Element> elements, int num_dofs) : n_(num_dofs) {
  std::vector<std::vector<int>> rows(static_cast<std::size_t>(n_));
  for (const auto& e : elements) {
    for (int a : e.dofs) {
      for (int b : e.dofs) rows[static_cast<std::size_t>(a)].push_back(b);
    }
  }
  row_ptr_.assign(static_cast<std::size_t>(n_) + 1, 0);
  for (int i = 0; i < n_; ++i) {
    auto& r = rows[static_cast<std::size_t>(i)];
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    row_ptr_[static_cast<std::size_t>(i) + 1] = row_ptr_[static_cast<std::size_t>(i)] + static_cast<int>(r.size());
  }
  cols_.reserve(static_cast<std::size_t>(row_ptr_.back()));
  for (const auto& r : rows) cols_.insert(cols_.end(), r.begin(), r.end());
  vals_.assign(cols_.size(), 0.0);

  slots_.reserve(elements.size());
  for (const auto& e : elements) {
    std::array<int, 9> s{};
    for (int a = 0; a < 3; ++a) {
      const int row = e.dofs[static_cast<std::size_t>(a)];
      const auto first = cols_.begin() + row_ptr_[static_cast<std::size_t>(row)];
      const auto last = cols_.begin() + row_ptr_[static_cast<std::size_t>(row) + 1];
      for (int b = 0; b < 3; ++b) {
        const auto it = std::lower_bound(first, last, e.dofs[static_cast<std::size_t>(b)]);
        s[static_cast<std::size_t>(3 * a + b)] = static_cast<int>(it - cols_.begin());
      }
    }
    slots_.push_back(s);
  }
}

void P1Matrix::assemble(std::span<const P1Element> elements, std::span<const Mat2> coefficients) {
  std::fill(vals_.begin(), vals_.end(), 0.0);
  for (std::size_t t = 0; t < elements.size(); ++t) {
    const auto& e = elements[t];
    const Mat2& s = coefficients[t];
    for (std::size_t b = 0; b < 3; ++b) {
      const Vec2 flux = s * e.grads[b];
      for (std::size_t a = 0; a < 3; ++a) {
        vals_[static_cast<std::size_t>(slots_[t][3 * a + b])] += e.area * dot(flux, e.grads[a]);
      }
    }
  }
}

void P1Matrix::multiply(std::span<const double> x, std::span<double> y) const {
  for (int i = 0; i < n_; ++i) {
    double s = 0.0;
    for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
      s += vals_[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(cols_[static_cast<std::size_t>(k)])];
    }
    y[static_cast<std::size_t>(i)] = s;
  }
}

std::vector<double> P1Matrix::diagonal() const {
  std::vector<double> d(static_cast<std::size_t>(n_), 0.0);
  for (int i = 0; i < n_; ++i) {
    for (int k = row_ptr_[static_cast<std::size_t>(i)]; k < row_ptr_[static_cast<std::size_t>(i) + 1]; ++k) {
      if (cols_[static_cast<std::size_t>(k)] == i) d[static_cast<std::size_t>(i)] = vals_[static_cast<std::size_t>(k)];
    }
  }
  return d;
}

namespace {

void project_constants(std::span<double> v) {
  if (v.empty()) return;
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  for (auto& x : v) x -= mean;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace

double norm2(std::span<const double> v) { return std::sqrt(dot(v, v)); }

void remove_weighted_mean(std::span<double> u, std::span<const double> weights) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    num += weights[i] * u[i];
    den += weights[i];
  }
  if (den <= 0.0) return;
  const double mean = num / den;
  for (auto& x : u) x -= mean;
}

CgResult solve_neumann_cg(const P1Matrix& matrix, std::span<const double> rhs, std::span<double> x, double rel_tol,
                          int max_iter) {
  const std::size_t n = static_cast<std::size_t>(matrix.size());
  std::vector<double> b(rhs.begin(), rhs.end());
  project_constants(b);
  const double bnorm = norm2(b);
  CgResult result;
  if (bnorm == 0.0) {
    std::fill(x.begin(), x.end(), 0.0);
    result.converged = true;
    return result;
  }

  std::vector<double> inv_diag = matrix.diagonal();
  for (auto& d : inv_diag) d = d > 0.0 ? 1.0 / d : 1.0;

  std::vector<double> r(n), z(n), p(n), ap(n);
  matrix.multiply(x, ap);
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - ap[i];
  project_constants(r);
  double rnorm = norm2(r);
  if (rnorm <= rel_tol * bnorm) {
    result.converged = true;
    result.relative_residual = rnorm / bnorm;
    return result;
  }
  for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
  project_constants(z);
  p = z;
  double rz = dot(r, z);

  for (int it = 1; it <= max_iter; ++it) {
    matrix.multiply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
    }
    project_constants(r);
    rnorm = norm2(r);
    result.iterations = it;
    result.relative_residual = rnorm / bnorm;
    if (rnorm <= rel_tol * bnorm) {
      result.converged = true;
      return result;
    }
    for (std::size_t i = 0; i < n; ++i) z[i] = inv_diag[i] * r[i];
    project_constants(z);
    const double rz_new = dot(r, z);
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return result;
}

}  // namespace vtpm
