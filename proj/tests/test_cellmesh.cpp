#include <cmath>
#include <numeric>
#include <set>

#include "doctest.h"
#include "vtpm/cellmesh.hpp"
#include "vtpm/errors.hpp"
#include "vtpm/linalg.hpp"

using namespace vtpm;

TEST_CASE("empty cell mesh covers the unit cell") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::empty(), 8);
  CHECK(m.vertices.size() == 81);
  CHECK(m.triangles.size() == 128);
  CHECK(m.num_dofs == 64);
  CHECK(m.fluid_area == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.h == doctest::Approx(std::sqrt(2.0) / 8.0));
  double mass = std::accumulate(m.lumped_mass.begin(), m.lumped_mass.end(), 0.0);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-14));
  for (std::size_t t = 0; t < m.triangles.size(); ++t) CHECK(m.triangle_area(static_cast<int>(t)) > 0.0);
}

TEST_CASE("opposite edges share dofs") {
  const int n = 6;
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.2), n);
  for (int j = 0; j <= n; ++j) {
    const int left = j * (n + 1);
    const int right = j * (n + 1) + n;
    CHECK(m.dof_map[static_cast<std::size_t>(left)] == m.dof_map[static_cast<std::size_t>(right)]);
    const int bottom = j;
    const int top = n * (n + 1) + j;
    CHECK(m.dof_map[static_cast<std::size_t>(bottom)] == m.dof_map[static_cast<std::size_t>(top)]);
  }
}

TEST_CASE("disk obstacle marks centroid triangles as solid") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 32);
  int solid = 0;
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const bool inside = obstacle_indicator(m.geometry, m.centroid(static_cast<int>(t)));
    CHECK(static_cast<bool>(m.fluid[t]) == !inside);
    solid += inside ? 1 : 0;
  }
  CHECK(solid > 0);
  CHECK(m.fluid_triangles.size() + static_cast<std::size_t>(solid) == m.triangles.size());
  // Staircase area converges to 1 - pi r^2.
  CHECK(std::abs(m.fluid_area - (1.0 - M_PI * 0.0625)) < 0.02);
  CHECK(m.num_dofs < static_cast<int>(32 * 32));
}

TEST_CASE("mesh is invariant under the square symmetry group") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::square(0.2), 10);
  std::set<std::pair<long, long>> centroids;
  auto key = [](Vec2 c) { return std::pair<long, long>{std::lround(c.x * 1e9), std::lround(c.y * 1e9)}; };
  for (int t : m.fluid_triangles) centroids.insert(key(m.centroid(t)));
  for (int t : m.fluid_triangles) {
    const Vec2 c = m.centroid(t);
    CHECK(centroids.count(key({-c.y, c.x})) == 1);
    CHECK(centroids.count(key({c.x, -c.y})) == 1);
  }
}

TEST_CASE("locate finds the triangle containing a point") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::disk(0.25), 8);
  for (Vec2 z : {Vec2{0.0, 0.0}, Vec2{0.37, -0.12}, Vec2{-0.49, 0.49}, Vec2{0.11, 0.4}}) {
    const int t = m.locate(z);
    REQUIRE(t >= 0);
    const auto& tri = m.triangles[static_cast<std::size_t>(t)];
    const Vec2 a = m.vertices[static_cast<std::size_t>(tri[0])];
    const Vec2 b = m.vertices[static_cast<std::size_t>(tri[1])];
    const Vec2 c = m.vertices[static_cast<std::size_t>(tri[2])];
    CHECK(cross(b - a, z - a) >= -1e-14);
    CHECK(cross(c - b, z - b) >= -1e-14);
    CHECK(cross(a - c, z - c) >= -1e-14);
  }
}

TEST_CASE("invalid meshes are rejected") {
  CHECK_THROWS_AS(build_cell_mesh(CellGeometry::empty(), 7), ParameterError);
  CHECK_THROWS_AS(build_cell_mesh(CellGeometry::empty(), 2), ParameterError);
  CHECK_THROWS_AS(build_cell_mesh(CellGeometry::disk(0.5), 8), GeometryError);
  CHECK_THROWS_AS(build_cell_mesh(CellGeometry::disk(-0.1), 8), GeometryError);
  CHECK_THROWS_AS(build_cell_mesh(CellGeometry::square(0.6), 8), GeometryError);
}

TEST_CASE("neumann conjugate gradients on the periodic laplacian") {
  const PeriodicMesh m = build_cell_mesh(CellGeometry::empty(), 16);
  std::vector<P1Element> elements;
  for (int t : m.fluid_triangles) {
    const auto& tri = m.triangles[static_cast<std::size_t>(t)];
    std::array<int, 3> dofs{};
    for (int a = 0; a < 3; ++a) dofs[static_cast<std::size_t>(a)] = m.dof_map[static_cast<std::size_t>(tri[static_cast<std::size_t>(a)])];
    elements.push_back(make_p1_element(dofs, m.vertices[static_cast<std::size_t>(tri[0])],
                                       m.vertices[static_cast<std::size_t>(tri[1])],
                                       m.vertices[static_cast<std::size_t>(tri[2])]));
  }
  P1Matrix matrix(elements, m.num_dofs);
  matrix.assemble(elements, std::vector<Mat2>(elements.size(), Mat2::identity()));

  // Constants lie in the kernel.
  std::vector<double> ones(static_cast<std::size_t>(m.num_dofs), 1.0), y(ones.size());
  matrix.multiply(ones, y);
  CHECK(norm2(y) < 1e-12);

  std::vector<double> exact(ones.size());
  for (std::size_t i = 0; i < exact.size(); ++i) exact[i] = std::sin(0.37 * static_cast<double>(i));
  remove_weighted_mean(exact, ones);
  std::vector<double> rhs(ones.size()), x(ones.size(), 0.0);
  matrix.multiply(exact, rhs);
  const CgResult res = solve_neumann_cg(matrix, rhs, x, 1e-13, 10000);
  CHECK(res.converged);
  remove_weighted_mean(x, ones);
  double err = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) err = std::max(err, std::abs(x[i] - exact[i]));
  CHECK(err < 1e-9);
}
