#include "vtpm/cellmesh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <queue>
#include <sstream>

#include "vtpm/errors.hpp"

namespace vtpm {
namespace {

/// Obstacle test on the point (x / scale, y / scale). For centroids the
/// numerators are small integers, so the comparison is exact and treats
/// symmetric triangles identically.
bool inside_scaled(const CellGeometry& geom, double x, double y, double scale) {
  switch (geom.shape) {
    case ObstacleShape::none: return false;
    case ObstacleShape::disk: {
      const double rs = geom.size * scale;
      return x * x + y * y < rs * rs;
    }
    case ObstacleShape::square: {
      const double hs = geom.size * scale;
      return std::abs(x) < hs && std::abs(y) < hs;
    }
  }
  return false;
}

struct Winding {
  int x = 0;
  int y = 0;
};

/// The fluid graph must be connected on the torus and contain cycles that wind
/// around both periodic directions; otherwise the effective permeability
/// degenerates.
void check_percolation(const PeriodicMesh& mesh) {
  const int n = mesh.n;
  const int np = n + 1;
  std::vector<std::vector<std::pair<int, Winding>>> adj(static_cast<std::size_t>(n * n));
  auto rep = [&](int v) {
    const int i = v % np;
    const int j = v / np;
    return std::pair{(j % n) * n + (i % n), Winding{i / n, j / n}};
  };
  for (int t : mesh.fluid_triangles) {
    const auto& tri = mesh.triangles[static_cast<std::size_t>(t)];
    for (int e = 0; e < 3; ++e) {
      const auto [a, wa] = rep(tri[static_cast<std::size_t>(e)]);
      const auto [b, wb] = rep(tri[static_cast<std::size_t>((e + 1) % 3)]);
      adj[static_cast<std::size_t>(a)].push_back({b, {wb.x - wa.x, wb.y - wa.y}});
      adj[static_cast<std::size_t>(b)].push_back({a, {wa.x - wb.x, wa.y - wb.y}});
    }
  }

  std::vector<std::optional<Winding>> cell(static_cast<std::size_t>(n * n));
  int root = -1;
  for (int v = 0; v < n * n; ++v) {
    if (!adj[static_cast<std::size_t>(v)].empty()) {
      root = v;
      break;
    }
  }
  if (root < 0) throw GeometryError("the cell has no fluid part");

  std::vector<Winding> cycles;
  std::queue<int> queue;
  cell[static_cast<std::size_t>(root)] = Winding{};
  queue.push(root);
  while (!queue.empty()) {
    const int a = queue.front();
    queue.pop();
    const Winding ca = *cell[static_cast<std::size_t>(a)];
    for (const auto& [b, step] : adj[static_cast<std::size_t>(a)]) {
      const Winding expected{ca.x + step.x, ca.y + step.y};
      auto& cb = cell[static_cast<std::size_t>(b)];
      if (!cb) {
        cb = expected;
        queue.push(b);
      } else if (cb->x != expected.x || cb->y != expected.y) {
        cycles.push_back({expected.x - cb->x, expected.y - cb->y});
      }
    }
  }
  for (int v = 0; v < n * n; ++v) {
    if (!adj[static_cast<std::size_t>(v)].empty() && !cell[static_cast<std::size_t>(v)]) {
      throw GeometryError("the fluid part of the cell is disconnected");
    }
  }
  bool spans = false;
  for (std::size_t i = 0; i < cycles.size() && !spans; ++i) {
    for (std::size_t j = i + 1; j < cycles.size(); ++j) {
      if (cycles[i].x * cycles[j].y - cycles[i].y * cycles[j].x != 0) {
        spans = true;
        break;
      }
    }
  }
  if (!spans) {
    throw GeometryError("the fluid part does not connect across periodic copies of the cell");
  }
}

}  // namespace

void CellGeometry::validate() const {
  switch (shape) {
    case ObstacleShape::none: return;
    case ObstacleShape::disk:
      if (!(size > 0.0 && size < 0.5)) {
        throw GeometryError("disk radius must lie in (0, 1/2), got " + std::to_string(size));
      }
      return;
    case ObstacleShape::square:
      if (!(size > 0.0 && size < 0.5)) {
        throw GeometryError("square half width must lie in (0, 1/2), got " + std::to_string(size));
      }
      return;
  }
}

std::string CellGeometry::describe() const {
  std::ostringstream os;
  switch (shape) {
    case ObstacleShape::none: os << "none"; break;
    case ObstacleShape::disk: os << "disk(radius=" << size << ")"; break;
    case ObstacleShape::square: os << "square(half_width=" << size << ")"; break;
  }
  return os.str();
}

bool obstacle_indicator(const CellGeometry& geom, Vec2 z) { return inside_scaled(geom, z.x, z.y, 1.0); }

double PeriodicMesh::triangle_area(int t) const {
  const auto& tri = triangles[static_cast<std::size_t>(t)];
  const Vec2 a = vertices[static_cast<std::size_t>(tri[0])];
  const Vec2 b = vertices[static_cast<std::size_t>(tri[1])];
  const Vec2 c = vertices[static_cast<std::size_t>(tri[2])];
  return 0.5 * cross(b - a, c - a);
}

Vec2 PeriodicMesh::centroid(int t) const {
  const auto& tri = triangles[static_cast<std::size_t>(t)];
  Vec2 s;
  for (int v : tri) s += vertices[static_cast<std::size_t>(v)];
  return s * (1.0 / 3.0);
}

int PeriodicMesh::locate(Vec2 z) const {
  if (!(z.x >= -0.5 && z.x <= 0.5 && z.y >= -0.5 && z.y <= 0.5)) {
    throw DomainError("cell point outside [-1/2, 1/2]^2");
  }
  const int i = std::clamp(static_cast<int>(std::floor((z.x + 0.5) * n)), 0, n - 1);
  const int j = std::clamp(static_cast<int>(std::floor((z.y + 0.5) * n)), 0, n - 1);
  const int first = 2 * (j * n + i);
  for (int t = first; t < first + 2; ++t) {
    const auto& tri = triangles[static_cast<std::size_t>(t)];
    bool inside = true;
    for (int e = 0; e < 3; ++e) {
      const Vec2 a = vertices[static_cast<std::size_t>(tri[static_cast<std::size_t>(e)])];
      const Vec2 b = vertices[static_cast<std::size_t>(tri[static_cast<std::size_t>((e + 1) % 3)])];
      if (cross(b - a, z - a) < -1e-14) inside = false;
    }
    if (inside) return t;
  }
  return first;
}

PeriodicMesh build_cell_mesh(const CellGeometry& geom, int n) {
  if (n < 4 || n % 2 != 0) throw ParameterError("cell subdivisions must be even and at least 4");
  geom.validate();

  PeriodicMesh mesh;
  mesh.geometry = geom;
  mesh.n = n;
  mesh.h = std::sqrt(2.0) / n;
  const int np = n + 1;
  mesh.vertices.reserve(static_cast<std::size_t>(np * np));
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) {
      mesh.vertices.push_back({(2.0 * i - n) / (2.0 * n), (2.0 * j - n) / (2.0 * n)});
    }
  }

  const double scale = 6.0 * n;
  mesh.triangles.reserve(static_cast<std::size_t>(2 * n * n));
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int v00 = j * np + i;
      const int v10 = v00 + 1;
      const int v01 = v00 + np;
      const int v11 = v01 + 1;
      const bool radial = (2 * i < n) == (2 * j < n);
      if (radial) {
        mesh.triangles.push_back({v00, v10, v11});
        mesh.triangles.push_back({v00, v11, v01});
      } else {
        mesh.triangles.push_back({v00, v10, v01});
        mesh.triangles.push_back({v10, v11, v01});
      }
    }
  }

  mesh.fluid.resize(mesh.triangles.size());
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    // Centroid numerators in units of 1 / (6n): sums of (2i - n) are integers.
    double cx = 0.0;
    double cy = 0.0;
    for (int v : mesh.triangles[t]) {
      cx += 2.0 * (v % np) - n;
      cy += 2.0 * (v / np) - n;
    }
    const bool solid = inside_scaled(geom, cx, cy, scale);
    mesh.fluid[t] = solid ? 0 : 1;
    if (!solid) mesh.fluid_triangles.push_back(static_cast<int>(t));
  }

  std::vector<int> periodic_used(static_cast<std::size_t>(n * n), -1);
  auto rep = [&](int v) { return ((v / np) % n) * n + (v % np) % n; };
  for (int t : mesh.fluid_triangles) {
    for (int v : mesh.triangles[static_cast<std::size_t>(t)]) periodic_used[static_cast<std::size_t>(rep(v))] = 0;
  }
  int next = 0;
  for (auto& d : periodic_used) {
    if (d == 0) d = next++;
  }
  mesh.num_dofs = next;
  mesh.dof_map.resize(mesh.vertices.size());
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    mesh.dof_map[v] = periodic_used[static_cast<std::size_t>(rep(static_cast<int>(v)))];
  }

  mesh.lumped_mass.assign(static_cast<std::size_t>(mesh.num_dofs), 0.0);
  for (int t : mesh.fluid_triangles) {
    const double area = mesh.triangle_area(t);
    mesh.fluid_area += area;
    for (int v : mesh.triangles[static_cast<std::size_t>(t)]) {
      mesh.lumped_mass[static_cast<std::size_t>(mesh.dof_map[static_cast<std::size_t>(v)])] += area / 3.0;
    }
  }

  check_percolation(mesh);
  return mesh;
}

}  // namespace vtpm
