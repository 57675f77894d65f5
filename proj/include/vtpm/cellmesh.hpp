#pragma once

#include <array>
#include <iosfwd>
#include <string>
#include <vector>

#include "vtpm/vec.hpp"

namespace vtpm {

enum class ObstacleShape { none, disk, square };

/// Obstacle T' inside the unit cell (-1/2, 1/2)^2, centred at the origin.
struct CellGeometry {
  ObstacleShape shape = ObstacleShape::none;
  double size = 0.0;  ///< disk radius or square half width

  static CellGeometry empty() { return {}; }
  static CellGeometry disk(double radius) { return {ObstacleShape::disk, radius}; }
  static CellGeometry square(double half_width) { return {ObstacleShape::square, half_width}; }

  /// Throws GeometryError unless the obstacle closure lies strictly inside the cell.
  void validate() const;
  /// Every supported shape is invariant under reflections and quarter turns.
  bool square_symmetric() const { return true; }
  std::string describe() const;
};

/// True iff z lies in the open obstacle.
bool obstacle_indicator(const CellGeometry& geom, Vec2 z);

/// Uniform periodic triangulation of the cell. Vertices live on an (n+1)^2
/// grid; opposite-edge vertices share one degree of freedom and only vertices
/// touched by a fluid triangle carry one.
struct PeriodicMesh {
  CellGeometry geometry;
  int n = 0;
  double h = 0.0;           ///< triangle diameter sqrt(2) / n
  double fluid_area = 0.0;  ///< total area of fluid triangles
  std::vector<Vec2> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<char> fluid;            ///< per-triangle fluid mask
  std::vector<int> dof_map;           ///< vertex -> fluid dof, -1 if none
  std::vector<int> fluid_triangles;   ///< indices of fluid triangles
  std::vector<double> lumped_mass;    ///< per-dof P1 lumped mass
  int num_dofs = 0;

  double triangle_area(int t) const;
  Vec2 centroid(int t) const;
  /// Index of a triangle containing z (fluid or solid).
  int locate(Vec2 z) const;
};

/// Builds the periodic mesh with an n x n grid of squares. Each square is split
/// along the diagonal pointing away from the cell centre, which makes the mesh
/// invariant under the symmetry group of the square. A triangle is solid iff
/// its centroid lies in the obstacle. Throws ParameterError for odd or too
/// small n and GeometryError when the fluid part does not percolate.
PeriodicMesh build_cell_mesh(const CellGeometry& geom, int n);

}  // namespace vtpm
