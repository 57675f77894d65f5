#pragma once

#include <array>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "vtpm/cellmesh.hpp"
#include "vtpm/cellsolve.hpp"
#include "vtpm/macro_darcy.hpp"
#include "vtpm/params.hpp"
#include "vtpm/reconstruct.hpp"

namespace vtpm {

struct SampleConfig {
  int angles = 8;                           ///< equispaced directions
  std::vector<double> magnitudes{1.0, 2.0, 5.0, 10.0};
};

struct MacroConfig {
  double L1 = 1.0;
  double L2 = 1.0;
  int n1 = 16;
  int n2 = 16;
  Force force = Force::rotational({0.5, 0.5});
};

struct SolverConfig {
  double cell_tol = 1e-10;
  double macro_tol = 1e-8;
  int max_picard = 200;
  int max_outer = 100;
  int threads = 1;
  int table_angles = 64;
};

struct ProfileConfig {
  Vec2 x{0.5, 0.5};
  Vec2 z_cell{0.375, 0.0};
  int points = 65;
  std::array<int, 3> lattice{16, 16, 9};
};

/// Fully validated run configuration.
struct RunConfig {
  FluidParams fluid;
  Rational ell{1, 2};
  CellGeometry cell;
  int cell_n = 32;
  SampleConfig samples;
  MacroConfig macro;
  SolverConfig solver;
  ProfileConfig profile;
  std::filesystem::path output = "out";

  Regime regime() const { return classify_regime(ell); }
  LimitModelKind limit_kind() const { return limit_model_kind(fluid.r, fluid.gamma); }
  CellSolverOptions cell_options() const;
  MacroOptions macro_options() const;
  /// Throws ConfigError("regime.ell") unless the regime is VTPM.
  void require_vtpm() const;
};

/// Parses and validates a JSON document; `base` resolves relative file paths.
/// Every failure is a ConfigError naming the offending field path.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base = {});
RunConfig load_config(const std::filesystem::path& path);

/// Shortest-round-trip-safe formatting with 17 significant digits.
std::string format_double(double v);

/// Writes a CSV file with a header row; every value is formatted with format_double.
void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
/// Reads a numeric CSV with a header row.
std::vector<std::vector<double>> read_csv(const std::filesystem::path& path, std::vector<std::string>* header = nullptr);

void write_cell_vtk(std::ostream& os, const PeriodicMesh& mesh, const std::vector<std::pair<std::string, std::vector<double>>>& dof_fields);
void write_darcy_vtk(std::ostream& os, const MacroMesh& mesh, const MacroSolution& solution);
/// Velocity on an nx x ny x nz lattice over the cell and the thickness, x fastest.
void write_lattice_vtk(std::ostream& os, std::array<int, 3> dims, Vec3 origin, Vec3 spacing,
                       const std::vector<Vec3>& velocity);

/// Text report of the regime, the limit model and the exact scaling table.
std::string regime_report(const Rational& ell, const Rational& gamma, const Rational& r);

/// Builds the effective law selected by the configuration on a shared cell mesh.
EffectiveLaw build_law(const RunConfig& config);

/// Command entry points; each returns the process exit status
/// (0 success, 1 numerical failure, 2 configuration or usage error) and
/// reports diagnostics on `log`.
int cmd_cell(const RunConfig& config, std::ostream& log);
int cmd_darcy(const RunConfig& config, std::ostream& log);
int cmd_profile(const RunConfig& config, std::ostream& log);
int cmd_regime(const Rational& ell, const Rational& gamma, const Rational& r, std::ostream& out);

/// Runs `body` and maps library exceptions to exit codes, printing the message on `log`.
int run_guarded(std::ostream& log, const std::function<int()>& body);

}  // namespace vtpm
