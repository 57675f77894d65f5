#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "vtpm/errors.hpp"
#include "vtpm/io.hpp"

using namespace vtpm;
namespace fs = std::filesystem;

namespace {

const char* kBase = R"({
  "fluid": {"eta0": 2.0, "eta_inf": 0.5, "lambda": 1.0, "r": "3/2"},
  "regime": {"ell": "1/2", "gamma": 0},
  "cell": {"obstacle": {"shape": "disk", "radius": 0.25}, "n": 8},
  "macro": {"n1": 4, "n2": 4},
  "output": "run"
})";

std::string field_of(const std::string& text, const fs::path& base = {}) {
  try {
    parse_config(text, base);
  } catch (const ConfigError& e) {
    return e.field();
  }
  return "";
}

std::string replaced(std::string text, const std::string& from, const std::string& to) {
  const auto pos = text.find(from);
  REQUIRE(pos != std::string::npos);
  return text.replace(pos, from.size(), to);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("vtpm_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("configuration defaults and relative output") {
  const RunConfig c = parse_config(kBase, "/tmp/cases");
  CHECK(c.fluid.r == Rational(3, 2));
  CHECK(c.fluid.gamma == Rational(0));
  CHECK(c.ell == Rational(1, 2));
  CHECK(c.cell_n == 8);
  CHECK(c.macro.n1 == 4);
  CHECK(c.macro.force.kind == ForceKind::rotational);
  CHECK(c.output == fs::path("/tmp/cases/run"));
  CHECK(c.limit_kind() == LimitModelKind::newtonian_zero_shear);
  CHECK(c.solver.macro_tol == 1e-8);
  CHECK_NOTHROW(c.require_vtpm());
}

TEST_CASE("configuration errors name the field") {
  CHECK(field_of("{") == "<document>");
  CHECK(field_of(replaced(kBase, "\"r\": \"3/2\"", "\"r\": 2")) == "fluid.r");
  CHECK(field_of(replaced(kBase, "\"r\": \"3/2\"", "\"r\": 1")) == "fluid.r");
  CHECK(field_of(replaced(kBase, "\"eta_inf\": 0.5", "\"eta_inf\": 3")) == "fluid.eta0");
  CHECK(field_of(replaced(kBase, "\"lambda\": 1.0", "\"lambda\": -1")) == "fluid.lambda");
  CHECK(field_of(replaced(kBase, "\"radius\": 0.25", "\"radius\": 0.7")) == "cell.obstacle");
  CHECK(field_of(replaced(kBase, "\"shape\": \"disk\"", "\"shape\": \"hexagon\"")) == "cell.obstacle.shape");
  CHECK(field_of(replaced(kBase, "\"n\": 8", "\"n\": 7")) == "cell.n");
  CHECK(field_of(replaced(kBase, "\"n1\": 4", "\"n1\": 4, \"force\": {\"type\": \"swirl\"}")) == "macro.force.type");
  CHECK(field_of(replaced(kBase, "\"n1\": 4", "\"n1\": 1")) == "macro.n1");
  CHECK(field_of(replaced(kBase, "\"eta0\": 2.0,", "")) == "fluid.eta0");

  const RunConfig htpm = parse_config(replaced(kBase, "\"ell\": \"1/2\"", "\"ell\": 2"));
  try {
    htpm.require_vtpm();
    FAIL("expected a ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field() == "regime.ell");
  }
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(-0.0) == "0");
}

TEST_CASE("csv round trip") {
  const fs::path dir = scratch("csv");
  write_csv(dir / "t.csv", {"a", "b"}, {{1.0, 0.1}, {-3.0, 1.0 / 7.0}});
  const std::string raw = slurp(dir / "t.csv");
  CHECK(raw.substr(0, 5) == "a,b\r\n");
  std::vector<std::string> header;
  const auto rows = read_csv(dir / "t.csv", &header);
  CHECK(header == std::vector<std::string>{"a", "b"});
  REQUIRE(rows.size() == 2);
  CHECK(rows[1][1] == 1.0 / 7.0);
}

TEST_CASE("vtk writers emit legacy headers") {
  const PeriodicMesh cell = build_cell_mesh(CellGeometry::disk(0.25), 8);
  std::ostringstream os;
  write_cell_vtk(os, cell, {{"q", std::vector<double>(static_cast<std::size_t>(cell.num_dofs), 0.0)}});
  CHECK(os.str().rfind("# vtk DataFile Version 3.0", 0) == 0);
  CHECK(os.str().find("DATASET POLYDATA") != std::string::npos);

  const MacroMesh mesh = build_macro_mesh(1.0, 1.0, 2, 2);
  MacroSolution sol;
  sol.p.assign(9, 0.0);
  sol.V.assign(8, Vec2{1.0, 0.0});
  std::ostringstream ds;
  write_darcy_vtk(ds, mesh, sol);
  CHECK(ds.str().find("DATASET UNSTRUCTURED_GRID") != std::string::npos);
  CHECK(ds.str().find("CELL_TYPES 8") != std::string::npos);

  std::ostringstream ls;
  write_lattice_vtk(ls, {2, 2, 2}, {0, 0, 0}, {1, 1, 1}, std::vector<Vec3>(8));
  CHECK(ls.str().find("DIMENSIONS 2 2 2") != std::string::npos);
}

TEST_CASE("regime report lists the exact exponents") {
  const std::string r = regime_report(Rational(1, 2), Rational(2), Rational(3));
  CHECK(r.find("regime: VTPM") != std::string::npos);
  CHECK(r.find("limit_model: POWER_LAW") != std::string::npos);
  CHECK(r.find("normalization: -1/2") != std::string::npos);
  CHECK(r.find("lr_rescaled: velocity 1/2 gradient -1/2 sym_gradient -1/2") != std::string::npos);
  std::ostringstream log;
  CHECK(run_guarded(log, [] { return cmd_regime(Rational(1, 2), Rational(1), Rational(2), std::cout); }) == 2);
}

TEST_CASE("commands write their outputs and are reproducible") {
  const fs::path dir = scratch("cmd");
  RunConfig c = parse_config(kBase, dir);
  std::ostringstream log;
  CHECK(run_guarded(log, [&] { return cmd_cell(c, log); }) == 0);
  CHECK(fs::exists(c.output / "permeability.csv"));
  CHECK(fs::exists(c.output / "cell_solution.vtk"));
  CHECK(fs::exists(c.output / "cell_summary.json"));

  CHECK(run_guarded(log, [&] { return cmd_darcy(c, log); }) == 0);
  const std::string first = slurp(c.output / "pressure.csv") + slurp(c.output / "velocity.csv");
  CHECK(run_guarded(log, [&] { return cmd_darcy(c, log); }) == 0);
  const std::string second = slurp(c.output / "pressure.csv") + slurp(c.output / "velocity.csv");
  CHECK(first == second);

  CHECK(run_guarded(log, [&] { return cmd_profile(c, log); }) == 0);
  CHECK(fs::exists(c.output / "profile.csv"));
  CHECK(fs::exists(c.output / "reconstruction.vtk"));

  c.profile.z_cell = {0.0, 0.0};
  CHECK(run_guarded(log, [&] { return cmd_profile(c, log); }) == 2);
}

TEST_CASE("nodal force samples from a csv file") {
  const fs::path dir = scratch("samples");
  const MacroMesh mesh = build_macro_mesh(1.0, 1.0, 4, 4);
  std::vector<std::vector<double>> rows;
  for (Vec2 x : mesh.nodes) rows.push_back({x.x, x.y, 1.0, 0.0});
  write_csv(dir / "f.csv", {"x", "y", "fx", "fy"}, rows);
  const std::string text =
      replaced(kBase, "\"n1\": 4", "\"n1\": 4, \"force\": {\"type\": \"samples\", \"file\": \"f.csv\"}");
  const RunConfig c = parse_config(text, dir);
  CHECK(c.macro.force.kind == ForceKind::samples);
  CHECK(c.macro.force(Vec2{0.3, 0.3}, &mesh) == Vec2{1.0, 0.0});
  rows.pop_back();
  write_csv(dir / "f.csv", {"x", "y", "fx", "fy"}, rows);
  CHECK(field_of(text, dir) == "macro.force.file");
}
