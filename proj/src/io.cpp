#include "vtpm/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "parallel.hpp"
#include "vtpm/errors.hpp"

namespace vtpm {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

const json* member(const json& obj, const std::string& path, const std::string& key, bool required) {
  if (!obj.is_object()) throw ConfigError(path, "expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (required) throw ConfigError(join(path, key), "missing required field");
    return nullptr;
  }
  return &*it;
}

double number(const json& obj, const std::string& path, const std::string& key, std::optional<double> fallback = {}) {
  const json* v = member(obj, path, key, !fallback.has_value());
  if (!v) return *fallback;
  if (!v->is_number()) throw ConfigError(join(path, key), "expected a number");
  const double d = v->get<double>();
  if (!std::isfinite(d)) throw ConfigError(join(path, key), "must be finite");
  return d;
}

int integer(const json& obj, const std::string& path, const std::string& key, std::optional<int> fallback = {}) {
  const json* v = member(obj, path, key, !fallback.has_value());
  if (!v) return *fallback;
  if (!v->is_number_integer()) throw ConfigError(join(path, key), "expected an integer");
  return v->get<int>();
}

Rational rational(const json& obj, const std::string& path, const std::string& key,
                  std::optional<Rational> fallback = {}) {
  const json* v = member(obj, path, key, !fallback.has_value());
  if (!v) return *fallback;
  try {
    if (v->is_number_integer()) return Rational(v->get<std::int64_t>());
    if (v->is_number()) return Rational::from_double(v->get<double>());
    if (v->is_string()) return Rational::parse(v->get<std::string>());
  } catch (const Error& e) {
    throw ConfigError(join(path, key), e.what());
  }
  throw ConfigError(join(path, key), "expected a number or a rational string such as \"3/2\"");
}

Vec2 vec2(const json& obj, const std::string& path, const std::string& key, std::optional<Vec2> fallback = {}) {
  const json* v = member(obj, path, key, !fallback.has_value());
  if (!v) return *fallback;
  if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
    throw ConfigError(join(path, key), "expected an array of two numbers");
  }
  return {(*v)[0].get<double>(), (*v)[1].get<double>()};
}

std::string string(const json& obj, const std::string& path, const std::string& key,
                   std::optional<std::string> fallback = {}) {
  const json* v = member(obj, path, key, !fallback.has_value());
  if (!v) return *fallback;
  if (!v->is_string()) throw ConfigError(join(path, key), "expected a string");
  return v->get<std::string>();
}

FluidParams parse_fluid(const json& root) {
  const json& f = *member(root, "", "fluid", true);
  FluidParams p;
  p.eta0 = number(f, "fluid", "eta0");
  p.eta_inf = number(f, "fluid", "eta_inf");
  p.lambda = number(f, "fluid", "lambda");
  p.r = rational(f, "fluid", "r");
  if (!(p.eta_inf > 0.0)) throw ConfigError("fluid.eta_inf", "must be positive");
  if (!(p.eta0 > p.eta_inf)) throw ConfigError("fluid.eta0", "must exceed fluid.eta_inf");
  if (!(p.lambda > 0.0)) throw ConfigError("fluid.lambda", "must be positive");
  if (p.r == Rational(2)) throw ConfigError("fluid.r", "r = 2 is excluded (Newtonian Carreau exponent)");
  if (p.r <= Rational(1)) throw ConfigError("fluid.r", "must exceed 1");
  return p;
}

CellGeometry parse_obstacle(const json& cell) {
  const json& o = *member(cell, "cell", "obstacle", true);
  const std::string shape = string(o, "cell.obstacle", "shape");
  CellGeometry geom;
  if (shape == "none") {
    geom = CellGeometry::empty();
  } else if (shape == "disk") {
    geom = CellGeometry::disk(number(o, "cell.obstacle", "radius"));
  } else if (shape == "square") {
    geom = CellGeometry::square(number(o, "cell.obstacle", "half_width"));
  } else {
    throw ConfigError("cell.obstacle.shape", "unknown shape '" + shape + "' (expected none, disk or square)");
  }
  try {
    geom.validate();
  } catch (const Error& e) {
    throw ConfigError("cell.obstacle", e.what());
  }
  return geom;
}

Force parse_force(const json& macro, const fs::path& base, const MacroConfig& mc) {
  const json* f = member(macro, "macro", "force", false);
  if (!f) return Force::rotational({0.5 * mc.L1, 0.5 * mc.L2});
  const std::string type = string(*f, "macro.force", "type");
  if (type == "constant") return Force::constant(vec2(*f, "macro.force", "value"));
  if (type == "gradient") {
    const json* c = member(*f, "macro.force", "coefficients", false);
    if (!c) return Force::quadratic_gradient(1.0, 0.0, -1.0);
    if (!c->is_array() || c->size() != 5) {
      throw ConfigError("macro.force.coefficients", "expected five numbers a, b, c, d, e");
    }
    std::array<double, 5> k{};
    for (std::size_t i = 0; i < 5; ++i) {
      if (!(*c)[i].is_number()) throw ConfigError("macro.force.coefficients", "expected five numbers a, b, c, d, e");
      k[i] = (*c)[i].get<double>();
    }
    return Force::quadratic_gradient(k[0], k[1], k[2], k[3], k[4]);
  }
  if (type == "rotational") return Force::rotational(vec2(*f, "macro.force", "centre", Vec2{0.5 * mc.L1, 0.5 * mc.L2}));
  if (type == "samples") {
    fs::path file = string(*f, "macro.force", "file");
    if (file.is_relative()) file = base / file;
    std::vector<std::vector<double>> rows;
    try {
      rows = read_csv(file);
    } catch (const Error& e) {
      throw ConfigError("macro.force.file", e.what());
    }
    const MacroMesh mesh = build_macro_mesh(mc.L1, mc.L2, mc.n1, mc.n2);
    if (rows.size() != mesh.nodes.size()) {
      throw ConfigError("macro.force.file", "expected " + std::to_string(mesh.nodes.size()) + " node rows, found " +
                                                std::to_string(rows.size()));
    }
    std::vector<Vec2> values;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != 4) throw ConfigError("macro.force.file", "rows need columns x, y, fx, fy");
      const Vec2 x{rows[i][0], rows[i][1]};
      if (norm(x - mesh.nodes[i]) > 1e-9 * std::max(mc.L1, mc.L2)) {
        throw ConfigError("macro.force.file", "row " + std::to_string(i + 1) + " does not match node position");
      }
      values.push_back({rows[i][2], rows[i][3]});
    }
    return Force::nodal(std::move(values));
  }
  throw ConfigError("macro.force.type", "unknown force '" + type + "' (expected constant, gradient, rotational or samples)");
}

json vec_json(Vec2 v) { return json::array({v.x, v.y}); }

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("output", "cannot create directory " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("output", "cannot open " + path.string() + " for writing");
  return os;
}

void write_json(const fs::path& path, const json& doc) {
  std::ofstream os = open_out(path);
  os << doc.dump(2) << "\n";
}

std::shared_ptr<const PeriodicMesh> cell_mesh(const RunConfig& config) {
  return std::make_shared<const PeriodicMesh>(build_cell_mesh(config.cell, config.cell_n));
}

}  // namespace

CellSolverOptions RunConfig::cell_options() const {
  CellSolverOptions o;
  o.tol = solver.cell_tol;
  o.max_iter = solver.max_picard;
  return o;
}

MacroOptions RunConfig::macro_options() const {
  MacroOptions o;
  o.tol = solver.macro_tol;
  o.max_outer = solver.max_outer;
  o.threads = solver.threads;
  return o;
}

void RunConfig::require_vtpm() const {
  const Regime r = regime();
  if (r != Regime::vtpm) {
    throw ConfigError("regime.ell", "ell = " + ell.to_string() + " gives the " + to_string(r) +
                                        " regime; the cell and Darcy solvers apply to VTPM (ell < 1) only");
  }
}

RunConfig parse_config(const std::string& text, const fs::path& base) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", std::string("invalid JSON: ") + e.what());
  }
  if (!root.is_object()) throw ConfigError("<document>", "expected a JSON object");
  RunConfig c;
  c.fluid = parse_fluid(root);

  const json& regime = *member(root, "", "regime", true);
  c.ell = rational(regime, "regime", "ell");
  c.fluid.gamma = rational(regime, "regime", "gamma");
  if (c.ell <= Rational(0)) throw ConfigError("regime.ell", "must be positive");

  const json& cell = *member(root, "", "cell", true);
  c.cell = parse_obstacle(cell);
  c.cell_n = integer(cell, "cell", "n", 32);
  if (c.cell_n < 4 || c.cell_n % 2 != 0) throw ConfigError("cell.n", "must be even and at least 4");
  if (const json* s = member(cell, "cell", "samples", false)) {
    c.samples.angles = integer(*s, "cell.samples", "angles", c.samples.angles);
    if (c.samples.angles < 1) throw ConfigError("cell.samples.angles", "must be positive");
    if (const json* m = member(*s, "cell.samples", "magnitudes", false)) {
      if (!m->is_array() || m->empty()) throw ConfigError("cell.samples.magnitudes", "expected a non-empty array");
      c.samples.magnitudes.clear();
      for (const json& v : *m) {
        if (!v.is_number() || !(v.get<double>() >= 0.0)) {
          throw ConfigError("cell.samples.magnitudes", "entries must be non-negative numbers");
        }
        c.samples.magnitudes.push_back(v.get<double>());
      }
    }
  }

  if (const json* m = member(root, "", "macro", false)) {
    c.macro.L1 = number(*m, "macro", "L1", 1.0);
    c.macro.L2 = number(*m, "macro", "L2", 1.0);
    c.macro.n1 = integer(*m, "macro", "n1", 16);
    c.macro.n2 = integer(*m, "macro", "n2", 16);
    if (!(c.macro.L1 > 0.0)) throw ConfigError("macro.L1", "must be positive");
    if (!(c.macro.L2 > 0.0)) throw ConfigError("macro.L2", "must be positive");
    if (c.macro.n1 < 2) throw ConfigError("macro.n1", "must be at least 2");
    if (c.macro.n2 < 2) throw ConfigError("macro.n2", "must be at least 2");
    c.macro.force = parse_force(*m, base, c.macro);
  }

  if (const json* s = member(root, "", "solver", false)) {
    c.solver.cell_tol = number(*s, "solver", "cell_tol", c.solver.cell_tol);
    c.solver.macro_tol = number(*s, "solver", "macro_tol", c.solver.macro_tol);
    c.solver.max_picard = integer(*s, "solver", "max_picard", c.solver.max_picard);
    c.solver.max_outer = integer(*s, "solver", "max_outer", c.solver.max_outer);
    c.solver.threads = integer(*s, "solver", "threads", c.solver.threads);
    c.solver.table_angles = integer(*s, "solver", "table_angles", c.solver.table_angles);
    if (!(c.solver.cell_tol > 0.0)) throw ConfigError("solver.cell_tol", "must be positive");
    if (!(c.solver.macro_tol > 0.0)) throw ConfigError("solver.macro_tol", "must be positive");
    if (c.solver.max_picard < 1) throw ConfigError("solver.max_picard", "must be positive");
    if (c.solver.max_outer < 1) throw ConfigError("solver.max_outer", "must be positive");
    if (c.solver.threads < 1) throw ConfigError("solver.threads", "must be positive");
    if (c.solver.table_angles < 8 || c.solver.table_angles % 8 != 0) {
      throw ConfigError("solver.table_angles", "must be a positive multiple of 8");
    }
  }

  if (const json* p = member(root, "", "profile", false)) {
    c.profile.x = vec2(*p, "profile", "x", Vec2{0.5 * c.macro.L1, 0.5 * c.macro.L2});
    c.profile.z_cell = vec2(*p, "profile", "z_cell", c.profile.z_cell);
    c.profile.points = integer(*p, "profile", "points", c.profile.points);
    if (c.profile.points < 2) throw ConfigError("profile.points", "must be at least 2");
    if (const json* l = member(*p, "profile", "lattice", false)) {
      if (!l->is_array() || l->size() != 3) throw ConfigError("profile.lattice", "expected three integers");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!(*l)[i].is_number_integer() || (*l)[i].get<int>() < 2) {
          throw ConfigError("profile.lattice", "entries must be integers >= 2");
        }
        c.profile.lattice[i] = (*l)[i].get<int>();
      }
    }
  } else {
    c.profile.x = {0.5 * c.macro.L1, 0.5 * c.macro.L2};
  }

  c.output = string(root, "", "output", "out");
  if (c.output.is_relative() && !base.empty()) c.output = base / c.output;
  return c;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("--config", "cannot read " + path.string());
  std::stringstream buffer;
  buffer << is.rdbuf();
  return parse_config(buffer.str(), path.parent_path());
}

std::string format_double(double v) {
  if (v == 0.0) v = 0.0;  // no negative zero
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_csv(const fs::path& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  std::ofstream os = open_out(path);
  for (std::size_t i = 0; i < header.size(); ++i) os << (i ? "," : "") << header[i];
  os << "\r\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
    os << "\r\n";
  }
}

std::vector<std::vector<double>> read_csv(const fs::path& path, std::vector<std::string>* header) {
  std::ifstream is(path);
  if (!is) throw ParameterError("cannot read " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    if (first) {
      first = false;
      if (header) {
        header->clear();
        while (std::getline(ss, cell, ',')) header->push_back(cell);
      }
      continue;
    }
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParameterError(path.string() + ": non-numeric value '" + cell + "'");
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_cell_vtk(std::ostream& os, const PeriodicMesh& mesh,
                    const std::vector<std::pair<std::string, std::vector<double>>>& dof_fields) {
  os << "# vtk DataFile Version 3.0\n";
  os << "periodic cell mesh, " << mesh.geometry.describe() << ", n = " << mesh.n << "\n";
  os << "ASCII\nDATASET POLYDATA\n";
  os << "POINTS " << mesh.vertices.size() << " double\n";
  for (const Vec2& v : mesh.vertices) os << format_double(v.x) << " " << format_double(v.y) << " 0\n";
  os << "POLYGONS " << mesh.triangles.size() << " " << 4 * mesh.triangles.size() << "\n";
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  os << "POINT_DATA " << mesh.vertices.size() << "\n";
  for (const auto& [name, values] : dof_fields) {
    os << "SCALARS " << name << " double 1\nLOOKUP_TABLE default\n";
    for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
      const int d = mesh.dof_map[v];
      os << format_double(d < 0 ? 0.0 : values[static_cast<std::size_t>(d)]) << "\n";
    }
  }
  os << "CELL_DATA " << mesh.triangles.size() << "\n";
  os << "SCALARS fluid int 1\nLOOKUP_TABLE default\n";
  for (char f : mesh.fluid) os << (f ? 1 : 0) << "\n";
}

void write_darcy_vtk(std::ostream& os, const MacroMesh& mesh, const MacroSolution& solution) {
  os << "# vtk DataFile Version 3.0\n";
  os << "macro Darcy solution\n";
  os << "ASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.nodes.size() << " double\n";
  for (const Vec2& v : mesh.nodes) os << format_double(v.x) << " " << format_double(v.y) << " 0\n";
  os << "CELLS " << mesh.triangles.size() << " " << 4 * mesh.triangles.size() << "\n";
  for (const auto& t : mesh.triangles) os << "3 " << t[0] << " " << t[1] << " " << t[2] << "\n";
  os << "CELL_TYPES " << mesh.triangles.size() << "\n";
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) os << "5\n";
  os << "POINT_DATA " << mesh.nodes.size() << "\n";
  os << "SCALARS p double 1\nLOOKUP_TABLE default\n";
  for (double p : solution.p) os << format_double(p) << "\n";
  os << "CELL_DATA " << mesh.triangles.size() << "\n";
  os << "VECTORS V double\n";
  for (const Vec2& v : solution.V) os << format_double(v.x) << " " << format_double(v.y) << " 0\n";
}

void write_lattice_vtk(std::ostream& os, std::array<int, 3> dims, Vec3 origin, Vec3 spacing,
                       const std::vector<Vec3>& velocity) {
  os << "# vtk DataFile Version 3.0\n";
  os << "reconstructed limit velocity over the cell and the film thickness\n";
  os << "ASCII\nDATASET STRUCTURED_POINTS\n";
  os << "DIMENSIONS " << dims[0] << " " << dims[1] << " " << dims[2] << "\n";
  os << "ORIGIN " << format_double(origin.x) << " " << format_double(origin.y) << " " << format_double(origin.z) << "\n";
  os << "SPACING " << format_double(spacing.x) << " " << format_double(spacing.y) << " " << format_double(spacing.z)
     << "\n";
  os << "POINT_DATA " << velocity.size() << "\n";
  os << "VECTORS u double\n";
  for (const Vec3& u : velocity) {
    os << format_double(u.x) << " " << format_double(u.y) << " " << format_double(u.z) << "\n";
  }
}

std::string regime_report(const Rational& ell, const Rational& gamma, const Rational& r) {
  const Regime regime = classify_regime(ell);
  const LimitModelKind kind = limit_model_kind(r, gamma);
  const ScalingTable table = scaling_table(r, gamma);
  std::ostringstream out;
  auto row = [&](const char* name, const NormExponents& e) {
    out << name << ": velocity " << e.velocity << " gradient " << e.gradient << " sym_gradient " << e.sym_gradient
        << "\n";
  };
  out << "ell: " << ell << "\n";
  out << "gamma: " << gamma << "\n";
  out << "r: " << r << "\n";
  out << "regime: " << to_string(regime) << "\n";
  out << "limit_model: " << to_string(kind) << "\n";
  row("l2_physical", table.l2_physical);
  row("l2_rescaled", table.l2_rescaled);
  if (table.lr_physical) row("lr_physical", *table.lr_physical);
  if (table.lr_rescaled) row("lr_rescaled", *table.lr_rescaled);
  out << "normalization: " << table.normalization << "\n";
  if (regime != Regime::vtpm) {
    out << "note: the " << to_string(regime) << " regime is outside the scope of the cell and Darcy solvers, "
        << "which target VTPM (ell < 1)\n";
  }
  return out.str();
}

EffectiveLaw build_law(const RunConfig& config) {
  const auto mesh = cell_mesh(config);
  return effective_law(mesh, config.limit_kind(), config.fluid, {}, config.cell_options());
}

int cmd_cell(const RunConfig& config, std::ostream& log) {
  config.require_vtpm();
  ensure_dir(config.output);
  const auto mesh = cell_mesh(config);
  const LimitModelKind kind = config.limit_kind();
  const CellSolverOptions options = config.cell_options();
  json summary;
  summary["command"] = "cell";
  summary["regime"] = to_string(config.regime());
  summary["limit_model"] = to_string(kind);
  summary["obstacle"] = config.cell.describe();
  summary["n"] = config.cell_n;
  summary["fluid_area"] = mesh->fluid_area;

  if (kind == LimitModelKind::newtonian_zero_shear || kind == LimitModelKind::newtonian_infinite_shear) {
    const PermeabilityTensor K = permeability_tensor(*mesh, options);
    const double eta = newtonian_viscosity(kind, config.fluid);
    const Mat2& A = K.matrix;
    const Mat2& E = K.energy_matrix;
    write_csv(config.output / "permeability.csv", {"i", "j", "flux_form", "energy_form"},
              {{1, 1, A.a11, E.a11}, {1, 2, A.a12, E.a12}, {2, 1, A.a21, E.a21}, {2, 2, A.a22, E.a22}});
    std::ofstream vtk = open_out(config.output / "cell_solution.vtk");
    write_cell_vtk(vtk, *mesh, {{"q1", K.correctors[0].q}, {"q2", K.correctors[1].q}});
    const auto ev = K.eigenvalues();
    summary["law"] = "linear";
    summary["viscosity"] = eta;
    summary["permeability"] = json::array({json::array({A.a11, A.a12}), json::array({A.a21, A.a22})});
    summary["eigenvalues"] = json::array({ev[0], ev[1]});
    summary["prefactor"] = 1.0 / (6.0 * eta);
    summary["cg_iterations"] = K.correctors[0].cg_iterations + K.correctors[1].cg_iterations;
    write_json(config.output / "cell_summary.json", summary);
    log << "permeability [" << format_double(A.a11) << ", " << format_double(A.a12) << "; " << format_double(A.a21)
        << ", " << format_double(A.a22) << "]\n";
    return 0;
  }

  const EffectiveLaw law = effective_law(mesh, kind, config.fluid, {}, options);
  const CellSolver solver(*mesh, options);
  std::vector<Vec2> deltas;
  std::vector<int> angle_of;
  std::vector<double> magnitude_of;
  bool zero_done = false;
  for (double m : config.samples.magnitudes) {
    if (m == 0.0) {
      if (!zero_done) {
        deltas.push_back({});
        angle_of.push_back(-1);
        magnitude_of.push_back(0.0);
      }
      zero_done = true;
      continue;
    }
    for (int k = 0; k < config.samples.angles; ++k) {
      const double th = 2.0 * std::numbers::pi * k / config.samples.angles;
      deltas.push_back({m * std::cos(th), m * std::sin(th)});
      angle_of.push_back(k);
      magnitude_of.push_back(m);
    }
  }
  struct Row {
    Vec2 flux;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> q;
  };
  std::vector<Row> rows(deltas.size());
  detail::parallel_for(static_cast<int>(deltas.size()), config.solver.threads, [&](int i) {
    const Vec2 d = deltas[static_cast<std::size_t>(i)];
    Row& row = rows[static_cast<std::size_t>(i)];
    if (d == Vec2{}) return;
    const CellSolution sol = law.cell_solution(d);
    row.flux = law.prefactor() * solver.flux(law.density(d), d, sol.q);
    row.iterations = sol.iterations;
    row.residual = sol.residual;
    row.q = sol.q;
  });

  const bool power = kind == LimitModelKind::power_law;
  std::vector<std::string> header{"delta_x", "delta_y", "flux_x", "flux_y", "iterations", "residual"};
  if (power) header.push_back("homogeneity");
  std::vector<std::vector<double>> table;
  double worst_homogeneity = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::vector<double> line{deltas[i].x, deltas[i].y, rows[i].flux.x, rows[i].flux.y,
                             static_cast<double>(rows[i].iterations), rows[i].residual};
    if (power) {
      double defect = 0.0;
      if (angle_of[i] >= 0) {
        // Compare with the smallest positive magnitude at the same angle.
        std::size_t ref = i;
        for (std::size_t j = 0; j < rows.size(); ++j) {
          if (angle_of[j] == angle_of[i] && magnitude_of[j] > 0.0 && magnitude_of[j] < magnitude_of[ref]) ref = j;
        }
        const double t = magnitude_of[i] / magnitude_of[ref];
        const Vec2 predicted = std::pow(t, law.r_prime() - 1.0) * rows[ref].flux;
        defect = norm(rows[i].flux - predicted) / norm(rows[i].flux);
      }
      worst_homogeneity = std::max(worst_homogeneity, defect);
      line.push_back(defect);
    }
    table.push_back(std::move(line));
  }
  write_csv(config.output / "flux_table.csv", header, table);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].q.empty()) {
      std::ofstream vtk = open_out(config.output / "cell_solution.vtk");
      write_cell_vtk(vtk, *mesh, {{"q", rows[i].q}});
      summary["vtk_delta"] = vec_json(deltas[i]);
      break;
    }
  }
  summary["law"] = power ? "power_law" : "carreau";
  summary["prefactor"] = law.prefactor();
  summary["rows"] = rows.size();
  if (power) summary["max_homogeneity_defect"] = worst_homogeneity;
  write_json(config.output / "cell_summary.json", summary);
  log << "flux table with " << rows.size() << " rows written\n";
  return 0;
}

namespace {

struct DarcyRun {
  EffectiveLaw law;
  MacroMesh mesh;
  MacroSolution solution;
};

DarcyRun run_darcy(const RunConfig& config) {
  config.require_vtpm();
  EffectiveLaw law = build_law(config);
  MacroMesh mesh = build_macro_mesh(config.macro.L1, config.macro.L2, config.macro.n1, config.macro.n2);
  const MacroProblem problem{mesh, config.macro.force, law};
  MacroSolution sol;
  if (law.kind() == LawKind::linear) {
    sol = solve_linear_darcy(problem, config.macro_options());
  } else {
    const std::vector<Vec2> f = element_forcing(mesh, config.macro.force);
    double fscale = 0.0;
    for (const Vec2& v : f) fscale = std::max(fscale, norm(v));
    const double quantum = std::min(law.cache_quantum(), 1e-2 * config.solver.macro_tol * std::max(fscale, 1e-300));
    const EvaluationPlan plan = flux_map_strategy(law, config.cell.square_symmetric(), config.solver.table_angles,
                                                  config.solver.threads, quantum);
    sol = solve_nonlinear_darcy(problem, plan, config.macro_options());
  }
  return {std::move(law), std::move(mesh), std::move(sol)};
}

}  // namespace

int cmd_darcy(const RunConfig& config, std::ostream& log) {
  const DarcyRun run = run_darcy(config);
  ensure_dir(config.output);
  const MacroMesh& mesh = run.mesh;
  const MacroSolution& sol = run.solution;
  std::vector<std::vector<double>> prow, vrow;
  double pmean = 0.0, vmax = 0.0;
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    prow.push_back({mesh.nodes[i].x, mesh.nodes[i].y, sol.p[i]});
    pmean += mesh.lumped_mass[i] * sol.p[i];
  }
  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec2 c = mesh.centroid(static_cast<int>(t));
    vrow.push_back({c.x, c.y, sol.V[t].x, sol.V[t].y});
    vmax = std::max(vmax, norm(sol.V[t]));
  }
  write_csv(config.output / "pressure.csv", {"x", "y", "p"}, prow);
  write_csv(config.output / "velocity.csv", {"x", "y", "Vx", "Vy"}, vrow);
  {
    std::ofstream vtk = open_out(config.output / "darcy.vtk");
    write_darcy_vtk(vtk, mesh, sol);
  }
  json summary;
  summary["command"] = "darcy";
  summary["regime"] = to_string(config.regime());
  summary["limit_model"] = to_string(config.limit_kind());
  summary["force"] = config.macro.force.describe();
  summary["iterations"] = sol.iterations;
  summary["residual"] = sol.residual;
  summary["residual_history"] = sol.residual_history;
  summary["tolerance"] = config.solver.macro_tol;
  summary["divergence_residual"] = sol.divergence_residual;
  summary["boundary_flux"] = sol.boundary_flux;
  summary["v_max"] = vmax;
  summary["p_mean"] = pmean / mesh.area();
  summary["cell_solves"] = sol.cell_solves;
  const bool converged = sol.residual <= config.solver.macro_tol;
  summary["converged"] = converged;
  write_json(config.output / "summary.json", summary);
  log << "darcy: " << sol.iterations << " iterations, residual " << format_double(sol.residual) << ", |V|max "
      << format_double(vmax) << "\n";
  return converged ? 0 : 1;
}

int cmd_profile(const RunConfig& config, std::ostream& log) {
  const DarcyRun run = run_darcy(config);
  ensure_dir(config.output);
  const VelocityReconstructor recon(run.solution, run.mesh, run.law);
  const Vec2 x = config.profile.x;
  const Vec2 delta = recon.driving(x);
  const Vec2 zc = config.profile.z_cell;
  if (!(std::abs(zc.x) <= 0.5 && std::abs(zc.y) <= 0.5)) {
    throw ConfigError("profile.z_cell", "cell point must lie in [-1/2, 1/2]^2");
  }
  if (obstacle_indicator(config.cell, zc)) throw ConfigError("profile.z_cell", "cell point lies inside the obstacle");
  const Vec2 g = recon.cell_gradient(x, zc);
  const ProfileLaw& pl = recon.profile_law();
  const Profile profile = sample_profile(pl, -g, config.profile.points);
  std::vector<std::vector<double>> rows;
  for (std::size_t k = 0; k < profile.z3.size(); ++k) rows.push_back({profile.z3[k], profile.w[k].x, profile.w[k].y});
  write_csv(config.output / "profile.csv", {"z3", "wx", "wy"}, rows);

  const Vec2 qmean = pl.quadrature_mean(-g);
  const Vec2 cmean = pl.mean(-g);
  const double mean_residual = norm(qmean - cmean);
  const Vec2 average = recon.cell_average(x);
  const Vec2 law_value = run.law.evaluate_exact(delta);
  const double average_residual = norm(average - law_value);

  const auto dims = config.profile.lattice;
  const Vec3 spacing{1.0 / (dims[0] - 1), 1.0 / (dims[1] - 1), 1.0 / (dims[2] - 1)};
  std::vector<Vec3> lattice(static_cast<std::size_t>(dims[0] * dims[1] * dims[2]));
  for (int k = 0; k < dims[2]; ++k) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int i = 0; i < dims[0]; ++i) {
        const Vec3 z{-0.5 + i * spacing.x, -0.5 + j * spacing.y, k == dims[2] - 1 ? 1.0 : k * spacing.z};
        lattice[static_cast<std::size_t>((k * dims[1] + j) * dims[0] + i)] = recon(x, z);
      }
    }
  }
  {
    std::ofstream vtk = open_out(config.output / "reconstruction.vtk");
    write_lattice_vtk(vtk, dims, {-0.5, -0.5, 0.0}, spacing, lattice);
  }

  json summary;
  summary["command"] = "profile";
  summary["limit_model"] = to_string(config.limit_kind());
  summary["x"] = vec_json(x);
  summary["z_cell"] = vec_json(zc);
  summary["delta"] = vec_json(delta);
  summary["cell_gradient"] = vec_json(g);
  summary["quadrature_mean"] = vec_json(qmean);
  summary["closed_form_mean"] = vec_json(cmean);
  summary["mean_residual"] = mean_residual;
  summary["cell_average"] = vec_json(average);
  summary["law_value"] = vec_json(law_value);
  summary["cell_average_residual"] = average_residual;
  constexpr double kConsistencyTol = 1e-8;
  const bool consistent = mean_residual <= kConsistencyTol * std::max(1.0, norm(cmean)) &&
                          average_residual <= kConsistencyTol * std::max(1.0, norm(law_value));
  summary["consistency_tolerance"] = kConsistencyTol;
  summary["consistent"] = consistent;
  write_json(config.output / "profile_summary.json", summary);
  log << "profile: mean residual " << format_double(mean_residual) << ", cell-average residual "
      << format_double(average_residual) << "\n";
  return consistent ? 0 : 1;
}

int cmd_regime(const Rational& ell, const Rational& gamma, const Rational& r, std::ostream& out) {
  out << regime_report(ell, gamma, r);
  return 0;
}

int run_guarded(std::ostream& log, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    log << "configuration error: " << e.what() << "\n";
    return 2;
  } catch (const ParameterError& e) {
    log << "parameter error: " << e.what() << "\n";
    return 2;
  } catch (const GeometryError& e) {
    log << "geometry error: " << e.what() << "\n";
    return 2;
  } catch (const DomainError& e) {
    log << "domain error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    log << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace vtpm
