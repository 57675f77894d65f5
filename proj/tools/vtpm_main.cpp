// Command-line driver: cell, darcy, profile and regime subcommands.
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "vtpm/errors.hpp"
#include "vtpm/io.hpp"

namespace {

struct Overrides {
  std::string config;
  std::optional<std::string> out;
  std::optional<int> n_cell;
  std::optional<double> tol;
  std::optional<int> threads;
};

void add_common(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config, "JSON run configuration")->required();
  cmd->add_option("--out", o.out, "output directory (overrides the config)");
  cmd->add_option("--n-cell", o.n_cell, "cell mesh subdivisions (even, >= 4)");
  cmd->add_option("--tol", o.tol, "macro nonlinear tolerance");
  cmd->add_option("--threads", o.threads, "worker threads");
}

vtpm::RunConfig resolve(const Overrides& o) {
  vtpm::RunConfig c = vtpm::load_config(o.config);
  if (o.out) c.output = *o.out;
  if (o.n_cell) {
    if (*o.n_cell < 4 || *o.n_cell % 2 != 0) throw vtpm::ConfigError("--n-cell", "must be even and at least 4");
    c.cell_n = *o.n_cell;
  }
  if (o.tol) {
    if (!(*o.tol > 0.0)) throw vtpm::ConfigError("--tol", "must be positive");
    c.solver.macro_tol = *o.tol;
  }
  if (o.threads) {
    if (*o.threads < 1) throw vtpm::ConfigError("--threads", "must be positive");
    c.solver.threads = *o.threads;
  }
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Thin porous medium flow: cell problems, effective Darcy laws and velocity reconstruction"};
  app.require_subcommand(1);

  Overrides cell_o, darcy_o, profile_o;
  CLI::App* cell = app.add_subcommand("cell", "solve the cell problems and tabulate the effective law");
  add_common(cell, cell_o);
  CLI::App* darcy = app.add_subcommand("darcy", "solve the macroscopic Darcy problem");
  add_common(darcy, darcy_o);
  CLI::App* profile = app.add_subcommand("profile", "reconstruct the velocity profile at a macro point");
  add_common(profile, profile_o);
  std::vector<double> x_point;
  profile->add_option("--x", x_point, "macro point x1 x2 (overrides the config)")->expected(2);

  CLI::App* regime = app.add_subcommand("regime", "print the regime, limit model and scaling exponents");
  std::string ell, gamma, r;
  regime->add_option("--ell", ell, "obstacle size exponent, e.g. 1/2")->required();
  regime->add_option("--gamma", gamma, "viscosity scaling exponent")->required();
  regime->add_option("--r", r, "Carreau flow index")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  return vtpm::run_guarded(std::cerr, [&]() -> int {
    if (*cell) return vtpm::cmd_cell(resolve(cell_o), std::cerr);
    if (*darcy) return vtpm::cmd_darcy(resolve(darcy_o), std::cerr);
    if (*profile) {
      vtpm::RunConfig c = resolve(profile_o);
      if (!x_point.empty()) c.profile.x = {x_point[0], x_point[1]};
      return vtpm::cmd_profile(c, std::cerr);
    }
    vtpm::Rational e, g, q;
    try {
      e = vtpm::Rational::parse(ell);
      g = vtpm::Rational::parse(gamma);
      q = vtpm::Rational::parse(r);
    } catch (const vtpm::Error& err) {
      throw vtpm::ConfigError("regime", err.what());
    }
    return vtpm::cmd_regime(e, g, q, std::cout);
  });
}
