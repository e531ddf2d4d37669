// geobvp: command-line front end for the boundary value solver.
#include "geobvp/cli.hpp"

#include "CLI11.hpp"

#include <iostream>

int main(int argc, char** argv) {
  CLI::App app{"Geodesic boundary value problems: solve, degeneracy, index form, perturbation"};
  app.set_version_flag("--version", geobvp::kVersion);
  app.require_subcommand(1);

  std::string scenario, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> mesh;
  for (const auto& name : geobvp::subcommands()) {
    auto* sub = app.add_subcommand(name, "Run the '" + name + "' pipeline");
    sub->add_option("--scenario", scenario, "Scenario JSON file")->required();
    sub->add_option("--out", out, "Output directory")->required();
    sub->add_option("--seed", seed, "Override the scenario seed");
    sub->add_option("--mesh", mesh, "Override the solver mesh N");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? geobvp::kExitOk : geobvp::kExitConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();
  return geobvp::run(name, scenario, out, geobvp::RunOptions{seed, mesh}, std::clog);
}
