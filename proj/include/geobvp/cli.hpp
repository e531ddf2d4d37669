#pragma once

#include "geobvp/boundary.hpp"
#include "geobvp/bvp.hpp"
#include "geobvp/perturb.hpp"

#include "json.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace geobvp {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kScenarioVersion = 1;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitNoConvergence = 3;

struct SolverConfig {
  ShootingOptions shooting;
  SeedGrid grid;
  double L_max = 10.0;
  double min_length = 1e-6;
  /// Explicit seeds tried before the grid.
  std::vector<Seed> initial;
};

struct ExperimentConfig {
  std::vector<double> eps = default_eps_list();
  /// Index-form meshes; empty means N, 2N, 4N with N the solver mesh.
  std::vector<int> meshes;
  IntervalOptions interval;
  BumpOptions bump;
};

struct AdmissibilityConfig {
  int samples = 32;
  /// Box for the short-geodesic bound; empty picks the bounding box of P's
  /// endpoints padded by 0.25 and clipped to the chart domain.
  std::optional<Box> box;
  int kappa_samples = 16;
  int geodesics = 50;
  ChristoffelNorm norm = ChristoffelNorm::Operator;
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  nlohmann::json metric_json;
  MetricField g;
  BoundaryCondition P;
  SolverConfig solver;
  ExperimentConfig experiment;
  AdmissibilityConfig admissibility;
};

/// Strict schema: unknown keys, wrong types, non-positive tolerances,
/// N < 16 or L_max <= 0 raise ConfigError.
Scenario parse_scenario(const nlohmann::json& j);
Scenario load_scenario(const std::string& path);

struct RunOptions {
  std::optional<std::uint64_t> seed;
  std::optional<int> mesh;
};

const std::vector<std::string>& subcommands();

/// Runs one subcommand and writes its artifacts and manifest.json under
/// out_dir. Returns the process exit code; diagnostics go to `log`.
int run(const std::string& subcommand, const std::string& scenario_path, const std::string& out_dir,
        const RunOptions& options, std::ostream& log);

/// %.17g.
std::string format_double(double x);

/// Reads a curve CSV (t, x..., v...) written by `solve`.
GeodesicCurve load_curve_csv(const std::string& path, const Vector& periods = Vector());

}  // namespace geobvp
