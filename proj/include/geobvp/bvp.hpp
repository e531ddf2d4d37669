#pragma once

#include "geobvp/boundary.hpp"
#include "geobvp/errors.hpp"
#include "geobvp/geodesic.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace geobvp {

struct ShootingOptions {
  /// Knot count of the returned curves.
  int segments = 64;
  int max_iters = 50;
  /// Converged when |residual| < tol * (1 + |v|).
  double tol = 1e-9;
  /// Newton Jacobian from the variational equations; forward differences
  /// (step set by the integrator tolerance) otherwise.
  bool variational = true;
  /// Integrator settings for shooting; the step budget keeps runaway seeds cheap.
  OdeOptions ode = [] {
    OdeOptions o;
    o.max_steps = 20000;
    return o;
  }();
};

/// (g, P)-geodesic found by shooting.
struct GPGeodesic {
  GeodesicCurve curve;
  Vector u;
  EndpointFrame frame;
  double residual_norm = 0.0;
  int newton_iters = 0;
  /// σ_min / σ_max of the final shooting Jacobian.
  double jacobian_conditioning = 1.0;
  bool rank_deficient = false;
};

inline constexpr double kRankDeficiencyTol = 1e-6;

/// [γ(1) - q(u); ḡ((v, γ'(1)), d_j embed)] for the geodesic from p(u) with
/// velocity v.
Vector shoot_residual(const MetricField& g, const BoundaryCondition& P, const Vector& u, const Vector& v,
                      const OdeOptions& options = {});

/// Damped Newton from the seed (u0, v0). Throws NoConvergence (value: last
/// residual norm) when the iteration budget runs out or the line search
/// fails.
GPGeodesic solve(const MetricField& g, const BoundaryCondition& P, const Vector& u0, const Vector& v0,
                 const ShootingOptions& options = {});

/// Largest violation of the two defining constraints, evaluated from the
/// stored curve: endpoint mismatch and ḡ-orthogonality to T P.
double constraint_violation(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol);

struct SeedGrid {
  /// Grid points per parameter dimension.
  int param_points = 4;
  /// Velocity directions per parameter point.
  int directions = 8;
  /// Seed speeds in the reference norm.
  std::vector<double> speeds{1.0};
  /// Also seed with the chart chord q(u) - p(u).
  bool chord = true;
  std::uint64_t seed = 0;
};

struct Seed {
  Vector u;
  Vector v;
};

std::vector<Seed> make_seeds(const BoundaryCondition& P, const MetricField& g, const SeedGrid& grid);

struct SeedFailure {
  std::size_t seed_index = 0;
  ErrorCode code = ErrorCode::NoConvergence;
  std::string message;
};

/// Solutions of equal energy with rank-deficient shooting Jacobians: a
/// degenerate family.
struct SolutionCluster {
  std::vector<std::size_t> members;
  double energy = 0.0;
  bool rank_deficient = false;
};

struct ScanResult {
  std::vector<GPGeodesic> solutions;
  std::vector<SolutionCluster> clusters;
  std::vector<SeedFailure> failures;
  std::size_t seeds = 0;
  /// Converged solutions dropped for length > L_max or < min_length.
  std::size_t filtered = 0;
};

/// Solves from every seed, drops solutions longer than L_max or shorter than
/// min_length (constant curves), and deduplicates by knot distance
/// < 1e-4 (1 + length). Solutions are ordered by first seed index.
ScanResult scan(const MetricField& g, const BoundaryCondition& P, const SeedGrid& grid, double L_max,
                const ShootingOptions& options = {}, double min_length = 1e-6);

/// Max knot distance between two curves on the same mesh, using the chart
/// identification.
double curve_distance(const GeodesicCurve& a, const GeodesicCurve& b);

}  // namespace geobvp
