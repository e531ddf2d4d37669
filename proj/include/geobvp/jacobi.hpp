#pragma once

#include "geobvp/boundary.hpp"
#include "geobvp/bvp.hpp"
#include "geobvp/geodesic.hpp"

#include <optional>
#include <vector>

namespace geobvp {

/// Jacobi field along a geodesic, sampled on the curve's knots.
struct JacobiField {
  std::vector<Vector> J;
  /// Covariant derivative D J.
  std::vector<Vector> DJ;
  /// Coordinate derivative dJ/dt, used for interpolation.
  std::vector<Vector> Jdot;
  /// (J(0), DJ(0)).
  Vector init;

  int segments() const { return static_cast<int>(J.size()) - 1; }
  /// Cubic Hermite value at t in [0, 1].
  Vector at(double t) const;
  /// Derivative of the interpolant.
  Vector rate(double t) const;
  /// Linear combination sum_i c_i fields_i.
  static JacobiField combine(const std::vector<JacobiField>& fields, const Vector& c);
};

/// Integrates D^2 J = R(γ', J) γ' jointly with the geodesic through
/// (γ(0), γ'(0)); returns one field per column of `inits` (2n x m).
std::vector<JacobiField> jacobi_basis(const MetricField& g, const GeodesicCurve& curve, const Matrix& inits,
                                      const OdeOptions& options = {});

JacobiField jacobi_solve(const MetricField& g, const GeodesicCurve& curve, const Vector& J0, const Vector& DJ0,
                         const OdeOptions& options = {});

/// Max over segments of the Simpson midpoint residual of the Jacobi
/// equation, relative to max |DJ| + max |J|.
double jacobi_residual(const MetricField& g, const GeodesicCurve& curve, const JacobiField& field);

enum class Degeneracy { Nondegenerate, Degenerate, StronglyDegenerate };

const char* to_string(Degeneracy d);

inline constexpr double kKernelTol = 1e-6;

struct DegeneracyReport {
  /// 2n x 2n map (J(0), DJ(0)) -> scaled boundary residuals.
  Matrix boundary_matrix;
  /// Descending.
  Vector singular_values;
  int kernel_dim = 0;
  /// Smallest kept over largest dropped singular value; infinite when the
  /// kernel is empty.
  double gap = 0.0;
  /// Initial data of the kernel fields, normalized so that
  /// max(|J(0) minus its γ' component|, |DJ(0)|) = 1 in the reference metric.
  std::vector<Vector> kernel_init;
  std::vector<JacobiField> kernel_basis;
  Degeneracy classification = Degeneracy::Nondegenerate;
  /// Set when the curve is a k-fold iterate.
  std::optional<int> period_k;
};

/// Boundary residuals of the linearized conditions for initial data x = (J0, DJ0):
/// normal coordinates of (J(0), J(1)), then tangent pairings of
/// (DJ(0), DJ(1)) plus the shape operator term.
Matrix boundary_matrix(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol,
                       const OdeOptions& options = {});

/// Throws DegenerateP when the gram of P at sol.u is singular.
DegeneracyReport boundary_operator(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol,
                                   const OdeOptions& options = {});

/// Times where J is parallel to γ' in the reference metric. Throws
/// EverywhereParallel when every knot qualifies.
std::vector<double> parallel_locus(const GeodesicCurve& curve, const JacobiField& field,
                                   const MetricField& reference);
std::vector<double> parallel_locus(const GeodesicCurve& curve, const JacobiField& field);

struct StrongDegeneracyReport {
  bool strongly_degenerate = false;
  /// σ_min / σ_max of the map (c, λ) -> sampled sum_i (sum_j c_j J_j)(t + i/k) - λ γ'(t).
  double conditioning = 1.0;
  /// Coefficients (c, λ) of the witness when strongly degenerate.
  Vector witness;
};

StrongDegeneracyReport strongly_degenerate_check(const GeodesicCurve& curve, const std::vector<JacobiField>& kernel,
                                                 int k);

struct PeriodicDegeneracyReport {
  bool degenerate_as_periodic = false;
  /// dim ker(M - I).
  int fixed_dim = 0;
  Matrix monodromy;
  /// Singular values of M - I, descending.
  Vector singular_values;
};

/// Monodromy over the whole parameter interval of a closed geodesic;
/// degenerate iff the fixed space of M exceeds span (γ'(0), 0).
/// Throws NotClosed when γ(1) is not identified with γ(0).
PeriodicDegeneracyReport periodic_degeneracy(const MetricField& g, const GeodesicCurve& curve,
                                             const OdeOptions& options = {});

}  // namespace geobvp
