#pragma once

#include "geobvp/bvp.hpp"
#include "geobvp/jacobi.hpp"

#include <vector>

namespace geobvp {

/// Piecewise-linear vector field along γ, given by its values on a uniform
/// mesh of [0, 1].
struct DiscreteVariation {
  std::vector<Vector> values;

  int segments() const { return static_cast<int>(values.size()) - 1; }
  Vector at(double t) const;
  /// Coordinate derivative, constant on each element (right-continuous).
  Vector rate(double t) const;
};

/// Index form A and H^1 gram G on variations with (v(0), v(1)) in T P,
/// reduced to (N - 1) n interior values plus d endpoint coordinates.
struct IndexFormMatrix {
  Matrix A;
  Matrix G;
  /// Ascending eigenvalues of the pencil (A, G) and G-orthonormal eigenvectors.
  Vector eigenvalues;
  Matrix eigenvectors;
  int mesh = 0;
  int n = 0;
  int d = 0;
  /// Eigenvalues with |λ| <= tolerance count as kernel.
  double tolerance = 0.0;
  int morse_index = 0;
  int kernel_dim = 0;
  /// Smallest |λ| outside the kernel band over the largest inside (or over
  /// the tolerance when the band is empty).
  double gap = 0.0;
  /// Endpoint tangent basis used for the d endpoint coordinates.
  Matrix tangent;

  /// Field of a reduced coefficient vector.
  DiscreteVariation variation(const Vector& coefficients) const;
};

/// Per-element assembly with two-point Gauss quadrature. Throws DegenerateP
/// when the gram of P at the solution is singular.
IndexFormMatrix assemble(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol, int mesh);

struct KernelComparison {
  bool match = false;
  int jacobi_dim = 0;
  int index_dim = 0;
};

KernelComparison kernel_compare(const DegeneracyReport& report, const IndexFormMatrix& ifm);

/// Symmetric connection used for D v and ∇h in the mixed derivative.
enum class Connection {
  /// Levi-Civita connection of a reference metric (flat coordinate connection
  /// for the default Euclidean reference).
  Reference,
  /// Levi-Civita connection of g.
  Metric,
};

struct QuadratureValue {
  double value = 0.0;
  /// |fine - coarse| between Gauss rules of three and two points per element.
  double error = 0.0;
};

/// ∫ h(γ', Dv) + 1/2 (∇_v h)(γ', γ') dt along γ.
QuadratureValue mixed_derivative_estimate(const MetricField& g, const GeodesicCurve& curve, const TensorField& h,
                                          const JacobiField& v, Connection connection = Connection::Reference);
QuadratureValue mixed_derivative_estimate(const MetricField& g, const GeodesicCurve& curve, const TensorField& h,
                                          const DiscreteVariation& v, Connection connection = Connection::Reference);

double mixed_derivative(const MetricField& g, const GeodesicCurve& curve, const TensorField& h, const JacobiField& v,
                        Connection connection = Connection::Reference);
double mixed_derivative(const MetricField& g, const GeodesicCurve& curve, const TensorField& h,
                        const DiscreteVariation& v, Connection connection = Connection::Reference);

}  // namespace geobvp
