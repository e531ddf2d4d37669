#pragma once

#include "geobvp/metric.hpp"
#include "geobvp/ode.hpp"

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace geobvp {

struct IntegratorReport {
  int steps = 0;
  double max_residual = 0.0;
};

/// Affinely parametrized discrete curve on [0, 1] with N + 1 uniform knots.
struct GeodesicCurve {
  std::vector<Point> knots;
  std::vector<Vector> velocities;
  std::string metric_id;
  /// Coordinate periods of the chart the curve lives in (0 = not periodic).
  Vector periods;
  IntegratorReport integrator_report;

  int segments() const { return static_cast<int>(knots.size()) - 1; }
  int dim() const { return knots.empty() ? 0 : static_cast<int>(knots.front().size()); }
  double time(int i) const { return static_cast<double>(i) / segments(); }

  /// Cubic Hermite interpolation from knots and velocities.
  Point position(double t) const;
  Vector velocity(double t) const;

  Vector chart_difference(const Point& a, const Point& b) const;
};

/// Reference Riemannian metric used for lengths, distances and frames.
/// Defaults to the Euclidean chart metric.
const MetricField& default_reference(int n);

GeodesicCurve integrate(const MetricField& g, const Point& p, const Vector& v, int segments,
                        const OdeOptions& options = {});

/// Geodesic position/velocity at arbitrary non-decreasing times in [0, 1].
std::vector<std::pair<Point, Vector>> sample_geodesic(const MetricField& g, const Point& p, const Vector& v,
                                                      const std::vector<double>& times,
                                                      const OdeOptions& options = {});

/// -Gamma(x)(v, v).
Vector geodesic_acceleration(const MetricField& g, const Point& x, const Vector& v);

/// Max over segments of the midpoint collocation residual
/// |(v_{i+1} - v_i)/h - Simpson mean of the geodesic acceleration|.
double geodesic_residual(const MetricField& g, const GeodesicCurve& curve);

/// Composite 4th-order quadrature weights on N + 1 uniform knots of [0, 1].
std::vector<double> composite_weights(int segments);

double riemannian_length(const GeodesicCurve& curve, const MetricField& reference);
double riemannian_length(const GeodesicCurve& curve);

/// 1/2 int_0^1 g(γ', γ') dt.
double energy(const MetricField& g, const GeodesicCurve& curve);

/// Reference distance between chart points, using the chart identification.
double reference_distance(const MetricField& reference, const Vector& periods, const Point& a, const Point& b);

struct PeriodicityReport {
  bool periodic = false;
  std::optional<int> k;
  /// Worst knot mismatch relative to the tolerance for the reported k
  /// (or the best candidate when none passes). Values well below 1 mean a
  /// confident classification.
  double mismatch_ratio = 0.0;
};

PeriodicityReport detect_periodicity(const GeodesicCurve& curve, int k_max, const MetricField& reference);
PeriodicityReport detect_periodicity(const GeodesicCurve& curve, int k_max = 8);

/// True when γ(1) is identified with γ(0) and the velocities agree.
bool is_closed(const GeodesicCurve& curve, const MetricField& reference);

struct IntersectionReport {
  /// Set when the curve is a k-fold iterate; `pairs` is then left empty.
  bool periodic = false;
  std::optional<int> k;
  std::vector<std::pair<double, double>> pairs;
};

IntersectionReport self_intersections(const GeodesicCurve& curve, const MetricField& reference);
IntersectionReport self_intersections(const GeodesicCurve& curve);

}  // namespace geobvp
