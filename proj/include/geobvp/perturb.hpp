#pragma once

#include "geobvp/bvp.hpp"
#include "geobvp/jacobi.hpp"

#include <memory>
#include <string>
#include <vector>

namespace geobvp {

/// Open parameter interval (lo, hi) of a geodesic. For a k-fold iterate the
/// interval lies in [0, 1/k) and the perturbation acts on the shift sum
/// sum_i J(t + i/k).
struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  int k = 1;
  double center() const { return 0.5 * (lo + hi); }
  double half_width() const { return 0.5 * (hi - lo); }
};

struct IntervalOptions {
  double max_half_width = 0.25;
  /// Parallel-component floor relative to max |J ⊥ γ'|.
  double threshold = 1e-3;
};

/// Throws EverywhereParallel, StronglyDegenerate (periodic γ whose shift sum
/// is parallel to γ' everywhere) or NoInterval.
Interval select_interval(const GeodesicCurve& curve, const JacobiField& J, const IntervalOptions& options = {});

/// Symmetric 2-tensor h = β(t) χ(ρ / R) φ(d) K(t) in a tube of radius R
/// around γ(I). t is the foot point on γ(I), ρ the chart distance to it, d
/// the signed distance along the unit field F ⊥ γ' (F = J or the shift sum),
/// φ(d) = (d / |F⊥|)(1 - 3d / (2R)), β and χ unit-height mollifiers, and
/// K = γ'♭ ⊗ γ'♭ / |γ'|^4 with ♭ and norms in the Euclidean chart metric.
/// Vanishes on γ; its derivative along F at γ(t) is β(t) K(t).
class PerturbationTensor final : public TensorField {
 public:
  struct Cheb {
    double a = 0.0, b = 1.0;
    std::vector<Vector> coef;
    Vector operator()(double t) const;
    Cheb derivative() const;
  };

  PerturbationTensor(int n, Interval interval, double radius, Vector periods, Cheb position, Cheb velocity,
                     Cheb field);

  int dim() const override { return n_; }
  Matrix value(const Vector& x) const override;

  const Interval& interval() const { return interval_; }
  double radius() const { return radius_; }
  /// Foot parameter in [lo, hi] and chart distance of x to γ(I).
  std::pair<double, double> foot(const Point& x) const;
  Point curve_point(double t) const { return pos_(t); }
  Vector curve_velocity(double t) const { return vel_(t); }
  /// F(t) for t in the interval.
  Vector field(double t) const { return field_(t); }

 private:
  Vector reduce(Vector d) const;

  int n_;
  Interval interval_;
  double radius_;
  Vector periods_;
  Cheb pos_, vel_, acc_, field_;
  std::vector<double> coarse_t_;
  std::vector<Point> coarse_x_;
  double coarse_gap_ = 0.0;
};

struct BumpOptions {
  /// Tube radius; 0 picks a tenth of the chart length of γ(I).
  double radius = 0.0;
  /// Overlapping tubes are halved down to this radius before TubeOverlap.
  double min_radius = 1e-3;
};

std::shared_ptr<PerturbationTensor> build_bump(const MetricField& g, const GeodesicCurve& curve, const JacobiField& J,
                                               const Interval& interval, const BumpOptions& options = {});

/// Mixed pairing of h with J. Throws CertificateFailed (value attached)
/// unless it exceeds ten times the quadrature error estimate.
double certify_transversality(const MetricField& g, const GeodesicCurve& curve, const JacobiField& J,
                              const TensorField& h);

struct RemovalRow {
  double eps = 0.0;
  bool converged = false;
  double residual = 0.0;
  int kernel_dim = -1;
  double sigma_min = 0.0;
  double sigma_max = 0.0;
  std::string error;
};

/// Re-solves the problem for g + eps h from the data of sol and recomputes
/// the degeneracy report, one row per eps in the given order.
std::vector<RemovalRow> degeneracy_removal_experiment(const MetricField& g, const BoundaryCondition& P,
                                                      const GPGeodesic& sol, const std::shared_ptr<const TensorField>& h,
                                                      const std::vector<double>& eps_list,
                                                      const ShootingOptions& options = {});

std::vector<double> default_eps_list();

/// Full pipeline on a degenerate solution: kernel field, interval, bump,
/// certificate and the removal table.
struct RemovalExperiment {
  DegeneracyReport baseline;
  Interval interval;
  std::shared_ptr<PerturbationTensor> tensor;
  double pairing = 0.0;
  std::vector<RemovalRow> rows;
};

RemovalExperiment run_removal(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol,
                              const std::vector<double>& eps_list, const ShootingOptions& options = {},
                              const IntervalOptions& interval_options = {}, const BumpOptions& bump_options = {});

}  // namespace geobvp
