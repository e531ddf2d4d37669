#pragma once

#include "geobvp/types.hpp"

#include "json.hpp"

#include <memory>
#include <string>
#include <vector>

namespace geobvp {

enum class DerivMode { Analytic, CentralDifference };

/// Symmetric 2-tensor field on a single chart.
///
/// Derivatives default to 4th-order central differences; builtin fields
/// override them with closed forms. `second_partials` is laid out row-major,
/// entry i*n + j holds d_i d_j of the tensor.
class TensorField {
 public:
  virtual ~TensorField() = default;

  virtual int dim() const = 0;
  virtual Matrix value(const Vector& x) const = 0;
  virtual std::vector<Matrix> partials(const Vector& x) const;
  virtual std::vector<Matrix> second_partials(const Vector& x) const;
  virtual bool has_analytic_derivatives() const { return false; }
};

/// Central-difference step for first derivatives: cbrt(eps) * max(1, |x_i|).
double first_difference_step(double xi);
/// Step for second derivatives: eps^(1/6) * max(1, |x_i|).
double second_difference_step(double xi);

std::vector<Matrix> fd_partials(const TensorField& f, const Vector& x);
std::vector<Matrix> fd_second_partials(const TensorField& f, const Vector& x);

/// A semi-Riemannian metric of fixed index on a chart domain.
///
/// Coordinates listed in `periods` with a positive entry are identified
/// modulo that period; the identification enters only through
/// `chart_difference` (distances, endpoint matching), never through the
/// tensor itself.
class MetricField {
 public:
  MetricField(std::shared_ptr<const TensorField> field, int index, std::string name, Box domain,
              Vector periods = Vector(), DerivMode mode = DerivMode::Analytic);

  int dim() const { return field_->dim(); }
  int index() const { return index_; }
  const std::string& name() const { return name_; }
  DerivMode deriv_mode() const { return mode_; }
  const Box& domain() const { return domain_; }
  const Vector& periods() const { return periods_; }
  const std::shared_ptr<const TensorField>& field() const { return field_; }

  Matrix value(const Point& x) const { return field_->value(x); }
  std::vector<Matrix> partials(const Point& x) const;
  std::vector<Matrix> second_partials(const Point& x) const;

  bool in_domain(const Point& x) const { return domain_.contains(x); }

  /// a - b with periodic coordinates reduced to (-period/2, period/2].
  Vector chart_difference(const Point& a, const Point& b) const;

  /// Throws SingularMetric when the smallest |eigenvalue| drops below
  /// 1e-10 times the largest, InvalidMetric when the index is wrong.
  void check_nondegenerate(const Point& x) const;

  MetricField with_deriv_mode(DerivMode mode) const;
  MetricField scaled(double factor) const;
  /// g + eps * h on the same chart.
  MetricField perturbed(std::shared_ptr<const TensorField> h, double eps) const;

 private:
  std::shared_ptr<const TensorField> field_;
  int index_;
  std::string name_;
  Box domain_;
  Vector periods_;
  DerivMode mode_;
};

inline constexpr double kNondegeneracyTol = 1e-10;

/// Gamma^k_{ij}; `symbols[k](i, j)`.
struct ChristoffelEval {
  Point point;
  std::vector<Matrix> symbols;

  int dim() const { return static_cast<int>(symbols.size()); }
  /// Vector with components Gamma^k_{ij} a^i b^j.
  Vector contract(const Vector& a, const Vector& b) const;
  /// Matrix M with M(k, j) = Gamma^k_{ij} a^i, so that contract(a, b) = M b.
  Matrix contract_first(const Vector& a) const;
};

/// R^l_{ijk} with R(d_i, d_j) d_k = R^l_{ijk} d_l and
/// R(X, Y) = [nabla_X, nabla_Y] - nabla_[X,Y].
struct CurvatureEval {
  Point point;
  int n = 0;
  std::vector<double> data;
  Matrix metric;

  double operator()(int l, int i, int j, int k) const {
    return data[static_cast<std::size_t>(((l * n + i) * n + j) * n + k)];
  }
  /// R(X, Y) Z.
  Vector apply(const Vector& X, const Vector& Y, const Vector& Z) const;
  /// g(R(X, Y) Z, W).
  double lowered(const Vector& X, const Vector& Y, const Vector& Z, const Vector& W) const;
  /// Matrix of Z -> R(X, Z) X.
  Matrix jacobi_operator(const Vector& X) const;
  /// Sectional curvature of the plane spanned by X, Y.
  double sectional(const Vector& X, const Vector& Y) const;
};

ChristoffelEval christoffel(const MetricField& g, const Point& x);

/// d_m Gamma^k_{ij}, indexed [m][k](i, j).
std::vector<std::vector<Matrix>> christoffel_partials(const MetricField& g, const Point& x);

CurvatureEval curvature(const MetricField& g, const Point& x);

/// diag(g(p), -g(q)).
Matrix product_metric(const MetricField& g, const Point& p, const Point& q);

/// sqrt(g_R(v, v)) at x.
double reference_norm(const MetricField& reference, const Point& x, const Vector& v);

/// Index (number of negative eigenvalues) of a symmetric matrix.
int matrix_index(const Matrix& m);

// Builtin metrics.
MetricField euclidean(int n);
MetricField minkowski(int n, int index = 1);
/// Flat R^2 identified modulo `period` in both coordinates.
MetricField flat_torus(double period = 1.0);

enum class SphereChart { Spherical, Stereographic };
/// Round 2-sphere of the given radius. Spherical chart: ds^2 = R^2 (dθ^2 + sin^2θ dφ^2)
/// with φ 2π-periodic; stereographic chart from the south pole:
/// ds^2 = 4R^2 / (1 + |x|^2)^2 |dx|^2.
MetricField sphere2(double radius = 1.0, SphereChart chart = SphereChart::Spherical);

/// dx^2 + f(x)^2 dy^2 with f a polynomial (coefficients a_0, a_1, ...).
MetricField warped(std::vector<double> f_coefs, double y_period = 0.0, double x_lo = -1.0,
                   double x_hi = 1.0);

/// Metric block of a scenario file.
MetricField metric_from_json(const nlohmann::json& j);

}  // namespace geobvp
