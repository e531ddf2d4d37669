#pragma once

#include "geobvp/coeff_function.hpp"
#include "geobvp/metric.hpp"

#include "json.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace geobvp {

/// Smooth map from a parameter box into R^m with optional closed-form
/// derivatives. Missing derivatives are taken by central differences.
struct ParamMap {
  int in_dim = 0;
  int out_dim = 0;
  Box box;
  std::function<Vector(const Vector&)> value;
  std::function<Matrix(const Vector&)> jacobian;
  /// Column i*in_dim + j holds d_i d_j of the map.
  std::function<Matrix(const Vector&)> hessian;

  Matrix jac(const Vector& u) const;
  Matrix hess(const Vector& u) const;
};

/// Affine submanifold base + directions * u of R^n.
ParamMap affine_map(const Vector& base, const Matrix& directions, const Box& box);
/// Map given by one coefficient table per output coordinate.
ParamMap coefficient_map(const std::vector<CoeffFunction>& coords, const Box& box);

enum class BoundaryKind { PointPair, Product, Parametric, Diagonal };

const char* to_string(BoundaryKind kind);

/// A d-dimensional parametrized submanifold P of M x M, u -> (p(u), q(u)).
class BoundaryCondition {
 public:
  BoundaryCondition(BoundaryKind kind, int n, ParamMap embed, std::string name = {});

  BoundaryKind kind() const { return kind_; }
  int dim() const { return n_; }
  int param_dim() const { return embed_.in_dim; }
  const Box& param_box() const { return embed_.box; }
  const std::string& name() const { return name_; }

  Vector embed(const Vector& u) const { return embed_.value(u); }
  Point p(const Vector& u) const { return embed(u).head(n_); }
  Point q(const Vector& u) const { return embed(u).tail(n_); }
  /// 2n x d.
  Matrix jacobian(const Vector& u) const { return embed_.jac(u); }
  /// 2n x d^2, column i*d + j is d_i d_j embed.
  Matrix hessian(const Vector& u) const { return embed_.hess(u); }

  const ParamMap& map() const { return embed_; }

 private:
  BoundaryKind kind_;
  int n_;
  ParamMap embed_;
  std::string name_;
};

BoundaryCondition point_pair(const Point& p, const Point& q);
/// P0 x Q0 with P0 = first(u_head), Q0 = second(u_tail).
BoundaryCondition product(const ParamMap& first, const ParamMap& second);
/// Arbitrary embedding given as 2n coefficient tables in d parameters.
BoundaryCondition parametric(const std::vector<CoeffFunction>& coords, const Box& box);
/// The diagonal {(x, x)} over a box of M.
BoundaryCondition diagonal(const Box& box);
/// u -> (q(u), p(u)).
BoundaryCondition transpose(const BoundaryCondition& P);

/// Boundary block of a scenario file.
BoundaryCondition boundary_from_json(const nlohmann::json& j, int n);

/// Tangent and ḡ-normal frames of P at u.
struct EndpointFrame {
  Vector u;
  Point p;
  Point q;
  Matrix tangent;
  Matrix normal;
  Matrix gram;
  /// diag(g(p), -g(q)).
  Matrix gbar;
};

/// Throws ImmersionFailure when the Jacobian loses rank.
EndpointFrame endpoint_frame(const BoundaryCondition& P, const MetricField& g, const Vector& u);

inline constexpr double kGramTol = 1e-8;

struct NondegeneracyReport {
  bool nondegenerate = true;
  /// Smallest singular value of the gram relative to |T|^2 |ḡ|; 1 when d = 0.
  double conditioning = 1.0;
  Vector worst_u;
};

/// Conditioning of the gram at one parameter point.
double gram_conditioning(const EndpointFrame& frame);

/// Samples the parameter box on a grid of `samples` points per dimension
/// (capped at 4096 points in total) and refines around the worst samples.
NondegeneracyReport is_nondegenerate(const BoundaryCondition& P, const MetricField& g, int samples = 32);

/// S_η(e_i, e_j) = ḡ(∇̄_{e_i} e_j, η) on the coordinate tangent basis.
/// Throws NotNormal when η is not ḡ-orthogonal to T P.
Matrix second_fundamental_form(const BoundaryCondition& P, const MetricField& g, const Vector& u,
                               const Vector& eta);

struct AdmissibilityReport {
  /// False when P is degenerate; the remaining verdicts are then not issued.
  bool applicable = true;
  bool intersects_diagonal = false;
  bool transversal = true;
  bool certified_admissible = false;
  double min_distance = 0.0;
  std::vector<Vector> intersections;
  /// Smallest σ_min / σ_max of [T | Δ] over the intersections.
  double transversality = 1.0;
  NondegeneracyReport nondegeneracy;
};

AdmissibilityReport check_admissibility(const BoundaryCondition& P, const MetricField& g, int samples,
                                        const MetricField& reference, std::uint64_t seed = 0);
AdmissibilityReport check_admissibility(const BoundaryCondition& P, const MetricField& g, int samples = 32,
                                        std::uint64_t seed = 0);

enum class ChristoffelNorm {
  /// sup over Euclidean unit a of |Γ(a, a)|.
  Operator,
  /// max |Γ^k_ij|.
  MaxEntry,
};

struct ShortGeodesicBound {
  double kappa = 1.0;
  double c = 2.0;
  Point argmax;
};

ShortGeodesicBound short_geodesic_bound(const MetricField& g, const Box& K, int samples = 16,
                                        ChristoffelNorm norm = ChristoffelNorm::Operator);

struct ShortGeodesicCheck {
  int geodesics = 0;
  /// min over geodesics of c*∫|γ'| - |γ'(1)/|γ'(1)| - γ'(0)/|γ'(0)||.
  double turning_slack = 0.0;
  /// min over geodesics of κ∫|γ'| - |log(|γ'(1)|/|γ'(0)|)|.
  double speed_slack = 0.0;
};

/// Integrates `count` random short geodesics that stay inside K and checks
/// both inequalities in the Euclidean chart norm.
ShortGeodesicCheck validate_short_geodesic_bound(const MetricField& g, const Box& K, const ShortGeodesicBound& bound,
                                                 int count = 50, std::uint64_t seed = 0);

}  // namespace geobvp
