#include "geobvp/indexform.hpp"

#include "geobvp/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

namespace geobvp {

namespace {

std::pair<int, double> locate(double t, int segments) {
  const double x = std::clamp(t, 0.0, 1.0) * segments;
  const int i = std::clamp(static_cast<int>(std::floor(x)), 0, segments - 1);
  return {i, x - i};
}

// Geodesic states at the requested times, integrated from the curve's
// initial data.
std::vector<Vector> geodesic_states(const MetricField& g, const GeodesicCurve& curve, const std::vector<double>& times) {
  const int n = g.dim();
  Vector y0(2 * n);
  y0 << curve.knots.front(), curve.velocities.front();
  auto rhs = [&](double, const Vector& y, Vector& dy) {
    dy.resize(2 * n);
    dy.head(n) = y.tail(n);
    dy.tail(n) = geodesic_acceleration(g, y.head(n), y.tail(n));
  };
  return integrate_ode(rhs, y0, 0.0, times, OdeOptions{});
}

struct GaussRule {
  std::vector<double> nodes;  // on [0, 1]
  std::vector<double> weights;
};

const GaussRule& gauss2() {
  static const GaussRule r{{0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)}, {0.5, 0.5}};
  return r;
}

const GaussRule& gauss3() {
  static const GaussRule r{{0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)},
                           {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0}};
  return r;
}

using FieldSample = std::function<std::pair<Vector, Vector>(double)>;

QuadratureValue mixed_quadrature(const MetricField& g, const GeodesicCurve& curve, const TensorField& h,
                                 const FieldSample& field, int field_segments, Connection connection) {
  const int n = g.dim();
  const MetricField& ref = default_reference(n);
  const int M = std::lcm(curve.segments(), field_segments);
  auto integrand = [&](double t) {
    const Point x = curve.position(t);
    const Vector gd = curve.velocity(t);
    const auto [v, vdot] = field(t);
    const ChristoffelEval G = connection == Connection::Metric ? christoffel(g, x) : christoffel(ref, x);
    const Vector Dv = vdot + G.contract(gd, v);
    const Matrix H = h.value(x);
    const auto dH = h.partials(x);
    double dvh = 0.0;
    for (int k = 0; k < n; ++k) dvh += v[k] * gd.dot(dH[static_cast<std::size_t>(k)] * gd);
    const double nabla = dvh - 2.0 * G.contract(v, gd).dot(H * gd);
    return gd.dot(H * Dv) + 0.5 * nabla;
  };
  double coarse = 0.0, fine = 0.0;
  for (int e = 0; e < M; ++e) {
    const double a = static_cast<double>(e) / M, w = 1.0 / M;
    for (std::size_t q = 0; q < 2; ++q) coarse += w * gauss2().weights[q] * integrand(a + w * gauss2().nodes[q]);
    for (std::size_t q = 0; q < 3; ++q) fine += w * gauss3().weights[q] * integrand(a + w * gauss3().nodes[q]);
  }
  return {fine, std::abs(fine - coarse)};
}

}  // namespace

Vector DiscreteVariation::at(double t) const {
  const auto [i, s] = locate(t, segments());
  const auto k = static_cast<std::size_t>(i);
  return (1.0 - s) * values[k] + s * values[k + 1];
}

Vector DiscreteVariation::rate(double t) const {
  const auto [i, s] = locate(t, segments());
  (void)s;
  const auto k = static_cast<std::size_t>(i);
  return (values[k + 1] - values[k]) * segments();
}

DiscreteVariation IndexFormMatrix::variation(const Vector& c) const {
  DiscreteVariation v;
  v.values.resize(static_cast<std::size_t>(mesh) + 1);
  const Vector ends = d > 0 ? Vector(tangent * c.tail(d)) : Vector(Vector::Zero(2 * n));
  v.values.front() = ends.head(n);
  v.values.back() = ends.tail(n);
  for (int i = 1; i < mesh; ++i) v.values[static_cast<std::size_t>(i)] = c.segment((i - 1) * n, n);
  return v;
}

IndexFormMatrix assemble(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol, int mesh) {
  const int n = P.dim(), d = P.param_dim(), N = mesh;
  if (N < 2) throw GeoError(ErrorCode::ConfigError, "index form mesh must have at least 2 elements");
  if (d > 0) {
    const double c = gram_conditioning(sol.frame);
    if (c < kGramTol) throw ValuedError(ErrorCode::DegenerateP, "gram of P is singular at the solution", c);
  }
  const auto& rule = gauss2();
  std::vector<double> times;
  for (int e = 0; e < N; ++e)
    for (double xi : rule.nodes) times.push_back((e + xi) / N);
  const auto states = geodesic_states(g, sol.curve, times);

  const int full = (N + 1) * n;
  Matrix Af = Matrix::Zero(full, full), Gf = Matrix::Zero(full, full);
  const Matrix I = Matrix::Identity(n, n);
  std::size_t s = 0;
  for (int e = 0; e < N; ++e) {
    for (std::size_t q = 0; q < rule.nodes.size(); ++q, ++s) {
      const double xi = rule.nodes[q], w = rule.weights[q] / N;
      const Point x = states[s].head(n);
      const Vector v = states[s].tail(n);
      const Matrix gx = g.value(x);
      const Matrix Gv = christoffel(g, x).contract_first(v);
      Matrix Rg = gx * curvature(g, x).jacobi_operator(v);
      Rg = 0.5 * (Rg + Rg.transpose()).eval();
      Matrix Dloc(n, 2 * n), Cloc(n, 2 * n), Vloc(n, 2 * n);
      Dloc << -N * I + (1.0 - xi) * Gv, N * I + xi * Gv;
      Cloc << -N * I, N * I;
      Vloc << (1.0 - xi) * I, xi * I;
      Af.block(e * n, e * n, 2 * n, 2 * n) += w * (Dloc.transpose() * gx * Dloc + Vloc.transpose() * Rg * Vloc);
      Gf.block(e * n, e * n, 2 * n, 2 * n) += w * (Cloc.transpose() * Cloc + Vloc.transpose() * Vloc);
    }
  }

  const int dof = (N - 1) * n + d;
  Matrix Z = Matrix::Zero(full, dof);
  for (int i = 1; i < N; ++i) Z.block(i * n, (i - 1) * n, n, n) = I;
  if (d > 0) {
    Z.block(0, dof - d, n, d) = sol.frame.tangent.topRows(n);
    Z.block(N * n, dof - d, n, d) = sol.frame.tangent.bottomRows(n);
  }
  IndexFormMatrix out;
  out.mesh = N;
  out.n = n;
  out.d = d;
  out.tangent = sol.frame.tangent;
  out.A = Z.transpose() * Af * Z;
  out.G = Z.transpose() * Gf * Z;
  if (d > 0) {
    Vector eta(2 * n);
    eta << sol.curve.velocities.front(), sol.curve.velocities.back();
    out.A.bottomRightCorner(d, d) -= second_fundamental_form(P, g, sol.u, eta);
  }
  out.A = 0.5 * (out.A + out.A.transpose()).eval();
  out.G = 0.5 * (out.G + out.G.transpose()).eval();

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(out.A, out.G);
  if (es.info() != Eigen::Success) throw GeoError(ErrorCode::SingularJacobian, "index form pencil solve failed");
  out.eigenvalues = es.eigenvalues();
  out.eigenvectors = es.eigenvectors();

  double rho = 0.0;
  for (const auto& v : sol.curve.velocities) rho = std::max(rho, v.norm());
  out.tolerance = 0.5 * (1.0 + rho) * (1.0 + rho) / (static_cast<double>(N) * N);
  double inside = 0.0, outside = std::numeric_limits<double>::infinity();
  for (int i = 0; i < out.eigenvalues.size(); ++i) {
    const double l = out.eigenvalues[i];
    if (l < -out.tolerance) ++out.morse_index;
    if (std::abs(l) <= out.tolerance) {
      ++out.kernel_dim;
      inside = std::max(inside, std::abs(l));
    } else {
      outside = std::min(outside, std::abs(l));
    }
  }
  out.gap = outside / std::max(out.kernel_dim > 0 ? inside : out.tolerance, std::numeric_limits<double>::min());
  return out;
}

KernelComparison kernel_compare(const DegeneracyReport& report, const IndexFormMatrix& ifm) {
  return {report.kernel_dim == ifm.kernel_dim, report.kernel_dim, ifm.kernel_dim};
}

QuadratureValue mixed_derivative_estimate(const MetricField& g, const GeodesicCurve& curve, const TensorField& h,
                                          const JacobiField& v, Connection connection) {
  return mixed_quadrature(
      g, curve, h, [&](double t) { return std::make_pair(v.at(t), v.rate(t)); }, v.segments(), connection);
}

QuadratureValue mixed_derivative_estimate(const MetricField& g, const GeodesicCurve& curve, const TensorField& h,
                                          const DiscreteVariation& v, Connection connection) {
  return mixed_quadrature(
      g, curve, h, [&](double t) { return std::make_pair(v.at(t), v.rate(t)); }, v.segments(), connection);
}

double mixed_derivative(const MetricField& g, const GeodesicCurve& curve, const TensorField& h, const JacobiField& v,
                        Connection connection) {
  return mixed_derivative_estimate(g, curve, h, v, connection).value;
}

double mixed_derivative(const MetricField& g, const GeodesicCurve& curve, const TensorField& h,
                        const DiscreteVariation& v, Connection connection) {
  return mixed_derivative_estimate(g, curve, h, v, connection).value;
}

}  // namespace geobvp
