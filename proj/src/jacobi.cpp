#include "geobvp/jacobi.hpp"

#include "geobvp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace geobvp {

namespace {

struct HermiteWeights {
  double h00, h10, h01, h11;
};

HermiteWeights hermite(double s) {
  const double s2 = s * s, s3 = s2 * s;
  return {2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2};
}

Vector hermite_value(const std::vector<Vector>& y, const std::vector<Vector>& dy, double t) {
  const int N = static_cast<int>(y.size()) - 1;
  const double x = std::clamp(t, 0.0, 1.0) * N;
  const int i = std::clamp(static_cast<int>(std::floor(x)), 0, N - 1);
  const double s = x - i, h = 1.0 / N;
  const auto w = hermite(s);
  const auto k = static_cast<std::size_t>(i);
  return w.h00 * y[k] + w.h10 * h * dy[k] + w.h01 * y[k + 1] + w.h11 * h * dy[k + 1];
}

// D(DJ)/dt in coordinates: R(γ', J) γ' - Γ(γ', DJ).
Vector dw(const MetricField& g, const Point& x, const Vector& v, const Vector& J, const Vector& DJ) {
  const ChristoffelEval G = christoffel(g, x);
  return curvature(g, x).jacobi_operator(v) * J - G.contract(v, DJ);
}

// Component of a orthogonal to b in the reference metric at x.
Vector orthogonal_part(const MetricField& ref, const Point& x, const Vector& a, const Vector& b) {
  const Matrix G = ref.value(x);
  const double bb = b.dot(G * b);
  if (bb <= 0.0) return a;
  return a - (a.dot(G * b) / bb) * b;
}

double ref_norm(const MetricField& ref, const Point& x, const Vector& a) {
  return std::sqrt(std::max(0.0, a.dot(ref.value(x) * a)));
}

}  // namespace

Vector JacobiField::at(double t) const { return hermite_value(J, Jdot, t); }

Vector JacobiField::rate(double t) const {
  const int N = segments();
  const double x = std::clamp(t, 0.0, 1.0) * N;
  const int i = std::clamp(static_cast<int>(std::floor(x)), 0, N - 1);
  const double s = x - i, s2 = s * s;
  const auto k = static_cast<std::size_t>(i);
  return (6 * s2 - 6 * s) * N * (J[k] - J[k + 1]) + (3 * s2 - 4 * s + 1) * Jdot[k] + (3 * s2 - 2 * s) * Jdot[k + 1];
}

JacobiField JacobiField::combine(const std::vector<JacobiField>& fields, const Vector& c) {
  JacobiField out = fields.at(0);
  for (std::size_t k = 0; k < out.J.size(); ++k) {
    out.J[k].setZero();
    out.DJ[k].setZero();
    out.Jdot[k].setZero();
  }
  out.init.setZero();
  for (std::size_t i = 0; i < fields.size(); ++i) {
    const double ci = c[static_cast<Eigen::Index>(i)];
    for (std::size_t k = 0; k < out.J.size(); ++k) {
      out.J[k] += ci * fields[i].J[k];
      out.DJ[k] += ci * fields[i].DJ[k];
      out.Jdot[k] += ci * fields[i].Jdot[k];
    }
    out.init += ci * fields[i].init;
  }
  return out;
}

std::vector<JacobiField> jacobi_basis(const MetricField& g, const GeodesicCurve& curve, const Matrix& inits,
                                      const OdeOptions& options) {
  const int n = g.dim();
  const int m = static_cast<int>(inits.cols());
  if (inits.rows() != 2 * n) throw GeoError(ErrorCode::ConfigError, "Jacobi initial data must have 2n rows");
  const int N = curve.segments();
  Vector y0(2 * n + 2 * n * m);
  y0.head(n) = curve.knots.front();
  y0.segment(n, n) = curve.velocities.front();
  for (int j = 0; j < m; ++j) y0.segment(2 * n + 2 * n * j, 2 * n) = inits.col(j);
  auto rhs = [&](double, const Vector& y, Vector& dy) {
    dy.resize(y.size());
    const Vector x = y.head(n), v = y.segment(n, n);
    const ChristoffelEval G = christoffel(g, x);
    const Matrix Gv = G.contract_first(v);
    const Matrix Rv = curvature(g, x).jacobi_operator(v);
    dy.head(n) = v;
    dy.segment(n, n) = -Gv * v;
    for (int j = 0; j < m; ++j) {
      const auto off = 2 * n + 2 * n * j;
      const Vector xi = y.segment(off, n), w = y.segment(off + n, n);
      dy.segment(off, n) = w - Gv * xi;
      dy.segment(off + n, n) = Rv * xi - Gv * w;
    }
  };
  auto check = [&](double t, const Vector& y) {
    if (!g.in_domain(y.head(n))) throw ValuedError(ErrorCode::DomainExit, "trajectory left chart domain", t);
  };
  std::vector<double> times(static_cast<std::size_t>(N) + 1);
  for (int i = 0; i <= N; ++i) times[static_cast<std::size_t>(i)] = static_cast<double>(i) / N;
  const auto states = integrate_ode(rhs, y0, 0.0, times, options, nullptr, check);
  std::vector<JacobiField> out(static_cast<std::size_t>(m));
  for (int j = 0; j < m; ++j) out[static_cast<std::size_t>(j)].init = inits.col(j);
  for (const auto& y : states) {
    const Vector x = y.head(n), v = y.segment(n, n);
    const Matrix Gv = christoffel(g, x).contract_first(v);
    for (int j = 0; j < m; ++j) {
      const auto off = 2 * n + 2 * n * j;
      auto& f = out[static_cast<std::size_t>(j)];
      f.J.push_back(y.segment(off, n));
      f.DJ.push_back(y.segment(off + n, n));
      f.Jdot.push_back(y.segment(off + n, n) - Gv * y.segment(off, n));
    }
  }
  return out;
}

JacobiField jacobi_solve(const MetricField& g, const GeodesicCurve& curve, const Vector& J0, const Vector& DJ0,
                         const OdeOptions& options) {
  Matrix init(2 * g.dim(), 1);
  init.col(0) << J0, DJ0;
  return jacobi_basis(g, curve, init, options).front();
}

double jacobi_residual(const MetricField& g, const GeodesicCurve& curve, const JacobiField& f) {
  const int N = curve.segments();
  const double h = 1.0 / N;
  std::vector<Vector> rate;
  double scale = 0.0;
  for (int i = 0; i <= N; ++i) {
    const auto k = static_cast<std::size_t>(i);
    rate.push_back(dw(g, curve.knots[k], curve.velocities[k], f.J[k], f.DJ[k]));
    scale = std::max({scale, f.J[k].norm(), f.DJ[k].norm()});
  }
  double worst = 0.0;
  for (int i = 0; i < N; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const double tm = (i + 0.5) * h;
    const Vector Jm = hermite_value(f.J, f.Jdot, tm);
    const Vector DJm = hermite_value(f.DJ, rate, tm);
    const Vector fm = dw(g, curve.position(tm), curve.velocity(tm), Jm, DJm);
    const Vector r = (f.DJ[k + 1] - f.DJ[k]) / h - (rate[k] + 4.0 * fm + rate[k + 1]) / 6.0;
    worst = std::max(worst, r.norm());
  }
  return scale > 0.0 ? worst / scale : worst;
}

const char* to_string(Degeneracy d) {
  switch (d) {
    case Degeneracy::Nondegenerate: return "nondegenerate";
    case Degeneracy::Degenerate: return "degenerate";
    case Degeneracy::StronglyDegenerate: return "strongly_degenerate";
  }
  return "unknown";
}

Matrix boundary_matrix(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol,
                       const OdeOptions& options) {
  const int n = P.dim(), d = P.param_dim();
  const EndpointFrame& f = sol.frame;
  const auto fields = jacobi_basis(g, sol.curve, Matrix::Identity(2 * n, 2 * n), options);
  Matrix S;
  if (d > 0) {
    Vector eta(2 * n);
    eta << sol.curve.velocities.front(), sol.curve.velocities.back();
    S = second_fundamental_form(P, g, sol.u, eta);
  }
  const Eigen::PartialPivLU<Matrix> gram_lu = d > 0 ? f.gram.partialPivLu() : Eigen::PartialPivLU<Matrix>();
  Matrix B(2 * n, 2 * n);
  for (int c = 0; c < 2 * n; ++c) {
    const auto& F = fields[static_cast<std::size_t>(c)];
    Vector Jpair(2 * n), Dpair(2 * n);
    Jpair << F.J.front(), F.J.back();
    Dpair << F.DJ.front(), F.DJ.back();
    const Vector gJ = f.gbar * Jpair;
    for (int k = 0; k < 2 * n - d; ++k) B(k, c) = f.normal.col(k).dot(gJ) / f.normal.col(k).norm();
    if (d > 0) {
      const Vector coords = gram_lu.solve(f.tangent.transpose() * gJ);
      const Vector Sc = S * coords;
      const Vector gD = f.gbar * Dpair;
      for (int j = 0; j < d; ++j) B(2 * n - d + j, c) = (f.tangent.col(j).dot(gD) + Sc[j]) / f.tangent.col(j).norm();
    }
  }
  return B;
}

DegeneracyReport boundary_operator(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol,
                                   const OdeOptions& options) {
  const int n = P.dim();
  if (P.param_dim() > 0) {
    const double c = gram_conditioning(sol.frame);
    if (c < kGramTol) throw ValuedError(ErrorCode::DegenerateP, "gram of P is singular at the solution", c);
  }
  DegeneracyReport rep;
  rep.boundary_matrix = boundary_matrix(g, P, sol, options);
  Eigen::JacobiSVD<Matrix> svd(rep.boundary_matrix, Eigen::ComputeFullV);
  rep.singular_values = svd.singularValues();
  const double smax = rep.singular_values[0];
  for (int i = 0; i < 2 * n; ++i)
    if (rep.singular_values[i] < kKernelTol * smax) ++rep.kernel_dim;
  const int r = 2 * n - rep.kernel_dim;
  if (rep.kernel_dim == 0) rep.gap = std::numeric_limits<double>::infinity();
  else if (r == 0) rep.gap = 0.0;
  else rep.gap = rep.singular_values[r - 1] / std::max(rep.singular_values[r], std::numeric_limits<double>::min());

  const MetricField& ref = default_reference(n);
  const Point& x0 = sol.curve.knots.front();
  const Vector& v0 = sol.curve.velocities.front();
  Matrix inits(2 * n, rep.kernel_dim);
  for (int k = 0; k < rep.kernel_dim; ++k) {
    Vector x = svd.matrixV().col(r + k);
    const Vector Jperp = orthogonal_part(ref, x0, x.head(n), v0);
    const double s = std::max(ref_norm(ref, x0, Jperp), ref_norm(ref, x0, x.tail(n)));
    if (s > 0.0) x /= s;
    Eigen::Index big;
    x.cwiseAbs().maxCoeff(&big);
    if (x[big] < 0.0) x = -x;
    inits.col(k) = x;
    rep.kernel_init.push_back(x);
  }
  if (rep.kernel_dim > 0) {
    rep.kernel_basis = jacobi_basis(g, sol.curve, inits, options);
    rep.classification = Degeneracy::Degenerate;
    const auto per = detect_periodicity(sol.curve);
    if (per.periodic) {
      rep.period_k = per.k;
      if (strongly_degenerate_check(sol.curve, rep.kernel_basis, *per.k).strongly_degenerate)
        rep.classification = Degeneracy::StronglyDegenerate;
    }
  }
  return rep;
}

std::vector<double> parallel_locus(const GeodesicCurve& curve, const JacobiField& field, const MetricField& ref) {
  const int N = curve.segments();
  auto perp = [&](double t, const Point& x, const Vector& v, const Vector& J) {
    (void)t;
    return ref_norm(ref, x, orthogonal_part(ref, x, J, v));
  };
  std::vector<double> f(static_cast<std::size_t>(N) + 1);
  double scale = 0.0;
  for (int i = 0; i <= N; ++i) {
    const auto k = static_cast<std::size_t>(i);
    f[k] = perp(curve.time(i), curve.knots[k], curve.velocities[k], field.J[k]);
    scale = std::max(scale, ref_norm(ref, curve.knots[k], field.J[k]));
  }
  const double tol = 1e-5 * scale;
  if (scale == 0.0 || std::all_of(f.begin(), f.end(), [&](double x) { return x < tol; }))
    throw GeoError(ErrorCode::EverywhereParallel, "Jacobi field is parallel to the tangent at every knot");
  auto at = [&](double t) { return perp(t, curve.position(t), curve.velocity(t), field.at(t)); };
  std::vector<double> locus;
  for (int i = 0; i <= N; ++i) {
    const auto k = static_cast<std::size_t>(i);
    const bool left = i == 0 || f[k] <= f[k - 1];
    const bool right = i == N || f[k] <= f[k + 1];
    if (!left || !right) continue;
    double lo = std::max(0.0, curve.time(i) - 1.0 / N), hi = std::min(1.0, curve.time(i) + 1.0 / N);
    double best_t = curve.time(i), best = f[k];
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 80; ++it) {
      const double a = hi - g * (hi - lo), b = lo + g * (hi - lo);
      if (at(a) < at(b)) hi = b;
      else lo = a;
    }
    const double tm = 0.5 * (lo + hi);
    if (const double fm = at(tm); fm < best) best = fm, best_t = tm;
    if (best >= tol) continue;
    if (!locus.empty() && best_t - locus.back() < 1.0 / N) continue;
    locus.push_back(best_t);
  }
  return locus;
}

std::vector<double> parallel_locus(const GeodesicCurve& curve, const JacobiField& field) {
  return parallel_locus(curve, field, default_reference(curve.dim()));
}

StrongDegeneracyReport strongly_degenerate_check(const GeodesicCurve& curve, const std::vector<JacobiField>& kernel,
                                                 int k) {
  StrongDegeneracyReport rep;
  if (kernel.empty() || k < 2) return rep;
  const int n = curve.dim();
  const int m = static_cast<int>(kernel.size());
  const int samples = std::max(16, curve.segments() / k);
  Matrix A(n * samples, m + 1);
  // Columns are scaled by the sampled size of the fields themselves, so a
  // shift-sum that cancels shows up as a small singular value.
  Vector scale = Vector::Zero(m + 1);
  for (int s = 0; s < samples; ++s) {
    const double t = static_cast<double>(s) / (static_cast<double>(k) * samples);
    for (int j = 0; j < m; ++j) {
      Vector sum = Vector::Zero(n);
      for (int i = 0; i < k; ++i) {
        const Vector Ji = kernel[static_cast<std::size_t>(j)].at(t + static_cast<double>(i) / k);
        sum += Ji;
        scale[j] += Ji.squaredNorm();
      }
      A.block(n * s, j, n, 1) = sum;
    }
    A.block(n * s, m, n, 1) = -curve.velocity(t);
    scale[m] += k * curve.velocity(t).squaredNorm();
  }
  for (int j = 0; j <= m; ++j) {
    scale[j] = std::sqrt(scale[j]);
    if (scale[j] > 0.0) A.col(j) /= scale[j];
  }
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinV);
  const Vector s = svd.singularValues();
  rep.conditioning = s[0] > 0.0 ? s[s.size() - 1] / s[0] : 0.0;
  rep.strongly_degenerate = rep.conditioning < kKernelTol;
  if (rep.strongly_degenerate) {
    rep.witness = svd.matrixV().col(m);
    for (int j = 0; j <= m; ++j)
      if (scale[j] > 0.0) rep.witness[j] /= scale[j];
  }
  return rep;
}

PeriodicDegeneracyReport periodic_degeneracy(const MetricField& g, const GeodesicCurve& curve,
                                             const OdeOptions& options) {
  const int n = g.dim();
  if (!is_closed(curve, default_reference(n))) throw GeoError(ErrorCode::NotClosed, "geodesic is not closed");
  PeriodicDegeneracyReport rep;
  const auto fields = jacobi_basis(g, curve, Matrix::Identity(2 * n, 2 * n), options);
  rep.monodromy.resize(2 * n, 2 * n);
  for (int c = 0; c < 2 * n; ++c) {
    const auto& F = fields[static_cast<std::size_t>(c)];
    rep.monodromy.col(c) << F.J.back(), F.DJ.back();
  }
  const Matrix D = rep.monodromy - Matrix::Identity(2 * n, 2 * n);
  rep.singular_values = D.jacobiSvd().singularValues();
  const double tol = kKernelTol * std::max(1.0, rep.monodromy.jacobiSvd().singularValues()[0]);
  for (int i = 0; i < 2 * n; ++i)
    if (rep.singular_values[i] < tol) ++rep.fixed_dim;
  rep.degenerate_as_periodic = rep.fixed_dim > 1;
  return rep;
}

}  // namespace geobvp
