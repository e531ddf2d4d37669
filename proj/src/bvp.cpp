#include "geobvp/bvp.hpp"

#include "geobvp/parallel.hpp"
#include "geobvp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>

namespace geobvp {

namespace {

struct Endpoint {
  Point x;
  Vector v;
  /// d(x(1), v(1)) / d(x(0), v(0)); empty unless requested.
  Matrix phi;
};

Endpoint shoot(const MetricField& g, const Point& p, const Vector& v, const OdeOptions& options, bool sensitivity) {
  const int n = g.dim();
  if (!g.in_domain(p)) throw ValuedError(ErrorCode::DomainExit, "boundary point outside chart domain", 0.0);
  if (!sensitivity) {
    const auto s = sample_geodesic(g, p, v, {1.0}, options);
    return {s.front().first, s.front().second, Matrix()};
  }
  const int m = 2 * n;
  Vector y0(m + m * m);
  y0.head(n) = p;
  y0.segment(n, n) = v;
  Eigen::Map<Matrix>(y0.data() + m, m, m).setIdentity();
  auto rhs = [&](double, const Vector& y, Vector& dy) {
    dy.resize(y.size());
    const Vector x = y.head(n), w = y.segment(n, n);
    dy.head(n) = w;
    dy.segment(n, n) = geodesic_acceleration(g, x, w);
    const ChristoffelEval G = christoffel(g, x);
    const auto dG = christoffel_partials(g, x);
    Matrix A = Matrix::Zero(m, m);
    A.topRightCorner(n, n).setIdentity();
    for (int k = 0; k < n; ++k)
      for (int c = 0; c < n; ++c)
        A(n + k, c) = -w.dot(dG[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] * w);
    A.bottomRightCorner(n, n) = -2.0 * G.contract_first(w);
    Eigen::Map<Matrix>(dy.data() + m, m, m) = A * Eigen::Map<const Matrix>(y.data() + m, m, m);
  };
  auto check = [&](double t, const Vector& y) {
    if (!g.in_domain(y.head(n))) throw ValuedError(ErrorCode::DomainExit, "trajectory left chart domain", t);
  };
  const auto out = integrate_ode(rhs, y0, 0.0, {1.0}, options, nullptr, check);
  const Vector& y = out.front();
  return {y.head(n), y.segment(n, n), Eigen::Map<const Matrix>(y.data() + m, m, m)};
}

Vector residual_from(const MetricField& g, const BoundaryCondition& P, const Vector& u, const Vector& v,
                     const Endpoint& end) {
  const int n = P.dim(), d = P.param_dim();
  const Vector e = P.embed(u);
  const Matrix T = P.jacobian(u);
  Vector r(n + d);
  r.head(n) = g.chart_difference(end.x, e.tail(n));
  if (d > 0) {
    const Vector a = g.value(e.head(n)) * v;
    const Vector b = g.value(e.tail(n)) * end.v;
    for (int j = 0; j < d; ++j) r[n + j] = a.dot(T.col(j).head(n)) - b.dot(T.col(j).tail(n));
  }
  return r;
}

struct Evaluation {
  Vector r;
  Endpoint end;
};

std::optional<Evaluation> try_evaluate(const MetricField& g, const BoundaryCondition& P, const Vector& u,
                                       const Vector& v, const OdeOptions& options, bool sensitivity) {
  try {
    if (!P.param_box().contains(u)) return std::nullopt;
    Endpoint end = shoot(g, P.p(u), v, options, sensitivity);
    Vector r = residual_from(g, P, u, v, end);
    if (!r.allFinite()) return std::nullopt;
    return Evaluation{std::move(r), std::move(end)};
  } catch (const GeoError&) {
    return std::nullopt;
  }
}

Matrix difference_jacobian(const MetricField& g, const BoundaryCondition& P, const Vector& u, const Vector& v,
                           const Evaluation& base, const ShootingOptions& options) {
  const int n = P.dim(), d = P.param_dim();
  // the integrator's tolerance, not machine epsilon, sets the noise floor
  const double noise = std::max(options.ode.rtol, std::numeric_limits<double>::epsilon());
  Matrix J(n + d, d + n);
  for (int i = 0; i < d + n; ++i) {
    Vector uu = u, vv = v;
    double& z = (i < d) ? uu[i] : vv[i - d];
    const double h = std::sqrt(noise) * std::max(1.0, std::abs(z));
    const double dir = (i >= d || u[i] + h <= P.param_box().hi[i]) ? 1.0 : -1.0;
    z += dir * h;
    const auto e = try_evaluate(g, P, uu, vv, options.ode, false);
    if (!e) throw ValuedError(ErrorCode::SingularJacobian, "Jacobian probe left the chart", 0.0);
    J.col(i) = dir * (e->r - base.r) / h;
  }
  return J;
}

// Exact linearization: Phi carries the endpoint's dependence on (p, v); the
// boundary terms are differentiated through the embedding and metric.
Matrix variational_jacobian(const MetricField& g, const BoundaryCondition& P, const Vector& u, const Vector& v,
                            const Evaluation& base) {
  const int n = P.dim(), d = P.param_dim();
  const Matrix& phi = base.end.phi;
  const Matrix Pxx = phi.topLeftCorner(n, n), Pxv = phi.topRightCorner(n, n);
  const Matrix Pvx = phi.bottomLeftCorner(n, n), Pvv = phi.bottomRightCorner(n, n);
  Matrix J = Matrix::Zero(n + d, d + n);
  J.block(0, d, n, n) = Pxv;
  if (d == 0) return J;
  const Vector e = P.embed(u);
  const Point p = e.head(n), q = e.tail(n);
  const Matrix T = P.jacobian(u);
  const Matrix H = P.hessian(u);
  const Matrix gp = g.value(p), gq = g.value(q);
  const auto dgp = g.partials(p), dgq = g.partials(q);
  const Vector& v1 = base.end.v;
  J.block(0, 0, n, d) = Pxx * T.topRows(n) - T.bottomRows(n);
  for (int i = 0; i < d; ++i) {
    const Vector Tp = T.col(i).head(n), Tq = T.col(i).tail(n);
    Matrix dgp_i = Matrix::Zero(n, n), dgq_i = Matrix::Zero(n, n);
    for (int m = 0; m < n; ++m) {
      dgp_i += Tp[m] * dgp[static_cast<std::size_t>(m)];
      dgq_i += Tq[m] * dgq[static_cast<std::size_t>(m)];
    }
    const Vector dv1 = Pvx * Tp;
    for (int j = 0; j < d; ++j) {
      const Vector Tjp = T.col(j).head(n), Tjq = T.col(j).tail(n);
      const Vector Hp = H.col(i * d + j).head(n), Hq = H.col(i * d + j).tail(n);
      J(n + j, i) = v.dot(dgp_i * Tjp) + v.dot(gp * Hp) - dv1.dot(gq * Tjq) - v1.dot(dgq_i * Tjq) - v1.dot(gq * Hq);
    }
  }
  for (int j = 0; j < d; ++j) {
    J.block(n + j, d, 1, n) = (gp * T.col(j).head(n)).transpose() - (gq * T.col(j).tail(n)).transpose() * Pvv;
  }
  return J;
}

Matrix shooting_jacobian(const MetricField& g, const BoundaryCondition& P, const Vector& u, const Vector& v,
                         const Evaluation& base, const ShootingOptions& options) {
  if (options.variational && base.end.phi.size() > 0) return variational_jacobian(g, P, u, v, base);
  return difference_jacobian(g, P, u, v, base, options);
}

double conditioning(const Matrix& J) {
  if (J.size() == 0) return 1.0;
  const Vector s = J.jacobiSvd().singularValues();
  return s[0] > 0.0 ? s[s.size() - 1] / s[0] : 0.0;
}

}  // namespace

Vector shoot_residual(const MetricField& g, const BoundaryCondition& P, const Vector& u, const Vector& v,
                      const OdeOptions& options) {
  return residual_from(g, P, u, v, shoot(g, P.p(u), v, options, false));
}

GPGeodesic solve(const MetricField& g, const BoundaryCondition& P, const Vector& u0, const Vector& v0,
                 const ShootingOptions& options) {
  const int n = P.dim(), d = P.param_dim();
  if (g.dim() != n) throw GeoError(ErrorCode::ConfigError, "boundary condition and metric dimensions differ");
  // Inexact Newton: far from a solution the integrator runs at a loose
  // tolerance; the final iterations and the convergence test use options.ode.
  OdeOptions loose = options.ode;
  loose.rtol = std::max(options.ode.rtol, 1e-8);
  loose.atol = std::max(options.ode.atol, 1e-9);
  constexpr double kTighten = 1e-4;
  constexpr double kCorrectionRange = 1e-3;
  Vector u = P.param_box().clamp(u0);
  Vector v = v0;
  bool tight = false;
  auto current = try_evaluate(g, P, u, v, loose, options.variational);
  if (!current) throw ValuedError(ErrorCode::DomainExit, "seed geodesic leaves the chart", 0.0);
  int iters = 0;
  std::vector<double> history;
  for (;; ++iters) {
    if (!tight && current->r.norm() < kTighten * (1.0 + v.norm())) {
      tight = true;
      current = try_evaluate(g, P, u, v, options.ode, options.variational);
      if (!current) throw ValuedError(ErrorCode::DomainExit, "geodesic leaves the chart", 0.0);
      history.clear();
    }
    const double rn = current->r.norm();
    if (tight && rn < options.tol * (1.0 + v.norm())) break;
    if (iters >= options.max_iters) throw ValuedError(ErrorCode::NoConvergence, "Newton iteration budget exhausted", rn);
    history.push_back(rn);
    if (history.size() > 8 && rn > 0.9 * history[history.size() - 9])
      throw ValuedError(ErrorCode::NoConvergence, "Newton iteration stagnated", rn);
    const OdeOptions& ode = tight ? options.ode : loose;
    ShootingOptions probe = options;
    probe.ode = ode;
    const Matrix J = shooting_jacobian(g, P, u, v, *current, probe);
    Eigen::JacobiSVD<Matrix> svd(J, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-10);
    const Vector step = svd.solve(-current->r);
    const double f0 = current->r.squaredNorm();
    const double decrease = -current->r.dot(J * step);
    bool accepted = false;
    double lambda = 1.0;
    auto sufficient = [&](const Evaluation& e, double lam) {
      return e.r.squaredNorm() <= f0 - 2e-4 * lam * std::max(decrease, 0.0) && e.r.squaredNorm() < f0;
    };
    auto accept = [&](const Vector& un, const Vector& vn, std::optional<Evaluation>& trial) {
      u = un;
      v = vn;
      current = options.variational ? try_evaluate(g, P, u, v, ode, true) : std::move(trial);
      accepted = current.has_value();
    };
    // trials skip the sensitivity system; it is recomputed once a step is accepted
    for (int k = 0; k < 20 && !accepted; ++k, lambda *= 0.5) {
      const Vector un = P.param_box().clamp(u + lambda * step.head(d));
      const Vector vn = v + lambda * step.tail(n);
      auto trial = try_evaluate(g, P, un, vn, ode, false);
      if (!trial) continue;
      if (sufficient(*trial, lambda)) {
        accept(un, vn, trial);
        break;
      }
      if (k > 0) continue;
      // Second-order correction for the full step: near a degenerate family
      // the linearized step leaves the solution valley quadratically. Pull
      // back along the well-conditioned directions only.
      const Vector& sv = svd.singularValues();
      Vector inv = Vector::Zero(sv.size());
      for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > kCorrectionRange * sv[0]) inv[i] = 1.0 / sv[i];
      const Vector corr = -svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose() * trial->r;
      const Vector uc = P.param_box().clamp(un + corr.head(d));
      const Vector vc = vn + corr.tail(n);
      auto corrected = try_evaluate(g, P, uc, vc, ode, false);
      if (corrected && sufficient(*corrected, lambda)) accept(uc, vc, corrected);
    }
    if (!accepted) throw ValuedError(ErrorCode::NoConvergence, "line search failed", rn);
  }
  GPGeodesic sol;
  sol.u = u;
  sol.curve = integrate(g, P.p(u), v, options.segments, options.ode);
  sol.frame = endpoint_frame(P, g, u);
  sol.residual_norm = current->r.norm();
  sol.newton_iters = iters;
  try {
    sol.jacobian_conditioning = conditioning(shooting_jacobian(g, P, u, v, *current, options));
  } catch (const GeoError&) {
    sol.jacobian_conditioning = 0.0;
  }
  sol.rank_deficient = sol.jacobian_conditioning < kRankDeficiencyTol;
  return sol;
}

double constraint_violation(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol) {
  const int n = P.dim(), d = P.param_dim();
  const Vector e = P.embed(sol.u);
  double worst = std::max(g.chart_difference(sol.curve.knots.front(), e.head(n)).norm(),
                          g.chart_difference(sol.curve.knots.back(), e.tail(n)).norm());
  const Matrix T = P.jacobian(sol.u);
  const Vector a = g.value(e.head(n)) * sol.curve.velocities.front();
  const Vector b = g.value(e.tail(n)) * sol.curve.velocities.back();
  for (int j = 0; j < d; ++j) worst = std::max(worst, std::abs(a.dot(T.col(j).head(n)) - b.dot(T.col(j).tail(n))));
  return worst;
}

std::vector<Seed> make_seeds(const BoundaryCondition& P, const MetricField& g, const SeedGrid& grid) {
  const int n = P.dim(), d = P.param_dim();
  const Box& box = P.param_box();
  std::vector<Vector> us;
  if (d == 0) {
    us.emplace_back(0);
  } else {
    const int per = std::max(grid.param_points, 1);
    long total = 1;
    for (int i = 0; i < d; ++i) total *= per;
    std::vector<int> idx(static_cast<std::size_t>(d), 0);
    for (long k = 0; k < total; ++k) {
      Vector u(d);
      for (int i = 0; i < d; ++i) {
        const double s = (idx[static_cast<std::size_t>(i)] + 0.5) / per;
        u[i] = std::isfinite(box.lo[i]) && std::isfinite(box.hi[i]) ? box.lo[i] + s * (box.hi[i] - box.lo[i])
                                                                     : box.center()[i];
      }
      us.push_back(u);
      for (int i = 0; i < d; ++i) {
        if (++idx[static_cast<std::size_t>(i)] < per) break;
        idx[static_cast<std::size_t>(i)] = 0;
      }
    }
  }
  std::vector<Vector> dirs;
  if (n == 1) {
    dirs = {Vector::Constant(1, 1.0), Vector::Constant(1, -1.0)};
  } else if (n == 2) {
    for (int k = 0; k < grid.directions; ++k) {
      const double a = 2.0 * std::numbers::pi * (k + 0.25) / grid.directions;
      Vector w(2);
      w << std::cos(a), std::sin(a);
      dirs.push_back(w);
    }
  } else {
    Rng rng(grid.seed);
    for (int k = 0; k < grid.directions; ++k) {
      Vector w(n);
      for (int i = 0; i < n; ++i) w[i] = normal01(rng);
      dirs.push_back(w.normalized());
    }
  }
  const MetricField& ref = default_reference(n);
  std::vector<Seed> seeds;
  for (const auto& u : us) {
    const Point p = P.p(u);
    if (grid.chord) seeds.push_back({u, g.chart_difference(P.q(u), p)});
    for (double s : grid.speeds) {
      for (const auto& w : dirs) seeds.push_back({u, s * w / reference_norm(ref, p, w)});
    }
  }
  return seeds;
}

double curve_distance(const GeodesicCurve& a, const GeodesicCurve& b) {
  if (a.knots.size() != b.knots.size()) throw GeoError(ErrorCode::ConfigError, "curves live on different meshes");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.knots.size(); ++i) worst = std::max(worst, a.chart_difference(a.knots[i], b.knots[i]).norm());
  return worst;
}

ScanResult scan(const MetricField& g, const BoundaryCondition& P, const SeedGrid& grid, double L_max,
                const ShootingOptions& options, double min_length) {
  const auto seeds = make_seeds(P, g, grid);
  std::vector<std::optional<GPGeodesic>> found(seeds.size());
  std::vector<std::optional<SeedFailure>> failed(seeds.size());
  parallel_for(seeds.size(), [&](std::size_t i) {
    try {
      found[i] = solve(g, P, seeds[i].u, seeds[i].v, options);
    } catch (const GeoError& e) {
      failed[i] = SeedFailure{i, e.code(), e.what()};
    }
  });
  ScanResult out;
  out.seeds = seeds.size();
  std::vector<double> lengths;
  for (std::size_t i = 0; i < seeds.size(); ++i) {
    if (failed[i]) {
      out.failures.push_back(*failed[i]);
      continue;
    }
    GPGeodesic& s = *found[i];
    const double len = riemannian_length(s.curve);
    if (len > L_max || len < min_length) {
      ++out.filtered;
      continue;
    }
    bool duplicate = false;
    for (std::size_t k = 0; k < out.solutions.size() && !duplicate; ++k) {
      duplicate = curve_distance(out.solutions[k].curve, s.curve) < 1e-4 * (1.0 + std::max(len, lengths[k]));
    }
    if (duplicate) continue;
    lengths.push_back(len);
    out.solutions.push_back(std::move(s));
  }
  for (std::size_t i = 0; i < out.solutions.size(); ++i) {
    const auto& s = out.solutions[i];
    const double E = energy(g, s.curve);
    bool placed = false;
    if (s.rank_deficient) {
      for (auto& c : out.clusters) {
        if (c.rank_deficient && std::abs(c.energy - E) < 1e-6 * (1.0 + std::abs(E))) {
          c.members.push_back(i);
          placed = true;
          break;
        }
      }
    }
    if (!placed) out.clusters.push_back({{i}, E, s.rank_deficient});
  }
  return out;
}

}  // namespace geobvp
