#include "geobvp/perturb.hpp"

#include "geobvp/errors.hpp"
#include "geobvp/indexform.hpp"
#include "geobvp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace geobvp {

namespace {

constexpr int kChebNodes = 32;

// Unit-height mollifier exp(1 - 1/(1 - s^2)) on |s| < 1.
double mollifier(double s2) { return s2 < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s2)) : 0.0; }

PerturbationTensor::Cheb fit(double a, double b, const std::vector<Vector>& samples) {
  const int M = static_cast<int>(samples.size());
  PerturbationTensor::Cheb c;
  c.a = a;
  c.b = b;
  c.coef.assign(static_cast<std::size_t>(M), Vector::Zero(samples.front().size()));
  for (int k = 0; k < M; ++k) {
    auto& ck = c.coef[static_cast<std::size_t>(k)];
    for (int j = 0; j < M; ++j) ck += std::cos(std::numbers::pi * k * (j + 0.5) / M) * samples[static_cast<std::size_t>(j)];
    ck *= 2.0 / M;
  }
  c.coef[0] *= 0.5;
  return c;
}

std::vector<double> cheb_times(double a, double b) {
  std::vector<double> t(kChebNodes);
  for (int j = 0; j < kChebNodes; ++j)
    t[static_cast<std::size_t>(j)] =
        0.5 * (a + b) + 0.5 * (b - a) * std::cos(std::numbers::pi * (j + 0.5) / kChebNodes);
  return t;
}

// Perpendicular part of a with respect to v in the chart metric.
Vector perp(const Vector& a, const Vector& v) {
  const double vv = v.squaredNorm();
  return vv > 0.0 ? Vector(a - (a.dot(v) / vv) * v) : a;
}

Vector effective_field(const JacobiField& J, int k, double t) {
  if (k <= 1) return J.at(t);
  Vector s = J.at(t);
  for (int i = 1; i < k; ++i) s += J.at(t + static_cast<double>(i) / k);
  return s;
}

}  // namespace

Vector PerturbationTensor::Cheb::operator()(double t) const {
  const double x = std::clamp((2.0 * t - a - b) / (b - a), -1.0, 1.0);
  const Eigen::Index n = coef.front().size();
  Vector b1 = Vector::Zero(n), b2 = Vector::Zero(n);
  for (std::size_t k = coef.size() - 1; k >= 1; --k) {
    Vector b0 = coef[k] + 2.0 * x * b1 - b2;
    b2 = std::move(b1);
    b1 = std::move(b0);
  }
  return coef[0] + x * b1 - b2;
}

PerturbationTensor::Cheb PerturbationTensor::Cheb::derivative() const {
  const int M = static_cast<int>(coef.size());
  Cheb d;
  d.a = a;
  d.b = b;
  d.coef.assign(static_cast<std::size_t>(M), Vector::Zero(coef.front().size()));
  // c'_{k-1} = c'_{k+1} + 2 k c_k, with the leading entry of c halved.
  std::vector<Vector> c = coef;
  c[0] *= 2.0;
  Vector next = Vector::Zero(coef.front().size()), next2 = next;
  for (int k = M - 1; k >= 1; --k) {
    Vector ck = next2 + 2.0 * k * c[static_cast<std::size_t>(k)];
    d.coef[static_cast<std::size_t>(k - 1)] = ck;
    next2 = next;
    next = ck;
  }
  d.coef[0] *= 0.5;
  for (auto& v : d.coef) v *= 2.0 / (b - a);
  return d;
}

PerturbationTensor::PerturbationTensor(int n, Interval interval, double radius, Vector periods, Cheb position,
                                       Cheb velocity, Cheb field)
    : n_(n),
      interval_(interval),
      radius_(radius),
      periods_(std::move(periods)),
      pos_(std::move(position)),
      vel_(std::move(velocity)),
      acc_(vel_.derivative()),
      field_(std::move(field)) {
  const int C = 33;
  for (int j = 0; j < C; ++j) {
    const double t = interval_.lo + (interval_.hi - interval_.lo) * j / (C - 1);
    coarse_t_.push_back(t);
    coarse_x_.push_back(pos_(t));
    if (j > 0) coarse_gap_ = std::max(coarse_gap_, reduce(coarse_x_[coarse_x_.size() - 1] - coarse_x_[coarse_x_.size() - 2]).norm());
  }
}

Vector PerturbationTensor::reduce(Vector d) const {
  for (int i = 0; i < d.size(); ++i) {
    const double p = periods_.size() == d.size() ? periods_[i] : 0.0;
    if (p > 0.0) d[i] -= p * std::round(d[i] / p);
  }
  return d;
}

std::pair<double, double> PerturbationTensor::foot(const Point& x) const {
  std::size_t best = 0;
  double dist = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < coarse_x_.size(); ++j) {
    const double d = reduce(x - coarse_x_[j]).norm();
    if (d < dist) dist = d, best = j;
  }
  if (dist > radius_ + coarse_gap_) return {coarse_t_[best], dist};
  double t = coarse_t_[best];
  for (int it = 0; it < 50; ++it) {
    const Vector y = reduce(x - pos_(t)), v = vel_(t);
    const double f = y.dot(v), fp = -v.squaredNorm() + y.dot(acc_(t));
    if (fp >= 0.0) break;
    const double next = std::clamp(t - f / fp, interval_.lo, interval_.hi);
    const double step = std::abs(next - t);
    t = next;
    if (step < 1e-15) break;
  }
  return {t, reduce(x - pos_(t)).norm()};
}

Matrix PerturbationTensor::value(const Vector& x) const {
  Matrix out = Matrix::Zero(n_, n_);
  const auto [t, rho] = foot(x);
  if (rho >= radius_) return out;
  const double tau = (t - interval_.center()) / interval_.half_width();
  const double beta = mollifier(tau * tau);
  if (beta == 0.0) return out;
  const double chi = mollifier(rho * rho / (radius_ * radius_));
  const Vector v = vel_(t);
  const Vector Fp = perp(field_(t), v);
  const double m = Fp.norm();
  if (m == 0.0) return out;
  const double d = reduce(x - pos_(t)).dot(Fp) / m;
  const double phi = (d / m) * (1.0 - 1.5 * d / radius_);
  const double vv = v.squaredNorm();
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j <= i; ++j) out(i, j) = out(j, i) = beta * chi * phi * v[i] * v[j] / (vv * vv);
  return out;
}

Interval select_interval(const GeodesicCurve& curve, const JacobiField& J, const IntervalOptions& options) {
  (void)parallel_locus(curve, J);
  const auto inter = self_intersections(curve);
  const int k = inter.periodic && inter.k ? *inter.k : 1;
  const int N = curve.segments();
  const double end = 1.0 / k;

  double scale = 0.0;
  const int S_all = 16 * N;
  for (int s = 0; s <= S_all; ++s) {
    const double t = static_cast<double>(s) / S_all;
    scale = std::max(scale, perp(J.at(t), curve.velocity(t)).norm());
  }
  const int S = 16 * N / k;
  std::vector<double> forbidden{0.0, end};
  std::vector<double> grid;
  bool any_good = false;
  for (int s = 0; s <= S; ++s) {
    const double t = end * s / S;
    grid.push_back(t);
    if (perp(effective_field(J, k, t), curve.velocity(t)).norm() < options.threshold * scale) forbidden.push_back(t);
    else any_good = true;
  }
  if (!any_good) {
    if (k > 1) throw GeoError(ErrorCode::StronglyDegenerate, "shift sum of the Jacobi field is parallel to the tangent");
    throw GeoError(ErrorCode::EverywhereParallel, "Jacobi field is parallel to the tangent");
  }
  for (const auto& [a, b] : inter.pairs) forbidden.push_back(a), forbidden.push_back(b);
  std::sort(forbidden.begin(), forbidden.end());

  const double w_cap = k > 1 ? std::min(options.max_half_width, 0.45 * end) : options.max_half_width;
  double best_w = 0.0, best_t = 0.5 * end;
  for (double t0 : grid) {
    const auto it = std::lower_bound(forbidden.begin(), forbidden.end(), t0);
    double dist = std::numeric_limits<double>::infinity();
    if (it != forbidden.end()) dist = std::min(dist, *it - t0);
    if (it != forbidden.begin()) dist = std::min(dist, t0 - *std::prev(it));
    const double w = std::min(w_cap, 0.95 * dist);
    const bool better = w > best_w + 1e-12 ||
                        (std::abs(w - best_w) <= 1e-12 && std::abs(t0 - 0.5 * end) < std::abs(best_t - 0.5 * end));
    if (better) best_w = w, best_t = t0;
  }
  if (best_w < 1.0 / N) throw ValuedError(ErrorCode::NoInterval, "no admissible interval at the mesh scale", best_w);
  return {best_t - best_w, best_t + best_w, k};
}

std::shared_ptr<PerturbationTensor> build_bump(const MetricField& g, const GeodesicCurve& curve, const JacobiField& J,
                                               const Interval& I, const BumpOptions& options) {
  const int n = g.dim();
  const auto times = cheb_times(I.lo, I.hi);
  std::vector<double> sorted = times;
  std::sort(sorted.begin(), sorted.end());
  Vector y0(2 * n);
  y0 << curve.knots.front(), curve.velocities.front();
  auto rhs = [&](double, const Vector& y, Vector& dy) {
    dy.resize(2 * n);
    dy.head(n) = y.tail(n);
    dy.tail(n) = geodesic_acceleration(g, y.head(n), y.tail(n));
  };
  const auto states = integrate_ode(rhs, y0, 0.0, sorted, OdeOptions{});
  std::vector<Vector> xs, vs, fs;
  for (double t : times) {
    const auto idx = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
    xs.push_back(states[idx].head(n));
    vs.push_back(states[idx].tail(n));
    fs.push_back(effective_field(J, I.k, t));
  }
  const auto pos = fit(I.lo, I.hi, xs), vel = fit(I.lo, I.hi, vs), fld = fit(I.lo, I.hi, fs);

  double R = options.radius;
  if (R <= 0.0) {
    double len = 0.0;
    Point prev = pos(I.lo);
    for (int s = 1; s <= 256; ++s) {
      const Point x = pos(I.lo + (I.hi - I.lo) * s / 256);
      len += (x - prev).norm();
      prev = x;
    }
    R = 0.1 * len;
  }
  const int N = curve.segments();
  auto in_shift = [&](double t) {
    for (int i = 0; i < I.k; ++i) {
      const double s = t - static_cast<double>(i) / I.k;
      if (s >= I.lo && s <= I.hi) return true;
    }
    return false;
  };
  for (;;) {
    auto h = std::make_shared<PerturbationTensor>(n, I, R, curve.periods, pos, vel, fld);
    bool ok = true;
    for (int s = 0; s <= 8 * N && ok; ++s) {
      const double t = static_cast<double>(s) / (8 * N);
      if (in_shift(t)) continue;
      const auto [tf, dist] = h->foot(curve.position(t));
      if (tf > I.lo + 1e-9 && tf < I.hi - 1e-9 && dist < R) ok = false;
    }
    for (int s = 0; s <= 64 && ok; ++s) {
      const Point x = pos(I.lo + (I.hi - I.lo) * s / 64);
      for (int i = 0; i < n && ok; ++i) {
        Point a = x, b = x;
        a[i] += R;
        b[i] -= R;
        if (!g.in_domain(a) || !g.in_domain(b)) ok = false;
      }
    }
    if (ok) return h;
    R *= 0.5;
    if (R < options.min_radius) throw ValuedError(ErrorCode::TubeOverlap, "tube around γ(I) meets the rest of γ", R);
  }
}

double certify_transversality(const MetricField& g, const GeodesicCurve& curve, const JacobiField& J,
                              const TensorField& h) {
  const auto q = mixed_derivative_estimate(g, curve, h, J, Connection::Reference);
  if (!(q.value > 10.0 * q.error) || q.value == 0.0)
    throw ValuedError(ErrorCode::CertificateFailed, "mixed pairing does not exceed the quadrature error", q.value);
  return q.value;
}

std::vector<RemovalRow> degeneracy_removal_experiment(const MetricField& g, const BoundaryCondition& P,
                                                      const GPGeodesic& sol, const std::shared_ptr<const TensorField>& h,
                                                      const std::vector<double>& eps_list,
                                                      const ShootingOptions& options) {
  std::vector<RemovalRow> rows(eps_list.size());
  ShootingOptions opts = options;
  opts.segments = sol.curve.segments();
  parallel_for(eps_list.size(), [&](std::size_t i) {
    RemovalRow& row = rows[i];
    row.eps = eps_list[i];
    try {
      const MetricField ge = row.eps == 0.0 ? g : g.perturbed(h, row.eps);
      const auto s = solve(ge, P, sol.u, sol.curve.velocities.front(), opts);
      row.converged = true;
      row.residual = s.residual_norm;
      const auto rep = boundary_operator(ge, P, s, opts.ode);
      row.kernel_dim = rep.kernel_dim;
      row.sigma_min = rep.singular_values[rep.singular_values.size() - 1];
      row.sigma_max = rep.singular_values[0];
    } catch (const GeoError& e) {
      row.error = e.what();
    }
  });
  return rows;
}

std::vector<double> default_eps_list() { return {-1e-1, -1e-2, -1e-3, 1e-3, 1e-2, 1e-1}; }

RemovalExperiment run_removal(const MetricField& g, const BoundaryCondition& P, const GPGeodesic& sol,
                              const std::vector<double>& eps_list, const ShootingOptions& options,
                              const IntervalOptions& interval_options, const BumpOptions& bump_options) {
  RemovalExperiment ex;
  ex.baseline = boundary_operator(g, P, sol, options.ode);
  if (ex.baseline.kernel_dim == 0) throw GeoError(ErrorCode::ConfigError, "solution is nondegenerate");
  const JacobiField& J = ex.baseline.kernel_basis.front();
  ex.interval = select_interval(sol.curve, J, interval_options);
  ex.tensor = build_bump(g, sol.curve, J, ex.interval, bump_options);
  ex.pairing = certify_transversality(g, sol.curve, J, *ex.tensor);
  ex.rows = degeneracy_removal_experiment(g, P, sol, ex.tensor, eps_list, options);
  return ex;
}

}  // namespace geobvp
