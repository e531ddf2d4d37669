#include "geobvp/geodesic.hpp"

#include "geobvp/errors.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace geobvp {

namespace {

// Hermite basis on the unit interval.
struct Hermite {
  double h00, h10, h01, h11;
  double d00, d10, d01, d11;
};

Hermite hermite(double s) {
  const double s2 = s * s;
  const double s3 = s2 * s;
  return {2 * s3 - 3 * s2 + 1, s3 - 2 * s2 + s, -2 * s3 + 3 * s2, s3 - s2,
          6 * s2 - 6 * s,      3 * s2 - 4 * s + 1, -6 * s2 + 6 * s, 3 * s2 - 2 * s};
}

std::pair<int, double> locate(double t, int segments) {
  const double x = std::clamp(t, 0.0, 1.0) * segments;
  int i = static_cast<int>(std::floor(x));
  if (i >= segments) i = segments - 1;
  if (i < 0) i = 0;
  return {i, x - i};
}

}  // namespace

Point GeodesicCurve::position(double t) const {
  const auto [i, s] = locate(t, segments());
  const double h = 1.0 / segments();
  const auto b = hermite(s);
  return b.h00 * knots[i] + b.h10 * h * velocities[i] + b.h01 * knots[i + 1] + b.h11 * h * velocities[i + 1];
}

Vector GeodesicCurve::velocity(double t) const {
  const auto [i, s] = locate(t, segments());
  const double h = 1.0 / segments();
  const auto b = hermite(s);
  return (b.d00 * knots[i] + b.d01 * knots[i + 1]) / h + b.d10 * velocities[i] + b.d11 * velocities[i + 1];
}

Vector GeodesicCurve::chart_difference(const Point& a, const Point& b) const {
  Vector d = a - b;
  for (int i = 0; i < d.size(); ++i) {
    const double p = (periods.size() == d.size()) ? periods[i] : 0.0;
    if (p > 0.0) {
      d[i] -= p * std::round(d[i] / p);
      if (d[i] <= -0.5 * p) d[i] += p;
    }
  }
  return d;
}

const MetricField& default_reference(int n) {
  static const std::map<int, MetricField> cache = [] {
    std::map<int, MetricField> m;
    for (int k = 1; k <= 8; ++k) m.emplace(k, euclidean(k));
    return m;
  }();
  const auto it = cache.find(n);
  if (it == cache.end()) throw GeoError(ErrorCode::InvalidMetric, "no default reference for this dimension");
  return it->second;
}

Vector geodesic_acceleration(const MetricField& g, const Point& x, const Vector& v) {
  const int n = g.dim();
  const auto dg = g.partials(x);
  Vector first = Vector::Zero(n);
  Matrix dv(n, n);
  for (int i = 0; i < n; ++i) {
    dv.col(i) = dg[static_cast<std::size_t>(i)] * v;
    first += v[i] * dv.col(i);
  }
  for (int l = 0; l < n; ++l) first[l] -= 0.5 * v.dot(dv.col(l));
  return -g.value(x).partialPivLu().solve(first);
}

std::vector<std::pair<Point, Vector>> sample_geodesic(const MetricField& g, const Point& p, const Vector& v,
                                                      const std::vector<double>& times, const OdeOptions& options) {
  const int n = g.dim();
  if (!g.in_domain(p)) throw ValuedError(ErrorCode::DomainExit, "initial point outside chart domain", 0.0);
  Vector y0(2 * n);
  y0 << p, v;
  auto rhs = [&](double, const Vector& y, Vector& dy) {
    dy.resize(2 * n);
    dy.head(n) = y.tail(n);
    dy.tail(n) = geodesic_acceleration(g, y.head(n), y.tail(n));
  };
  auto check = [&](double t, const Vector& y) {
    if (!g.in_domain(y.head(n))) throw ValuedError(ErrorCode::DomainExit, "trajectory left chart domain", t);
  };
  const auto states = integrate_ode(rhs, y0, 0.0, times, options, nullptr, check);
  std::vector<std::pair<Point, Vector>> out;
  out.reserve(states.size());
  for (const auto& s : states) out.emplace_back(s.head(n), s.tail(n));
  return out;
}

GeodesicCurve integrate(const MetricField& g, const Point& p, const Vector& v, int segments,
                        const OdeOptions& options) {
  if (segments < 1) throw GeoError(ErrorCode::ConfigError, "need at least one segment");
  const int n = g.dim();
  if (!g.in_domain(p)) throw ValuedError(ErrorCode::DomainExit, "initial point outside chart domain", 0.0);
  std::vector<double> times(static_cast<std::size_t>(segments) + 1);
  for (int i = 0; i <= segments; ++i) times[static_cast<std::size_t>(i)] = static_cast<double>(i) / segments;
  Vector y0(2 * n);
  y0 << p, v;
  auto rhs = [&](double, const Vector& y, Vector& dy) {
    dy.resize(2 * n);
    dy.head(n) = y.tail(n);
    dy.tail(n) = geodesic_acceleration(g, y.head(n), y.tail(n));
  };
  auto check = [&](double t, const Vector& y) {
    if (!g.in_domain(y.head(n))) throw ValuedError(ErrorCode::DomainExit, "trajectory left chart domain", t);
  };
  OdeReport rep;
  const auto states = integrate_ode(rhs, y0, 0.0, times, options, &rep, check);
  GeodesicCurve c;
  c.metric_id = g.name();
  c.periods = g.periods();
  for (const auto& s : states) {
    c.knots.push_back(s.head(n));
    c.velocities.push_back(s.tail(n));
  }
  c.integrator_report.steps = rep.steps;
  c.integrator_report.max_residual = geodesic_residual(g, c);
  return c;
}

double geodesic_residual(const MetricField& g, const GeodesicCurve& curve) {
  const int N = curve.segments();
  const double h = 1.0 / N;
  double worst = 0.0;
  Vector a_left = geodesic_acceleration(g, curve.knots[0], curve.velocities[0]);
  for (int i = 0; i < N; ++i) {
    const double tm = (i + 0.5) * h;
    const Vector am = geodesic_acceleration(g, curve.position(tm), curve.velocity(tm));
    const Vector a_right = geodesic_acceleration(g, curve.knots[static_cast<std::size_t>(i) + 1],
                                                 curve.velocities[static_cast<std::size_t>(i) + 1]);
    const Vector r = (curve.velocities[static_cast<std::size_t>(i) + 1] - curve.velocities[static_cast<std::size_t>(i)]) / h -
                     (a_left + 4.0 * am + a_right) / 6.0;
    worst = std::max(worst, r.norm());
    a_left = a_right;
  }
  return worst;
}

std::vector<double> composite_weights(int segments) {
  const int N = segments;
  const double h = 1.0 / N;
  std::vector<double> w(static_cast<std::size_t>(N) + 1, 0.0);
  if (N == 1) {
    w[0] = w[1] = 0.5 * h;
    return w;
  }
  // Simpson on an even prefix, Simpson 3/8 on the last three segments if N is odd.
  const int simpson_end = (N % 2 == 0) ? N : N - 3;
  for (int i = 0; i + 2 <= simpson_end; i += 2) {
    w[static_cast<std::size_t>(i)] += h / 3.0;
    w[static_cast<std::size_t>(i) + 1] += 4.0 * h / 3.0;
    w[static_cast<std::size_t>(i) + 2] += h / 3.0;
  }
  if (N % 2 == 1) {
    const std::size_t s = static_cast<std::size_t>(simpson_end);
    w[s] += 3.0 * h / 8.0;
    w[s + 1] += 9.0 * h / 8.0;
    w[s + 2] += 9.0 * h / 8.0;
    w[s + 3] += 3.0 * h / 8.0;
  }
  return w;
}

double riemannian_length(const GeodesicCurve& curve, const MetricField& reference) {
  const auto w = composite_weights(curve.segments());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    sum += w[i] * reference_norm(reference, curve.knots[i], curve.velocities[i]);
  return sum;
}

double riemannian_length(const GeodesicCurve& curve) {
  return riemannian_length(curve, default_reference(curve.dim()));
}

double energy(const MetricField& g, const GeodesicCurve& curve) {
  const auto w = composite_weights(curve.segments());
  double sum = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i) {
    const Vector& v = curve.velocities[i];
    sum += w[i] * v.dot(g.value(curve.knots[i]) * v);
  }
  return 0.5 * sum;
}

double reference_distance(const MetricField& reference, const Vector& periods, const Point& a, const Point& b) {
  GeodesicCurve tmp;
  tmp.periods = periods;
  const Vector d = tmp.chart_difference(a, b);
  return reference_norm(reference, b + 0.5 * d, d);
}

namespace {

double periodicity_mismatch(const GeodesicCurve& curve, int k, const MetricField& reference, double pos_tol,
                            double vel_tol) {
  const double shift = 1.0 / k;
  const int N = curve.segments();
  double worst = 0.0;
  for (int i = 0; i <= N; ++i) {
    const double t = curve.time(i);
    if (t + shift > 1.0 + 1e-12) break;
    const double ts = std::min(1.0, t + shift);
    const Point a = curve.knots[static_cast<std::size_t>(i)];
    const Point b = curve.position(ts);
    const double dp = reference_distance(reference, curve.periods, a, b);
    const double dv = reference_norm(reference, a, curve.velocities[static_cast<std::size_t>(i)] - curve.velocity(ts));
    worst = std::max({worst, dp / pos_tol, dv / vel_tol});
  }
  return worst;
}

double max_speed(const GeodesicCurve& curve, const MetricField& reference) {
  double s = 0.0;
  for (std::size_t i = 0; i < curve.knots.size(); ++i)
    s = std::max(s, reference_norm(reference, curve.knots[i], curve.velocities[i]));
  return s;
}

}  // namespace

PeriodicityReport detect_periodicity(const GeodesicCurve& curve, int k_max, const MetricField& reference) {
  PeriodicityReport rep;
  const double len = riemannian_length(curve, reference);
  const double pos_tol = 1e-6 * (1.0 + len);
  const double vel_tol = 1e-6 * (1.0 + max_speed(curve, reference));
  if (len <= pos_tol) return rep;  // constant curves are not iterates
  double best = std::numeric_limits<double>::infinity();
  for (int k = 2; k <= k_max; ++k) {
    const double m = periodicity_mismatch(curve, k, reference, pos_tol, vel_tol);
    if (m < 1.0) {
      rep.periodic = true;
      rep.k = k;
      rep.mismatch_ratio = m;
      return rep;
    }
    best = std::min(best, m);
  }
  rep.mismatch_ratio = std::isfinite(best) ? best : 0.0;
  return rep;
}

PeriodicityReport detect_periodicity(const GeodesicCurve& curve, int k_max) {
  return detect_periodicity(curve, k_max, default_reference(curve.dim()));
}

bool is_closed(const GeodesicCurve& curve, const MetricField& reference) {
  const double len = riemannian_length(curve, reference);
  const double pos_tol = 1e-6 * (1.0 + len);
  const double vel_tol = 1e-6 * (1.0 + max_speed(curve, reference));
  const double dp = reference_distance(reference, curve.periods, curve.knots.front(), curve.knots.back());
  const double dv =
      reference_norm(reference, curve.knots.front(), curve.velocities.front() - curve.velocities.back());
  return dp < pos_tol && dv < vel_tol;
}

IntersectionReport self_intersections(const GeodesicCurve& curve, const MetricField& reference) {
  IntersectionReport rep;
  const auto per = detect_periodicity(curve, 8, reference);
  if (per.periodic) {
    rep.periodic = true;
    rep.k = per.k;
    return rep;
  }
  const int N = curve.segments();
  const double h = 1.0 / N;
  const double len = riemannian_length(curve, reference);
  const double tol = 1e-6 * (1.0 + len);
  const double floor = 2.0 / N;
  const double reach = 2.0 * max_speed(curve, reference) * h;

  auto diff = [&](double t, double s) { return curve.chart_difference(curve.position(t), curve.position(s)); };

  struct Hit {
    double t, s, d;
  };
  std::vector<Hit> hits;
  for (int i = 0; i <= N; ++i) {
    for (int j = i + 3; j <= N; ++j) {
      const double d0 = reference_distance(reference, curve.periods, curve.knots[static_cast<std::size_t>(i)],
                                           curve.knots[static_cast<std::size_t>(j)]);
      if (d0 > reach + tol) continue;
      // Gauss-Newton on r(t, s) = γ(t) - γ(s) inside the neighbouring cells.
      double t = curve.time(i);
      double s = curve.time(j);
      const double tlo = std::max(0.0, t - h), thi = std::min(1.0, t + h);
      const double slo = std::max(0.0, s - h), shi = std::min(1.0, s + h);
      for (int it = 0; it < 30; ++it) {
        const Vector r = diff(t, s);
        Matrix J(r.size(), 2);
        J.col(0) = curve.velocity(t);
        J.col(1) = -curve.velocity(s);
        const Eigen::Vector2d step = J.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(-r);
        t = std::clamp(t + step[0], tlo, thi);
        s = std::clamp(s + step[1], slo, shi);
        if (step.norm() < 1e-15) break;
      }
      const double d = reference_norm(reference, curve.position(s), diff(t, s));
      if (d < tol && s - t > floor) hits.push_back({t, s, d});
    }
  }
  // Merge clustered crossings (several knot pairs refine to the same point).
  std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.d < b.d; });
  std::vector<Hit> kept;
  for (const auto& hit : hits) {
    const bool dup = std::any_of(kept.begin(), kept.end(), [&](const Hit& k) {
      return std::abs(k.t - hit.t) <= floor && std::abs(k.s - hit.s) <= floor;
    });
    if (!dup) kept.push_back(hit);
  }
  std::sort(kept.begin(), kept.end(), [](const Hit& a, const Hit& b) { return a.t < b.t || (a.t == b.t && a.s < b.s); });
  for (const auto& k : kept) rep.pairs.emplace_back(k.t, k.s);
  return rep;
}

IntersectionReport self_intersections(const GeodesicCurve& curve) {
  return self_intersections(curve, default_reference(curve.dim()));
}

}  // namespace geobvp
