#pragma once

#include "geobvp/boundary.hpp"
#include "geobvp/bvp.hpp"
#include "geobvp/metric.hpp"

#include <cmath>
#include <initializer_list>
#include <numbers>
#include <utility>

namespace fixtures {

using namespace geobvp;
using std::numbers::pi;

inline Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

inline Box box(std::initializer_list<std::pair<double, double>> rs) {
  Box b{Vector(static_cast<Eigen::Index>(rs.size())), Vector(static_cast<Eigen::Index>(rs.size()))};
  Eigen::Index i = 0;
  for (auto [lo, hi] : rs) b.lo[i] = lo, b.hi[i++] = hi;
  return b;
}

inline ParamMap point(const Vector& x) { return affine_map(x, Matrix(x.size(), 0), Box{Vector(0), Vector(0)}); }

/// Unit circle x = (cos a, sin a), the equator in the stereographic chart.
inline ParamMap stereo_equator() {
  CoeffFunction::Term c{1.0, {0}, CoeffFunction::Trig::Cos, {1.0}, 0.0};
  CoeffFunction::Term s{1.0, {0}, CoeffFunction::Trig::Sin, {1.0}, 0.0};
  return coefficient_map({CoeffFunction({c}), CoeffFunction({s})}, box({{-pi, pi}}));
}

/// Circle of radius r about the origin of a 2-dimensional chart.
inline ParamMap circle(double r) {
  CoeffFunction::Term c{r, {0}, CoeffFunction::Trig::Cos, {1.0}, 0.0};
  CoeffFunction::Term s{r, {0}, CoeffFunction::Trig::Sin, {1.0}, 0.0};
  return coefficient_map({CoeffFunction({c}), CoeffFunction({s})}, box({{-pi, pi}}));
}

/// dx^2 + (1 - π^2 x^2 / 2)^2 dy^2, y of period 1. Gaussian curvature π^2 on x = 0.
inline MetricField warped_cap() { return warped({1.0, 0.0, -pi * pi / 2}, 1.0, -0.4, 0.4); }

struct Problem {
  MetricField g;
  BoundaryCondition P;
  Vector u0;
  Vector v0;
};

/// Antipodal points on the equator of the unit sphere.
inline Problem antipodal() {
  return {sphere2(), point_pair(vec({pi / 2, 0}), vec({pi / 2, pi})), Vector(0), vec({0, pi})};
}

/// Equator to north pole in the stereographic chart; every meridian is a solution.
inline Problem equator_pole(double a = 0.7) {
  return {sphere2(1.0, SphereChart::Stereographic), product(stereo_equator(), point(vec({0, 0}))), vec({a}),
          -(pi / 2) * vec({std::cos(a), std::sin(a)})};
}

/// Latitude circle to north pole in the stereographic chart; the latitude
/// is not totally geodesic.
inline Problem latitude_pole(double r = 0.6, double a = 0.4) {
  return {sphere2(1.0, SphereChart::Stereographic), product(circle(r), point(vec({0, 0}))), vec({a}),
          -2.0 * std::atan(r) * (1.0 + r * r) / 2.0 * vec({std::cos(a), std::sin(a)})};
}

/// Fixed endpoints on the equator joined by an arc of length L.
inline Problem sphere_arc(double L) {
  return {sphere2(), point_pair(vec({pi / 2, 0}), vec({pi / 2, L})), Vector(0), vec({0, L})};
}

/// The closed geodesic x = 0 of warped_cap traversed twice.
inline Problem warped_double() {
  return {warped_cap(), point_pair(vec({0, 0}), vec({0, 2})), Vector(0), vec({0, 2})};
}

/// The equator of the unit sphere traversed twice.
inline Problem sphere_double() {
  return {sphere2(), point_pair(vec({pi / 2, 0}), vec({pi / 2, 4 * pi})), Vector(0), vec({0, 4 * pi})};
}

inline GPGeodesic solve(const Problem& pr, int segments = 64) {
  ShootingOptions o;
  o.segments = segments;
  return geobvp::solve(pr.g, pr.P, pr.u0, pr.v0, o);
}

}  // namespace fixtures
