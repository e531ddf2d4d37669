#include "doctest.h"

#include "fixtures.hpp"
#include "geobvp/jacobi.hpp"

#include <cmath>

using namespace geobvp;
using namespace fixtures;

namespace {

GeodesicCurve curve_of(const MetricField& g, const Point& p, const Vector& v, int N = 64) {
  return integrate(g, p, v, N);
}

}  // namespace

TEST_CASE("flat Jacobi fields are affine") {
  const auto g = euclidean(3);
  const auto c = curve_of(g, vec({0, 1, 2}), vec({1, -1, 0.5}));
  const Vector J0 = vec({0.3, 0.2, -1}), W = vec({1, 2, 3});
  const auto f = jacobi_solve(g, c, J0, W);
  for (int i = 0; i <= c.segments(); ++i)
    CHECK((f.J[static_cast<std::size_t>(i)] - (J0 + c.time(i) * W)).norm() < 1e-12);
  CHECK((f.at(0.37) - (J0 + 0.37 * W)).norm() < 1e-12);
  CHECK(jacobi_residual(g, c, f) < 1e-10);
}

TEST_CASE("sphere normal field is sin(L t) / L") {
  const auto g = sphere2();
  for (double L : {0.5, 2.0, 3.0}) {
    const auto c = curve_of(g, vec({pi / 2, 0.1}), vec({0, L}));
    const auto f = jacobi_solve(g, c, vec({0, 0}), vec({1, 0}));
    for (int i = 0; i <= c.segments(); ++i) {
      const double t = c.time(i);
      const auto& J = f.J[static_cast<std::size_t>(i)];
      CHECK(J[0] == doctest::Approx(std::sin(L * t) / L).epsilon(1e-9).scale(1));
      CHECK(std::abs(J[1]) < 1e-10);
    }
    CHECK(jacobi_residual(g, c, f) < 1e-6);
  }
  // Oblique great circle: the tangential field t γ' solves the equation.
  const auto c = curve_of(g, vec({1.0, 0.3}), vec({0.8, 1.1}));
  const auto f = jacobi_solve(g, c, vec({0, 0}), c.velocities.front());
  for (int i = 0; i <= c.segments(); ++i)
    CHECK((f.J[static_cast<std::size_t>(i)] - c.time(i) * c.velocities[static_cast<std::size_t>(i)]).norm() < 1e-9);
}

TEST_CASE("Jacobi fields are linear in initial data") {
  const auto g = warped_cap();
  const auto c = curve_of(g, vec({0.05, 0}), vec({0.3, 1.5}));
  Matrix inits = Matrix::Identity(4, 4);
  const auto basis = jacobi_basis(g, c, inits);
  const Vector coef = vec({0.3, -1.2, 0.7, 2.0});
  const auto combo = JacobiField::combine(basis, coef);
  const auto direct = jacobi_solve(g, c, coef.head(2), coef.tail(2));
  for (std::size_t i = 0; i < combo.J.size(); ++i) {
    CHECK((combo.J[i] - direct.J[i]).norm() < 1e-9);
    CHECK((combo.DJ[i] - direct.DJ[i]).norm() < 1e-9);
  }
  CHECK(jacobi_residual(g, c, direct) < 1e-6);
  // A field that does not solve the equation shows a large residual.
  auto bad = direct;
  for (auto& x : bad.DJ) x *= 1.5;
  CHECK(jacobi_residual(g, c, bad) > 1e-3);
}

TEST_CASE("kernel dimensions") {
  SUBCASE("antipodal points") {
    const auto pr = antipodal();
    const auto sol = fixtures::solve(pr);
    const auto rep = boundary_operator(pr.g, pr.P, sol);
    CHECK(rep.kernel_dim == 1);
    CHECK(rep.gap > 1e6);
    CHECK(rep.classification == Degeneracy::Degenerate);
    const auto& f = rep.kernel_basis.front();
    // sin(π t) ∂θ up to the normalization |DJ(0)| = 1.
    for (int i = 0; i <= sol.curve.segments(); ++i) {
      const double t = sol.curve.time(i);
      const auto& J = f.J[static_cast<std::size_t>(i)];
      CHECK(std::abs(std::abs(J[0]) - std::sin(pi * t) / pi) < 1e-8);
      CHECK(std::abs(J[1]) < 1e-8);
    }
  }
  SUBCASE("focal equator") {
    const auto pr = equator_pole();
    const auto sol = fixtures::solve(pr);
    const auto rep = boundary_operator(pr.g, pr.P, sol);
    CHECK(rep.kernel_dim == 1);
    CHECK(rep.gap > 1e6);
    // The meridian family: J(0) tangent to the equator, J(1) = 0.
    const auto& f = rep.kernel_basis.front();
    const Vector e = vec({-std::sin(0.7), std::cos(0.7)});
    CHECK(std::abs(std::abs(f.J.front().dot(e)) - 1.0) < 1e-8);
    CHECK(f.J.back().norm() < 1e-8);
  }
  SUBCASE("flat") {
    const auto g = euclidean(2);
    const auto P = point_pair(vec({0, 0}), vec({1, 2}));
    const auto sol = geobvp::solve(g, P, Vector(0), vec({0, 0}));
    const auto rep = boundary_operator(g, P, sol);
    CHECK(rep.kernel_dim == 0);
    CHECK(rep.classification == Degeneracy::Nondegenerate);
    CHECK(std::isinf(rep.gap));
    CHECK(rep.singular_values[3] > 0.1);
  }
}

TEST_CASE("kernel excludes tangential fields and is stable under refinement") {
  const auto pr = antipodal();
  const auto sol = fixtures::solve(pr, 64);
  const auto fine = fixtures::solve(pr, 128);
  const auto a = boundary_operator(pr.g, pr.P, sol);
  const auto b = boundary_operator(pr.g, pr.P, fine);
  REQUIRE(a.kernel_dim == 1);
  REQUIRE(b.kernel_dim == 1);
  CHECK((a.kernel_init[0] - b.kernel_init[0]).norm() < 1e-8);
  // (0, γ'(0)) produces t γ', which violates J(1) = 0.
  Vector tang(4);
  tang << 0, 0, sol.curve.velocities.front();
  CHECK((a.boundary_matrix * tang).norm() > 0.5);
  CHECK(std::abs(a.kernel_init[0].tail(2).dot(sol.curve.velocities.front())) < 1e-8);
}

TEST_CASE("parallel locus") {
  const auto pr = antipodal();
  const auto sol = fixtures::solve(pr);
  const Vector gd = sol.curve.velocities.front();
  // J = sin(π t) ∂θ + t γ' vanishes at t = 0 and is tangent again at t = 1.
  const auto f = jacobi_solve(pr.g, sol.curve, vec({0, 0}), vec({pi, 0}) + gd);
  const auto locus = parallel_locus(sol.curve, f);
  REQUIRE(locus.size() == 2);
  CHECK(locus[0] == doctest::Approx(0.0).scale(1).epsilon(1e-6));
  CHECK(locus[1] == doctest::Approx(1.0).epsilon(1e-6));
  // J = cos(π t) ∂θ + ... : tangent where cos vanishes.
  const auto h = jacobi_solve(pr.g, sol.curve, vec({1, 0}), gd);
  const auto lh = parallel_locus(sol.curve, h);
  REQUIRE(lh.size() == 1);
  CHECK(lh[0] == doctest::Approx(0.5).epsilon(1e-6));
  const auto tangential = jacobi_solve(pr.g, sol.curve, gd, gd);
  CHECK_THROWS_AS(parallel_locus(sol.curve, tangential), GeoError);
}

TEST_CASE("strong degeneracy") {
  SUBCASE("warped double loop") {
    const auto pr = warped_double();
    const auto sol = fixtures::solve(pr);
    const auto rep = boundary_operator(pr.g, pr.P, sol);
    REQUIRE(rep.kernel_dim == 1);
    REQUIRE(rep.period_k);
    CHECK(*rep.period_k == 2);
    CHECK(rep.classification == Degeneracy::StronglyDegenerate);
    const auto& f = rep.kernel_basis.front();
    for (int i = 0; i <= sol.curve.segments(); ++i) {
      const double t = sol.curve.time(i);
      CHECK(std::abs(std::abs(f.J[static_cast<std::size_t>(i)][0]) - std::abs(std::sin(2 * pi * t)) / (2 * pi)) < 1e-8);
    }
  }
  SUBCASE("sphere double equator") {
    const auto pr = sphere_double();
    const auto sol = fixtures::solve(pr);
    const auto rep = boundary_operator(pr.g, pr.P, sol);
    REQUIRE(rep.kernel_dim == 1);
    REQUIRE(rep.period_k);
    CHECK(*rep.period_k == 2);
    CHECK(rep.classification == Degeneracy::Degenerate);
    CHECK(strongly_degenerate_check(sol.curve, rep.kernel_basis, 2).conditioning > 0.1);
  }
}

TEST_CASE("periodic degeneracy") {
  CHECK(periodic_degeneracy(flat_torus(), curve_of(flat_torus(), vec({0.2, 0.3}), vec({1, 0}))).degenerate_as_periodic);
  const auto sph = periodic_degeneracy(sphere2(), curve_of(sphere2(), vec({pi / 2, 0}), vec({0, 2 * pi})));
  CHECK(sph.degenerate_as_periodic);
  CHECK(sph.fixed_dim == 3);
  const auto g = warped_cap();
  const auto once = periodic_degeneracy(g, curve_of(g, vec({0, 0}), vec({0, 1})));
  CHECK_FALSE(once.degenerate_as_periodic);
  CHECK(once.fixed_dim == 1);
  CHECK(periodic_degeneracy(g, curve_of(g, vec({0, 0}), vec({0, 2}))).degenerate_as_periodic);
  CHECK_THROWS_AS(periodic_degeneracy(g, curve_of(g, vec({0, 0}), vec({0.1, 0.7}))), GeoError);
}
