#include "doctest.h"

#include "geobvp/boundary.hpp"
#include "geobvp/errors.hpp"
#include "geobvp/geodesic.hpp"
#include "geobvp/random.hpp"

#include <cmath>
#include <numbers>

using namespace geobvp;
using std::numbers::pi;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

Box box(std::initializer_list<std::pair<double, double>> rs) {
  Box b{Vector(static_cast<Eigen::Index>(rs.size())), Vector(static_cast<Eigen::Index>(rs.size()))};
  Eigen::Index i = 0;
  for (auto [lo, hi] : rs) b.lo[i] = lo, b.hi[i++] = hi;
  return b;
}

// u -> (θ0, u) in the spherical chart.
ParamMap latitude(double theta0, double lo, double hi) {
  return coefficient_map({CoeffFunction::constant(theta0), CoeffFunction::polynomial(0, 1, {0.0, 1.0})}, box({{lo, hi}}));
}

// u -> (u, φ0).
ParamMap meridian(double phi0, double lo, double hi) {
  return coefficient_map({CoeffFunction::polynomial(0, 1, {0.0, 1.0}), CoeffFunction::constant(phi0)}, box({{lo, hi}}));
}

ParamMap point(const Vector& x) { return affine_map(x, Matrix(x.size(), 0), Box{Vector(0), Vector(0)}); }

// Unit circle in the stereographic chart: the equator.
ParamMap stereo_equator() {
  CoeffFunction::Term c{1.0, {0}, CoeffFunction::Trig::Cos, {1.0}, 0.0};
  CoeffFunction::Term s{1.0, {0}, CoeffFunction::Trig::Sin, {1.0}, 0.0};
  return coefficient_map({CoeffFunction({c}), CoeffFunction({s})}, box({{-pi, pi}}));
}

}  // namespace

TEST_CASE("point pair frame") {
  const auto P = point_pair(vec({0, 0}), vec({1, 2}));
  const auto f = endpoint_frame(P, euclidean(2), Vector(0));
  CHECK(f.tangent.cols() == 0);
  CHECK(f.gram.size() == 0);
  CHECK(f.normal.isApprox(Matrix::Identity(4, 4)));
  CHECK(is_nondegenerate(P, euclidean(2)).nondegenerate);
}

TEST_CASE("diagonal is totally null") {
  const std::vector<MetricField> metrics{euclidean(2), minkowski(2), sphere2(), warped({1.0, 0.3, -0.4}, 0, -0.8, 0.8)};
  for (const auto& g : metrics) {
    Box b = g.domain();
    for (int i = 0; i < 2; ++i) {
      b.lo[i] = std::max(b.lo[i], -2.0);
      b.hi[i] = std::min(b.hi[i], 2.0);
    }
    const auto D = diagonal(b);
    Rng rng(3);
    for (int s = 0; s < 20; ++s) {
      Vector u(2);
      for (int i = 0; i < 2; ++i) u[i] = uniform(rng, b.lo[i], b.hi[i]);
      CHECK(endpoint_frame(D, g, u).gram.cwiseAbs().maxCoeff() < 1e-12);
    }
    const auto rep = is_nondegenerate(D, g, 8);
    CHECK_FALSE(rep.nondegenerate);
    CHECK(rep.conditioning == 0.0);
  }
}

TEST_CASE("equator x north pole") {
  const auto g = sphere2(1.0, SphereChart::Stereographic);
  const auto P = product(stereo_equator(), point(vec({0, 0})));
  CHECK(P.param_dim() == 1);
  for (double a : {-2.0, 0.0, 0.7, 3.0}) {
    const auto f = endpoint_frame(P, g, vec({a}));
    CHECK(f.gram(0, 0) == doctest::Approx(1.0).epsilon(1e-10));
  }
  CHECK(is_nondegenerate(P, g).nondegenerate);
  // the equator is a geodesic, so S vanishes for every normal direction
  const auto f = endpoint_frame(P, g, vec({0.4}));
  for (int k = 0; k < f.normal.cols(); ++k) {
    CHECK(std::abs(second_fundamental_form(P, g, vec({0.4}), f.normal.col(k))(0, 0)) < 1e-7);
  }
}

TEST_CASE("frames are ḡ-orthogonal and span") {
  const std::vector<std::pair<BoundaryCondition, MetricField>> cases{
      {product(latitude(pi / 2, -1, 1), meridian(0.0, 0.5, pi - 0.5)), sphere2()},
      {product(latitude(1.0, -1, 1), point(vec({2.0, 0.3}))), sphere2()},
      {parametric({CoeffFunction::polynomial(0, 2, {0.1, 1.0}), CoeffFunction::polynomial(1, 2, {0.0, 0.5, 0.2}),
                   CoeffFunction::polynomial(1, 2, {1.0, 0.0, 0.3}), CoeffFunction::polynomial(0, 2, {0.0, 2.0})},
                  box({{-1, 1}, {-1, 1}})),
       minkowski(2)},
  };
  Rng rng(4);
  for (const auto& [P, g] : cases) {
    for (int s = 0; s < 100; ++s) {
      Vector u(P.param_dim());
      for (int i = 0; i < u.size(); ++i) u[i] = uniform(rng, P.param_box().lo[i], P.param_box().hi[i]);
      const auto f = endpoint_frame(P, g, u);
      CHECK((f.tangent.transpose() * f.gbar * f.normal).cwiseAbs().maxCoeff() < 1e-9);
      if (gram_conditioning(f) > kGramTol) {
        Matrix all(4, 4);
        all << f.tangent, f.normal;
        CHECK(all.fullPivLu().rank() == 4);
      }
    }
  }
}

TEST_CASE("second fundamental form") {
  SUBCASE("affine P in flat space") {
    const auto P = parametric({CoeffFunction::polynomial(0, 1, {0.0, 1.0}), CoeffFunction::polynomial(0, 1, {1.0, 2.0}),
                               CoeffFunction::polynomial(0, 1, {3.0, -1.0}), CoeffFunction::constant(0.5)},
                              box({{-1, 1}}));
    const auto f = endpoint_frame(P, minkowski(2), vec({0.3}));
    for (int k = 0; k < f.normal.cols(); ++k)
      CHECK(std::abs(second_fundamental_form(P, minkowski(2), vec({0.3}), f.normal.col(k))(0, 0)) < 1e-9);
  }
  SUBCASE("latitude circle has geodesic curvature cot θ0") {
    for (double th0 : {0.6, 1.0, 2.2}) {
      const auto P = product(latitude(th0, -1, 1), point(vec({1.0, 0.0})));
      const Vector eta = vec({1, 0, 0, 0});
      const Matrix S = second_fundamental_form(P, sphere2(), vec({0.2}), eta);
      const double gtt = std::sin(th0) * std::sin(th0);
      CHECK(S(0, 0) / gtt == doctest::Approx(-std::cos(th0) / std::sin(th0)).epsilon(1e-8));
    }
  }
  SUBCASE("symmetric and matches a brute-force evaluation") {
    // 2-parameter surface in M x M for the warped metric
    const auto g = warped({1.0, 0.3, -0.4}, 0, -0.8, 0.8).with_deriv_mode(DerivMode::CentralDifference);
    const auto P = parametric({CoeffFunction::polynomial(0, 2, {0.1, 0.5, 0.3}), CoeffFunction::polynomial(1, 2, {0.0, 1.0, 0.4}),
                               CoeffFunction::polynomial(0, 2, {-0.2, 0.0, 0.5}), CoeffFunction::polynomial(1, 2, {0.5, 0.7})},
                              box({{-0.5, 0.5}, {-0.5, 0.5}}));
    const Vector u = vec({0.1, -0.2});
    const auto f = endpoint_frame(P, g, u);
    for (int k = 0; k < f.normal.cols(); ++k) {
      const Vector eta = f.normal.col(k);
      const Matrix S = second_fundamental_form(P, g, u, eta);
      CHECK((S - S.transpose()).cwiseAbs().maxCoeff() < 1e-7);
      // second-order differences with a coarse step and Christoffels from the analytic metric
      const double h = 1e-4;
      const auto ga = warped({1.0, 0.3, -0.4}, 0, -0.8, 0.8);
      for (int i = 0; i < 2; ++i) {
        for (int j = 0; j < 2; ++j) {
          auto e = [&](double si, double sj) {
            Vector w = u;
            w[i] += si;
            w[j] += sj;
            return P.embed(w);
          };
          const Vector d2 = (e(h, h) - e(h, -h) - e(-h, h) + e(-h, -h)) / (4 * h * h);
          const Vector ti = (P.embed(u + h * Vector::Unit(2, i)) - P.embed(u - h * Vector::Unit(2, i))) / (2 * h);
          const Vector tj = (P.embed(u + h * Vector::Unit(2, j)) - P.embed(u - h * Vector::Unit(2, j))) / (2 * h);
          Vector acc = d2;
          acc.head(2) += christoffel(ga, f.p).contract(ti.head(2), tj.head(2));
          acc.tail(2) += christoffel(ga, f.q).contract(ti.tail(2), tj.tail(2));
          CHECK(S(i, j) == doctest::Approx(acc.dot(f.gbar * eta)).epsilon(1e-5).scale(1.0));
        }
      }
    }
  }
  SUBCASE("non-normal vector is rejected") {
    const auto P = product(latitude(1.0, -1, 1), point(vec({1.0, 0.0})));
    try {
      second_fundamental_form(P, sphere2(), vec({0.0}), vec({0, 1, 0, 0}));
      FAIL("expected NotNormal");
    } catch (const GeoError& e) {
      CHECK(e.code() == ErrorCode::NotNormal);
    }
  }
}

TEST_CASE("admissibility fixtures") {
  const auto pq = point_pair(vec({0, 0}), vec({1, 0.5}));
  auto r = check_admissibility(pq, euclidean(2));
  CHECK(r.applicable);
  CHECK_FALSE(r.intersects_diagonal);
  CHECK(r.transversal);
  CHECK(r.certified_admissible);

  const auto em = product(latitude(pi / 2, -1, 1), meridian(0.0, 0.5, pi - 0.5));
  r = check_admissibility(em, sphere2());
  CHECK(r.applicable);
  CHECK(r.intersects_diagonal);
  CHECK(r.transversal);
  CHECK(r.certified_admissible);
  REQUIRE(r.intersections.size() == 1);
  CHECK(r.intersections[0][0] == doctest::Approx(0.0).scale(1.0).epsilon(1e-6));
  CHECK(r.intersections[0][1] == doctest::Approx(pi / 2).epsilon(1e-6));

  r = check_admissibility(diagonal(box({{-1, 1}, {-1, 1}})), euclidean(2));
  CHECK_FALSE(r.applicable);
  CHECK_FALSE(r.certified_admissible);

  const auto tangent = parametric({CoeffFunction::polynomial(0, 1, {0.0, 1.0}), CoeffFunction::constant(0.0),
                                   CoeffFunction::polynomial(0, 1, {0.0, 1.0}), CoeffFunction::constant(0.0)},
                                  box({{-1, 1}}));
  r = check_admissibility(tangent, euclidean(2));
  CHECK_FALSE(r.applicable);
  CHECK_FALSE(r.certified_admissible);

  // a curve crossing Δ without filling a complementary direction: touches but not transversal
  const auto grazing = product(latitude(pi / 2, -1, 1), latitude(pi / 2, -1, 1));
  r = check_admissibility(grazing, sphere2());
  CHECK(r.intersects_diagonal);
  CHECK_FALSE(r.transversal);
  CHECK_FALSE(r.certified_admissible);
}

TEST_CASE("admissibility verdict does not depend on the reference metric") {
  const std::vector<std::pair<BoundaryCondition, MetricField>> cases{
      {point_pair(vec({0, 0}), vec({1, 0.5})), euclidean(2)},
      {product(latitude(pi / 2, -1, 1), meridian(0.0, 0.5, pi - 0.5)), sphere2()},
      {product(latitude(pi / 2, -1, 1), latitude(pi / 2, -1, 1)), sphere2()},
  };
  for (const auto& [P, g] : cases) {
    const auto a = check_admissibility(P, g, 32, euclidean(2));
    const auto b = check_admissibility(P, g, 32, euclidean(2).scaled(2.0));
    CHECK(a.certified_admissible == b.certified_admissible);
    CHECK(a.intersects_diagonal == b.intersects_diagonal);
  }
}

TEST_CASE("transpose") {
  const auto P = point_pair(vec({0, 0}), vec({1, 2}));
  const auto T = transpose(P);
  CHECK(T.p(Vector(0)).isApprox(vec({1, 2})));
  CHECK(T.q(Vector(0)).isApprox(vec({0, 0}), 0.0));
  const auto Q = product(latitude(1.0, -1, 1), meridian(0.3, 0.5, 2.0));
  const auto QQ = transpose(transpose(Q));
  Rng rng(5);
  for (int s = 0; s < 10; ++s) {
    const Vector u = vec({uniform(rng, -1, 1), uniform(rng, 0.5, 2.0)});
    CHECK((QQ.embed(u) - Q.embed(u)).norm() == 0.0);
    CHECK((QQ.jacobian(u) - Q.jacobian(u)).norm() == 0.0);
    const Vector e = transpose(Q).embed(u);
    CHECK((e.head(2) - Q.q(u)).norm() == 0.0);
  }
}

TEST_CASE("immersion failure") {
  const auto P = parametric({CoeffFunction::polynomial(0, 1, {0.0, 0.0, 1.0}), CoeffFunction::constant(0.0),
                             CoeffFunction::constant(1.0), CoeffFunction::constant(0.0)},
                            box({{-1, 1}}));
  try {
    endpoint_frame(P, euclidean(2), vec({0.0}));
    FAIL("expected ImmersionFailure");
  } catch (const GeoError& e) {
    CHECK(e.code() == ErrorCode::ImmersionFailure);
  }
}

TEST_CASE("short geodesic bound") {
  const auto flat = short_geodesic_bound(euclidean(2), box({{-1, 1}, {-1, 1}}));
  CHECK(flat.kappa == 1.0);
  CHECK(flat.c == 2.0);

  const Box K = box({{pi / 4, 3 * pi / 4}, {-1, 1}});
  const auto entry = short_geodesic_bound(sphere2(), K, 16, ChristoffelNorm::MaxEntry);
  CHECK(entry.kappa == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(entry.c == doctest::Approx(4.0).epsilon(1e-9));
  // |Γ(a,a)|^2 = (sinθcosθ a_φ^2)^2 + (2 cotθ a_θ a_φ)^2 peaks at θ = π/4, a_φ^2 = 8/15
  const auto op = short_geodesic_bound(sphere2(), K, 16, ChristoffelNorm::Operator);
  CHECK(op.kappa == doctest::Approx(1.0 + 4.0 / std::sqrt(15.0)).epsilon(1e-8));

  for (const auto& b : {entry, op}) {
    const auto chk = validate_short_geodesic_bound(sphere2(), K, b, 50, 7);
    CHECK(chk.geodesics == 50);
    CHECK(chk.turning_slack >= 0.0);
    CHECK(chk.speed_slack >= 0.0);
  }
  const Box W = box({{-0.6, 0.6}, {-1, 1}});
  const auto gw = warped({1.0, 0.3, -0.8}, 0, -0.8, 0.8);
  const auto chk = validate_short_geodesic_bound(gw, W, short_geodesic_bound(gw, W), 50, 8);
  CHECK(chk.geodesics == 50);
  CHECK(chk.turning_slack >= 0.0);
  CHECK(chk.speed_slack >= 0.0);
}

TEST_CASE("boundary from json") {
  const auto j = nlohmann::json::parse(R"({"kind": "product",
    "first": {"coords": [1.5707963267948966, [{"coef": 1, "pow": [1]}]], "param_box": [[-1, 1]]},
    "second": {"point": [0.5, 0.0]}})");
  const auto P = boundary_from_json(j, 2);
  CHECK(P.kind() == BoundaryKind::Product);
  CHECK(P.param_dim() == 1);
  CHECK(P.p(vec({0.3})).isApprox(vec({pi / 2, 0.3})));
  CHECK(P.q(vec({0.3})).isApprox(vec({0.5, 0.0})));
  const auto D = boundary_from_json(nlohmann::json::parse(R"({"kind":"diagonal","param_box":[[0,1],[0,1]]})"), 2);
  CHECK(D.kind() == BoundaryKind::Diagonal);
  CHECK_THROWS_AS(boundary_from_json(nlohmann::json::parse(R"({"kind":"blob"})"), 2), GeoError);
  CHECK_THROWS_AS(boundary_from_json(nlohmann::json::parse(R"({"kind":"point_pair","p":[0]})"), 2), GeoError);
}
