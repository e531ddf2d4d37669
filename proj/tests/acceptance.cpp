// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "fixtures.hpp"
#include "variation_oracle.hpp"

#include "geobvp/cli.hpp"
#include "geobvp/errors.hpp"
#include "geobvp/indexform.hpp"
#include "geobvp/jacobi.hpp"
#include "geobvp/perturb.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

using namespace geobvp;
using namespace fixtures;
namespace fs = std::filesystem;

namespace {

const fs::path kScenarios = GEOBVP_SCENARIO_DIR;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

// 1. Straight chords in flat space of both signatures.
Outcome flat_exactness() {
  Rng rng(2024);
  double worst_end = 0.0, worst_chord = 0.0;
  int count = 0, bad = 0;
  for (int n : {2, 3}) {
    for (int index : {0, 1}) {
      const MetricField g = index == 0 ? euclidean(n) : minkowski(n, 1);
      for (int trial = 0; trial < 100; ++trial) {
        Vector p(n), q(n);
        for (int i = 0; i < n; ++i) p[i] = uniform(rng, -2, 2), q[i] = uniform(rng, -2, 2);
        SeedGrid grid;
        grid.directions = 4;
        grid.seed = static_cast<std::uint64_t>(trial);
        ShootingOptions o;
        o.segments = 16;
        const auto P = point_pair(p, q);
        const auto res = scan(g, P, grid, 100.0, o);
        ++count;
        if (res.solutions.size() != 1) {
          ++bad;
          continue;
        }
        const auto& c = res.solutions.front().curve;
        worst_end = std::max(worst_end, (c.knots.back() - q).norm());
        for (int k = 0; k <= c.segments(); ++k) {
          const Vector chord = p + c.time(k) * (q - p);
          worst_chord = std::max(worst_chord, (c.knots[static_cast<std::size_t>(k)] - chord).norm());
        }
        if (boundary_operator(g, P, res.solutions.front()).kernel_dim != 0) ++bad;
      }
    }
  }
  const bool ok = bad == 0 && worst_end < 1e-8 && worst_chord < 1e-8;
  return {ok, std::to_string(count) + " problems, " + std::to_string(bad) + " bad" +
                  fmt(", endpoint error %.2e, chord error %.2e", worst_end, worst_chord)};
}

// 2. Antipodal points: one conjugate Jacobi field sin(πt).
Outcome conjugate_point() {
  const auto pr = antipodal();
  const auto sol = fixtures::solve(pr);
  const auto rep = boundary_operator(pr.g, pr.P, sol);
  const auto ifm = assemble(pr.g, pr.P, sol, 128);
  const auto cmp = kernel_compare(rep, ifm);
  double shape = 0.0;
  if (rep.kernel_dim == 1) {
    const auto& J = rep.kernel_basis.front();
    const double slope = J.DJ.front()[0];
    for (int k = 0; k <= J.segments(); ++k) {
      const double t = static_cast<double>(k) / J.segments();
      const Vector& v = J.J[static_cast<std::size_t>(k)];
      shape = std::max({shape, std::abs(v[0] - slope * std::sin(pi * t) / pi), std::abs(v[1])});
    }
  }
  const bool ok = rep.kernel_dim == 1 && rep.gap > 1e3 && ifm.kernel_dim == 1 && cmp.match && shape < 1e-6;
  return {ok, "kernel " + std::to_string(rep.kernel_dim) + fmt(", gap %.3g", rep.gap) + ", index-form kernel " +
                  std::to_string(ifm.kernel_dim) + ", match " + (cmp.match ? "yes" : "no") +
                  fmt(", deviation from sin(pi t) %.2e", shape)};
}

// 3. Equator to pole: focal Jacobi field cos(πt/2), totally geodesic equator.
Outcome focal_point() {
  double worst_S = 0.0, worst_shape = 0.0;
  int bad = 0, total = 0;
  for (double a : {-2.5, -0.9, 0.0, 0.7, 1.9, 3.0}) {
    const auto pr = equator_pole(a);
    const auto sol = fixtures::solve(pr);
    ++total;
    const auto rep = boundary_operator(pr.g, pr.P, sol);
    Vector eta(4);
    eta << sol.curve.velocities.front(), sol.curve.velocities.back();
    worst_S = std::max(worst_S, second_fundamental_form(pr.P, pr.g, sol.u, eta).cwiseAbs().maxCoeff());
    if (rep.kernel_dim != 1) {
      ++bad;
      continue;
    }
    const auto& J = rep.kernel_basis.front();
    auto gnorm = [&](int k) {
      const Vector& v = J.J[static_cast<std::size_t>(k)];
      return std::sqrt(v.dot(pr.g.value(sol.curve.knots[static_cast<std::size_t>(k)]) * v));
    };
    const double n0 = gnorm(0);
    for (int k = 0; k <= J.segments(); ++k) {
      const double t = static_cast<double>(k) / J.segments();
      worst_shape = std::max(worst_shape, std::abs(gnorm(k) / n0 - std::cos(pi * t / 2)));
    }
  }
  const bool ok = bad == 0 && worst_S < 1e-7 && worst_shape < 1e-6;
  return {ok, std::to_string(total) + " meridians, " + std::to_string(bad) + " without a 1-dim kernel" +
                  fmt(", max |S| %.2e, deviation from cos(pi t/2) %.2e", worst_S, worst_shape)};
}

// 4. The bump perturbation removes the antipodal kernel at first order.
Outcome degeneracy_removal() {
  const auto pr = antipodal();
  const auto sol = fixtures::solve(pr);
  try {
    const auto ex = run_removal(pr.g, pr.P, sol, {-1e-2, -1e-3, 1e-3, 1e-2});
    double lo = 1e300, hi = 0.0;
    bool rows_ok = true;
    for (const auto& r : ex.rows) {
      rows_ok = rows_ok && r.converged && r.kernel_dim == 0;
      const double ratio = r.sigma_min / std::abs(r.eps);
      lo = std::min(lo, ratio);
      hi = std::max(hi, ratio);
    }
    const bool ok = ex.pairing > 0.0 && rows_ok && hi < 2.0 * lo;
    return {ok, fmt("pairing %.4g, sigma_min/|eps| in [%.4g, %.4g]", ex.pairing, lo, hi) +
                    (rows_ok ? ", all kernels empty" : ", some row kept a kernel or failed")};
  } catch (const GeoError& e) {
    return {false, e.what()};
  }
}

// 5. Mixed derivative against the finite difference of the first variation.
Outcome mixed_derivative_law() {
  const auto g = sphere2();
  Rng rng(55);
  double worst = 0.0, worst_conn = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Vector p = vec({uniform(rng, 1.0, 2.1), uniform(rng, -1, 1)});
    const Vector w = vec({uniform(rng, -0.5, 0.5), uniform(rng, -1.5, 1.5)});
    const auto curve = integrate(g, p, w, 32);
    auto h = std::make_shared<QuadraticTensor>(2, rng, 0.5);
    DiscreteVariation var;
    for (int i = 0; i <= 16; ++i) var.values.push_back(vec({uniform(rng, -1, 1), uniform(rng, -1, 1)}));
    const double eps = 1e-3;
    const double fd = (first_variation(g.perturbed(h, eps), curve, var) -
                       first_variation(g.perturbed(h, -eps), curve, var)) /
                      (2 * eps);
    const auto ref = mixed_derivative_estimate(g, curve, *h, var, Connection::Reference);
    const auto lc = mixed_derivative_estimate(g, curve, *h, var, Connection::Metric);
    worst = std::max(worst, std::abs(ref.value - fd) / std::abs(fd));
    worst_conn = std::max(worst_conn, std::abs(ref.value - lc.value) / (ref.error + lc.error + 1e-14));
  }
  // Connection agreement is measured in units of the quadrature error estimate.
  const bool ok = worst < 1e-5 && worst_conn <= 1.0;
  return {ok, fmt("20 triples, max relative error %.2e, connection difference %.2g x quadrature error", worst,
                  worst_conn)};
}

// 6. Admissibility verdicts on the fixture set.
Outcome admissibility() {
  struct Case {
    std::string file;
    bool admissible;
    bool intersects;
  };
  const std::vector<Case> cases{{"flat_pair.json", true, false},
                                {"equator_meridian.json", true, true},
                                {"diagonal.json", false, false},
                                {"tangent_parametric.json", false, false}};
  int agree = 0;
  std::string detail;
  for (const auto& c : cases) {
    const auto sc = load_scenario((kScenarios / c.file).string());
    const auto r = check_admissibility(sc.P, sc.g, sc.admissibility.samples, sc.seed);
    const bool ok = r.certified_admissible == c.admissible && (!c.admissible || r.intersects_diagonal == c.intersects);
    agree += ok;
    detail += (detail.empty() ? "" : "; ") + c.file.substr(0, c.file.size() - 5) + " " +
              (!r.applicable ? "not applicable" : r.certified_admissible ? "admissible" : "rejected");
  }
  return {agree == static_cast<int>(cases.size()), std::to_string(agree) + "/4 agree (" + detail + ")"};
}

// 7. Short-geodesic turning and speed bounds.
Outcome short_geodesics() {
  struct Case {
    MetricField g;
    Box K;
  };
  const std::vector<Case> cases{{sphere2(), box({{pi / 4, 3 * pi / 4}, {-1, 1}})},
                                {warped({1.0, 0.3, -0.8}, 0, -0.8, 0.8), box({{-0.6, 0.6}, {-1, 1}})},
                                {sphere2(1.0, SphereChart::Stereographic), box({{-1, 1}, {-1, 1}})}};
  double turning = 1e300, speed = 1e300;
  int total = 0;
  bool c_ok = true;
  std::uint64_t seed = 11;
  for (const auto& c : cases) {
    const auto b = short_geodesic_bound(c.g, c.K);
    c_ok = c_ok && b.c == 2.0 * b.kappa;
    const auto chk = validate_short_geodesic_bound(c.g, c.K, b, 50, seed++);
    total += chk.geodesics;
    turning = std::min(turning, chk.turning_slack);
    speed = std::min(speed, chk.speed_slack);
  }
  const bool ok = c_ok && total == 150 && turning >= 0.0 && speed >= 0.0;
  return {ok, std::to_string(total) + " geodesics in 3 boxes" +
                  fmt(", min turning slack %.3g, min speed slack %.3g", turning, speed)};
}

// 8. Strong degeneracy on the warped doubled geodesic, not on the doubled equator.
Outcome strongly_degenerate() {
  const auto w = warped_double();
  const auto ws = fixtures::solve(w);
  const auto wr = boundary_operator(w.g, w.P, ws);
  bool warped_strong = false;
  try {
    select_interval(ws.curve, wr.kernel_basis.at(0));
  } catch (const GeoError& e) {
    warped_strong = e.code() == ErrorCode::StronglyDegenerate;
  }
  const bool periodic = periodic_degeneracy(w.g, ws.curve).degenerate_as_periodic;

  const auto s = sphere_double();
  const auto ss = fixtures::solve(s);
  const auto sr = boundary_operator(s.g, s.P, ss);
  bool sphere_strong = false;
  for (const auto& J : sr.kernel_basis) {
    try {
      select_interval(ss.curve, J);
    } catch (const GeoError& e) {
      sphere_strong = sphere_strong || e.code() == ErrorCode::StronglyDegenerate;
    }
  }
  const bool ok = warped_strong && periodic && !sphere_strong && sr.kernel_dim > 0;
  return {ok, std::string("warped: StronglyDegenerate ") + (warped_strong ? "yes" : "no") + ", periodic degenerate " +
                  (periodic ? "yes" : "no") + "; doubled equator: StronglyDegenerate " +
                  (sphere_strong ? "yes" : "no")};
}

// 9. Mesh-independent Morse index on the Riemannian fixtures.
Outcome morse_index() {
  std::vector<std::pair<std::string, Problem>> problems{
      {"flat", {euclidean(2), point_pair(vec({0, 0}), vec({1, 0.5})), Vector(0), vec({1, 0.5})}},
      {"antipodal", antipodal()},
      {"equator-pole", equator_pole()},
      {"latitude-pole", latitude_pole()},
      {"warped-double", warped_double()},
      {"sphere-double", sphere_double()},
      {"arc-2", sphere_arc(2.0)},
      {"arc-3.6", sphere_arc(3.6)},
      {"arc-4.5", sphere_arc(4.5)},
      {"arc-5.8", sphere_arc(5.8)}};
  bool ok = true;
  std::string detail;
  for (const auto& [name, pr] : problems) {
    const auto sol = fixtures::solve(pr);
    std::vector<int> counts;
    for (int N : {64, 128, 256}) counts.push_back(assemble(pr.g, pr.P, sol, N).morse_index);
    const bool same = counts[0] == counts[1] && counts[1] == counts[2];
    const bool arc = name.rfind("arc-", 0) == 0 && name != "arc-2";
    ok = ok && same && (!arc || counts[0] == 1);
    detail += (detail.empty() ? "" : ", ") + name + " " + std::to_string(counts[0]) + (same ? "" : "*");
  }
  // A timelike Lorentzian geodesic has infinite index: every time-like
  // variation lowers the energy, so the discrete count tracks the mesh.
  const auto mk = minkowski(2, 1);
  const auto mp = point_pair(vec({0, 0}), vec({2, 0.5}));
  const auto ms = geobvp::solve(mk, mp, Vector(0), vec({2, 0.5}));
  detail += "; Lorentzian chord (not counted) " + std::to_string(assemble(mk, mp, ms, 64).morse_index) + ", " +
            std::to_string(assemble(mk, mp, ms, 128).morse_index);
  return {ok, "Morse index at N = 64, 128, 256: " + detail};
}

// 10. Byte-identical manifests for repeated runs.
Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "geobvp_acceptance";
  bool ok = true;
  std::string detail;
  for (const std::string name : {"flat_pair", "sphere_antipodal"}) {
    std::string manifests[2];
    int codes[2];
    for (int r = 0; r < 2; ++r) {
      const fs::path out = root / (name + std::to_string(r));
      fs::remove_all(out);
      std::ostringstream log;
      codes[r] = run("all", (kScenarios / (name + ".json")).string(), out.string(), {}, log);
      std::ifstream in(out / "manifest.json", std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      manifests[r] = s.str();
    }
    const bool same = !manifests[0].empty() && manifests[0] == manifests[1] && codes[0] == kExitOk && codes[1] == kExitOk;
    ok = ok && same;
    detail += (detail.empty() ? "" : ", ") + name + (same ? " identical" : " differs");
  }
  return {ok, detail};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"flat-space exactness", flat_exactness},
      {"conjugate point", conjugate_point},
      {"focal point", focal_point},
      {"degeneracy removal", degeneracy_removal},
      {"mixed derivative", mixed_derivative_law},
      {"admissibility classification", admissibility},
      {"short-geodesic inequality", short_geodesics},
      {"strongly degenerate pipeline", strongly_degenerate},
      {"Morse index across meshes", morse_index},
      {"determinism", determinism}};
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << i + 1 << " (" << criteria[i].first << "): " << o.detail
              << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
