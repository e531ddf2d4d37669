#include "geobvp/cli.hpp"

#include "geobvp/errors.hpp"
#include "geobvp/indexform.hpp"
#include "geobvp/jacobi.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <map>
#include <set>
#include <sstream>

namespace geobvp {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw GeoError(ErrorCode::ConfigError, msg); }

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& block) {
  if (!j.is_object()) config_error(block + " must be an object");
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!allowed.count(key)) config_error("unknown key '" + key + "' in " + block);
  }
}

template <class T>
T field(const json& j, const std::string& key, const T& fallback, const std::string& block) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("key '" + key + "' in " + block + " has the wrong type");
  }
}

void require_positive(double x, const std::string& what) {
  if (!(x > 0.0) || !std::isfinite(x)) config_error(what + " must be positive and finite");
}

Vector to_vector(const std::vector<double>& v) { return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())); }

Box parse_box(const json& j, const std::string& what) {
  Box b;
  try {
    const auto rows = j.get<std::vector<std::vector<double>>>();
    b.lo.resize(static_cast<Eigen::Index>(rows.size()));
    b.hi.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != 2 || !(rows[i][0] < rows[i][1])) config_error(what + " entries must be [lo, hi] with lo < hi");
      b.lo[static_cast<Eigen::Index>(i)] = rows[i][0];
      b.hi[static_cast<Eigen::Index>(i)] = rows[i][1];
    }
  } catch (const json::exception&) {
    config_error(what + " must be a list of [lo, hi] pairs");
  }
  return b;
}

SolverConfig parse_solver(const json& j, int n, int d) {
  const std::string B = "solver";
  check_keys(j, {"segments", "max_iters", "tol", "rtol", "atol", "max_steps", "variational", "L_max", "min_length",
                 "seeds", "initial"},
             B);
  SolverConfig s;
  auto& o = s.shooting;
  o.segments = field(j, "segments", o.segments, B);
  o.max_iters = field(j, "max_iters", o.max_iters, B);
  o.tol = field(j, "tol", o.tol, B);
  o.ode.rtol = field(j, "rtol", o.ode.rtol, B);
  o.ode.atol = field(j, "atol", o.ode.atol, B);
  o.ode.max_steps = field(j, "max_steps", o.ode.max_steps, B);
  o.variational = field(j, "variational", o.variational, B);
  s.L_max = field(j, "L_max", s.L_max, B);
  s.min_length = field(j, "min_length", s.min_length, B);
  if (o.segments < 16) config_error("solver.segments must be at least 16");
  if (o.max_iters < 1) config_error("solver.max_iters must be at least 1");
  if (o.ode.max_steps < 1) config_error("solver.max_steps must be at least 1");
  require_positive(o.tol, "solver.tol");
  require_positive(o.ode.rtol, "solver.rtol");
  require_positive(o.ode.atol, "solver.atol");
  require_positive(s.L_max, "solver.L_max");
  if (!(s.min_length >= 0.0)) config_error("solver.min_length must be non-negative");
  if (j.contains("seeds")) {
    const auto& sj = j.at("seeds");
    const std::string S = "solver.seeds";
    check_keys(sj, {"param_points", "directions", "speeds", "chord"}, S);
    s.grid.param_points = field(sj, "param_points", s.grid.param_points, S);
    s.grid.directions = field(sj, "directions", s.grid.directions, S);
    s.grid.speeds = field(sj, "speeds", s.grid.speeds, S);
    s.grid.chord = field(sj, "chord", s.grid.chord, S);
    if (s.grid.param_points < 1 || s.grid.directions < 0) config_error("solver.seeds counts must be positive");
    for (double v : s.grid.speeds) require_positive(v, "solver.seeds.speeds entries");
  }
  if (j.contains("initial")) {
    if (!j.at("initial").is_array()) config_error("solver.initial must be a list");
    for (const auto& e : j.at("initial")) {
      check_keys(e, {"u", "v"}, "solver.initial entry");
      const auto u = field(e, "u", std::vector<double>{}, "solver.initial entry");
      const auto v = field(e, "v", std::vector<double>{}, "solver.initial entry");
      if (static_cast<int>(u.size()) != d || static_cast<int>(v.size()) != n)
        config_error("solver.initial entry needs u of length d and v of length n");
      s.initial.push_back({to_vector(u), to_vector(v)});
    }
  }
  return s;
}

ExperimentConfig parse_experiment(const json& j) {
  const std::string B = "experiment";
  check_keys(j, {"eps", "meshes", "max_half_width", "threshold", "radius", "min_radius"}, B);
  ExperimentConfig e;
  e.eps = field(j, "eps", e.eps, B);
  e.meshes = field(j, "meshes", e.meshes, B);
  e.interval.max_half_width = field(j, "max_half_width", e.interval.max_half_width, B);
  e.interval.threshold = field(j, "threshold", e.interval.threshold, B);
  e.bump.radius = field(j, "radius", e.bump.radius, B);
  e.bump.min_radius = field(j, "min_radius", e.bump.min_radius, B);
  for (double x : e.eps)
    if (!std::isfinite(x)) config_error("experiment.eps entries must be finite");
  for (int m : e.meshes)
    if (m < 16) config_error("experiment.meshes entries must be at least 16");
  require_positive(e.interval.max_half_width, "experiment.max_half_width");
  require_positive(e.interval.threshold, "experiment.threshold");
  require_positive(e.bump.min_radius, "experiment.min_radius");
  if (!(e.bump.radius >= 0.0)) config_error("experiment.radius must be non-negative");
  return e;
}

AdmissibilityConfig parse_admissibility(const json& j, int n) {
  const std::string B = "admissibility";
  check_keys(j, {"samples", "box", "kappa_samples", "geodesics", "norm"}, B);
  AdmissibilityConfig a;
  a.samples = field(j, "samples", a.samples, B);
  a.kappa_samples = field(j, "kappa_samples", a.kappa_samples, B);
  a.geodesics = field(j, "geodesics", a.geodesics, B);
  const auto norm = field(j, "norm", std::string("operator"), B);
  if (norm == "operator") a.norm = ChristoffelNorm::Operator;
  else if (norm == "max_entry") a.norm = ChristoffelNorm::MaxEntry;
  else config_error("admissibility.norm must be 'operator' or 'max_entry'");
  if (j.contains("box")) {
    a.box = parse_box(j.at("box"), "admissibility.box");
    if (a.box->dim() != n) config_error("admissibility.box must have one range per coordinate");
  }
  if (a.samples < 2 || a.kappa_samples < 2 || a.geodesics < 1) config_error("admissibility sample counts too small");
  return a;
}

// ---------------------------------------------------------------- output

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

json vec_json(const Vector& v) {
  json a = json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

// Non-finite values have no JSON literal; they are written as strings.
json num(double x) {
  if (std::isfinite(x)) return x;
  if (std::isnan(x)) return "nan";
  return x > 0 ? "inf" : "-inf";
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : cols_(header.size()) { line(header); }
  void row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw GeoError(ErrorCode::ConfigError, "csv row width mismatch");
    line(cells);
  }
  const std::string& str() const { return text_; }

 private:
  void line(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) text_ += (i ? "," : "") + cells[i];
    text_ += "\n";
  }
  std::size_t cols_;
  std::string text_;
};

std::vector<std::string> indexed(const std::string& prefix, int count) {
  std::vector<std::string> out;
  for (int i = 0; i < count; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

void append(std::vector<std::string>& a, const std::vector<std::string>& b) { a.insert(a.end(), b.begin(), b.end()); }

void append(std::vector<std::string>& a, const Vector& v) {
  for (int i = 0; i < v.size(); ++i) a.push_back(format_double(v[i]));
}

struct Context {
  Scenario sc;
  fs::path out;
  std::ostream& log;
  std::vector<std::string> warnings;
  std::vector<std::string> files;
  bool solved = false;
  ScanResult scan;
  std::vector<std::optional<DegeneracyReport>> reports;
  bool reports_done = false;

  void write(const std::string& rel, const std::string& content) {
    const fs::path p = out / rel;
    fs::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    f << content;
    if (!f) throw std::runtime_error("cannot write " + p.string());
    files.push_back(rel);
  }
  void write_json(const std::string& rel, const json& j) { write(rel, j.dump(2) + "\n"); }
  void warn(const std::string& w) {
    warnings.push_back(w);
    log << "warning: " << w << "\n";
  }
};

std::string curve_csv(const GeodesicCurve& c) {
  const int n = c.dim();
  std::vector<std::string> header{"t"};
  append(header, indexed("x", n));
  append(header, indexed("v", n));
  Csv csv(header);
  for (int i = 0; i <= c.segments(); ++i) {
    std::vector<std::string> r{format_double(c.time(i))};
    append(r, c.knots[static_cast<std::size_t>(i)]);
    append(r, c.velocities[static_cast<std::size_t>(i)]);
    csv.row(r);
  }
  return csv.str();
}

// Returns true when every seed failed to converge.
bool run_solve(Context& ctx, bool seed_table) {
  const auto& sc = ctx.sc;
  const int n = sc.P.dim(), d = sc.P.param_dim();
  SeedGrid grid = sc.solver.grid;
  grid.seed = sc.seed;
  ctx.log << "scan: " << sc.name << "\n";
  ScanResult res = scan(sc.g, sc.P, grid, sc.solver.L_max, sc.solver.shooting, sc.solver.min_length);

  // Explicit seeds come first; grid solutions that repeat one are dropped.
  std::vector<GPGeodesic> explicit_solutions;
  std::size_t explicit_failures = 0;
  for (std::size_t i = 0; i < sc.solver.initial.size(); ++i) {
    const auto& s = sc.solver.initial[i];
    try {
      auto sol = solve(sc.g, sc.P, s.u, s.v, sc.solver.shooting);
      const double len = riemannian_length(sol.curve);
      if (len > sc.solver.L_max || len < sc.solver.min_length) {
        ++res.filtered;
        continue;
      }
      const bool dup = std::any_of(explicit_solutions.begin(), explicit_solutions.end(), [&](const GPGeodesic& o) {
        return curve_distance(o.curve, sol.curve) < 1e-4 * (1.0 + len);
      });
      if (!dup) explicit_solutions.push_back(std::move(sol));
    } catch (const GeoError& e) {
      ++explicit_failures;
      ctx.warn("explicit seed " + std::to_string(i) + ": " + e.what());
    }
  }
  if (!explicit_solutions.empty()) {
    std::vector<GPGeodesic> merged = explicit_solutions;
    for (auto& s : res.solutions) {
      const double len = riemannian_length(s.curve);
      const bool dup = std::any_of(explicit_solutions.begin(), explicit_solutions.end(), [&](const GPGeodesic& o) {
        return curve_distance(o.curve, s.curve) < 1e-4 * (1.0 + len);
      });
      if (!dup) merged.push_back(std::move(s));
    }
    res.solutions = std::move(merged);
    res.clusters.clear();
  }

  std::vector<std::string> header{"id", "length", "energy", "residual", "geodesic_residual", "newton_iters",
                                  "jacobian_conditioning", "rank_deficient"};
  append(header, indexed("u", d));
  append(header, indexed("x0_", n));
  append(header, indexed("v0_", n));
  Csv table(header);
  for (std::size_t i = 0; i < res.solutions.size(); ++i) {
    const auto& s = res.solutions[i];
    std::vector<std::string> r{std::to_string(i),
                               format_double(riemannian_length(s.curve)),
                               format_double(energy(sc.g, s.curve)),
                               format_double(s.residual_norm),
                               format_double(geodesic_residual(sc.g, s.curve)),
                               std::to_string(s.newton_iters),
                               format_double(s.jacobian_conditioning),
                               s.rank_deficient ? "1" : "0"};
    append(r, s.u);
    append(r, s.curve.knots.front());
    append(r, s.curve.velocities.front());
    table.row(r);
    ctx.write("curves/curve_" + std::to_string(i) + ".csv", curve_csv(s.curve));
  }
  ctx.write("solutions.csv", table.str());

  json report;
  report["seeds"] = res.seeds + sc.solver.initial.size();
  report["solutions"] = res.solutions.size();
  report["filtered"] = res.filtered;
  report["failures"] = res.failures.size() + explicit_failures;
  json clusters = json::array();
  for (const auto& c : res.clusters)
    clusters.push_back({{"members", c.members}, {"energy", num(c.energy)}, {"rank_deficient", c.rank_deficient}});
  report["clusters"] = clusters;
  ctx.write_json("solve.json", report);

  if (seed_table) {
    const auto seeds = make_seeds(sc.P, sc.g, grid);
    std::map<std::size_t, const SeedFailure*> failed;
    for (const auto& f : res.failures) failed[f.seed_index] = &f;
    std::vector<std::string> sh{"seed"};
    append(sh, indexed("u", d));
    append(sh, indexed("v", n));
    sh.push_back("status");
    Csv st(sh);
    for (std::size_t i = 0; i < seeds.size(); ++i) {
      std::vector<std::string> r{std::to_string(i)};
      append(r, seeds[i].u);
      append(r, seeds[i].v);
      r.push_back(failed.count(i) ? to_string(failed[i]->code) : "converged");
      st.row(r);
    }
    ctx.write("seeds.csv", st.str());
  }
  ctx.log << "scan: " << res.solutions.size() << " solution(s), " << res.failures.size() << " failed seed(s)\n";
  if (res.filtered > 0) ctx.warn(std::to_string(res.filtered) + " converged solution(s) filtered by length");
  const std::size_t total = res.seeds + sc.solver.initial.size();
  const std::size_t failures = res.failures.size() + explicit_failures;
  const bool all_failed = res.solutions.empty() && failures == total &&
                          std::all_of(res.failures.begin(), res.failures.end(),
                                      [](const SeedFailure& f) { return f.code == ErrorCode::NoConvergence; });
  ctx.scan = std::move(res);
  ctx.solved = true;
  return all_failed;
}

void ensure_solved(Context& ctx) {
  if (!ctx.solved) run_solve(ctx, false);
}

void ensure_reports(Context& ctx) {
  ensure_solved(ctx);
  if (ctx.reports_done) return;
  const auto& sc = ctx.sc;
  ctx.reports.assign(ctx.scan.solutions.size(), std::nullopt);
  for (std::size_t i = 0; i < ctx.scan.solutions.size(); ++i) {
    try {
      ctx.reports[i] = boundary_operator(sc.g, sc.P, ctx.scan.solutions[i], sc.solver.shooting.ode);
    } catch (const GeoError& e) {
      ctx.warn("solution " + std::to_string(i) + ": " + e.what());
    }
  }
  ctx.reports_done = true;
}

void run_degeneracy(Context& ctx) {
  ensure_reports(ctx);
  const auto& sc = ctx.sc;
  const int n = sc.P.dim();
  json list = json::array();
  for (std::size_t i = 0; i < ctx.scan.solutions.size(); ++i) {
    const auto& sol = ctx.scan.solutions[i];
    json e{{"solution", i}};
    if (!ctx.reports[i]) {
      e["error"] = "degenerate boundary condition at the solution";
      list.push_back(e);
      continue;
    }
    const auto& rep = *ctx.reports[i];
    e["kernel_dim"] = rep.kernel_dim;
    e["singular_values"] = vec_json(rep.singular_values);
    e["gap"] = num(rep.gap);
    e["classification"] = to_string(rep.classification);
    e["period_k"] = rep.period_k ? json(*rep.period_k) : json(nullptr);
    json inits = json::array();
    for (const auto& x : rep.kernel_init) inits.push_back(vec_json(x));
    e["kernel_init"] = inits;
    if (is_closed(sol.curve, default_reference(n))) {
      try {
        const auto per = periodic_degeneracy(sc.g, sol.curve, sc.solver.shooting.ode);
        e["periodic"] = {{"degenerate_as_periodic", per.degenerate_as_periodic},
                         {"fixed_dim", per.fixed_dim},
                         {"singular_values", vec_json(per.singular_values)}};
      } catch (const GeoError& err) {
        ctx.warn("solution " + std::to_string(i) + " periodic test: " + err.what());
      }
    }
    for (std::size_t k = 0; k < rep.kernel_basis.size(); ++k) {
      const auto& f = rep.kernel_basis[k];
      std::vector<std::string> header{"t"};
      append(header, indexed("J", n));
      append(header, indexed("DJ", n));
      Csv csv(header);
      for (int s = 0; s <= f.segments(); ++s) {
        std::vector<std::string> r{format_double(static_cast<double>(s) / f.segments())};
        append(r, f.J[static_cast<std::size_t>(s)]);
        append(r, f.DJ[static_cast<std::size_t>(s)]);
        csv.row(r);
      }
      ctx.write("kernels/kernel_" + std::to_string(i) + "_" + std::to_string(k) + ".csv", csv.str());
    }
    list.push_back(e);
  }
  ctx.write_json("degeneracy.json", list);
}

void run_index(Context& ctx) {
  ensure_reports(ctx);
  const auto& sc = ctx.sc;
  std::vector<int> meshes = sc.experiment.meshes;
  if (meshes.empty()) {
    const int N = sc.solver.shooting.segments;
    meshes = {N, 2 * N, 4 * N};
  }
  json list = json::array();
  for (std::size_t i = 0; i < ctx.scan.solutions.size(); ++i) {
    std::set<int> morse;
    for (int N : meshes) {
      json e{{"solution", i}, {"mesh", N}};
      try {
        const auto ifm = assemble(sc.g, sc.P, ctx.scan.solutions[i], N);
        const int head = std::min<int>(10, static_cast<int>(ifm.eigenvalues.size()));
        e["morse_index"] = ifm.morse_index;
        e["kernel_dim"] = ifm.kernel_dim;
        e["eigenvalues_head"] = vec_json(ifm.eigenvalues.head(head));
        e["tolerance"] = num(ifm.tolerance);
        e["gap"] = num(ifm.gap);
        morse.insert(ifm.morse_index);
        if (ctx.reports[i]) {
          const auto cmp = kernel_compare(*ctx.reports[i], ifm);
          e["kernel_compare"] = {{"match", cmp.match}, {"dims", {cmp.jacobi_dim, cmp.index_dim}}};
          if (!cmp.match)
            ctx.warn("solution " + std::to_string(i) + " mesh " + std::to_string(N) + ": kernel dimensions differ");
        }
      } catch (const GeoError& err) {
        e["error"] = err.what();
        ctx.warn("solution " + std::to_string(i) + " index form: " + err.what());
      }
      list.push_back(e);
    }
    if (morse.size() > 1) ctx.warn("solution " + std::to_string(i) + ": Morse index changes across meshes");
  }
  ctx.write_json("index.json", list);
}

Box default_bound_box(const Scenario& sc) {
  const int n = sc.P.dim(), d = sc.P.param_dim();
  Vector lo = Vector::Constant(n, std::numeric_limits<double>::infinity());
  Vector hi = -lo;
  const Box& pb = sc.P.param_box();
  const int per = d == 0 ? 1 : std::max(2, static_cast<int>(std::floor(std::pow(256.0, 1.0 / d))));
  long total = 1;
  for (int i = 0; i < d; ++i) total *= per;
  for (long k = 0; k < total; ++k) {
    Vector u(d);
    long r = k;
    for (int i = 0; i < d; ++i) {
      u[i] = pb.lo[i] + (pb.hi[i] - pb.lo[i]) * static_cast<double>(r % per) / (per - 1);
      r /= per;
    }
    const Vector e = sc.P.embed(u);
    lo = lo.cwiseMin(e.head(n)).cwiseMin(e.tail(n));
    hi = hi.cwiseMax(e.head(n)).cwiseMax(e.tail(n));
  }
  Box b{(lo.array() - 0.25).matrix(), (hi.array() + 0.25).matrix()};
  const Box& dom = sc.g.domain();
  const double margin = 1e-3;
  for (int i = 0; i < n; ++i) {
    b.lo[i] = std::max(b.lo[i], dom.lo[i] + margin);
    b.hi[i] = std::min(b.hi[i], dom.hi[i] - margin);
  }
  return b;
}

void run_admissibility(Context& ctx) {
  const auto& sc = ctx.sc;
  const auto& cfg = sc.admissibility;
  const auto rep = check_admissibility(sc.P, sc.g, cfg.samples, sc.seed);
  json j;
  j["verdict"] = !rep.applicable ? "not_applicable" : rep.certified_admissible ? "admissible" : "not_admissible";
  j["applicable"] = rep.applicable;
  j["intersects_diagonal"] = rep.intersects_diagonal;
  j["transversal"] = rep.transversal;
  j["certified_admissible"] = rep.certified_admissible;
  j["min_distance"] = num(rep.min_distance);
  j["transversality"] = num(rep.transversality);
  json hits = json::array();
  for (const auto& u : rep.intersections) hits.push_back(vec_json(u));
  j["intersections"] = hits;
  j["nondegeneracy"] = {{"nondegenerate", rep.nondegeneracy.nondegenerate},
                        {"conditioning", num(rep.nondegeneracy.conditioning)},
                        {"worst_u", vec_json(rep.nondegeneracy.worst_u)}};
  if (!rep.applicable) ctx.warn("boundary condition is degenerate; admissibility is not applicable");
  const Box K = cfg.box ? *cfg.box : default_bound_box(sc);
  json sg{{"box_lo", vec_json(K.lo)}, {"box_hi", vec_json(K.hi)}};
  try {
    const auto bound = short_geodesic_bound(sc.g, K, cfg.kappa_samples, cfg.norm);
    const auto check = validate_short_geodesic_bound(sc.g, K, bound, cfg.geodesics, sc.seed);
    sg["kappa"] = num(bound.kappa);
    sg["c"] = num(bound.c);
    sg["argmax"] = vec_json(bound.argmax);
    sg["geodesics"] = check.geodesics;
    sg["turning_slack"] = num(check.turning_slack);
    sg["speed_slack"] = num(check.speed_slack);
    if (check.turning_slack < 0.0 || check.speed_slack < 0.0) ctx.warn("short-geodesic inequality violated");
  } catch (const GeoError& e) {
    sg["error"] = e.what();
    ctx.warn(std::string("short-geodesic bound: ") + e.what());
  }
  j["short_geodesic"] = sg;
  ctx.write_json("admissibility.json", j);
}

void run_perturb(Context& ctx) {
  ensure_reports(ctx);
  const auto& sc = ctx.sc;
  std::optional<std::size_t> target;
  for (std::size_t i = 0; i < ctx.reports.size() && !target; ++i)
    if (ctx.reports[i] && ctx.reports[i]->kernel_dim > 0) target = i;
  json j;
  if (!target) {
    ctx.warn("no degenerate solution to perturb");
    j["error"] = "no degenerate solution";
    ctx.write_json("perturb.json", j);
    return;
  }
  const auto& sol = ctx.scan.solutions[*target];
  j["solution"] = *target;
  RemovalExperiment ex;
  try {
    ex = run_removal(sc.g, sc.P, sol, sc.experiment.eps, sc.solver.shooting, sc.experiment.interval,
                     sc.experiment.bump);
  } catch (const GeoError& e) {
    j["error"] = e.what();
    if (const auto* v = dynamic_cast<const ValuedError*>(&e)) j["error_value"] = num(v->value());
    ctx.warn(std::string("perturbation: ") + e.what());
    ctx.write_json("perturb.json", j);
    return;
  }
  j["baseline_kernel_dim"] = ex.baseline.kernel_dim;
  j["interval"] = {{"lo", ex.interval.lo}, {"hi", ex.interval.hi}, {"k", ex.interval.k}};
  j["radius"] = ex.tensor->radius();
  j["pairing"] = ex.pairing;
  Csv csv({"eps", "converged", "residual", "kernel_dim", "sigma_min", "sigma_max", "sigma_min_over_abs_eps", "error"});
  double rmin = std::numeric_limits<double>::infinity(), rmax = 0.0;
  for (const auto& r : ex.rows) {
    const double ratio = r.eps != 0.0 && r.converged ? r.sigma_min / std::abs(r.eps) : std::nan("");
    if (std::isfinite(ratio)) rmin = std::min(rmin, ratio), rmax = std::max(rmax, ratio);
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    csv.row({format_double(r.eps), r.converged ? "1" : "0", format_double(r.residual), std::to_string(r.kernel_dim),
             format_double(r.sigma_min), format_double(r.sigma_max), format_double(ratio), err});
    if (!r.converged) ctx.warn("eps " + format_double(r.eps) + ": " + r.error);
  }
  j["sigma_ratio_range"] = {num(rmin), num(rmax)};
  ctx.write("perturb.csv", csv.str());
  ctx.write_json("perturb.json", j);

  // The tensor on a grid covering the tube, for plotting.
  const int n = sc.g.dim();
  const auto& h = *ex.tensor;
  Vector lo = Vector::Constant(n, std::numeric_limits<double>::infinity()), hi = -lo;
  for (int s = 0; s <= 64; ++s) {
    const Point x = h.curve_point(ex.interval.lo + (ex.interval.hi - ex.interval.lo) * s / 64);
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  lo.array() -= 1.5 * h.radius();
  hi.array() += 1.5 * h.radius();
  const int per = n <= 2 ? 41 : 11;
  std::vector<std::string> header = indexed("x", n);
  for (int a = 0; a < n; ++a)
    for (int b = a; b < n; ++b) header.push_back("h" + std::to_string(a) + std::to_string(b));
  Csv grid(header);
  long total = 1;
  for (int i = 0; i < n; ++i) total *= per;
  for (long k = 0; k < total; ++k) {
    Vector x(n);
    long r = k;
    for (int i = 0; i < n; ++i) {
      x[i] = lo[i] + (hi[i] - lo[i]) * static_cast<double>(r % per) / (per - 1);
      r /= per;
    }
    const Matrix m = h.value(x);
    std::vector<std::string> row;
    append(row, x);
    for (int a = 0; a < n; ++a)
      for (int b = a; b < n; ++b) row.push_back(format_double(m(a, b)));
    grid.row(row);
  }
  ctx.write("tensor_grid.csv", grid.str());
}

json manifest(const Context& ctx, const std::string& sub, const std::string& scenario_text, int code) {
  const auto& sc = ctx.sc;
  const auto& o = sc.solver.shooting;
  json m;
  m["tool"] = "geobvp";
  m["version"] = kVersion;
  m["subcommand"] = sub;
  m["scenario"] = {{"name", sc.name}, {"fnv1a", hex(fnv1a(scenario_text))}};
  m["seed"] = sc.seed;
  m["mesh"] = o.segments;
  m["tolerances"] = {{"newton", o.tol},        {"ode_rtol", o.ode.rtol},    {"ode_atol", o.ode.atol},
                     {"kernel", kKernelTol},   {"rank", kRankDeficiencyTol}, {"gram", kGramTol},
                     {"L_max", sc.solver.L_max}};
  m["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                  std::to_string(EIGEN_MINOR_VERSION)},
                    {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                          std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
  json outputs = json::array();
  std::vector<std::string> files = ctx.files;
  std::sort(files.begin(), files.end());
  for (const auto& f : files) {
    const std::string bytes = read_file(ctx.out / f);
    outputs.push_back({{"file", f}, {"bytes", bytes.size()}, {"fnv1a", hex(fnv1a(bytes))}});
  }
  m["outputs"] = outputs;
  m["warnings"] = ctx.warnings;
  m["exit_code"] = code;
  return m;
}

}  // namespace

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

Scenario parse_scenario(const json& j) {
  check_keys(j, {"version", "name", "description", "seed", "metric", "boundary", "solver", "experiment",
                 "admissibility"},
             "scenario");
  if (!j.contains("version")) config_error("scenario needs a 'version' key");
  if (field(j, "version", 0, "scenario") != kScenarioVersion)
    config_error("unsupported scenario version (expected " + std::to_string(kScenarioVersion) + ")");
  if (!j.contains("metric") || !j.contains("boundary")) config_error("scenario needs 'metric' and 'boundary' blocks");
  const auto& mj = j.at("metric");
  check_keys(mj, {"name", "dim", "index", "params", "deriv_mode"}, "metric");
  MetricField g = [&] {
    try {
      return metric_from_json(mj);
    } catch (const json::exception& e) {
      config_error(std::string("metric block: ") + e.what());
    }
  }();
  const int n = g.dim();
  check_keys(j.at("boundary"), {"kind", "name", "p", "q", "first", "second", "param_box", "embed"}, "boundary");
  BoundaryCondition P = boundary_from_json(j.at("boundary"), n);
  const int d = P.param_dim();
  const json empty = json::object();
  Scenario sc{field(j, "name", std::string("scenario"), "scenario"),
              field<std::uint64_t>(j, "seed", 0, "scenario"),
              mj,
              std::move(g),
              std::move(P),
              parse_solver(j.value("solver", empty), n, d),
              parse_experiment(j.value("experiment", empty)),
              parse_admissibility(j.value("admissibility", empty), n)};
  return sc;
}

Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open scenario '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    config_error(std::string("scenario is not valid JSON: ") + e.what());
  }
  return parse_scenario(j);
}

const std::vector<std::string>& subcommands() {
  static const std::vector<std::string> s{"solve", "degeneracy", "index", "admissibility", "perturb", "scan", "all"};
  return s;
}

int run(const std::string& sub, const std::string& scenario_path, const std::string& out_dir, const RunOptions& options,
        std::ostream& log) {
  const auto& subs = subcommands();
  if (std::find(subs.begin(), subs.end(), sub) == subs.end()) {
    log << "error: unknown subcommand '" << sub << "'\n";
    return kExitConfig;
  }
  std::optional<Context> ctx;
  std::string text;
  try {
    text = read_file(scenario_path);
    Scenario sc = load_scenario(scenario_path);
    if (options.seed) sc.seed = *options.seed;
    if (options.mesh) {
      if (*options.mesh < 16) config_error("--mesh must be at least 16");
      sc.solver.shooting.segments = *options.mesh;
    }
    ctx.emplace(Context{std::move(sc), fs::path(out_dir), log, {}, {}, false, {}, {}, false});
  } catch (const GeoError& e) {
    log << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  int code = kExitOk;
  try {
    fs::create_directories(ctx->out);
    if (sub == "solve" || sub == "scan") {
      if (run_solve(*ctx, sub == "scan")) code = kExitNoConvergence;
    } else if (sub == "degeneracy") {
      run_degeneracy(*ctx);
    } else if (sub == "index") {
      run_index(*ctx);
    } else if (sub == "admissibility") {
      run_admissibility(*ctx);
    } else if (sub == "perturb") {
      run_perturb(*ctx);
    } else {
      const bool dead = run_solve(*ctx, true);
      if (dead) {
        code = kExitNoConvergence;
      } else {
        run_degeneracy(*ctx);
        run_index(*ctx);
        run_perturb(*ctx);
      }
      run_admissibility(*ctx);
    }
    if (code == kExitOk && ctx->solved && ctx->scan.solutions.empty()) {
      const auto& f = ctx->scan.failures;
      if (!f.empty() && f.size() == ctx->scan.seeds &&
          std::all_of(f.begin(), f.end(), [](const SeedFailure& s) { return s.code == ErrorCode::NoConvergence; }))
        code = kExitNoConvergence;
    }
  } catch (const GeoError& e) {
    log << "error: " << e.what() << "\n";
    code = e.code() == ErrorCode::ConfigError ? kExitConfig : kExitFailure;
  } catch (const std::exception& e) {
    log << "error: " << e.what() << "\n";
    code = kExitFailure;
  }
  if (code == kExitNoConvergence) log << "error: no seed converged\n";
  try {
    std::ofstream f(ctx->out / "manifest.json", std::ios::binary);
    f << manifest(*ctx, sub, text, code).dump(2) << "\n";
  } catch (const std::exception& e) {
    log << "error: cannot write manifest: " << e.what() << "\n";
    return kExitFailure;
  }
  return code;
}

GeodesicCurve load_curve_csv(const std::string& path, const Vector& periods) {
  std::ifstream in(path);
  if (!in) throw GeoError(ErrorCode::ConfigError, "cannot open curve '" + path + "'");
  std::string line;
  std::getline(in, line);
  const auto cols = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  const int n = (cols - 1) / 2;
  if (cols != 2 * n + 1 || n < 1) throw GeoError(ErrorCode::ConfigError, "curve CSV needs t, x..., v... columns");
  GeodesicCurve c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (static_cast<int>(vals.size()) != cols) throw GeoError(ErrorCode::ConfigError, "curve CSV row width mismatch");
    c.knots.push_back(Eigen::Map<const Vector>(vals.data() + 1, n));
    c.velocities.push_back(Eigen::Map<const Vector>(vals.data() + 1 + n, n));
  }
  c.periods = periods.size() == n ? periods : Vector(Vector::Zero(n));
  return c;
}

}  // namespace geobvp
