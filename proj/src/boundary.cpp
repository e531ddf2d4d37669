#include "geobvp/boundary.hpp"

#include "geobvp/errors.hpp"
#include "geobvp/geodesic.hpp"
#include "geobvp/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace geobvp {

namespace {

Box concat(const Box& a, const Box& b) {
  Box c;
  c.lo.resize(a.dim() + b.dim());
  c.hi.resize(a.dim() + b.dim());
  c.lo << a.lo, b.lo;
  c.hi << a.hi, b.hi;
  return c;
}

Box empty_box() { return Box{Vector(0), Vector(0)}; }

// Uniform grid over a finite box with `per` nodes per dimension.
std::vector<Vector> grid_points(const Box& box, int per) {
  const int d = box.dim();
  std::vector<Vector> pts;
  if (d == 0) {
    pts.emplace_back(0);
    return pts;
  }
  per = std::max(per, 1);
  long total = 1;
  for (int i = 0; i < d; ++i) total *= per;
  pts.reserve(static_cast<std::size_t>(total));
  std::vector<int> idx(static_cast<std::size_t>(d), 0);
  for (long k = 0; k < total; ++k) {
    Vector u(d);
    for (int i = 0; i < d; ++i) {
      const double s = per == 1 ? 0.5 : static_cast<double>(idx[static_cast<std::size_t>(i)]) / (per - 1);
      u[i] = box.lo[i] + s * (box.hi[i] - box.lo[i]);
    }
    pts.push_back(u);
    for (int i = 0; i < d; ++i) {
      if (++idx[static_cast<std::size_t>(i)] < per) break;
      idx[static_cast<std::size_t>(i)] = 0;
    }
  }
  return pts;
}

int per_dimension(int samples, int d, int cap) {
  if (d == 0) return 1;
  int per = std::max(samples, 2);
  while (per > 2 && std::pow(static_cast<double>(per), d) > cap) --per;
  return per;
}

void require_finite(const Box& box, const char* what) {
  for (int i = 0; i < box.dim(); ++i) {
    if (!std::isfinite(box.lo[i]) || !std::isfinite(box.hi[i]))
      throw GeoError(ErrorCode::ConfigError, std::string(what) + " needs a finite box");
  }
}

// Compass search minimizing f over the box, starting from u.
template <class F>
Vector pattern_search(const F& f, const Box& box, Vector u, double step, int levels) {
  double best = f(u);
  for (int level = 0; level < levels; ++level) {
    bool improved = true;
    while (improved) {
      improved = false;
      for (int i = 0; i < u.size(); ++i) {
        for (double sgn : {1.0, -1.0}) {
          Vector w = u;
          w[i] += sgn * step * (box.hi[i] - box.lo[i]);
          w = box.clamp(w);
          const double fw = f(w);
          if (fw < best) {
            best = fw;
            u = w;
            improved = true;
          }
        }
      }
    }
    step *= 0.5;
  }
  return u;
}

Matrix reorder_rows(const Matrix& m, int n) {
  Matrix out(m.rows(), m.cols());
  out.topRows(n) = m.bottomRows(n);
  out.bottomRows(n) = m.topRows(n);
  return out;
}

}  // namespace

Matrix ParamMap::jac(const Vector& u) const {
  if (jacobian) return jacobian(u);
  Matrix J(out_dim, in_dim);
  for (int j = 0; j < in_dim; ++j) {
    const double h = first_difference_step(u[j]);
    Vector a = u, b = u, c = u, d = u;
    a[j] += 2 * h;
    b[j] += h;
    c[j] -= h;
    d[j] -= 2 * h;
    J.col(j) = (-value(a) + 8.0 * value(b) - 8.0 * value(c) + value(d)) / (12.0 * h);
  }
  return J;
}

Matrix ParamMap::hess(const Vector& u) const {
  if (hessian) return hessian(u);
  const int d = in_dim;
  Matrix H(out_dim, d * d);
  const Vector f0 = value(u);
  for (int i = 0; i < d; ++i) {
    const double h = second_difference_step(u[i]);
    auto at = [&](double s) {
      Vector w = u;
      w[i] += s * h;
      return value(w);
    };
    H.col(i * d + i) = (-at(2) + 16.0 * at(1) - 30.0 * f0 + 16.0 * at(-1) - at(-2)) / (12.0 * h * h);
  }
  const double c[4] = {1.0, -8.0, 8.0, -1.0};
  const double s[4] = {-2.0, -1.0, 1.0, 2.0};
  for (int i = 0; i < d; ++i) {
    for (int j = i + 1; j < d; ++j) {
      const double hi = second_difference_step(u[i]);
      const double hj = second_difference_step(u[j]);
      Vector acc = Vector::Zero(out_dim);
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          Vector w = u;
          w[i] += s[a] * hi;
          w[j] += s[b] * hj;
          acc += c[a] * c[b] * value(w);
        }
      }
      acc /= 144.0 * hi * hj;
      H.col(i * d + j) = acc;
      H.col(j * d + i) = acc;
    }
  }
  return H;
}

ParamMap affine_map(const Vector& base, const Matrix& directions, const Box& box) {
  if (directions.rows() != base.size() || directions.cols() != box.dim())
    throw GeoError(ErrorCode::ConfigError, "affine map dimensions do not match");
  ParamMap m;
  m.in_dim = static_cast<int>(directions.cols());
  m.out_dim = static_cast<int>(base.size());
  m.box = box;
  m.value = [base, directions](const Vector& u) -> Vector { return base + directions * u; };
  m.jacobian = [directions](const Vector&) -> Matrix { return directions; };
  const int out = m.out_dim, d = m.in_dim;
  m.hessian = [out, d](const Vector&) -> Matrix { return Matrix::Zero(out, d * d); };
  return m;
}

ParamMap coefficient_map(const std::vector<CoeffFunction>& coords, const Box& box) {
  ParamMap m;
  m.in_dim = box.dim();
  m.out_dim = static_cast<int>(coords.size());
  m.box = box;
  m.value = [coords](const Vector& u) -> Vector {
    Vector x(static_cast<Eigen::Index>(coords.size()));
    for (std::size_t i = 0; i < coords.size(); ++i) x[static_cast<Eigen::Index>(i)] = coords[i](u);
    return x;
  };
  return m;
}

const char* to_string(BoundaryKind kind) {
  switch (kind) {
    case BoundaryKind::PointPair: return "point_pair";
    case BoundaryKind::Product: return "product";
    case BoundaryKind::Parametric: return "parametric";
    case BoundaryKind::Diagonal: return "diagonal";
  }
  return "unknown";
}

BoundaryCondition::BoundaryCondition(BoundaryKind kind, int n, ParamMap embed, std::string name)
    : kind_(kind), n_(n), embed_(std::move(embed)), name_(std::move(name)) {
  if (embed_.out_dim != 2 * n_) throw GeoError(ErrorCode::ConfigError, "embedding must land in M x M");
  if (embed_.box.dim() != embed_.in_dim) throw GeoError(ErrorCode::ConfigError, "parameter box has wrong dimension");
  if (kind_ == BoundaryKind::PointPair && embed_.in_dim != 0)
    throw GeoError(ErrorCode::ConfigError, "point pair must have d = 0");
  if (name_.empty()) name_ = to_string(kind_);
}

BoundaryCondition point_pair(const Point& p, const Point& q) {
  if (p.size() != q.size()) throw GeoError(ErrorCode::ConfigError, "point pair dimension mismatch");
  Vector e(2 * p.size());
  e << p, q;
  return BoundaryCondition(BoundaryKind::PointPair, static_cast<int>(p.size()),
                           affine_map(e, Matrix(e.size(), 0), empty_box()));
}

BoundaryCondition product(const ParamMap& first, const ParamMap& second) {
  if (first.out_dim != second.out_dim) throw GeoError(ErrorCode::ConfigError, "product factors live in different M");
  const int n = first.out_dim;
  const int d1 = first.in_dim, d2 = second.in_dim, d = d1 + d2;
  ParamMap m;
  m.in_dim = d;
  m.out_dim = 2 * n;
  m.box = concat(first.box, second.box);
  m.value = [first, second, d1, d2, n](const Vector& u) -> Vector {
    Vector e(2 * n);
    e << first.value(u.head(d1)), second.value(u.tail(d2));
    return e;
  };
  m.jacobian = [first, second, d1, d2, n](const Vector& u) -> Matrix {
    Matrix J = Matrix::Zero(2 * n, d1 + d2);
    if (d1 > 0) J.topLeftCorner(n, d1) = first.jac(u.head(d1));
    if (d2 > 0) J.bottomRightCorner(n, d2) = second.jac(u.tail(d2));
    return J;
  };
  m.hessian = [first, second, d1, d2, n](const Vector& u) -> Matrix {
    const int dd = d1 + d2;
    Matrix H = Matrix::Zero(2 * n, dd * dd);
    if (d1 > 0) {
      const Matrix h1 = first.hess(u.head(d1));
      for (int i = 0; i < d1; ++i)
        for (int j = 0; j < d1; ++j) H.col(i * dd + j).head(n) = h1.col(i * d1 + j);
    }
    if (d2 > 0) {
      const Matrix h2 = second.hess(u.tail(d2));
      for (int i = 0; i < d2; ++i)
        for (int j = 0; j < d2; ++j) H.col((d1 + i) * dd + d1 + j).tail(n) = h2.col(i * d2 + j);
    }
    return H;
  };
  return BoundaryCondition(d == 0 ? BoundaryKind::PointPair : BoundaryKind::Product, n, std::move(m));
}

BoundaryCondition parametric(const std::vector<CoeffFunction>& coords, const Box& box) {
  if (coords.size() % 2 != 0) throw GeoError(ErrorCode::ConfigError, "parametric embedding needs 2n coordinates");
  return BoundaryCondition(BoundaryKind::Parametric, static_cast<int>(coords.size() / 2), coefficient_map(coords, box));
}

BoundaryCondition diagonal(const Box& box) {
  const int n = box.dim();
  Matrix dirs(2 * n, n);
  dirs << Matrix::Identity(n, n), Matrix::Identity(n, n);
  return BoundaryCondition(BoundaryKind::Diagonal, n, affine_map(Vector::Zero(2 * n), dirs, box));
}

BoundaryCondition transpose(const BoundaryCondition& P) {
  const ParamMap& src = P.map();
  const int n = P.dim();
  ParamMap m;
  m.in_dim = src.in_dim;
  m.out_dim = src.out_dim;
  m.box = src.box;
  m.value = [src, n](const Vector& u) -> Vector {
    const Vector e = src.value(u);
    Vector t(2 * n);
    t << e.tail(n), e.head(n);
    return t;
  };
  m.jacobian = [src, n](const Vector& u) -> Matrix { return reorder_rows(src.jac(u), n); };
  m.hessian = [src, n](const Vector& u) -> Matrix { return reorder_rows(src.hess(u), n); };
  return BoundaryCondition(P.kind(), n, std::move(m), P.name() + "^t");
}

namespace {

Box box_from_json(const nlohmann::json& j) {
  Box b;
  b.lo.resize(static_cast<Eigen::Index>(j.size()));
  b.hi.resize(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    const auto& r = j[i];
    if (!r.is_array() || r.size() != 2) throw GeoError(ErrorCode::ConfigError, "box entries must be [lo, hi]");
    b.lo[static_cast<Eigen::Index>(i)] = r[0].get<double>();
    b.hi[static_cast<Eigen::Index>(i)] = r[1].get<double>();
    if (!(b.lo[static_cast<Eigen::Index>(i)] <= b.hi[static_cast<Eigen::Index>(i)]))
      throw GeoError(ErrorCode::ConfigError, "box entry has lo > hi");
  }
  return b;
}

Vector vector_from_json(const nlohmann::json& j, int n, const char* what) {
  const auto v = j.get<std::vector<double>>();
  if (static_cast<int>(v.size()) != n) throw GeoError(ErrorCode::ConfigError, std::string(what) + " has wrong length");
  return Eigen::Map<const Vector>(v.data(), n);
}

// {"point": [...]} | {"base": [...], "directions": [[...], ...], "param_box": ...}
// | {"coords": [tables...], "param_box": ...}
ParamMap submanifold_from_json(const nlohmann::json& j, int n) {
  if (j.contains("point")) return affine_map(vector_from_json(j.at("point"), n, "point"), Matrix(n, 0), empty_box());
  const Box box = box_from_json(j.at("param_box"));
  if (j.contains("base")) {
    const Vector base = vector_from_json(j.at("base"), n, "base");
    const auto& dj = j.at("directions");
    Matrix dirs(n, static_cast<Eigen::Index>(dj.size()));
    for (std::size_t k = 0; k < dj.size(); ++k) dirs.col(static_cast<Eigen::Index>(k)) = vector_from_json(dj[k], n, "direction");
    return affine_map(base, dirs, box);
  }
  const auto& cj = j.at("coords");
  if (static_cast<int>(cj.size()) != n) throw GeoError(ErrorCode::ConfigError, "submanifold needs n coordinate tables");
  std::vector<CoeffFunction> coords;
  for (const auto& c : cj) coords.push_back(CoeffFunction::from_json(c, box.dim()));
  return coefficient_map(coords, box);
}

}  // namespace

BoundaryCondition boundary_from_json(const nlohmann::json& j, int n) {
  try {
    const std::string kind = j.at("kind").get<std::string>();
    const std::string name = j.value("name", kind);
    if (kind == "point_pair") {
      auto P = point_pair(vector_from_json(j.at("p"), n, "p"), vector_from_json(j.at("q"), n, "q"));
      return BoundaryCondition(P.kind(), n, P.map(), name);
    }
    if (kind == "diagonal") {
      const Box box = box_from_json(j.at("param_box"));
      if (box.dim() != n) throw GeoError(ErrorCode::ConfigError, "diagonal box must have dimension n");
      return BoundaryCondition(BoundaryKind::Diagonal, n, diagonal(box).map(), name);
    }
    if (kind == "product") {
      auto P = product(submanifold_from_json(j.at("first"), n), submanifold_from_json(j.at("second"), n));
      return BoundaryCondition(P.kind(), n, P.map(), name);
    }
    if (kind == "parametric") {
      const Box box = box_from_json(j.at("param_box"));
      const auto& ej = j.at("embed");
      if (static_cast<int>(ej.size()) != 2 * n) throw GeoError(ErrorCode::ConfigError, "embed needs 2n coordinate tables");
      std::vector<CoeffFunction> coords;
      for (const auto& c : ej) coords.push_back(CoeffFunction::from_json(c, box.dim()));
      return BoundaryCondition(BoundaryKind::Parametric, n, coefficient_map(coords, box), name);
    }
    throw GeoError(ErrorCode::ConfigError, "unknown boundary kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw GeoError(ErrorCode::ConfigError, std::string("boundary block: ") + e.what());
  }
}

EndpointFrame endpoint_frame(const BoundaryCondition& P, const MetricField& g, const Vector& u) {
  const int n = P.dim();
  const int d = P.param_dim();
  if (g.dim() != n) throw GeoError(ErrorCode::ConfigError, "boundary condition and metric dimensions differ");
  EndpointFrame f;
  f.u = u;
  const Vector e = P.embed(u);
  f.p = e.head(n);
  f.q = e.tail(n);
  if (!g.in_domain(f.p) || !g.in_domain(f.q))
    throw ValuedError(ErrorCode::DomainExit, "boundary point outside chart domain", 0.0);
  f.tangent = P.jacobian(u);
  if (d > 0) {
    Eigen::JacobiSVD<Matrix> svd(f.tangent);
    const Vector s = svd.singularValues();
    if (s[0] == 0.0 || s[d - 1] < 1e-10 * s[0])
      throw ValuedError(ErrorCode::ImmersionFailure, "embedding Jacobian loses rank", s[d - 1]);
  }
  f.gbar = product_metric(g, f.p, f.q);
  f.gram = f.tangent.transpose() * f.gbar * f.tangent;
  if (d == 0) {
    f.normal = Matrix::Identity(2 * n, 2 * n);
    return f;
  }
  const Matrix A = f.tangent.transpose() * f.gbar;
  Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeFullV);
  const Vector s = svd.singularValues();
  int rank = 0;
  for (int i = 0; i < s.size(); ++i)
    if (s[i] > 1e-12 * s[0]) ++rank;
  f.normal = svd.matrixV().rightCols(2 * n - rank);
  return f;
}

double gram_conditioning(const EndpointFrame& frame) {
  const int d = static_cast<int>(frame.tangent.cols());
  if (d == 0) return 1.0;
  const double t = Eigen::JacobiSVD<Matrix>(frame.tangent).singularValues()[0];
  const double gb = frame.gbar.cwiseAbs().rowwise().sum().maxCoeff();
  const double smin = Eigen::JacobiSVD<Matrix>(frame.gram).singularValues()[d - 1];
  return smin / (t * t * gb);
}

NondegeneracyReport is_nondegenerate(const BoundaryCondition& P, const MetricField& g, int samples) {
  NondegeneracyReport rep;
  const int d = P.param_dim();
  rep.worst_u = P.param_box().center();
  if (d == 0) return rep;
  require_finite(P.param_box(), "nondegeneracy sampling");
  auto cond = [&](const Vector& u) {
    try {
      return gram_conditioning(endpoint_frame(P, g, u));
    } catch (const GeoError&) {
      return 0.0;
    }
  };
  const auto pts = grid_points(P.param_box(), per_dimension(samples, d, 4096));
  std::vector<std::pair<double, std::size_t>> scored;
  scored.reserve(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) scored.emplace_back(cond(pts[i]), i);
  std::sort(scored.begin(), scored.end());
  rep.conditioning = scored.front().first;
  rep.worst_u = pts[scored.front().second];
  for (std::size_t k = 0; k < std::min<std::size_t>(3, scored.size()) && rep.conditioning > 0.0; ++k) {
    const Vector u = pattern_search(cond, P.param_box(), pts[scored[k].second], 0.5 / samples, 12);
    const double c = cond(u);
    if (c < rep.conditioning) {
      rep.conditioning = c;
      rep.worst_u = u;
    }
  }
  rep.nondegenerate = rep.conditioning >= kGramTol;
  return rep;
}

Matrix second_fundamental_form(const BoundaryCondition& P, const MetricField& g, const Vector& u, const Vector& eta) {
  const int n = P.dim();
  const int d = P.param_dim();
  const EndpointFrame f = endpoint_frame(P, g, u);
  const Vector geta = f.gbar * eta;
  const double scale = f.gbar.cwiseAbs().rowwise().sum().maxCoeff() * eta.norm();
  for (int j = 0; j < d; ++j) {
    const double ip = f.tangent.col(j).dot(geta);
    if (std::abs(ip) > 1e-8 * (1.0 + f.tangent.col(j).norm() * scale))
      throw ValuedError(ErrorCode::NotNormal, "vector is not ḡ-orthogonal to T P", ip);
  }
  const ChristoffelEval gp = christoffel(g, f.p);
  const ChristoffelEval gq = christoffel(g, f.q);
  const Matrix H = P.hessian(u);
  Matrix S(d, d);
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      Vector acc = H.col(i * d + j);
      acc.head(n) += gp.contract(f.tangent.col(i).head(n), f.tangent.col(j).head(n));
      acc.tail(n) += gq.contract(f.tangent.col(i).tail(n), f.tangent.col(j).tail(n));
      S(i, j) = acc.dot(geta);
    }
  }
  return S;
}

namespace {

double pair_distance(const BoundaryCondition& P, const MetricField& g, const MetricField& ref, const Vector& u) {
  const Vector e = P.embed(u);
  const int n = P.dim();
  const Vector diff = g.chart_difference(e.tail(n), e.head(n));
  return std::sqrt(std::max(0.0, diff.dot(ref.value(e.head(n)) * diff)));
}

// Gauss-Newton on L^T (q(u) - p(u)), with L the Cholesky factor of g_R(p).
Vector diagonal_newton(const BoundaryCondition& P, const MetricField& g, const MetricField& ref, Vector u) {
  const int n = P.dim();
  const Box& box = P.param_box();
  double f = pair_distance(P, g, ref, u);
  for (int it = 0; it < 60 && f > 1e-15; ++it) {
    const Vector e = P.embed(u);
    const Matrix L = ref.value(e.head(n)).llt().matrixL();
    const Vector r = L.transpose() * g.chart_difference(e.tail(n), e.head(n));
    const Matrix Je = P.jacobian(u);
    const Matrix J = L.transpose() * (Je.bottomRows(n) - Je.topRows(n));
    const Vector step = J.jacobiSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(-r);
    double lambda = 1.0;
    bool moved = false;
    for (int k = 0; k < 30; ++k, lambda *= 0.5) {
      const Vector w = box.clamp(u + lambda * step);
      const double fw = pair_distance(P, g, ref, w);
      if (fw < f) {
        u = w;
        f = fw;
        moved = true;
        break;
      }
    }
    if (!moved || lambda * step.norm() < 1e-15 * (1.0 + u.norm())) break;
  }
  return u;
}

}  // namespace

AdmissibilityReport check_admissibility(const BoundaryCondition& P, const MetricField& g, int samples,
                                        const MetricField& reference, std::uint64_t seed) {
  AdmissibilityReport rep;
  rep.nondegeneracy = is_nondegenerate(P, g, samples);
  if (!rep.nondegeneracy.nondegenerate) {
    rep.applicable = false;
    rep.transversal = false;
    rep.certified_admissible = false;
    return rep;
  }
  const int n = P.dim();
  const int d = P.param_dim();
  constexpr double kHitTol = 1e-7;
  std::vector<Vector> hits;
  if (d == 0) {
    rep.min_distance = pair_distance(P, g, reference, Vector(0));
    if (rep.min_distance < kHitTol) hits.emplace_back(0);
  } else {
    const auto pts = grid_points(P.param_box(), per_dimension(samples, d, 4096));
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t i = 0; i < pts.size(); ++i) scored.emplace_back(pair_distance(P, g, reference, pts[i]), i);
    std::sort(scored.begin(), scored.end());
    std::vector<Vector> starts;
    for (std::size_t k = 0; k < std::min<std::size_t>(8, scored.size()); ++k) starts.push_back(pts[scored[k].second]);
    Rng rng(seed);
    while (starts.size() < 16) {
      Vector u(d);
      for (int i = 0; i < d; ++i) u[i] = uniform(rng, P.param_box().lo[i], P.param_box().hi[i]);
      starts.push_back(u);
    }
    rep.min_distance = std::numeric_limits<double>::infinity();
    for (const auto& s : starts) {
      const Vector u = diagonal_newton(P, g, reference, s);
      const double dist = pair_distance(P, g, reference, u);
      rep.min_distance = std::min(rep.min_distance, dist);
      if (dist >= kHitTol) continue;
      const bool seen = std::any_of(hits.begin(), hits.end(), [&](const Vector& h) { return (h - u).norm() < 1e-5; });
      if (!seen) hits.push_back(u);
    }
  }
  rep.intersects_diagonal = !hits.empty();
  rep.intersections = hits;
  for (const auto& u : hits) {
    Matrix M(2 * n, d + n);
    M.leftCols(d) = P.jacobian(u);
    M.rightCols(n) << Matrix::Identity(n, n), Matrix::Identity(n, n);
    double ratio = 0.0;
    if (d + n >= 2 * n) {
      const Vector s = M.jacobiSvd().singularValues();
      ratio = s[2 * n - 1] / s[0];
    }
    rep.transversality = std::min(rep.transversality, ratio);
  }
  rep.transversal = !rep.intersects_diagonal || rep.transversality > 1e-8;
  rep.certified_admissible = !rep.intersects_diagonal || rep.transversal;
  return rep;
}

AdmissibilityReport check_admissibility(const BoundaryCondition& P, const MetricField& g, int samples,
                                        std::uint64_t seed) {
  return check_admissibility(P, g, samples, default_reference(P.dim()), seed);
}

namespace {

double quadratic_norm(const ChristoffelEval& G, const Vector& a) { return G.contract(a, a).norm(); }

// sup over Euclidean unit a of |Γ(a, a)|.
double operator_norm(const ChristoffelEval& G) {
  const int n = G.dim();
  if (n == 1) return std::abs(G.symbols[0](0, 0));
  if (n == 2) {
    auto f = [&](double th) {
      Vector a(2);
      a << std::cos(th), std::sin(th);
      return quadratic_norm(G, a);
    };
    constexpr int kScan = 720;
    double best = -1.0, arg = 0.0;
    for (int i = 0; i < kScan; ++i) {
      const double th = std::numbers::pi * i / kScan;
      const double v = f(th);
      if (v > best) best = v, arg = th;
    }
    // golden-section refinement of the bracketing cell
    double lo = arg - std::numbers::pi / kScan, hi = arg + std::numbers::pi / kScan;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 60; ++it) {
      const double a = hi - r * (hi - lo), b = lo + r * (hi - lo);
      if (f(a) > f(b)) hi = b;
      else lo = a;
    }
    return std::max(best, f(0.5 * (lo + hi)));
  }
  // general n: deterministic multi-start projected gradient ascent
  Rng rng(12345);
  double best = 0.0;
  for (int s = 0; s < 64 + n * n; ++s) {
    Vector a(n);
    if (s < n) a = Vector::Unit(n, s);
    else for (int i = 0; i < n; ++i) a[i] = normal01(rng);
    a.normalize();
    double val = quadratic_norm(G, a);
    double step = 0.5;
    for (int it = 0; it < 200 && step > 1e-12; ++it) {
      const Vector v = G.contract(a, a);
      const Vector grad = 2.0 * G.contract_first(a).transpose() * v;
      Vector b = a + step * (grad - grad.dot(a) * a);
      b.normalize();
      const double vb = quadratic_norm(G, b);
      if (vb > val) a = b, val = vb, step *= 1.5;
      else step *= 0.5;
    }
    best = std::max(best, val);
  }
  return best;
}

double max_entry_norm(const ChristoffelEval& G) {
  double m = 0.0;
  for (const auto& s : G.symbols) m = std::max(m, s.cwiseAbs().maxCoeff());
  return m;
}

}  // namespace

ShortGeodesicBound short_geodesic_bound(const MetricField& g, const Box& K, int samples, ChristoffelNorm norm) {
  require_finite(K, "short geodesic bound");
  auto value = [&](const Vector& x) {
    const ChristoffelEval G = christoffel(g, x);
    return norm == ChristoffelNorm::Operator ? operator_norm(G) : max_entry_norm(G);
  };
  const auto pts = grid_points(K, per_dimension(samples, g.dim(), 4096));
  ShortGeodesicBound out;
  double best = -1.0;
  for (const auto& x : pts) {
    const double v = value(x);
    if (v > best) best = v, out.argmax = x;
  }
  const Vector refined = pattern_search([&](const Vector& x) { return -value(x); }, K, out.argmax, 0.5 / samples, 10);
  const double vr = value(refined);
  if (vr > best) best = vr, out.argmax = refined;
  out.kappa = best + 1.0;
  out.c = 2.0 * out.kappa;
  return out;
}

ShortGeodesicCheck validate_short_geodesic_bound(const MetricField& g, const Box& K, const ShortGeodesicBound& bound,
                                                 int count, std::uint64_t seed) {
  require_finite(K, "short geodesic validation");
  const int n = g.dim();
  Rng rng(seed);
  double width = std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) width = std::min(width, K.hi[i] - K.lo[i]);
  ShortGeodesicCheck out;
  out.turning_slack = std::numeric_limits<double>::infinity();
  out.speed_slack = std::numeric_limits<double>::infinity();
  constexpr int kSegments = 64;
  const auto w = composite_weights(kSegments);
  for (int attempt = 0; attempt < 50 * count && out.geodesics < count; ++attempt) {
    Point x(n);
    Vector v(n);
    for (int i = 0; i < n; ++i) {
      x[i] = uniform(rng, K.lo[i], K.hi[i]);
      v[i] = normal01(rng);
    }
    v *= uniform(rng, 0.05, 0.3) * width / v.norm();
    GeodesicCurve c;
    try {
      c = integrate(g, x, v, kSegments);
    } catch (const GeoError&) {
      continue;
    }
    if (!std::all_of(c.knots.begin(), c.knots.end(), [&](const Point& k) { return K.contains(k); })) continue;
    double L = 0.0;
    for (int i = 0; i <= kSegments; ++i) L += w[static_cast<std::size_t>(i)] * c.velocities[static_cast<std::size_t>(i)].norm();
    const Vector& v0 = c.velocities.front();
    const Vector& v1 = c.velocities.back();
    const double turning = (v1 / v1.norm() - v0 / v0.norm()).norm();
    const double logspeed = std::abs(std::log(v1.norm() / v0.norm()));
    out.turning_slack = std::min(out.turning_slack, bound.c * L - turning);
    out.speed_slack = std::min(out.speed_slack, bound.kappa * L - logspeed);
    ++out.geodesics;
  }
  return out;
}

}  // namespace geobvp
