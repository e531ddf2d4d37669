#include "geobvp/metric.hpp"

#include "geobvp/coeff_function.hpp"
#include "geobvp/errors.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace geobvp {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

class ConstantTensor final : public TensorField {
 public:
  explicit ConstantTensor(Matrix m) : m_(std::move(m)) {}
  int dim() const override { return static_cast<int>(m_.rows()); }
  Matrix value(const Vector&) const override { return m_; }
  std::vector<Matrix> partials(const Vector&) const override {
    return std::vector<Matrix>(static_cast<std::size_t>(dim()), Matrix::Zero(dim(), dim()));
  }
  std::vector<Matrix> second_partials(const Vector&) const override {
    return std::vector<Matrix>(static_cast<std::size_t>(dim() * dim()), Matrix::Zero(dim(), dim()));
  }
  bool has_analytic_derivatives() const override { return true; }

 private:
  Matrix m_;
};

class SphereSpherical final : public TensorField {
 public:
  explicit SphereSpherical(double radius) : r2_(radius * radius) {}
  int dim() const override { return 2; }
  Matrix value(const Vector& x) const override {
    const double s = std::sin(x[0]);
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = r2_;
    m(1, 1) = r2_ * s * s;
    return m;
  }
  std::vector<Matrix> partials(const Vector& x) const override {
    std::vector<Matrix> d(2, Matrix::Zero(2, 2));
    d[0](1, 1) = r2_ * std::sin(2.0 * x[0]);
    return d;
  }
  std::vector<Matrix> second_partials(const Vector& x) const override {
    std::vector<Matrix> d(4, Matrix::Zero(2, 2));
    d[0](1, 1) = 2.0 * r2_ * std::cos(2.0 * x[0]);
    return d;
  }
  bool has_analytic_derivatives() const override { return true; }

 private:
  double r2_;
};

// Conformal factor c(x) = 4R^2 / (1 + |x|^2)^2 times the identity.
class SphereStereographic final : public TensorField {
 public:
  explicit SphereStereographic(double radius) : r2_(radius * radius) {}
  int dim() const override { return 2; }
  Matrix value(const Vector& x) const override {
    const double q = 1.0 + x.squaredNorm();
    return Matrix::Identity(2, 2) * (4.0 * r2_ / (q * q));
  }
  std::vector<Matrix> partials(const Vector& x) const override {
    const double q = 1.0 + x.squaredNorm();
    std::vector<Matrix> d;
    for (int i = 0; i < 2; ++i) d.push_back(Matrix::Identity(2, 2) * (-16.0 * r2_ * x[i] / (q * q * q)));
    return d;
  }
  std::vector<Matrix> second_partials(const Vector& x) const override {
    const double q = 1.0 + x.squaredNorm();
    std::vector<Matrix> d;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double c = (i == j ? -16.0 * r2_ / (q * q * q) : 0.0) +
                         96.0 * r2_ * x[i] * x[j] / (q * q * q * q);
        d.push_back(Matrix::Identity(2, 2) * c);
      }
    }
    return d;
  }
  bool has_analytic_derivatives() const override { return true; }

 private:
  double r2_;
};

class WarpedTensor final : public TensorField {
 public:
  explicit WarpedTensor(std::vector<double> coefs) : a_(std::move(coefs)) {}
  int dim() const override { return 2; }
  Matrix value(const Vector& x) const override {
    const double f = eval(x[0], 0);
    Matrix m = Matrix::Identity(2, 2);
    m(1, 1) = f * f;
    return m;
  }
  std::vector<Matrix> partials(const Vector& x) const override {
    std::vector<Matrix> d(2, Matrix::Zero(2, 2));
    d[0](1, 1) = 2.0 * eval(x[0], 0) * eval(x[0], 1);
    return d;
  }
  std::vector<Matrix> second_partials(const Vector& x) const override {
    std::vector<Matrix> d(4, Matrix::Zero(2, 2));
    const double f = eval(x[0], 0);
    const double f1 = eval(x[0], 1);
    const double f2 = eval(x[0], 2);
    d[0](1, 1) = 2.0 * (f1 * f1 + f * f2);
    return d;
  }
  bool has_analytic_derivatives() const override { return true; }

  /// order-th derivative of the polynomial at x.
  double eval(double x, int order) const {
    double sum = 0.0;
    for (std::size_t k = static_cast<std::size_t>(order); k < a_.size(); ++k) {
      double c = a_[k];
      for (int o = 0; o < order; ++o) c *= static_cast<double>(k - static_cast<std::size_t>(o));
      sum += c * std::pow(x, static_cast<double>(k) - order);
    }
    return sum;
  }

 private:
  std::vector<double> a_;
};

class CoeffTensor final : public TensorField {
 public:
  CoeffTensor(int n, std::vector<CoeffFunction> upper) : n_(n), upper_(std::move(upper)) {}
  int dim() const override { return n_; }
  Matrix value(const Vector& x) const override {
    Matrix m(n_, n_);
    std::size_t k = 0;
    for (int i = 0; i < n_; ++i) {
      for (int j = i; j < n_; ++j) {
        m(i, j) = m(j, i) = upper_[k++](x);
      }
    }
    return m;
  }

 private:
  int n_;
  std::vector<CoeffFunction> upper_;
};

class SumTensor final : public TensorField {
 public:
  SumTensor(std::shared_ptr<const TensorField> a, std::shared_ptr<const TensorField> b, double sa, double sb)
      : a_(std::move(a)), b_(std::move(b)), sa_(sa), sb_(sb) {}
  int dim() const override { return a_->dim(); }
  Matrix value(const Vector& x) const override {
    Matrix m = sa_ * a_->value(x);
    if (b_) m += sb_ * b_->value(x);
    return m;
  }
  std::vector<Matrix> partials(const Vector& x) const override {
    auto d = a_->partials(x);
    for (auto& m : d) m *= sa_;
    if (b_ && sb_ != 0.0) {
      const auto e = b_->partials(x);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += sb_ * e[i];
    }
    return d;
  }
  std::vector<Matrix> second_partials(const Vector& x) const override {
    auto d = a_->second_partials(x);
    for (auto& m : d) m *= sa_;
    if (b_ && sb_ != 0.0) {
      const auto e = b_->second_partials(x);
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += sb_ * e[i];
    }
    return d;
  }
  bool has_analytic_derivatives() const override {
    return a_->has_analytic_derivatives() && (!b_ || b_->has_analytic_derivatives());
  }

 private:
  std::shared_ptr<const TensorField> a_;
  std::shared_ptr<const TensorField> b_;
  double sa_;
  double sb_;
};

Box unbounded_box(int n) {
  const double inf = std::numeric_limits<double>::infinity();
  return Box{Vector::Constant(n, -inf), Vector::Constant(n, inf)};
}

}  // namespace

double first_difference_step(double xi) { return std::cbrt(kEps) * std::max(1.0, std::abs(xi)); }

double second_difference_step(double xi) { return std::pow(kEps, 1.0 / 6.0) * std::max(1.0, std::abs(xi)); }

std::vector<Matrix> fd_partials(const TensorField& f, const Vector& x) {
  const int n = f.dim();
  std::vector<Matrix> d;
  d.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double h = first_difference_step(x[i]);
    Vector xp = x;
    auto at = [&](double s) {
      xp[i] = x[i] + s * h;
      return f.value(xp);
    };
    d.push_back((at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * h));
  }
  return d;
}

std::vector<Matrix> fd_second_partials(const TensorField& f, const Vector& x) {
  const int n = f.dim();
  std::vector<Matrix> d(static_cast<std::size_t>(n * n));
  const Matrix f0 = f.value(x);
  static constexpr double kW[4] = {1.0, -8.0, 8.0, -1.0};
  static constexpr double kS[4] = {-2.0, -1.0, 1.0, 2.0};
  for (int i = 0; i < n; ++i) {
    const double hi = second_difference_step(x[i]);
    Vector xp = x;
    Matrix acc = -30.0 * f0;
    for (int s = 0; s < 4; ++s) {
      xp[i] = x[i] + kS[s] * hi;
      const double w = (std::abs(kS[s]) == 1.0) ? 16.0 : -1.0;
      acc += w * f.value(xp);
    }
    d[static_cast<std::size_t>(i * n + i)] = acc / (12.0 * hi * hi);
    for (int j = i + 1; j < n; ++j) {
      const double hj = second_difference_step(x[j]);
      Matrix mixed = Matrix::Zero(n, n);
      for (int a = 0; a < 4; ++a) {
        for (int b = 0; b < 4; ++b) {
          Vector y = x;
          y[i] += kS[a] * hi;
          y[j] += kS[b] * hj;
          mixed += kW[a] * kW[b] * f.value(y);
        }
      }
      mixed /= (144.0 * hi * hj);
      d[static_cast<std::size_t>(i * n + j)] = mixed;
      d[static_cast<std::size_t>(j * n + i)] = mixed;
    }
  }
  return d;
}

std::vector<Matrix> TensorField::partials(const Vector& x) const { return fd_partials(*this, x); }

std::vector<Matrix> TensorField::second_partials(const Vector& x) const { return fd_second_partials(*this, x); }

MetricField::MetricField(std::shared_ptr<const TensorField> field, int index, std::string name, Box domain,
                         Vector periods, DerivMode mode)
    : field_(std::move(field)),
      index_(index),
      name_(std::move(name)),
      domain_(std::move(domain)),
      periods_(std::move(periods)),
      mode_(mode) {
  if (!field_) throw GeoError(ErrorCode::InvalidMetric, "null tensor field");
  if (index_ < 0 || index_ > field_->dim()) throw GeoError(ErrorCode::InvalidMetric, "index outside [0, n]");
  if (periods_.size() == 0) periods_ = Vector::Zero(field_->dim());
  if (domain_.dim() != field_->dim() || periods_.size() != field_->dim())
    throw GeoError(ErrorCode::InvalidMetric, "domain/period dimension mismatch");
}

std::vector<Matrix> MetricField::partials(const Point& x) const {
  if (mode_ == DerivMode::CentralDifference) return fd_partials(*field_, x);
  return field_->partials(x);
}

std::vector<Matrix> MetricField::second_partials(const Point& x) const {
  if (mode_ == DerivMode::CentralDifference) return fd_second_partials(*field_, x);
  return field_->second_partials(x);
}

Vector MetricField::chart_difference(const Point& a, const Point& b) const {
  Vector d = a - b;
  for (int i = 0; i < d.size(); ++i) {
    const double p = periods_[i];
    if (p > 0.0) {
      d[i] -= p * std::round(d[i] / p);
      if (d[i] <= -0.5 * p) d[i] += p;
    }
  }
  return d;
}

void MetricField::check_nondegenerate(const Point& x) const {
  const Matrix m = value(x);
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const Vector ev = es.eigenvalues();
  const double big = ev.cwiseAbs().maxCoeff();
  const double small = ev.cwiseAbs().minCoeff();
  if (!(big > 0.0) || small < kNondegeneracyTol * big)
    throw ValuedError(ErrorCode::SingularMetric, "metric '" + name_ + "' degenerate at point", small);
  int neg = 0;
  for (int i = 0; i < ev.size(); ++i) neg += ev[i] < 0.0 ? 1 : 0;
  if (neg != index_)
    throw GeoError(ErrorCode::InvalidMetric, "metric '" + name_ + "' has index " + std::to_string(neg) +
                                                 ", declared " + std::to_string(index_));
}

MetricField MetricField::with_deriv_mode(DerivMode mode) const {
  return MetricField(field_, index_, name_, domain_, periods_, mode);
}

MetricField MetricField::scaled(double factor) const {
  return MetricField(std::make_shared<SumTensor>(field_, nullptr, factor, 0.0), index_, name_, domain_, periods_,
                     mode_);
}

MetricField MetricField::perturbed(std::shared_ptr<const TensorField> h, double eps) const {
  if (!h || h->dim() != dim()) throw GeoError(ErrorCode::InvalidMetric, "perturbation dimension mismatch");
  return MetricField(std::make_shared<SumTensor>(field_, std::move(h), 1.0, eps), index_, name_ + "+eps*h", domain_,
                     periods_, mode_);
}

Vector ChristoffelEval::contract(const Vector& a, const Vector& b) const {
  Vector out(dim());
  for (int k = 0; k < dim(); ++k) out[k] = a.dot(symbols[static_cast<std::size_t>(k)] * b);
  return out;
}

Matrix ChristoffelEval::contract_first(const Vector& a) const {
  Matrix m(dim(), dim());
  for (int k = 0; k < dim(); ++k) m.row(k) = (symbols[static_cast<std::size_t>(k)].transpose() * a).transpose();
  return m;
}

namespace {

// Gamma_{l,ij} = 1/2 (d_i g_jl + d_j g_il - d_l g_ij), returned as first[l](i, j).
std::vector<Matrix> first_kind(const std::vector<Matrix>& dg) {
  const int n = static_cast<int>(dg.size());
  std::vector<Matrix> first(static_cast<std::size_t>(n), Matrix(n, n));
  for (int l = 0; l < n; ++l) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        first[static_cast<std::size_t>(l)](i, j) =
            0.5 * (dg[static_cast<std::size_t>(i)](j, l) + dg[static_cast<std::size_t>(j)](i, l) -
                   dg[static_cast<std::size_t>(l)](i, j));
      }
    }
  }
  return first;
}

std::vector<Matrix> raise(const Matrix& ginv, const std::vector<Matrix>& first) {
  const int n = static_cast<int>(first.size());
  std::vector<Matrix> out(static_cast<std::size_t>(n), Matrix::Zero(n, n));
  for (int k = 0; k < n; ++k) {
    for (int l = 0; l < n; ++l) out[static_cast<std::size_t>(k)] += ginv(k, l) * first[static_cast<std::size_t>(l)];
  }
  return out;
}

}  // namespace

ChristoffelEval christoffel(const MetricField& g, const Point& x) {
  g.check_nondegenerate(x);
  const Matrix ginv = g.value(x).inverse();
  return ChristoffelEval{x, raise(ginv, first_kind(g.partials(x)))};
}

std::vector<std::vector<Matrix>> christoffel_partials(const MetricField& g, const Point& x) {
  g.check_nondegenerate(x);
  const int n = g.dim();
  const Matrix ginv = g.value(x).inverse();
  const auto dg = g.partials(x);
  const auto d2g = g.second_partials(x);
  const auto first = first_kind(dg);
  std::vector<std::vector<Matrix>> out(static_cast<std::size_t>(n));
  for (int m = 0; m < n; ++m) {
    const Matrix dginv = -ginv * dg[static_cast<std::size_t>(m)] * ginv;
    std::vector<Matrix> dfirst;
    {
      std::vector<Matrix> dgm(static_cast<std::size_t>(n));
      for (int i = 0; i < n; ++i) dgm[static_cast<std::size_t>(i)] = d2g[static_cast<std::size_t>(m * n + i)];
      dfirst = first_kind(dgm);
    }
    auto a = raise(dginv, first);
    const auto b = raise(ginv, dfirst);
    for (int k = 0; k < n; ++k) a[static_cast<std::size_t>(k)] += b[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(m)] = std::move(a);
  }
  return out;
}

CurvatureEval curvature(const MetricField& g, const Point& x) {
  const int n = g.dim();
  const auto gam = christoffel(g, x);
  const auto dgam = christoffel_partials(g, x);
  CurvatureEval r;
  r.point = x;
  r.n = n;
  r.metric = g.value(x);
  r.data.assign(static_cast<std::size_t>(n * n * n * n), 0.0);
  auto G = [&](int k, int i, int j) { return gam.symbols[static_cast<std::size_t>(k)](i, j); };
  auto dG = [&](int m, int k, int i, int j) {
    return dgam[static_cast<std::size_t>(m)][static_cast<std::size_t>(k)](i, j);
  };
  for (int l = 0; l < n; ++l) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
          double v = dG(i, l, j, k) - dG(j, l, i, k);
          for (int m = 0; m < n; ++m) v += G(l, i, m) * G(m, j, k) - G(l, j, m) * G(m, i, k);
          r.data[static_cast<std::size_t>(((l * n + i) * n + j) * n + k)] = v;
        }
      }
    }
  }
  return r;
}

Vector CurvatureEval::apply(const Vector& X, const Vector& Y, const Vector& Z) const {
  Vector out = Vector::Zero(n);
  for (int l = 0; l < n; ++l) {
    double v = 0.0;
    for (int i = 0; i < n; ++i) {
      if (X[i] == 0.0) continue;
      for (int j = 0; j < n; ++j) {
        if (Y[j] == 0.0) continue;
        for (int k = 0; k < n; ++k) v += (*this)(l, i, j, k) * X[i] * Y[j] * Z[k];
      }
    }
    out[l] = v;
  }
  return out;
}

double CurvatureEval::lowered(const Vector& X, const Vector& Y, const Vector& Z, const Vector& W) const {
  return apply(X, Y, Z).dot(metric * W);
}

Matrix CurvatureEval::jacobi_operator(const Vector& X) const {
  Matrix m(n, n);
  for (int j = 0; j < n; ++j) m.col(j) = apply(X, Vector::Unit(n, j), X);
  return m;
}

double CurvatureEval::sectional(const Vector& X, const Vector& Y) const {
  const double gxx = X.dot(metric * X);
  const double gyy = Y.dot(metric * Y);
  const double gxy = X.dot(metric * Y);
  return lowered(X, Y, Y, X) / (gxx * gyy - gxy * gxy);
}

Matrix product_metric(const MetricField& g, const Point& p, const Point& q) {
  g.check_nondegenerate(p);
  g.check_nondegenerate(q);
  const int n = g.dim();
  Matrix m = Matrix::Zero(2 * n, 2 * n);
  m.topLeftCorner(n, n) = g.value(p);
  m.bottomRightCorner(n, n) = -g.value(q);
  return m;
}

double reference_norm(const MetricField& reference, const Point& x, const Vector& v) {
  if (v.size() == 0) return 0.0;
  const double q = v.dot(reference.value(x) * v);
  return std::sqrt(std::max(0.0, q));
}

int matrix_index(const Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  int neg = 0;
  for (int i = 0; i < es.eigenvalues().size(); ++i) neg += es.eigenvalues()[i] < 0.0 ? 1 : 0;
  return neg;
}

MetricField euclidean(int n) {
  return MetricField(std::make_shared<ConstantTensor>(Matrix::Identity(n, n)), 0, "euclidean", unbounded_box(n));
}

MetricField minkowski(int n, int index) {
  Matrix m = Matrix::Identity(n, n);
  for (int i = 0; i < index; ++i) m(i, i) = -1.0;
  return MetricField(std::make_shared<ConstantTensor>(m), index, "minkowski", unbounded_box(n));
}

MetricField flat_torus(double period) {
  return MetricField(std::make_shared<ConstantTensor>(Matrix::Identity(2, 2)), 0, "flat_torus", unbounded_box(2),
                     Vector::Constant(2, period));
}

MetricField sphere2(double radius, SphereChart chart) {
  const double inf = std::numeric_limits<double>::infinity();
  if (chart == SphereChart::Spherical) {
    constexpr double kPoleGap = 1e-2;
    Box box{Vector(2), Vector(2)};
    box.lo << kPoleGap, -inf;
    box.hi << std::numbers::pi - kPoleGap, inf;
    Vector periods(2);
    periods << 0.0, 2.0 * std::numbers::pi;
    return MetricField(std::make_shared<SphereSpherical>(radius), 0, "sphere2", box, periods);
  }
  Box box{Vector::Constant(2, -10.0), Vector::Constant(2, 10.0)};
  return MetricField(std::make_shared<SphereStereographic>(radius), 0, "sphere2", box);
}

MetricField warped(std::vector<double> f_coefs, double y_period, double x_lo, double x_hi) {
  const double inf = std::numeric_limits<double>::infinity();
  auto field = std::make_shared<WarpedTensor>(std::move(f_coefs));
  for (int s = 0; s <= 64; ++s) {
    const double x = x_lo + (x_hi - x_lo) * s / 64.0;
    if (!(field->eval(x, 0) > 0.0))
      throw GeoError(ErrorCode::InvalidMetric, "warping function must stay positive on the x range");
  }
  Box box{Vector(2), Vector(2)};
  box.lo << x_lo, -inf;
  box.hi << x_hi, inf;
  Vector periods(2);
  periods << 0.0, y_period;
  return MetricField(field, 0, "warped", box, periods);
}

MetricField metric_from_json(const nlohmann::json& j) {
  const std::string name = j.at("name").get<std::string>();
  const int dim = j.value("dim", 2);
  const int index = j.value("index", 0);
  const nlohmann::json params = j.value("params", nlohmann::json::object());
  auto require = [&](bool ok, const std::string& msg) {
    if (!ok) throw GeoError(ErrorCode::ConfigError, "metric '" + name + "': " + msg);
  };
  require(dim >= 1, "dim must be positive");
  require(index >= 0 && index <= dim, "index must lie in [0, dim]");

  MetricField g = [&]() -> MetricField {
    if (name == "euclidean") {
      require(index == 0, "euclidean metric has index 0");
      return euclidean(dim);
    }
    if (name == "minkowski") return minkowski(dim, index);
    if (name == "flat_torus") {
      require(dim == 2 && index == 0, "flat_torus is the Riemannian 2-torus");
      return flat_torus(params.value("period", 1.0));
    }
    if (name == "sphere2") {
      require(dim == 2 && index == 0, "sphere2 is the Riemannian 2-sphere");
      const std::string chart = params.value("chart", std::string("spherical"));
      require(chart == "spherical" || chart == "stereographic", "chart must be spherical or stereographic");
      const double radius = params.value("radius", 1.0);
      require(radius > 0.0, "radius must be positive");
      return sphere2(radius, chart == "spherical" ? SphereChart::Spherical : SphereChart::Stereographic);
    }
    if (name == "warped") {
      require(dim == 2 && index == 0, "warped metric is 2-dimensional Riemannian");
      require(params.contains("f"), "missing coefficient list 'f'");
      const auto range = params.value("x_range", std::vector<double>{-1.0, 1.0});
      require(range.size() == 2 && range[0] < range[1], "x_range must be [lo, hi]");
      return warped(params.at("f").get<std::vector<double>>(), params.value("y_period", 0.0), range[0], range[1]);
    }
    if (name == "custom") {
      require(params.contains("entries"), "custom metric needs 'entries' (upper triangle, row-major)");
      const auto& entries = params.at("entries");
      require(entries.is_array() && static_cast<int>(entries.size()) == dim * (dim + 1) / 2,
              "entries must list the n(n+1)/2 upper-triangular components");
      std::vector<CoeffFunction> upper;
      for (const auto& e : entries) upper.push_back(CoeffFunction::from_json(e, dim));
      const double inf = std::numeric_limits<double>::infinity();
      Box box{Vector::Constant(dim, -inf), Vector::Constant(dim, inf)};
      if (params.contains("domain")) {
        const auto dom = params.at("domain").get<std::vector<std::vector<double>>>();
        require(static_cast<int>(dom.size()) == dim, "domain needs one [lo, hi] per coordinate");
        for (int i = 0; i < dim; ++i) {
          box.lo[i] = dom[static_cast<std::size_t>(i)].at(0);
          box.hi[i] = dom[static_cast<std::size_t>(i)].at(1);
        }
      }
      return MetricField(std::make_shared<CoeffTensor>(dim, std::move(upper)), index, "custom", box, Vector(),
                         DerivMode::CentralDifference);
    }
    throw GeoError(ErrorCode::ConfigError, "unknown metric '" + name + "'");
  }();
  require(g.dim() == dim, "dim does not match builtin");
  if (j.value("deriv_mode", std::string("analytic")) == "central_difference")
    g = g.with_deriv_mode(DerivMode::CentralDifference);
  return g;
}

}  // namespace geobvp
