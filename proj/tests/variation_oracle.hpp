#pragma once

// Oracles for the mixed derivative: a random polynomial tensor field and the
// coordinate first variation of the energy, evaluated independently of the
// library's covariant quadrature.

#include "geobvp/indexform.hpp"
#include "geobvp/random.hpp"

#include <cmath>
#include <vector>

namespace fixtures {

using namespace geobvp;

// Symmetric tensor field with quadratic polynomial entries.
class QuadraticTensor final : public TensorField {
 public:
  QuadraticTensor(int n, Rng& rng, double scale) : n_(n) {
    auto sym = [&] {
      Matrix m(n, n);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) m(i, j) = uniform(rng, -scale, scale);
      return Matrix(0.5 * (m + m.transpose()));
    };
    c0_ = sym();
    for (int k = 0; k < n; ++k) c1_.push_back(sym());
    for (int k = 0; k < n * n; ++k) c2_.push_back(sym());
  }
  int dim() const override { return n_; }
  Matrix value(const Vector& x) const override {
    Matrix m = c0_;
    for (int k = 0; k < n_; ++k) {
      m += x[k] * c1_[static_cast<std::size_t>(k)];
      for (int l = 0; l < n_; ++l) m += x[k] * x[l] * c2_[static_cast<std::size_t>(k * n_ + l)];
    }
    return m;
  }

 private:
  int n_;
  Matrix c0_;
  std::vector<Matrix> c1_, c2_;
};

inline // First variation of the energy in coordinates:
// ∫ g(γ', v') + 1/2 (d_v g)(γ', γ') dt, three-point Gauss per element.
double first_variation(const MetricField& g, const GeodesicCurve& c, const DiscreteVariation& v) {
  const int M = v.segments() * c.segments();
  const double nodes[3] = {0.5 - 0.5 * std::sqrt(0.6), 0.5, 0.5 + 0.5 * std::sqrt(0.6)};
  const double weights[3] = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
  double sum = 0.0;
  for (int e = 0; e < M; ++e) {
    for (int q = 0; q < 3; ++q) {
      const double t = (e + nodes[q]) / M;
      const Point x = c.position(t);
      const Vector gd = c.velocity(t), vv = v.at(t), vd = v.rate(t);
      const auto dg = g.partials(x);
      double dvg = 0.0;
      for (int k = 0; k < g.dim(); ++k) dvg += vv[k] * gd.dot(dg[static_cast<std::size_t>(k)] * gd);
      sum += weights[q] / M * (gd.dot(g.value(x) * vd) + 0.5 * dvg);
    }
  }
  return sum;
}


}  // namespace fixtures
