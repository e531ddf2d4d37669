#include "geobvp/ode.hpp"

#include "geobvp/errors.hpp"

#include <algorithm>
#include <cmath>

namespace geobvp {

namespace {

constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                 e5 = b5 - -92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;

}  // namespace

std::vector<Vector> integrate_ode(const OdeRhs& rhs, const Vector& y0, double t0, const std::vector<double>& times,
                                  const OdeOptions& options, OdeReport* report, const OdeStepCheck& check) {
  std::vector<Vector> out;
  out.reserve(times.size());
  if (times.empty()) return out;

  const Eigen::Index m = y0.size();
  Vector y = y0;
  double t = t0;
  Vector k1(m), k2(m), k3(m), k4(m), k5(m), k6(m), k7(m), ytmp(m), ynew(m);
  rhs(t, y, k1);

  const double span = std::max(times.back() - t0, 0.0);
  const bool fixed = options.fixed_steps > 0;
  const double fixed_h = fixed ? span / options.fixed_steps : 0.0;
  double h = fixed ? fixed_h : std::max(span * 1e-3, 1e-6);
  int steps = 0;
  int rejected = 0;

  for (const double target : times) {
    if (target < t) throw GeoError(ErrorCode::IntegratorStall, "output times must be non-decreasing");
    while (t < target) {
      if (steps + rejected > options.max_steps)
        throw ValuedError(ErrorCode::IntegratorStall, "step budget exhausted", t);
      const double remaining = target - t;
      bool last = false;
      double step = fixed ? fixed_h : h;
      if (step >= remaining * (1.0 - 1e-12)) {
        step = remaining;
        last = true;
      }

      ytmp = y + step * a21 * k1;
      rhs(t + c2 * step, ytmp, k2);
      ytmp = y + step * (a31 * k1 + a32 * k2);
      rhs(t + c3 * step, ytmp, k3);
      ytmp = y + step * (a41 * k1 + a42 * k2 + a43 * k3);
      rhs(t + c4 * step, ytmp, k4);
      ytmp = y + step * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
      rhs(t + c5 * step, ytmp, k5);
      ytmp = y + step * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
      rhs(t + step, ytmp, k6);
      ynew = y + step * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
      rhs(t + step, ynew, k7);

      double err = 0.0;
      if (!fixed) {
        const Vector e = step * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        for (Eigen::Index i = 0; i < m; ++i) {
          const double sc = options.atol + options.rtol * std::max(std::abs(y[i]), std::abs(ynew[i]));
          err += (e[i] / sc) * (e[i] / sc);
        }
        err = std::sqrt(err / static_cast<double>(std::max<Eigen::Index>(m, 1)));
        if (!std::isfinite(err)) err = 1e10;
      }

      if (fixed || err <= 1.0) {
        t = last ? target : t + step;
        y = ynew;
        k1 = k7;
        ++steps;
        if (check) check(t, y);
        if (!fixed) {
          const double fac = err > 0.0 ? 0.9 * std::pow(err, -0.2) : 5.0;
          // A clipped final step says nothing about the natural step size.
          if (!last || fac < 1.0) h = step * std::clamp(fac, 0.2, 5.0);
        }
      } else {
        ++rejected;
        h = step * std::max(0.2, 0.9 * std::pow(err, -0.2));
        if (h < options.min_step) throw ValuedError(ErrorCode::IntegratorStall, "step size underflow", t);
      }
    }
    out.push_back(y);
  }
  if (report) {
    report->steps += steps;
    report->rejected += rejected;
  }
  return out;
}

}  // namespace geobvp
