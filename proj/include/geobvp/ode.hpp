#pragma once

#include "geobvp/types.hpp"

#include <functional>
#include <vector>

namespace geobvp {

struct OdeOptions {
  double rtol = 1e-11;
  double atol = 1e-12;
  int max_steps = 500000;
  /// When positive, error control is switched off and the interval is
  /// covered by steps of at most (t_end - t0) / fixed_steps.
  int fixed_steps = 0;
  double min_step = 1e-14;
};

struct OdeReport {
  int steps = 0;
  int rejected = 0;
};

using OdeRhs = std::function<void(double t, const Vector& y, Vector& dy)>;
/// Called after every accepted step; may throw to abort (e.g. domain exit).
using OdeStepCheck = std::function<void(double t, const Vector& y)>;

/// Dormand-Prince 5(4) integration from (t0, y0). Steps are clipped so that
/// every entry of `times` (non-decreasing, all >= t0) is hit exactly; the
/// state at each requested time is returned in order.
std::vector<Vector> integrate_ode(const OdeRhs& rhs, const Vector& y0, double t0, const std::vector<double>& times,
                                  const OdeOptions& options, OdeReport* report = nullptr,
                                  const OdeStepCheck& check = {});

}  // namespace geobvp
