#include "geobvp/errors.hpp"
#include "geobvp/types.hpp"

#include <algorithm>
#include <cmath>

namespace geobvp {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::SingularMetric: return "SingularMetric";
    case ErrorCode::InvalidMetric: return "InvalidMetric";
    case ErrorCode::ImmersionFailure: return "ImmersionFailure";
    case ErrorCode::NotNormal: return "NotNormal";
    case ErrorCode::DegenerateP: return "DegenerateP";
    case ErrorCode::DomainExit: return "DomainExit";
    case ErrorCode::IntegratorStall: return "IntegratorStall";
    case ErrorCode::NoConvergence: return "NoConvergence";
    case ErrorCode::SingularJacobian: return "SingularJacobian";
    case ErrorCode::EverywhereParallel: return "EverywhereParallel";
    case ErrorCode::StronglyDegenerate: return "StronglyDegenerate";
    case ErrorCode::NoInterval: return "NoInterval";
    case ErrorCode::TubeOverlap: return "TubeOverlap";
    case ErrorCode::CertificateFailed: return "CertificateFailed";
    case ErrorCode::NotClosed: return "NotClosed";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

bool Box::contains(const Vector& x) const {
  for (int i = 0; i < dim(); ++i) {
    if (!(x[i] >= lo[i] && x[i] <= hi[i])) return false;
  }
  return true;
}

Vector Box::clamp(const Vector& x) const {
  Vector y = x;
  for (int i = 0; i < dim(); ++i) y[i] = std::min(std::max(y[i], lo[i]), hi[i]);
  return y;
}

Vector Box::center() const {
  Vector c(dim());
  for (int i = 0; i < dim(); ++i) {
    const bool lo_inf = !std::isfinite(lo[i]);
    const bool hi_inf = !std::isfinite(hi[i]);
    if (lo_inf && hi_inf) c[i] = 0.0;
    else if (lo_inf) c[i] = hi[i];
    else if (hi_inf) c[i] = lo[i];
    else c[i] = 0.5 * (lo[i] + hi[i]);
  }
  return c;
}

}  // namespace geobvp
