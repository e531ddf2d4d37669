#pragma once

#include <stdexcept>
#include <string>

namespace geobvp {

enum class ErrorCode {
  SingularMetric,
  InvalidMetric,
  ImmersionFailure,
  NotNormal,
  DegenerateP,
  DomainExit,
  IntegratorStall,
  NoConvergence,
  SingularJacobian,
  EverywhereParallel,
  StronglyDegenerate,
  NoInterval,
  TubeOverlap,
  CertificateFailed,
  NotClosed,
  ConfigError,
};

const char* to_string(ErrorCode code);

class GeoError : public std::runtime_error {
 public:
  GeoError(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

/// Error that carries the offending scalar (smallest singular value,
/// computed pairing, exit time, ...).
class ValuedError : public GeoError {
 public:
  ValuedError(ErrorCode code, const std::string& what, double value)
      : GeoError(code, what), value_(value) {}

  double value() const { return value_; }

 private:
  double value_;
};

}  // namespace geobvp
