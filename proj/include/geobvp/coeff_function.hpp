#pragma once

#include "geobvp/types.hpp"

#include "json.hpp"

#include <vector>

namespace geobvp {

/// Scalar function of chart coordinates written as a coefficient table:
///   f(x) = sum_k coef_k * prod_i x_i^pow_ki * trig_k(freq_k . x + phase_k)
/// where trig_k is 1, sin or cos.
class CoeffFunction {
 public:
  enum class Trig { None, Sin, Cos };

  struct Term {
    double coef = 0.0;
    std::vector<int> pow;
    Trig trig = Trig::None;
    std::vector<double> freq;
    double phase = 0.0;
  };

  CoeffFunction() = default;
  explicit CoeffFunction(std::vector<Term> terms) : terms_(std::move(terms)) {}

  static CoeffFunction constant(double c);
  /// Polynomial in coordinate `var` with coefficients a_0 + a_1 x + ...
  static CoeffFunction polynomial(int var, int nvars, const std::vector<double>& coefs);

  /// Parses either a number (constant) or an array of term objects
  /// {"coef": c, "pow": [..], "trig": "sin"|"cos", "freq": [..], "phase": p}.
  static CoeffFunction from_json(const nlohmann::json& j, int nvars);

  double operator()(const Vector& x) const;

 private:
  std::vector<Term> terms_;
};

}  // namespace geobvp
