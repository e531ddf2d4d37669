#include "geobvp/coeff_function.hpp"

#include "geobvp/errors.hpp"

#include <cmath>

namespace geobvp {

CoeffFunction CoeffFunction::constant(double c) {
  Term t;
  t.coef = c;
  return CoeffFunction({t});
}

CoeffFunction CoeffFunction::polynomial(int var, int nvars, const std::vector<double>& coefs) {
  std::vector<Term> terms;
  for (std::size_t k = 0; k < coefs.size(); ++k) {
    if (coefs[k] == 0.0) continue;
    Term t;
    t.coef = coefs[k];
    t.pow.assign(nvars, 0);
    t.pow[var] = static_cast<int>(k);
    terms.push_back(t);
  }
  return CoeffFunction(std::move(terms));
}

CoeffFunction CoeffFunction::from_json(const nlohmann::json& j, int nvars) {
  if (j.is_number()) return constant(j.get<double>());
  if (!j.is_array()) throw GeoError(ErrorCode::ConfigError, "coefficient table must be a number or array");
  std::vector<Term> terms;
  for (const auto& jt : j) {
    Term t;
    t.coef = jt.at("coef").get<double>();
    t.pow = jt.value("pow", std::vector<int>(nvars, 0));
    if (static_cast<int>(t.pow.size()) != nvars)
      throw GeoError(ErrorCode::ConfigError, "term 'pow' length does not match variable count");
    const std::string trig = jt.value("trig", std::string("none"));
    if (trig == "sin") t.trig = Trig::Sin;
    else if (trig == "cos") t.trig = Trig::Cos;
    else if (trig == "none") t.trig = Trig::None;
    else throw GeoError(ErrorCode::ConfigError, "unknown trig '" + trig + "'");
    if (t.trig != Trig::None) {
      t.freq = jt.at("freq").get<std::vector<double>>();
      if (static_cast<int>(t.freq.size()) != nvars)
        throw GeoError(ErrorCode::ConfigError, "term 'freq' length does not match variable count");
      t.phase = jt.value("phase", 0.0);
    }
    terms.push_back(std::move(t));
  }
  return CoeffFunction(std::move(terms));
}

double CoeffFunction::operator()(const Vector& x) const {
  double sum = 0.0;
  for (const auto& t : terms_) {
    double v = t.coef;
    for (std::size_t i = 0; i < t.pow.size(); ++i) {
      if (t.pow[i] != 0) v *= std::pow(x[static_cast<Eigen::Index>(i)], t.pow[i]);
    }
    if (t.trig != Trig::None) {
      double arg = t.phase;
      for (std::size_t i = 0; i < t.freq.size(); ++i) arg += t.freq[i] * x[static_cast<Eigen::Index>(i)];
      v *= (t.trig == Trig::Sin) ? std::sin(arg) : std::cos(arg);
    }
    sum += v;
  }
  return sum;
}

}  // namespace geobvp
