#ifndef DOSEBOUND_SENSITIVITY_HPP_
#define DOSEBOUND_SENSITIVITY_HPP_

#include "dosebound/core_data.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace dosebound {

enum class Family {
  exp_abs_diff,     // exp(g |t - t'|)
  exp_abs_sq_diff,  // exp(g/2 |t^2 - t'^2|)
  exp_log_ratio,    // exp(g |log t - log t'|), needs lo > 0
  beta_odds,        // odds ratio of (t v t') vs (t ^ t'), to the power g; needs domain in (0, 1)
  step,             // exp(2g 1[(t - g0)(t' - g0) < 0])
  constant,         // c off the diagonal, 1 on it
  generator,        // max(U_t / U_t', U_t' / U_t) for a user generator U
};

const char* to_string(Family f);
Family parse_family(const std::string& name);

/// Plain-data description used by the JSON config.
struct SensitivitySpec {
  std::string family = "exp_abs_diff";
  std::vector<double> params{0.0};
};

/// Symmetric, unit-diagonal Gamma_{t,t'} >= 1. Every family is evaluated in
/// closed form as exp(power * log_value), so square roots halve `power`
/// instead of tabulating anything.
class SensitivityFunction {
 public:
  double operator()(double t, double tp) const;
  double log_value(double t, double tp) const;

  /// Points t' in the domain where log_value(t, .) is not smooth (kinks of
  /// the absolute value and jump points).
  std::vector<double> kinks(double t) const;

  Family family() const { return family_; }
  const std::vector<double>& params() const { return params_; }
  double power() const { return power_; }
  const ExposureDomain& domain() const { return domain_; }

  /// True when Gamma is identically 1.
  bool is_unit() const;

  SensitivitySpec spec() const;

 private:
  friend SensitivityFunction make_family(Family, std::span<const double>, ExposureDomain);
  friend SensitivityFunction from_generator(std::function<double(double)>, ExposureDomain);
  friend SensitivityFunction sqrt_function(const SensitivityFunction&);

  double base_log_value(double t, double tp) const;

  Family family_ = Family::constant;
  std::vector<double> params_{1.0};
  double power_ = 1.0;
  ExposureDomain domain_{};
  std::function<double(double)> generator_;
};

SensitivityFunction make_family(Family family, std::span<const double> params, ExposureDomain domain);
SensitivityFunction make_family(const SensitivitySpec& spec, ExposureDomain domain);

/// Gamma_{t,t'} = max{U_t / U_t', U_t' / U_t}. Throws NumericError when the
/// generator is not strictly positive at a queried point.
SensitivityFunction from_generator(std::function<double(double)> upsilon, ExposureDomain domain);

/// Pointwise square root, realized by halving the log-generator.
SensitivityFunction sqrt_function(const SensitivityFunction& sf);

}  // namespace dosebound

#endif  // DOSEBOUND_SENSITIVITY_HPP_
