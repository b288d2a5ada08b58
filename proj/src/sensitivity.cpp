#include "dosebound/sensitivity.hpp"

#include <cmath>

namespace dosebound {

const char* to_string(Family f) {
  switch (f) {
    case Family::exp_abs_diff: return "exp_abs_diff";
    case Family::exp_abs_sq_diff: return "exp_abs_sq_diff";
    case Family::exp_log_ratio: return "exp_log_ratio";
    case Family::beta_odds: return "beta_odds";
    case Family::step: return "step";
    case Family::constant: return "constant";
    case Family::generator: return "generator";
  }
  return "unknown";
}

Family parse_family(const std::string& name) {
  for (Family f : {Family::exp_abs_diff, Family::exp_abs_sq_diff, Family::exp_log_ratio, Family::beta_odds,
                   Family::step, Family::constant}) {
    if (name == to_string(f)) return f;
  }
  throw ConfigError("unknown sensitivity family '" + name + "'");
}

double SensitivityFunction::base_log_value(double t, double tp) const {
  switch (family_) {
    case Family::exp_abs_diff:
      return params_[0] * std::abs(t - tp);
    case Family::exp_abs_sq_diff:
      return 0.5 * params_[0] * std::abs(t * t - tp * tp);
    case Family::exp_log_ratio:
      return params_[0] * std::abs(std::log(t) - std::log(tp));
    case Family::beta_odds: {
      const double hi = std::max(t, tp);
      const double lo = std::min(t, tp);
      return params_[0] * std::log((hi * (1.0 - lo)) / (lo * (1.0 - hi)));
    }
    case Family::step:
      return (t - params_[1]) * (tp - params_[1]) < 0.0 ? 2.0 * params_[0] : 0.0;
    case Family::constant:
      return t == tp ? 0.0 : std::log(params_[0]);
    case Family::generator: {
      const double a = generator_(t);
      const double b = generator_(tp);
      if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
        throw NumericError("sensitivity generator must be strictly positive and finite");
      }
      return std::abs(std::log(a) - std::log(b));
    }
  }
  return 0.0;
}

double SensitivityFunction::log_value(double t, double tp) const { return power_ * base_log_value(t, tp); }

double SensitivityFunction::operator()(double t, double tp) const { return std::exp(log_value(t, tp)); }

std::vector<double> SensitivityFunction::kinks(double t) const {
  std::vector<double> pts;
  auto add = [&](double p) {
    if (p > domain_.lo && p < domain_.hi) pts.push_back(p);
  };
  switch (family_) {
    case Family::exp_abs_sq_diff:
      add(t);
      add(-t);
      break;
    case Family::step:
      add(params_[1]);
      break;
    default:
      add(t);
      break;
  }
  return pts;
}

bool SensitivityFunction::is_unit() const {
  switch (family_) {
    case Family::constant: return params_[0] == 1.0;
    case Family::generator: return false;
    default: return params_[0] == 0.0;
  }
}

SensitivitySpec SensitivityFunction::spec() const {
  if (family_ == Family::generator) {
    throw ConfigError("generator-based sensitivity functions are not serializable");
  }
  SensitivitySpec s;
  s.family = to_string(family_);
  s.params = params_;
  // Fold the power back into the family parameters so spec() round-trips.
  switch (family_) {
    case Family::constant: s.params[0] = std::pow(params_[0], power_); break;
    default: s.params[0] = params_[0] * power_; break;
  }
  return s;
}

SensitivityFunction make_family(Family family, std::span<const double> params, ExposureDomain domain) {
  SensitivityFunction sf;
  sf.family_ = family;
  sf.domain_ = domain;
  sf.params_.assign(params.begin(), params.end());
  auto need = [&](std::size_t count) {
    if (sf.params_.size() < count) {
      throw ConfigError(std::string("family ") + to_string(family) + " needs " + std::to_string(count) +
                        " parameter(s)");
    }
  };
  switch (family) {
    case Family::exp_abs_diff:
    case Family::exp_abs_sq_diff:
      need(1);
      if (!(sf.params_[0] >= 0.0)) throw ConfigError("sensitivity rate must be nonnegative");
      break;
    case Family::exp_log_ratio:
      need(1);
      if (!(sf.params_[0] >= 0.0)) throw ConfigError("sensitivity rate must be nonnegative");
      if (!(domain.lo > 0.0)) throw ConfigError("exp_log_ratio requires a domain with lo > 0");
      break;
    case Family::beta_odds:
      need(1);
      if (!(sf.params_[0] >= 0.0)) throw ConfigError("sensitivity rate must be nonnegative");
      if (!(domain.lo > 0.0 && domain.hi < 1.0)) throw ConfigError("beta_odds requires a domain inside (0, 1)");
      break;
    case Family::step:
      need(1);
      if (!(sf.params_[0] >= 0.0)) throw ConfigError("sensitivity rate must be nonnegative");
      // A single parameter places the jump at the rate itself.
      if (sf.params_.size() == 1) sf.params_.push_back(sf.params_[0]);
      break;
    case Family::constant:
      need(1);
      if (!(sf.params_[0] >= 1.0)) throw ConfigError("constant sensitivity must be >= 1");
      break;
    case Family::generator:
      throw ConfigError("use from_generator for generator-based functions");
  }
  for (double p : sf.params_) {
    if (!std::isfinite(p)) throw ConfigError("sensitivity parameters must be finite");
  }
  return sf;
}

SensitivityFunction make_family(const SensitivitySpec& spec, ExposureDomain domain) {
  return make_family(parse_family(spec.family), spec.params, domain);
}

SensitivityFunction from_generator(std::function<double(double)> upsilon, ExposureDomain domain) {
  if (!upsilon) throw ConfigError("generator must be callable");
  SensitivityFunction sf;
  sf.family_ = Family::generator;
  sf.params_.clear();
  sf.domain_ = domain;
  sf.generator_ = std::move(upsilon);
  return sf;
}

SensitivityFunction sqrt_function(const SensitivityFunction& sf) {
  SensitivityFunction out = sf;
  out.power_ = 0.5 * sf.power_;
  return out;
}

}  // namespace dosebound
