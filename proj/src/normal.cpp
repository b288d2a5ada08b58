#include "dosebound/normal.hpp"

#include "dosebound/common.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace dosebound::normal {

double pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    throw InputError("normal quantile requires p in (0, 1)");
  }
  // Acklam's rational approximation followed by one Halley step.
  static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                                 -2.759285104469687e+02, 1.383577518672690e+02,
                                 -3.066479806614716e+01, 2.506628277459239e+00};
  static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                                 -1.556989798598866e+02, 6.680131188771972e+01,
                                 -1.328068155288572e+01};
  static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                                 -2.400758277161838e+00, -2.549732539343734e+00,
                                 4.374664141464968e+00,  2.938163982698783e+00};
  static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                                 2.445134137142996e+00, 3.754408661907416e+00};
  constexpr double p_low = 0.02425;
  double x;
  if (p < p_low) {
    const double q = std::sqrt(-2.0 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  } else if (p <= 1.0 - p_low) {
    const double q = p - 0.5;
    const double r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
  } else {
    const double q = std::sqrt(-2.0 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
  }
  // Halley refinement; the residual is formed on the smaller tail to keep
  // relative accuracy.
  for (int iter = 0; iter < 2; ++iter) {
    const double e = x < 0.0 ? cdf(x) - p : (1.0 - p) - cdf(-x);
    const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x = x - u / (1.0 + 0.5 * x * u);
  }
  return x;
}

double upper_partial_moment(double e) { return pdf(e) - e * cdf(-e); }

double lower_partial_moment(double e) { return pdf(e) + e * cdf(e); }

double expectile(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw InputError("normal expectile requires tau in (0, 1)");
  }
  if (tau == 0.5) return 0.0;
  // g is strictly decreasing with g' = -(tau * (1 - Phi) + (1 - tau) * Phi).
  auto g = [tau](double e) {
    return tau * upper_partial_moment(e) - (1.0 - tau) * lower_partial_moment(e);
  };
  double lo = -40.0;
  double hi = 40.0;
  double e = 0.5 * quantile(tau);
  for (int iter = 0; iter < 100; ++iter) {
    const double ge = g(e);
    if (ge > 0.0) {
      lo = e;
    } else {
      hi = e;
    }
    const double phi = cdf(e);
    const double slope = -(tau * (1.0 - phi) + (1.0 - tau) * phi);
    double next = e - ge / slope;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - e) <= 1e-15 * (1.0 + std::abs(e))) return next;
    e = next;
  }
  return e;
}

double upper_tail_mean(double tau) {
  const double z = quantile(tau);
  return pdf(z) / (1.0 - tau);
}

namespace {

// Cubic Hermite table of f(tau) in u = logit(tau) on [-kSpan, kSpan].
class LogitTable {
 public:
  static constexpr double kSpan = 12.0;
  static constexpr int kCells = 8192;

  template <typename F, typename D>
  LogitTable(F f, D dfdtau) : value_(kCells + 1), slope_(kCells + 1) {
    for (int k = 0; k <= kCells; ++k) {
      const double u = -kSpan + 2.0 * kSpan * k / kCells;
      const double tau = 1.0 / (1.0 + std::exp(-u));
      value_[static_cast<std::size_t>(k)] = f(tau);
      slope_[static_cast<std::size_t>(k)] = dfdtau(tau, value_[static_cast<std::size_t>(k)]) * tau * (1.0 - tau);
    }
  }

  bool covers(double tau) const {
    const double u = std::log(tau / (1.0 - tau));
    return u > -kSpan && u < kSpan;
  }

  double operator()(double tau) const {
    const double u = std::log(tau / (1.0 - tau));
    const double h = 2.0 * kSpan / kCells;
    const double pos = (u + kSpan) / h;
    const int k = std::min(static_cast<int>(pos), kCells - 1);
    const double s = pos - k;
    const double s2 = s * s;
    const double s3 = s2 * s;
    const auto i = static_cast<std::size_t>(k);
    return (2 * s3 - 3 * s2 + 1) * value_[i] + (s3 - 2 * s2 + s) * h * slope_[i] + (-2 * s3 + 3 * s2) * value_[i + 1] +
           (s3 - s2) * h * slope_[i + 1];
  }

 private:
  std::vector<double> value_;
  std::vector<double> slope_;
};

const LogitTable& expectile_table() {
  static const LogitTable table(
      [](double tau) { return expectile(tau); },
      [](double tau, double e) {
        const double phi = cdf(e);
        return (upper_partial_moment(e) + lower_partial_moment(e)) / (tau * (1.0 - phi) + (1.0 - tau) * phi);
      });
  return table;
}

const LogitTable& quantile_table() {
  static const LogitTable table([](double tau) { return quantile(tau); },
                                [](double, double z) { return 1.0 / pdf(z); });
  return table;
}

}  // namespace

double fast_expectile(double tau) {
  if (tau == 0.5) return 0.0;
  const auto& t = expectile_table();
  return t.covers(tau) ? t(tau) : expectile(tau);
}

double fast_quantile(double tau) {
  if (tau == 0.5) return 0.0;
  const auto& t = quantile_table();
  return t.covers(tau) ? t(tau) : quantile(tau);
}

}  // namespace dosebound::normal
