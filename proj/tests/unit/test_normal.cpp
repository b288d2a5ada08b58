#include "dosebound/normal.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

namespace nm = dosebound::normal;

namespace {

double phi(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
double big_phi(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Bisection on tau E[(Z-e)_+] - (1-tau) E[(e-Z)_+], each moment by Simpson
// on its own smooth side of e.
double simpson(double a, double b, double (*f)(double, double), double e) {
  const int n = 20000;
  const double h = (b - a) / n;
  double s = f(a, e) + f(b, e);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + h * i, e);
  return s * h / 3.0;
}

double expectile_oracle(double tau) {
  auto up = [](double z, double e) { return (z - e) * phi(z); };
  auto lo = [](double z, double e) { return (e - z) * phi(z); };
  double l = -6.0;
  double r = 6.0;
  for (int it = 0; it < 80; ++it) {
    const double m = 0.5 * (l + r);
    const double u = simpson(m, 14.0, up, m);
    const double w = simpson(-14.0, m, lo, m);
    if (tau * u - (1.0 - tau) * w > 0.0) {
      l = m;
    } else {
      r = m;
    }
  }
  return 0.5 * (l + r);
}

}  // namespace

TEST_CASE("normal cdf and pdf match closed forms") {
  CHECK(nm::cdf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(nm::pdf(0.0) == doctest::Approx(1.0 / std::sqrt(2.0 * std::numbers::pi)));
  CHECK(nm::cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
}

TEST_CASE("quantile inverts the cdf") {
  testutil::Gen g(11);
  for (int k = 0; k < 500; ++k) {
    const double p = g.uniform(1e-10, 1.0 - 1e-10);
    const double z = nm::quantile(p);
    const double back = z < 0.0 ? big_phi(z) : 1.0 - big_phi(-z);
    CHECK(std::abs(back - p) <= 1e-14 + 1e-12 * std::min(p, 1.0 - p));
  }
  CHECK(nm::quantile(1.0 / 3.0) == doctest::Approx(-0.4307273).epsilon(1e-7));
  CHECK(nm::quantile(0.975) == doctest::Approx(1.959964).epsilon(1e-6));
  CHECK_THROWS_AS(nm::quantile(0.0), dosebound::InputError);
  CHECK_THROWS_AS(nm::quantile(1.0), dosebound::InputError);
}

TEST_CASE("partial moments satisfy U(e) - L(e) = -e") {
  for (double e = -5.0; e <= 5.0; e += 0.25) {
    CHECK(nm::upper_partial_moment(e) - nm::lower_partial_moment(e) == doctest::Approx(-e).epsilon(1e-12));
  }
}

TEST_CASE("expectile matches a quadrature root oracle") {
  for (double tau : {1.0 / 3.0, 0.02, 0.1, 0.5, 0.8, 0.97}) {
    CHECK(nm::expectile(tau) == doctest::Approx(expectile_oracle(tau)).epsilon(1e-8));
  }
  CHECK(std::abs(nm::expectile(0.5)) < 1e-14);
}

TEST_CASE("expectile is odd around one half and increasing") {
  testutil::Gen g(3);
  for (int k = 0; k < 200; ++k) {
    const double a = g.uniform(0.001, 0.999);
    const double b = g.uniform(0.001, 0.999);
    CHECK(nm::expectile(a) == doctest::Approx(-nm::expectile(1.0 - a)).epsilon(1e-11));
    if (a < b) CHECK(nm::expectile(a) < nm::expectile(b));
  }
}

TEST_CASE("tabulated expectile and quantile agree with the exact versions") {
  testutil::Gen g(5);
  double worst_e = 0.0;
  double worst_q = 0.0;
  for (int k = 0; k < 5000; ++k) {
    const double tau = g.uniform(1e-5, 1.0 - 1e-5);
    worst_e = std::max(worst_e, std::abs(nm::fast_expectile(tau) - nm::expectile(tau)));
    worst_q = std::max(worst_q, std::abs(nm::fast_quantile(tau) - nm::quantile(tau)));
  }
  CHECK(worst_e < 1e-10);
  CHECK(worst_q < 1e-10);
  CHECK(std::abs(nm::fast_expectile(0.5)) < 1e-14);
}

TEST_CASE("upper tail mean at one third") {
  // phi(Phi^{-1}(1/3)) / (2/3), evaluated with an independent normal library.
  CHECK(nm::upper_tail_mean(1.0 / 3.0) == doctest::Approx(0.5453996620129767).epsilon(1e-12));
}
