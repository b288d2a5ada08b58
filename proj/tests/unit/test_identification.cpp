#include "dosebound/identification.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace dosebound;

namespace {

Vec v012() {
  Vec v(3);
  v << 0.0, 1.0, 2.0;
  return v;
}

WeightedSample<double> random_sample(testutil::Gen& g) {
  const int n = g.integer(1, 15);
  Vec v = g.normals(n, 2.0);
  // Occasional ties exercise the pooled path.
  if (n > 3 && g.integer(0, 2) == 0) v[1] = v[0];
  return make_weighted_sample<double>(v, g.simplex(n));
}

double psi_mean(const WeightedSample<double>& ws, double mu, double gamma) {
  double s = 0.0;
  for (Index i = 0; i < ws.values.size(); ++i) {
    const double r = ws.values[i] - mu;
    s += ws.weights[i] * (r > 0.0 ? r : gamma * r);
  }
  return s;
}

double asym_loss(const WeightedSample<double>& ws, double g, double gamma) {
  double s = 0.0;
  for (Index i = 0; i < ws.values.size(); ++i) {
    const double r = ws.values[i] - g;
    s += ws.weights[i] * (r > 0.0 ? r * r : gamma * r * r);
  }
  return s;
}

}  // namespace

TEST_CASE("expectile examples on {0,1,2}") {
  const auto ws = uniform_sample<double>(v012());
  CHECK(solve_expectile(ws, 1.0).value == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(solve_expectile(ws, 2.0).value == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(solve_expectile(ws, 4.0).value == doctest::Approx(0.5).epsilon(1e-15));
  // nu = P(Y > 0.75) + 2 P(Y <= 0.75) = 2/3 + 2/3.
  CHECK(solve_expectile(ws, 2.0).nu == doctest::Approx(4.0 / 3.0));
}

TEST_CASE("quantile examples on {0,1,2}") {
  const auto ws = uniform_sample<double>(v012());
  CHECK(solve_quantile(ws, 1.0 / 3.0) == 0.0);
  CHECK(solve_quantile(ws, 0.5) == 1.0);
  CHECK(solve_quantile(ws, 0.99) == 2.0);
  CHECK_THROWS_AS(solve_quantile(ws, 1.0), InputError);
}

TEST_CASE("marginal bound examples on {0,1,2}") {
  const auto ws = uniform_sample<double>(v012());
  CHECK(marginal_bound(ws, 1.0).value == doctest::Approx(1.0).epsilon(1e-15));
  const auto b2 = marginal_bound(ws, 2.0);
  CHECK(b2.q == 0.0);
  CHECK(b2.value == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(b2.tau == doctest::Approx(1.0 / 3.0));
  const auto b4 = marginal_bound(ws, 4.0);
  CHECK(b4.q == 0.0);
  CHECK(b4.value == doctest::Approx(0.25).epsilon(1e-15));
}

TEST_CASE("cvar form") {
  CHECK(marginal_bound_cvar_form(1.0, 1.0, 1.0) == 1.0);
  CHECK(marginal_bound_cvar_form(1.0, 1.5, 2.0) == doctest::Approx(0.5));
  CHECK(marginal_bound_cvar_form(0.0, 0.8, 3.0) == doctest::Approx(-1.6));
  // E[Y | Y > 0] = 1.5 on {0,1,2}: the cvar form matches marginal_bound.
  const auto ws = uniform_sample<double>(v012());
  CHECK(marginal_bound_cvar_form(1.0, 1.5, 2.0) == doctest::Approx(marginal_bound(ws, 2.0).value));
}

TEST_CASE("input validation") {
  Vec v(2);
  v << 1.0, 2.0;
  Vec w(2);
  w << 0.5, 0.6;
  CHECK_THROWS_AS(make_weighted_sample<double>(v, w), InputError);
  w << -0.5, 1.5;
  CHECK_THROWS_AS(make_weighted_sample<double>(v, w), InputError);
  CHECK_THROWS_AS(uniform_sample<double>(Vec(0)), InputError);
  const auto ws = uniform_sample<double>(v);
  CHECK_THROWS_AS(solve_expectile(ws, 0.5), InputError);
  CHECK_THROWS_AS(marginal_bound(ws, 0.9), InputError);
}

TEST_CASE("expectile is the sup root and the asymmetric least-squares minimizer") {
  testutil::Gen g(101);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ws = random_sample(g);
    const double gamma = g.uniform(1.0, 10.0);
    const double theta = solve_expectile(ws, gamma).value;
    CHECK(std::abs(psi_mean(ws, theta, gamma)) < 1e-10);
    CHECK(psi_mean(ws, theta + 1e-7, gamma) < 0.0);
    // Grid search around theta for the minimizer of the asymmetric loss.
    const double lo = ws.values.minCoeff();
    const double hi = ws.values.maxCoeff();
    double best_g = lo;
    double best = asym_loss(ws, lo, gamma);
    for (int k = 1; k <= 4000; ++k) {
      const double c = lo + (hi - lo) * k / 4000.0;
      const double l = asym_loss(ws, c, gamma);
      if (l < best) {
        best = l;
        best_g = c;
      }
    }
    CHECK(std::abs(best_g - theta) <= (hi - lo) / 4000.0 + 1e-12);
    CHECK(asym_loss(ws, theta, gamma) <= best + 1e-12);
  }
}

TEST_CASE("bounds at sensitivity one equal the mean") {
  testutil::Gen g(102);
  for (int trial = 0; trial < 200; ++trial) {
    const auto ws = random_sample(g);
    const double mean = ws.values.dot(ws.weights);
    CHECK(solve_expectile(ws, 1.0).value == doctest::Approx(mean).epsilon(1e-12));
    CHECK(marginal_bound(ws, 1.0).value == doctest::Approx(mean).epsilon(1e-12));
    CHECK(solve_expectile(ws, 1.0, Side::upper).value == doctest::Approx(mean).epsilon(1e-12));
  }
}

TEST_CASE("monotone in the sensitivity parameter and inside the support") {
  testutil::Gen g(103);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ws = random_sample(g);
    const double a = g.uniform(1.0, 8.0);
    const double b = a + g.uniform(0.0, 4.0);
    const double lo = ws.values.minCoeff();
    const double hi = ws.values.maxCoeff();
    const double ea = solve_expectile(ws, a).value;
    const double eb = solve_expectile(ws, b).value;
    const double ma = marginal_bound(ws, a).value;
    const double mb = marginal_bound(ws, b).value;
    CHECK(eb <= ea + 1e-12);
    CHECK(mb <= ma + 1e-12);
    CHECK(ea >= lo - 1e-12);
    CHECK(ea <= hi + 1e-12);
    CHECK(ma >= lo - 1e-12);
    CHECK(ma <= ws.values.dot(ws.weights) + 1e-12);
    CHECK(solve_expectile(ws, a, Side::upper).value <= hi + 1e-12);
    CHECK(solve_expectile(ws, a, Side::upper).value >= ea - 1e-12);
  }
}

TEST_CASE("ordering chain marginal(g) <= rosenbaum(g) <= marginal(sqrt g)") {
  testutil::Gen g(104);
  for (int trial = 0; trial < 500; ++trial) {
    const auto ws = random_sample(g);
    const double gamma = g.uniform(1.0, 10.0);
    const double m = marginal_bound(ws, gamma).value;
    const double r = solve_expectile(ws, gamma).value;
    const double ms = marginal_bound(ws, std::sqrt(gamma)).value;
    CHECK(m <= r + 1e-12);
    CHECK(r <= ms + 1e-12);
    const double mu = marginal_bound(ws, gamma, Side::upper).value;
    const double ru = solve_expectile(ws, gamma, Side::upper).value;
    const double msu = marginal_bound(ws, std::sqrt(gamma), Side::upper).value;
    CHECK(mu >= ru - 1e-12);
    CHECK(ru >= msu - 1e-12);
  }
}

TEST_CASE("equivariance and negation duality") {
  testutil::Gen g(105);
  for (int trial = 0; trial < 300; ++trial) {
    const auto ws = random_sample(g);
    const double gamma = g.uniform(1.0, 10.0);
    const double shift = g.uniform(-5.0, 5.0);
    const double scale = g.uniform(0.1, 5.0);
    const Vec moved = (scale * ws.values).array() + shift;
    const auto wm = make_weighted_sample<double>(moved, ws.weights);
    const auto wn = make_weighted_sample<double>(Vec(-ws.values), ws.weights);
    const double e = solve_expectile(ws, gamma).value;
    const double m = marginal_bound(ws, gamma).value;
    CHECK(solve_expectile(wm, gamma).value == doctest::Approx(scale * e + shift).epsilon(1e-10));
    CHECK(marginal_bound(wm, gamma).value == doctest::Approx(scale * m + shift).epsilon(1e-10));
    CHECK(solve_expectile(ws, gamma, Side::upper).value == doctest::Approx(-solve_expectile(wn, gamma).value).epsilon(1e-12));
    CHECK(marginal_bound(ws, gamma, Side::upper).value == doctest::Approx(-marginal_bound(wn, gamma).value).epsilon(1e-12));
  }
}

TEST_CASE("cvar form reproduces marginal_bound on continuous-like samples") {
  testutil::Gen g(106);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = g.integer(2, 15);
    const Vec v = g.normals(n);
    const Vec w = g.simplex(n);
    const auto ws = make_weighted_sample<double>(v, w);
    const double lambda = g.uniform(1.0, 10.0);
    const auto b = marginal_bound(ws, lambda);
    // E[Y | Y > q] with the atom at q split so the upper tail has mass 1 - tau.
    double tail_mass = 0.0;
    double tail_sum = 0.0;
    double atom = 0.0;
    for (int i = 0; i < n; ++i) {
      if (v[i] > b.q) {
        tail_mass += w[i];
        tail_sum += w[i] * v[i];
      } else if (v[i] == b.q) {
        atom += w[i];
      }
    }
    const double need = (1.0 - b.tau) - tail_mass;
    const double cvar = (tail_sum + need * b.q) / (1.0 - b.tau);
    const double mean = v.dot(w);
    CHECK(need >= -1e-12);
    CHECK(need <= atom + 1e-12);
    CHECK(marginal_bound_cvar_form(mean, cvar, lambda) == doctest::Approx(b.value).epsilon(1e-10));
  }
}

TEST_CASE("expectile works in long double") {
  Eigen::Matrix<long double, Eigen::Dynamic, 1> v(3);
  v << 0.0L, 1.0L, 2.0L;
  const auto ws = uniform_sample<long double>(v);
  CHECK(static_cast<double>(solve_expectile(ws, 2.0L).value) == doctest::Approx(0.75));
}
