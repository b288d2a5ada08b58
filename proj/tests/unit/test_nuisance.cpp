#include "dosebound/nuisance.hpp"
#include "dosebound/normal.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

using namespace dosebound;

namespace {

const ExposureDomain kDom{0.0, 1.0};

// x ~ N(0, I_2), t uniform, y = shift * x1 + noise_sd * N(0, 1).
Dataset homoskedastic(Index n, std::uint64_t seed, double shift, double noise_sd) {
  testutil::Gen g(seed);
  Mat x(n, 2);
  Vec t(n);
  Vec y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = g.normal();
    x(i, 1) = g.normal();
    t[i] = g.uniform(kDom.lo, kDom.hi);
    y[i] = shift * x(i, 0) + noise_sd * g.normal();
  }
  return Dataset(x, t, y, kDom);
}

// Exposure concentrated near t = x1-driven location so the density varies with x.
Dataset confounded(Index n, std::uint64_t seed) {
  testutil::Gen g(seed);
  Mat x(n, 2);
  Vec t(n);
  Vec y(n);
  for (Index i = 0; i < n; ++i) {
    x(i, 0) = g.normal();
    x(i, 1) = g.normal();
    const double c = 1.0 / (1.0 + std::exp(-x(i, 0)));
    t[i] = std::clamp(c + 0.15 * g.normal(), kDom.lo, kDom.hi);
    y[i] = t[i] + x(i, 1) + g.normal();
  }
  return Dataset(x, t, y, kDom);
}

}  // namespace

TEST_CASE("isotonic repair") {
  std::vector<double> v{3.0, 1.0, 2.0};
  isotonic_repair(v);
  for (double a : v) CHECK(a == doctest::Approx(2.0));
  std::vector<double> s{1.0, 2.0, 2.0, 5.0};
  const auto copy = s;
  isotonic_repair(s);
  CHECK(s == copy);

  testutil::Gen g(1);
  for (int trial = 0; trial < 300; ++trial) {
    const int n = g.integer(1, 30);
    std::vector<double> w(static_cast<std::size_t>(n));
    for (auto& a : w) a = g.normal();
    double sum = 0.0;
    for (double a : w) sum += a;
    isotonic_repair(w);
    double after = 0.0;
    for (double a : w) after += a;
    CHECK(std::is_sorted(w.begin(), w.end()));
    CHECK(after == doctest::Approx(sum).epsilon(1e-12));
    auto again = w;
    isotonic_repair(again);
    CHECK(again == w);
  }
}

TEST_CASE("legendre values") {
  double p[5];
  for (double u : {-1.0, -0.3, 0.0, 0.45, 1.0}) {
    legendre_values(u, 4, p);
    CHECK(p[0] == 1.0);
    CHECK(p[1] == doctest::Approx(u));
    CHECK(p[2] == doctest::Approx(0.5 * (3 * u * u - 1)));
    CHECK(p[3] == doctest::Approx(0.5 * (5 * u * u * u - 3 * u)));
    CHECK(p[4] == doctest::Approx((35 * std::pow(u, 4) - 30 * u * u + 3) / 8.0));
  }
}

TEST_CASE("tensor features") {
  const auto ds = homoskedastic(50, 2, 1.0, 1.0);
  TensorFeatures f(ds.x(), kDom, 2, 3);
  CHECK(f.x_size() == 6);
  CHECK(f.t_size() == 4);
  const Mat d = f.design(ds.x(), ds.t());
  CHECK(d.rows() == 50);
  CHECK(d.cols() == 24);
  CHECK((d.col(0).array() == 1.0).all());
  CHECK((f(ds.x_row(3), ds.t()[3]) - d.row(3).transpose()).norm() < 1e-14);
  CHECK_THROWS_AS(TensorFeatures(Mat(0, 2), kDom, 2, 3), InputError);
}

TEST_CASE("fitted density integrates to one and respects the floor") {
  const auto ds = confounded(3000, 3);
  LearnerSpec spec;
  const double floor = 0.05;
  const auto dens = fit_conditional_density(ds, spec, floor);
  const double w = kDom.width() / spec.bins;
  testutil::Gen g(4);
  for (int k = 0; k < 50; ++k) {
    Vec x(2);
    x << g.normal(0.0, 1.5), g.normal();
    const Vec b = dens->bin_densities(x);
    CHECK(b.sum() * w == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(b.minCoeff() >= floor - 1e-12);
    // Pointwise evaluation agrees with the bin table.
    const double t = g.uniform(0.0, 1.0);
    CHECK(dens->value(x, t) == b[dens->bin_of(t)]);
  }
  // Density follows the covariate: more mass at high t when x1 is large.
  Vec lo(2);
  lo << -1.5, 0.0;
  Vec hi(2);
  hi << 1.5, 0.0;
  CHECK(dens->value(hi, 0.85) > dens->value(lo, 0.85));
  CHECK(dens->value(lo, 0.15) > dens->value(hi, 0.15));
  const auto bp = dens->breakpoints();
  CHECK(bp.size() == static_cast<std::size_t>(spec.bins - 1));
  // The fold average is the mean of the row densities.
  const auto avg = dens->average_over(ds.x().topRows(20));
  double direct = 0.0;
  for (Index j = 0; j < 20; ++j) direct += dens->value(ds.x_row(j), 0.37);
  CHECK((*avg)(0.37) == doctest::Approx(direct / 20.0).epsilon(1e-12));
}

TEST_CASE("density of an independent uniform exposure is flat") {
  const auto ds = homoskedastic(4000, 5, 1.0, 1.0);
  const auto dens = fit_conditional_density(ds, LearnerSpec{}, 0.05);
  Vec x = Vec::Zero(2);
  for (double t = 0.05; t < 1.0; t += 0.1) CHECK(std::abs(dens->value(x, t) - 1.0) < 0.2);
}

TEST_CASE("density fit rejects degenerate inputs") {
  auto ds = homoskedastic(500, 6, 1.0, 1.0);
  Vec t = ds.t() * 0.05;
  const Dataset squeezed(ds.x(), t, ds.y(), kDom);
  CHECK_THROWS_AS(fit_conditional_density(squeezed, LearnerSpec{}, 0.05), FitError);
  const auto few = homoskedastic(40, 7, 1.0, 1.0);
  CHECK_THROWS_AS(fit_conditional_density(few, LearnerSpec{}, 0.05), InputError);
  CHECK_THROWS_AS(fit_conditional_density(ds, LearnerSpec{}, 0.0), ConfigError);
  CHECK_THROWS_AS(fit_conditional_density(ds, LearnerSpec{}, 1.5), ConfigError);
}

TEST_CASE("level surfaces are monotone in tau and recover normal levels") {
  const auto ds = homoskedastic(4000, 8, 1.0, 1.0);
  LearnerSpec spec;
  const auto e = fit_expectile_surface(ds, spec);
  const auto q = fit_quantile_surface(ds, spec);
  testutil::Gen g(9);
  for (int k = 0; k < 40; ++k) {
    Vec x(2);
    x << g.normal(), g.normal();
    const double t = g.uniform(0.0, 1.0);
    const Vec le = e->levels(x, t);
    const Vec lq = q->levels(x, t);
    CHECK(std::is_sorted(le.data(), le.data() + le.size()));
    CHECK(std::is_sorted(lq.data(), lq.data() + lq.size()));
  }
  Vec x0 = Vec::Zero(2);
  CHECK(std::abs(q->value(x0, 0.5, 1.0 / 3.0) - (-0.4307)) < 0.1);
  CHECK(std::abs(e->value(x0, 0.5, 0.5)) < 0.1);
  CHECK(std::abs(e->value(x0, 0.5, 0.2) - normal::expectile(e->snap(0.2))) < 0.1);
  // Snapping picks the nearest grid level; switches lie between levels.
  CHECK(q->snap(0.5) == doctest::Approx(0.5));
  CHECK(q->switch_levels().size() == q->taus().size() - 1);
  CHECK_THROWS_AS(q->value(x0, 0.5, 1.0), InputError);
  // Bound rows reproduce pointwise values.
  const Mat xs = ds.x().topRows(5);
  const auto rows = q->bind(xs);
  std::vector<double> taus{0.1, 0.3, 0.5, 0.7, 0.9};
  std::vector<double> out(5);
  rows->values(0.4, taus, out);
  for (Index j = 0; j < 5; ++j) {
    CHECK(out[static_cast<std::size_t>(j)] ==
          doctest::Approx(q->value(xs.row(j).transpose(), 0.4, taus[static_cast<std::size_t>(j)])).epsilon(1e-12));
  }
}

TEST_CASE("constant outcome gives constant mean, quantile and cvar") {
  auto ds = homoskedastic(1500, 10, 0.0, 0.0);
  Vec y = Vec::Constant(ds.size(), 2.5);
  const Dataset flat(ds.x(), ds.t(), y, kDom);
  LearnerSpec spec;
  const auto m = fit_mean_surface(flat, spec);
  const auto q = fit_quantile_surface(flat, spec);
  const auto c = fit_cvar_surface(flat, q, spec);
  testutil::Gen g(11);
  for (int k = 0; k < 20; ++k) {
    Vec x(2);
    x << g.normal(), g.normal();
    const double t = g.uniform(0.0, 1.0);
    const double tau = g.uniform(0.05, 0.95);
    CHECK(m->value(x, t) == doctest::Approx(2.5).epsilon(1e-6));
    CHECK(q->value(x, t, tau) == doctest::Approx(2.5).epsilon(1e-6));
    CHECK(c->value(x, t, tau) == doctest::Approx(2.5).epsilon(1e-6));
    CHECK(zeta_from(m->value(x, t), c->value(x, t, tau), 3.0) == doctest::Approx(2.5).epsilon(1e-5));
  }
}

TEST_CASE("cvar surface dominates the quantile") {
  const auto ds = homoskedastic(3000, 12, 1.0, 1.0);
  LearnerSpec spec;
  const auto q = fit_quantile_surface(ds, spec);
  const auto c = fit_cvar_surface(ds, q, spec);
  Vec x0 = Vec::Zero(2);
  for (double tau : {0.1, 1.0 / 3.0, 0.5, 0.8}) CHECK(c->value(x0, 0.5, tau) >= q->value(x0, 0.5, tau));
  const double tau = 1.0 / 3.0;
  CHECK(std::abs(c->value(x0, 0.5, tau) - normal::upper_tail_mean(q->snap(tau))) < 0.12);
}

TEST_CASE("tail cdf limits and monotonicity") {
  const auto ds = homoskedastic(3000, 13, 1.0, 1.0);
  const auto f = fit_tail_cdf(ds, LearnerSpec{});
  const double lo = ds.y().minCoeff();
  const double hi = ds.y().maxCoeff();
  testutil::Gen g(14);
  for (int k = 0; k < 40; ++k) {
    Vec x(2);
    x << g.normal(), g.normal();
    const double t = g.uniform(0.0, 1.0);
    CHECK(f->value(x, t, lo - 1.0) == 0.0);
    CHECK(f->value(x, t, hi) == 1.0);
    CHECK(f->value(x, t, hi + 5.0) == 1.0);
    double prev = 0.0;
    for (double y = lo; y <= hi; y += (hi - lo) / 60.0) {
      const double v = f->value(x, t, y);
      CHECK(v >= prev - 1e-15);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
      prev = v;
    }
  }
  Vec x0 = Vec::Zero(2);
  CHECK(std::abs(f->value(x0, 0.5, 0.0) - 0.5) < 0.06);
}

TEST_CASE("bundle routing and requirements") {
  const auto ds = homoskedastic(1200, 15, 1.0, 1.0);
  RunConfig cfg;
  cfg.model = Model::rosenbaum;
  const auto r = assemble_bundle(ds, cfg);
  CHECK(r.density);
  CHECK(r.expectile);
  CHECK(r.tail_cdf);
  CHECK_FALSE(r.quantile);
  CHECK_NOTHROW(r.require(Model::rosenbaum));
  CHECK_THROWS_AS(r.require(Model::marginal), ConfigError);
  cfg.model = Model::marginal;
  cfg.nested_split = true;
  const auto m = builtin_factory()(ds, cfg, false);
  CHECK(m.quantile);
  CHECK(m.mean);
  CHECK(m.cvar);
  CHECK_NOTHROW(m.require(Model::marginal));
  CHECK_THROWS_AS(m.require(Model::rosenbaum), ConfigError);
  NuisanceBundle empty;
  CHECK_THROWS_AS(empty.require(Model::rosenbaum), ConfigError);
}

TEST_CASE("nested halves partition the rows") {
  testutil::Gen g(16);
  for (int trial = 0; trial < 50; ++trial) {
    const Index n = g.integer(2, 400);
    const auto seed = static_cast<std::uint64_t>(g.integer(0, 1 << 30));
    const auto [a, b] = nested_halves(n, seed);
    CHECK(static_cast<Index>(a.size()) == n / 2);
    CHECK(static_cast<Index>(a.size() + b.size()) == n);
    std::set<Index> all(a.begin(), a.end());
    all.insert(b.begin(), b.end());
    CHECK(static_cast<Index>(all.size()) == n);
    CHECK(*all.begin() == 0);
    CHECK(*all.rbegin() == n - 1);
    CHECK(nested_halves(n, seed) == std::make_pair(a, b));
  }
}

TEST_CASE("zeta at lambda one is the mean") {
  CHECK(zeta_from(1.3, 2.0, 1.0) == 1.3);
  CHECK(zeta_from(1.0, 1.5, 2.0) == doctest::Approx(0.5));
}
