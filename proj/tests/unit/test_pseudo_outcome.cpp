#include "dosebound/pseudo_outcome.hpp"
#include "dosebound/simulation.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <set>

using namespace dosebound;

namespace {

SensitivityFunction family(const char* name, double p) {
  return make_family(SensitivitySpec{name, {p}}, dgp_domain());
}

double exact_density(ConstVecRef x, double t) {
  const double a = dgp_shape(x);
  return truncated_beta_density(a, 1.0 - a, t);
}

}  // namespace

TEST_CASE("gauss-legendre rules") {
  const auto r = gauss_legendre(5, 0.0, 1.0);
  CHECK(r.weights.sum() == doctest::Approx(1.0).epsilon(1e-15));
  double cube = 0.0;
  double nine = 0.0;
  for (Index k = 0; k < 5; ++k) {
    cube += r.weights[k] * std::pow(r.nodes[k], 3);
    nine += r.weights[k] * std::pow(r.nodes[k], 9);
  }
  CHECK(cube == doctest::Approx(0.25).epsilon(1e-15));
  CHECK(nine == doctest::Approx(0.1).epsilon(1e-14));
  const auto s = make_gauss_legendre(16, ExposureDomain{0.0, 1.0});
  double sine = 0.0;
  for (Index k = 0; k < 16; ++k) sine += s.weights[k] * std::sin(std::numbers::pi * s.nodes[k]);
  CHECK(sine == doctest::Approx(2.0 / std::numbers::pi).epsilon(1e-14));
  // Nodes are symmetric about the midpoint and weights match.
  const auto w = gauss_legendre(7, -2.0, 4.0);
  for (Index k = 0; k < 7; ++k) {
    CHECK(w.nodes[k] + w.nodes[6 - k] == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(w.weights[k] == doctest::Approx(w.weights[6 - k]).epsilon(1e-13));
  }
  CHECK_THROWS_AS(gauss_legendre(0, 0.0, 1.0), ConfigError);
  CHECK_THROWS_AS(gauss_legendre(4, 1.0, 1.0), InputError);
  CHECK_THROWS_AS(make_gauss_legendre(4, ExposureDomain{0.0, 1.0}), ConfigError);
}

TEST_CASE("gauss-legendre is exact to degree 2n - 1") {
  testutil::Gen g(1);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = g.integer(1, 12);
    const double a = g.uniform(-3.0, 1.0);
    const double b = a + g.uniform(0.1, 4.0);
    const int deg = g.integer(0, 2 * n - 1);
    const auto r = gauss_legendre(n, a, b);
    double s = 0.0;
    for (Index k = 0; k < n; ++k) s += r.weights[k] * std::pow(r.nodes[k], deg);
    const double exact = (std::pow(b, deg + 1) - std::pow(a, deg + 1)) / (deg + 1);
    CHECK(s == doctest::Approx(exact).epsilon(1e-11).scale(1.0));
  }
}

TEST_CASE("sensitivity one reduces both pseudo-outcomes to the doubly robust form") {
  const auto ds = sample_dgp(DGPSpec{400, 3});
  const Dataset i2 = ds.subset(std::vector<Index>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19});
  const auto unit = family("constant", 1.0);
  for (Model model : {Model::rosenbaum, Model::marginal}) {
    const auto bundle = analytic_nuisances(model);
    PseudoOutcomeBuilder b(bundle, i2, unit, 64, model);
    for (Index i = 100; i < 160; ++i) {
      const Vec x = ds.x_row(i);
      const double t = ds.t()[i];
      const double y = ds.y()[i];
      double fbar = 0.0;
      double mbar = 0.0;
      for (Index j = 0; j < i2.size(); ++j) {
        fbar += exact_density(i2.x_row(j), t);
        mbar += dgp_mean(i2.x_row(j), t);
      }
      fbar /= static_cast<double>(i2.size());
      mbar /= static_cast<double>(i2.size());
      const double want = mbar + fbar / exact_density(x, t) * (y - dgp_mean(x, t));
      CHECK(std::abs(b.build(x, t, y).y_hat - want) <= 1e-8);
    }
  }
}

TEST_CASE("residual zero at sensitivity one leaves only the aggregate") {
  const auto ds = sample_dgp(DGPSpec{200, 4});
  const auto bundle = analytic_nuisances(Model::rosenbaum);
  PseudoOutcomeBuilder b(bundle, ds, family("constant", 1.0), 64, Model::rosenbaum);
  for (Index i = 0; i < 20; ++i) {
    const Vec x = ds.x_row(i);
    const double t = ds.t()[i];
    CHECK(std::abs(b.correction_term(x, t, dgp_mean(x, t))) < 1e-12);
    CHECK(b.build(x, t, dgp_mean(x, t)).y_hat == doctest::Approx(b.aggregate_term(t)).epsilon(1e-12));
  }
}

TEST_CASE("aggregate term averages the bound over the aggregation fold") {
  const auto ds = sample_dgp(DGPSpec{100, 5});
  const auto sf = family("exp_abs_diff", std::log(25.0));
  const auto bundle = analytic_nuisances(Model::rosenbaum);
  PseudoOutcomeBuilder b(bundle, ds, sf, 64, Model::rosenbaum);
  for (double t : {0.1, 0.45, 0.9}) {
    double direct = 0.0;
    for (Index j = 0; j < ds.size(); ++j) {
      const double g = sf(t, ds.t()[j]);
      direct += bundle.expectile->value(ds.x_row(j), t, 1.0 / (1.0 + g));
    }
    CHECK(b.aggregate_term(t) == doctest::Approx(direct / 100.0).epsilon(1e-12));
    CHECK(b.density_average(t) == doctest::Approx(marginal_density_average(bundle, ds, t)).epsilon(1e-14));
  }
}

TEST_CASE("panel edges are sorted and cover the domain") {
  const auto ds = sample_dgp(DGPSpec{100, 6});
  testutil::Gen g(7);
  for (Model model : {Model::rosenbaum, Model::marginal}) {
    const auto bundle = analytic_nuisances(model);
    PseudoOutcomeBuilder b(bundle, ds, family("exp_abs_diff", std::log(5.0)), 16, model);
    for (Index i = 0; i < 30; ++i) {
      const auto e = b.panel_edges(ds.x_row(i), ds.t()[i], ds.y()[i] + g.normal());
      CHECK(e.front() == dgp_domain().lo);
      CHECK(e.back() == dgp_domain().hi);
      CHECK(std::is_sorted(e.begin(), e.end()));
      CHECK(std::adjacent_find(e.begin(), e.end()) == e.end());
    }
  }
}

TEST_CASE("doubling the nodes moves pseudo-outcomes by less than 1e-6") {
  const auto ds = sample_dgp(DGPSpec{600, 8});
  RunConfig cfg;
  const Dataset i2 = ds.subset(std::vector<Index>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  std::vector<Index> fit_rows;
  for (Index i = 200; i < 600; ++i) fit_rows.push_back(i);
  const Dataset i3 = ds.subset(fit_rows);
  for (Model model : {Model::rosenbaum, Model::marginal}) {
    cfg.model = model;
    const auto sf = model == Model::rosenbaum ? family("exp_abs_diff", std::log(25.0)) : family("exp_abs_diff", std::log(5.0));
    for (const auto& bundle : {analytic_nuisances(model), assemble_bundle(i3, cfg)}) {
      PseudoOutcomeBuilder b64(bundle, i2, sf, 64, model);
      PseudoOutcomeBuilder b128(bundle, i2, sf, 128, model);
      double worst = 0.0;
      for (Index i = 20; i < 120; ++i) {
        const double a = b64.build(ds.x_row(i), ds.t()[i], ds.y()[i]).y_hat;
        const double c = b128.build(ds.x_row(i), ds.t()[i], ds.y()[i]).y_hat;
        worst = std::max(worst, std::abs(a - c));
      }
      CHECK(worst < 1e-6);
    }
  }
}

TEST_CASE("aggregate decreases with the sensitivity and marginal sits below rosenbaum") {
  const auto ds = sample_dgp(DGPSpec{100, 9});
  const auto br = analytic_nuisances(Model::rosenbaum);
  const auto bm = analytic_nuisances(Model::marginal);
  testutil::Gen g(10);
  for (int trial = 0; trial < 20; ++trial) {
    const double a = g.uniform(0.0, 3.0);
    const double c = a + g.uniform(0.05, 1.0);
    const double t = g.uniform(0.05, 0.95);
    PseudoOutcomeBuilder ra(br, ds, family("exp_abs_diff", a), 16, Model::rosenbaum);
    PseudoOutcomeBuilder rc(br, ds, family("exp_abs_diff", c), 16, Model::rosenbaum);
    PseudoOutcomeBuilder ma(bm, ds, family("exp_abs_diff", a), 16, Model::marginal);
    PseudoOutcomeBuilder mc(bm, ds, family("exp_abs_diff", c), 16, Model::marginal);
    CHECK(rc.aggregate_term(t) <= ra.aggregate_term(t) + 1e-12);
    CHECK(mc.aggregate_term(t) <= ma.aggregate_term(t) + 1e-12);
    CHECK(ma.aggregate_term(t) <= ra.aggregate_term(t) + 1e-12);
  }
}

TEST_CASE("build_all with cross-fitting yields one set per ordered fold pair") {
  const auto ds = sample_dgp(DGPSpec{900, 11});
  RunConfig cfg;
  cfg.model = Model::rosenbaum;
  cfg.sensitivity = SensitivitySpec{"exp_abs_diff", {std::log(25.0)}};
  cfg.cross_fit = true;
  cfg.folds = 3;
  cfg.quadrature_nodes = 16;
  const auto plan = make_fold_plan(ds.size(), 3, 12, true);
  const auto sets = build_all(ds, plan, cfg, analytic_factory());
  REQUIRE(sets.size() == 6);
  std::set<std::pair<int, int>> pairs;
  for (const auto& s : sets) {
    pairs.insert({s.roles.i2_fold, s.roles.i3_fold});
    CHECK(s.roles.i2_fold != s.roles.i3_fold);
    CHECK(s.samples.size() == s.rows.size());
    CHECK(s.diagnostics.rows == static_cast<Index>(s.rows.size()));
    for (Index r : s.rows) {
      const int f = plan.assignment[static_cast<std::size_t>(r)];
      CHECK(f != s.roles.i2_fold);
      CHECK(f != s.roles.i3_fold);
    }
  }
  CHECK(pairs.size() == 6);
  const auto again = build_all(ds, plan, cfg, analytic_factory());
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (std::size_t k = 0; k < sets[s].samples.size(); ++k) CHECK(again[s].samples[k].y_hat == sets[s].samples[k].y_hat);
  }
  const auto wrong = make_fold_plan(ds.size() - 1, 3, 12, true);
  CHECK_THROWS_AS(build_all(ds, wrong, cfg, analytic_factory()), ConfigError);
}
