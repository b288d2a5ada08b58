#include "dosebound/pipeline.hpp"
#include "dosebound/simulation.hpp"

#include <doctest.h>

#include <cmath>

using namespace dosebound;

namespace {

RunConfig base(Model m, Side s, double rate) {
  RunConfig cfg;
  cfg.model = m;
  cfg.side = s;
  cfg.sensitivity = SensitivitySpec{"exp_abs_diff", {rate}};
  cfg.domain = dgp_domain();
  cfg.seed = 17;
  cfg.quadrature_nodes = 32;
  return cfg;
}

double max_diff(const Vec& a, const Vec& b) { return (a - b).cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("upper bound is the negated lower bound of the negated outcomes") {
  const auto ds = sample_dgp(DGPSpec{600, 1});
  const auto neg = negate_outcomes(ds);
  for (Model m : {Model::rosenbaum, Model::marginal}) {
    const auto up = estimate_bound_curve(ds, base(m, Side::upper, 1.0));
    const auto lo_neg = estimate_bound_curve(neg, base(m, Side::lower, 1.0));
    CHECK(max_diff(up.curve.values, -lo_neg.curve.values) <= 1e-10);
    CHECK(max_diff(up.curve.ci_hi, -lo_neg.curve.ci_lo) <= 1e-10);
    CHECK(max_diff(up.curve.se, lo_neg.curve.se) <= 1e-10);
    // Pseudo-outcomes are reported on the original scale.
    REQUIRE(up.pseudo.size() == lo_neg.pseudo.size());
    for (std::size_t k = 0; k < up.pseudo[0].samples.size(); ++k) {
      CHECK(up.pseudo[0].samples[k].y_hat == doctest::Approx(-lo_neg.pseudo[0].samples[k].y_hat).epsilon(1e-12));
    }
  }
}

TEST_CASE("with exact nuisances all bounds collapse at sensitivity one") {
  const auto ds = sample_dgp(DGPSpec{500, 2});
  auto cfg = base(Model::rosenbaum, Side::lower, 0.0);
  const auto r_lo = estimate_bound_curve(ds, cfg, analytic_factory());
  cfg.side = Side::upper;
  const auto r_hi = estimate_bound_curve(ds, cfg, analytic_factory());
  cfg.model = Model::marginal;
  const auto m_hi = estimate_bound_curve(ds, cfg, analytic_factory());
  cfg.side = Side::lower;
  const auto m_lo = estimate_bound_curve(ds, cfg, analytic_factory());
  CHECK(max_diff(r_lo.curve.values, r_hi.curve.values) <= 1e-8);
  CHECK(max_diff(r_lo.curve.values, m_lo.curve.values) <= 1e-8);
  CHECK(max_diff(m_lo.curve.values, m_hi.curve.values) <= 1e-8);
}

TEST_CASE("bounds open up around the point estimate") {
  const auto ds = sample_dgp(DGPSpec{1500, 3});
  const auto nuc = estimate_bound_curve(ds, base(Model::rosenbaum, Side::lower, 0.0), analytic_factory());
  for (Model m : {Model::rosenbaum, Model::marginal}) {
    const double rate = m == Model::rosenbaum ? std::log(25.0) : std::log(5.0);
    const auto lo = estimate_bound_curve(ds, base(m, Side::lower, rate), analytic_factory());
    const auto hi = estimate_bound_curve(ds, base(m, Side::upper, rate), analytic_factory());
    for (Index k = 0; k < nuc.curve.values.size(); ++k) {
      CHECK(lo.curve.values[k] < nuc.curve.values[k]);
      CHECK(hi.curve.values[k] > nuc.curve.values[k]);
    }
  }
}

TEST_CASE("cross-fitting averages one curve per ordered fold pair") {
  const auto ds = sample_dgp(DGPSpec{900, 4});
  auto cfg = base(Model::rosenbaum, Side::lower, std::log(25.0));
  cfg.cross_fit = true;
  const auto r = estimate_bound_curve(ds, cfg, analytic_factory());
  REQUIRE(r.per_triple.size() == 6);
  REQUIRE(r.pseudo.size() == 6);
  Vec mean = Vec::Zero(r.curve.values.size());
  Vec se = Vec::Zero(r.curve.values.size());
  for (const auto& c : r.per_triple) {
    mean += c.values / 6.0;
    se += c.se / 6.0;
  }
  CHECK(max_diff(mean, r.curve.values) < 1e-12);
  CHECK(max_diff(se, r.curve.se) < 1e-12);
  CHECK(r.basis_condition > 1.0);
}

TEST_CASE("the half allocation puts half of the rows in the nuisance fold") {
  const auto ds = sample_dgp(DGPSpec{400, 5});
  auto cfg = base(Model::marginal, Side::lower, std::log(5.0));
  cfg.allocation = "half";
  const auto r = estimate_bound_curve(ds, cfg);
  REQUIRE(r.pseudo.size() == 1);
  CHECK(r.pseudo[0].rows.size() == 100);
  CHECK(r.curve.n_used == 100);
}

TEST_CASE("reruns are bit-identical") {
  const auto ds = sample_dgp(DGPSpec{600, 6});
  const auto cfg = base(Model::rosenbaum, Side::upper, std::log(25.0));
  const auto a = estimate_bound_curve(ds, cfg);
  const auto b = estimate_bound_curve(ds, cfg);
  CHECK((a.curve.values - b.curve.values).norm() == 0.0);
  CHECK((a.curve.se - b.curve.se).norm() == 0.0);
}
