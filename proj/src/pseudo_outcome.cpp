#include "dosebound/pseudo_outcome.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>

namespace dosebound {

QuadratureRule gauss_legendre(int n, double a, double b) {
  if (n < 1) throw ConfigError("quadrature needs at least one node");
  if (!(b > a)) throw InputError("quadrature interval must satisfy a < b");
  QuadratureRule q;
  q.nodes.resize(n);
  q.weights.resize(n);
  const double mid = 0.5 * (a + b);
  const double half = 0.5 * (b - a);
  for (int i = 0; i < (n + 1) / 2; ++i) {
    double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int iter = 0; iter < 100; ++iter) {
      double p0 = 1.0;
      double p1 = z;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (z * p1 - p0) / (z * z - 1.0);
      const double dz = p1 / dp;
      z -= dz;
      if (std::abs(dz) < 1e-16) break;
    }
    // Recompute the derivative at the converged root.
    double p0 = 1.0;
    double p1 = z;
    for (int k = 2; k <= n; ++k) {
      const double p2 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p0) / k;
      p0 = p1;
      p1 = p2;
    }
    dp = n * (z * p1 - p0) / (z * z - 1.0);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    q.nodes[i] = mid - half * z;
    q.nodes[n - 1 - i] = mid + half * z;
    q.weights[i] = half * w;
    q.weights[n - 1 - i] = half * w;
  }
  if (n % 2 == 1) q.nodes[n / 2] = mid;
  return q;
}

QuadratureRule make_gauss_legendre(int n, const ExposureDomain& domain) {
  if (n < 8) throw ConfigError("quadrature needs at least 8 nodes");
  return gauss_legendre(n, domain.lo, domain.hi);
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> gammas_from_levels(const std::vector<double>& taus) {
  std::vector<double> g;
  for (double s : taus) {
    const double v = 1.0 / s - 1.0;
    if (v > 1.0 && std::isfinite(v)) g.push_back(std::log(v));
  }
  std::sort(g.begin(), g.end());
  return g;
}

}  // namespace

PseudoOutcomeBuilder::PseudoOutcomeBuilder(const NuisanceBundle& bundle, const Dataset& i2, SensitivityFunction sf,
                                           int nodes, Model model)
    : bundle_(bundle),
      i2_x_(i2.x()),
      i2_t_(i2.t()),
      sf_(std::move(sf)),
      unit_(gauss_legendre(nodes, 0.0, 1.0)),
      model_(model) {
  if (nodes < 8) throw ConfigError("quadrature needs at least 8 nodes");
  if (i2.size() == 0) throw InputError("aggregation fold is empty");
  bundle_.require(model);
  avg_ = bundle_.density->average_over(i2_x_);
  if (model == Model::rosenbaum) {
    rows_a_ = bundle_.expectile->bind(i2_x_);
    switch_gammas_ = gammas_from_levels(bundle_.expectile->switch_levels());
  } else {
    rows_a_ = bundle_.cvar->bind(i2_x_);
    rows_m_ = bundle_.mean->bind(i2_x_);
    auto lv = bundle_.quantile->switch_levels();
    const auto lc = bundle_.cvar->switch_levels();
    lv.insert(lv.end(), lc.begin(), lc.end());
    switch_gammas_ = gammas_from_levels(lv);
    switch_gammas_.erase(std::unique(switch_gammas_.begin(), switch_gammas_.end()), switch_gammas_.end());
  }
}

double PseudoOutcomeBuilder::aggregate_term(double t) {
  if (has_cache_ && cached_t_ == t) return cached_value_;
  const Index m = i2_t_.size();
  std::vector<double> taus(static_cast<std::size_t>(m));
  std::vector<double> lambdas(static_cast<std::size_t>(m));
  for (Index j = 0; j < m; ++j) {
    const double g = sf_(t, i2_t_[j]);
    lambdas[static_cast<std::size_t>(j)] = g;
    taus[static_cast<std::size_t>(j)] = 1.0 / (1.0 + g);
  }
  std::vector<double> a(static_cast<std::size_t>(m));
  rows_a_->values(t, taus, a);
  double s = 0.0;
  if (model_ == Model::rosenbaum) {
    for (double v : a) s += v;
  } else {
    std::vector<double> mv(static_cast<std::size_t>(m));
    rows_m_->values(t, taus, mv);
    for (std::size_t j = 0; j < a.size(); ++j) s += zeta_from(mv[j], a[j], lambdas[j]);
  }
  cached_t_ = t;
  cached_value_ = s / static_cast<double>(m);
  has_cache_ = true;
  return cached_value_;
}

std::vector<double> PseudoOutcomeBuilder::panel_edges(ConstVecRef x, double t, double y) const {
  const auto& dom = sf_.domain();
  std::vector<double> levels = switch_gammas_;
  const LevelSurface& surf = model_ == Model::rosenbaum ? *bundle_.expectile : *bundle_.quantile;
  if (auto c = surf.crossing_level(x, t, y)) {
    const double g = 1.0 / *c - 1.0;
    if (g > 1.0 && std::isfinite(g)) levels.push_back(std::log(g));
  }
  std::sort(levels.begin(), levels.end());

  std::vector<double> edges{dom.lo, dom.hi};
  for (double b : bundle_.density->breakpoints()) {
    if (b > dom.lo && b < dom.hi) edges.push_back(b);
  }
  std::vector<double> splits = sf_.kinks(t);
  if (sf_.family() == Family::exp_abs_sq_diff && dom.lo < 0.0 && dom.hi > 0.0) splits.push_back(0.0);
  edges.insert(edges.end(), splits.begin(), splits.end());

  if (!levels.empty()) {
    // Scan cells for crossings of log Gamma(t, .) through each level. Cells
    // also break at the kinks so log Gamma is monotone on each of them.
    std::vector<double> cells{dom.lo, dom.hi};
    cells.insert(cells.end(), splits.begin(), splits.end());
    constexpr int kCells = 512;
    for (int c = 1; c < kCells; ++c) cells.push_back(dom.lo + dom.width() * c / kCells);
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    double ha = sf_.log_value(t, cells.front());
    for (std::size_t c = 0; c + 1 < cells.size(); ++c) {
      const double a = cells[c];
      const double b = cells[c + 1];
      const double hb = sf_.log_value(t, b);
      const double lo = std::min(ha, hb);
      const double hi = std::max(ha, hb);
      auto it = std::upper_bound(levels.begin(), levels.end(), lo);
      for (; it != levels.end() && *it < hi; ++it) {
        const double level = *it;
        double l = a;
        double r = b;
        const bool rising = hb > ha;
        for (int iter = 0; iter < 200 && r - l > 0.0; ++iter) {
          const double m = 0.5 * (l + r);
          if (m <= l || m >= r) break;
          const bool above = sf_.log_value(t, m) > level;
          if (above == rising) {
            r = m;
          } else {
            l = m;
          }
        }
        edges.push_back(0.5 * (l + r));
      }
      ha = hb;
    }
  }
  std::sort(edges.begin(), edges.end());
  std::vector<double> out;
  const double tol = 1e-14 * dom.width();
  for (double e : edges) {
    if (out.empty() || e - out.back() > tol) out.push_back(e);
  }
  if (out.back() != dom.hi) out.back() = dom.hi;
  return out;
}

double PseudoOutcomeBuilder::correction_term(ConstVecRef x, double t, double y) {
  const auto edges = panel_edges(x, t, y);
  const Index n = unit_.nodes.size();
  const std::size_t panels = edges.size() - 1;
  std::vector<double> nodes;
  std::vector<double> weights;
  nodes.reserve(panels * static_cast<std::size_t>(n));
  weights.reserve(panels * static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < panels; ++p) {
    const double a = edges[p];
    const double w = edges[p + 1] - a;
    for (Index k = 0; k < n; ++k) {
      nodes.push_back(a + w * unit_.nodes[k]);
      weights.push_back(w * unit_.weights[k]);
    }
  }
  std::vector<double> dens(nodes.size());
  bundle_.density->evaluate(x, nodes, dens);
  panel_sum_ += static_cast<double>(panels);

  // Memo keyed on the snapped level; exact surfaces re-evaluate every node.
  struct Memo {
    double key = std::numeric_limits<double>::quiet_NaN();
    double a = 0.0;
    double b = 0.0;
  } memo;
  const double mean = model_ == Model::marginal ? bundle_.mean->value(x, t) : 0.0;
  const bool snapping = !switch_gammas_.empty();
  double acc = 0.0;
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const double g = sf_(t, nodes[k]);
    const double tau = 1.0 / (1.0 + g);
    double val = 0.0;
    if (model_ == Model::rosenbaum) {
      const auto& s = *bundle_.expectile;
      const double key = s.snap(tau);
      diag_.max_snap_distance = std::max(diag_.max_snap_distance, std::abs(key - tau));
      double theta;
      double cdf;
      if (snapping && key == memo.key) {
        theta = memo.a;
        cdf = memo.b;
      } else {
        theta = s.value(x, t, tau);
        cdf = bundle_.tail_cdf->value(x, t, theta);
        memo = {key, theta, cdf};
      }
      const double r = y - theta;
      const double psi = r > 0.0 ? r : g * r;
      const double nu = 1.0 + (g - 1.0) * cdf;
      val = psi / nu;
    } else {
      const auto& s = *bundle_.quantile;
      const double key = s.snap(tau);
      diag_.max_snap_distance = std::max(diag_.max_snap_distance, std::abs(key - tau));
      double q;
      double c;
      if (snapping && key == memo.key) {
        q = memo.a;
        c = memo.b;
      } else {
        q = s.value(x, t, tau);
        c = bundle_.cvar->value(x, t, tau);
        memo = {key, q, c};
      }
      const double r = y - q;
      const double rho = r > 0.0 ? r / g : g * r;
      val = rho + q - zeta_from(mean, c, g);
    }
    acc += weights[k] * val * dens[k];
  }
  return acc;
}

PseudoOutcomeSample PseudoOutcomeBuilder::build(ConstVecRef x, double t, double y) {
  const double f_cond = bundle_.density->value(x, t);
  const double fl = bundle_.density->floor();
  if (!(f_cond > 0.0) || (fl > 0.0 && f_cond < fl * (1.0 - 1e-12))) {
    throw NumericError("conditional density " + std::to_string(f_cond) + " below the floor at t=" + std::to_string(t));
  }
  const double ratio = density_average(t) / f_cond;
  const double value = aggregate_term(t) + ratio * correction_term(x, t, y);
  ++diag_.rows;
  ratio_sum_ += ratio;
  diag_.max_ratio = std::max(diag_.max_ratio, ratio);
  diag_.mean_ratio = ratio_sum_ / static_cast<double>(diag_.rows);
  diag_.mean_panels = panel_sum_ / static_cast<double>(diag_.rows);
  if (!std::isfinite(value)) throw NumericError("non-finite pseudo-outcome at t=" + std::to_string(t));
  return {t, value, model_};
}

double marginal_density_average(const NuisanceBundle& bundle, const Dataset& i2, double t) {
  if (i2.size() == 0) throw InputError("aggregation fold is empty");
  if (!bundle.density) throw ConfigError("bundle is missing the conditional density");
  return (*bundle.density->average_over(i2.x()))(t);
}

PseudoOutcomeSample build_rosenbaum_pseudo(ConstVecRef x, double t, double y, const NuisanceBundle& bundle,
                                           const Dataset& i2, const SensitivityFunction& sf, int nodes) {
  PseudoOutcomeBuilder b(bundle, i2, sf, nodes, Model::rosenbaum);
  return b.build(x, t, y);
}

PseudoOutcomeSample build_marginal_pseudo(ConstVecRef x, double t, double y, const NuisanceBundle& bundle,
                                          const Dataset& i2, const SensitivityFunction& sf, int nodes) {
  PseudoOutcomeBuilder b(bundle, i2, sf, nodes, Model::marginal);
  return b.build(x, t, y);
}

std::vector<PseudoOutcomeSet> build_all(const Dataset& ds, const FoldPlan& plan, const RunConfig& cfg,
                                        const BundleFactory& factory, bool outcomes_negated) {
  if (plan.n != ds.size()) throw ConfigError("fold plan does not match the dataset size");
  const auto sf = make_family(cfg.sensitivity, ds.domain());
  std::vector<PseudoOutcomeSet> out;
  for (const auto& role : plan.roles) {
    const auto i1 = plan.rows_in(std::span<const int>(role.i1_folds));
    const auto i2 = ds.subset(plan.rows_in(role.i2_fold));
    const auto i3 = ds.subset(plan.rows_in(role.i3_fold));
    const NuisanceBundle bundle = factory(i3, cfg, outcomes_negated);
    PseudoOutcomeBuilder builder(bundle, i2, sf, cfg.quadrature_nodes, cfg.model);
    PseudoOutcomeSet set;
    set.roles = role;
    set.rows = i1;
    set.samples.reserve(i1.size());
    for (Index r : i1) set.samples.push_back(builder.build(ds.x_row(r), ds.t()[r], ds.y()[r]));
    set.diagnostics = builder.diagnostics();
    out.push_back(std::move(set));
  }
  return out;
}

void write_pseudo_csv(const std::vector<PseudoOutcomeSet>& sets, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "triple,row,t,y_hat\n";
  for (std::size_t s = 0; s < sets.size(); ++s) {
    for (std::size_t k = 0; k < sets[s].samples.size(); ++k) {
      out << s << ',' << sets[s].rows[k] << ',' << sets[s].samples[k].t << ',' << sets[s].samples[k].y_hat << '\n';
    }
  }
}

}  // namespace dosebound
