#include "dosebound/simulation.hpp"

#include "dosebound/normal.hpp"
#include "dosebound/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <mutex>
#include <numbers>
#include <random>
#include <sstream>
#include <thread>

namespace dosebound {

namespace {

constexpr double kClipLo = 0.01;
constexpr double kClipHi = 0.99;

double trig(double t) { return std::sin(std::numbers::pi * t) + std::sin(2.0 * std::numbers::pi * t); }

double linear_part(ConstVecRef x) { return 0.4 * x[0] + 0.2 * x[1] + 0.9 * x[2]; }

double logistic(double v) { return 1.0 / (1.0 + std::exp(-v)); }

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

void require_exposure(double t) {
  if (!(t > 0.0 && t < 1.0)) throw InputError("analytic nuisances need t in (0, 1), got " + std::to_string(t));
}

// Continued fraction for the incomplete beta (modified Lentz).
double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 1000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-16) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

// log of B(a, b) * P(0.01 <= Beta(a, b) <= 0.99).
double log_truncated_norm(double a, double b) {
  const double mass = incomplete_beta(a, b, kClipHi) - incomplete_beta(a, b, kClipLo);
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b) + std::log(mass);
}

// Covariate summaries the analytic surfaces need per row.
struct RowLaw {
  double lin = 0.0;    // 0.4 x1 + 0.2 x2 + 0.9 x3
  double scale = 1.0;  // 1 + x4^2
};

RowLaw row_law(ConstVecRef x) {
  if (x.size() < 4) throw InputError("the benchmark process has 4 covariates");
  return {linear_part(x), 1.0 + x[3] * x[3]};
}

std::vector<RowLaw> row_laws(const Mat& xs) {
  std::vector<RowLaw> out(static_cast<std::size_t>(xs.rows()));
  for (Index j = 0; j < xs.rows(); ++j) out[static_cast<std::size_t>(j)] = row_law(xs.row(j).transpose());
  return out;
}

// Conditional law of (+-)Y given (x, t): N(mu, sd^2).
struct Law {
  double mu;
  double sd;
};

Law law_of(const RowLaw& r, double t, double sign) { return {sign * (r.lin + trig(t)), std::sqrt(r.scale * (1.0 + t))}; }

// ---------------------------------------------------------------------------

class AnalyticDensityAverage final : public DensityAverage {
 public:
  explicit AnalyticDensityAverage(const Mat& xs) {
    shape_.resize(static_cast<std::size_t>(xs.rows()));
    log_norm_.resize(shape_.size());
    for (Index j = 0; j < xs.rows(); ++j) {
      const double a = dgp_shape(xs.row(j).transpose());
      shape_[static_cast<std::size_t>(j)] = a;
      log_norm_[static_cast<std::size_t>(j)] = log_truncated_norm(a, 1.0 - a);
    }
  }

  double operator()(double t) const override {
    require_exposure(t);
    if (t < kClipLo || t > kClipHi) return 0.0;
    const double lt = std::log(t);
    const double l1 = std::log1p(-t);
    double s = 0.0;
    for (std::size_t j = 0; j < shape_.size(); ++j) {
      const double a = shape_[j];
      s += std::exp((a - 1.0) * lt - a * l1 - log_norm_[j]);
    }
    return s / static_cast<double>(shape_.size());
  }

 private:
  std::vector<double> shape_;
  std::vector<double> log_norm_;
};

class AnalyticDensity final : public ConditionalDensity {
 public:
  double value(ConstVecRef x, double t) const override {
    require_exposure(t);
    const double a = dgp_shape(x);
    return truncated_beta_density(a, 1.0 - a, t);
  }

  void evaluate(ConstVecRef x, std::span<const double> ts, std::span<double> out) const override {
    const double a = dgp_shape(x);
    const double ln = log_truncated_norm(a, 1.0 - a);
    for (std::size_t k = 0; k < ts.size(); ++k) {
      const double t = ts[k];
      require_exposure(t);
      out[k] = (t < kClipLo || t > kClipHi) ? 0.0
                                            : std::exp((a - 1.0) * std::log(t) - a * std::log1p(-t) - ln);
    }
  }

  // The t^(a-1) and (1-t)^(-a) factors vary fastest near the ends.
  std::vector<double> breakpoints() const override {
    return {0.02, 0.04, 0.08, 0.16, 0.32, 0.68, 0.84, 0.92, 0.96, 0.98};
  }

  std::unique_ptr<DensityAverage> average_over(const Mat& xs) const override {
    return std::make_unique<AnalyticDensityAverage>(xs);
  }

  const ExposureDomain& domain() const override { return domain_; }

 private:
  ExposureDomain domain_ = dgp_domain();
};

enum class LevelKind { expectile, quantile, cvar };

double standard_level(LevelKind kind, double tau) {
  switch (kind) {
    case LevelKind::expectile:
      return normal::fast_expectile(tau);
    case LevelKind::quantile:
      return normal::fast_quantile(tau);
    case LevelKind::cvar:
      return normal::pdf(normal::fast_quantile(tau)) / (1.0 - tau);
  }
  return 0.0;
}

class AnalyticRows final : public BoundRows {
 public:
  AnalyticRows(const Mat& xs, LevelKind kind, double sign, bool mean_only)
      : rows_(row_laws(xs)), kind_(kind), sign_(sign), mean_only_(mean_only) {}

  void values(double t, std::span<const double> taus, std::span<double> out) const override {
    require_exposure(t);
    const double g = trig(t);
    for (std::size_t j = 0; j < rows_.size(); ++j) {
      const double mu = sign_ * (rows_[j].lin + g);
      out[j] = mean_only_ ? mu : mu + std::sqrt(rows_[j].scale * (1.0 + t)) * standard_level(kind_, taus[j]);
    }
  }

 private:
  std::vector<RowLaw> rows_;
  LevelKind kind_;
  double sign_;
  bool mean_only_;
};

class AnalyticLevel final : public LevelSurface {
 public:
  AnalyticLevel(LevelKind kind, double sign) : kind_(kind), sign_(sign) {}

  double value(ConstVecRef x, double t, double tau) const override {
    require_exposure(t);
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("level must lie in (0, 1)");
    const Law l = law_of(row_law(x), t, sign_);
    return l.mu + l.sd * standard_level(kind_, tau);
  }

  std::optional<double> crossing_level(ConstVecRef x, double t, double y) const override {
    const Law l = law_of(row_law(x), t, sign_);
    const double z = (y - l.mu) / l.sd;
    if (kind_ == LevelKind::expectile) {
      const double up = normal::upper_partial_moment(z);
      const double lo = normal::lower_partial_moment(z);
      return lo / (up + lo);
    }
    if (kind_ == LevelKind::quantile) return normal::cdf(z);
    return std::nullopt;
  }

  std::unique_ptr<BoundRows> bind(const Mat& xs) const override {
    return std::make_unique<AnalyticRows>(xs, kind_, sign_, false);
  }

 private:
  LevelKind kind_;
  double sign_;
};

class AnalyticTail final : public TailCdf {
 public:
  explicit AnalyticTail(double sign) : sign_(sign) {}
  double value(ConstVecRef x, double t, double y) const override {
    const Law l = law_of(row_law(x), t, sign_);
    return normal::cdf((y - l.mu) / l.sd);
  }

 private:
  double sign_;
};

class AnalyticMean final : public MeanSurface {
 public:
  explicit AnalyticMean(double sign) : sign_(sign) {}
  double value(ConstVecRef x, double t) const override { return law_of(row_law(x), t, sign_).mu; }
  std::unique_ptr<BoundRows> bind(const Mat& xs) const override {
    return std::make_unique<AnalyticRows>(xs, LevelKind::expectile, sign_, true);
  }

 private:
  double sign_;
};

// ---------------------------------------------------------------------------

CurveSummary summarize(const std::vector<const BoundCurve*>& curves, const std::vector<double>& truth, int side) {
  const std::size_t g = truth.size();
  const double r = static_cast<double>(curves.size());
  CurveSummary s;
  s.mean.assign(g, 0.0);
  s.sd.assign(g, 0.0);
  s.mean_se.assign(g, 0.0);
  s.coverage.assign(g, 0.0);
  for (std::size_t k = 0; k < g; ++k) {
    const Index i = static_cast<Index>(k);
    for (const auto* c : curves) {
      s.mean[k] += c->values[i];
      s.mean_se[k] += c->se[i];
      bool covered = false;
      if (side == 0) covered = c->ci_lo[i] <= truth[k] && truth[k] <= c->ci_hi[i];
      if (side < 0) covered = c->ci_lo[i] <= truth[k];
      if (side > 0) covered = c->ci_hi[i] >= truth[k];
      s.coverage[k] += covered ? 1.0 : 0.0;
    }
    s.mean[k] /= r;
    s.mean_se[k] /= r;
    s.coverage[k] /= r;
    double ss = 0.0;
    for (const auto* c : curves) ss += (c->values[i] - s.mean[k]) * (c->values[i] - s.mean[k]);
    s.sd[k] = curves.size() > 1 ? std::sqrt(ss / (r - 1.0)) : 0.0;
  }
  return s;
}

nlohmann::json summary_json(const CurveSummary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"mean_se", s.mean_se}, {"coverage", s.coverage}};
}

SensitivitySpec parse_spec(const nlohmann::json& j, SensitivitySpec out) {
  try {
    if (j.contains("family")) out.family = j.at("family").get<std::string>();
    if (j.contains("params")) out.params = j.at("params").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad sensitivity spec: ") + e.what());
  }
  parse_family(out.family);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

ExposureDomain dgp_domain() { return ExposureDomain{kClipLo, kClipHi}; }

double true_nuc_curve(double t) { return trig(t); }

double dgp_mean(ConstVecRef x, double t) { return linear_part(x) + trig(t); }

double dgp_sd(ConstVecRef x, double t) { return std::sqrt((1.0 + x[3] * x[3]) * (1.0 + t)); }

double dgp_shape(ConstVecRef x) {
  if (x.size() < 4) throw InputError("the benchmark process has 4 covariates");
  return logistic(0.2 * x[0] + 0.5 * x[1] + 0.7 * x[2]);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw InputError("incomplete beta needs positive shapes");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double lbt = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(lbt) * beta_cf(a, b, x) / a;
  return 1.0 - std::exp(lbt) * beta_cf(b, a, 1.0 - x) / b;
}

double truncated_beta_density(double a, double b, double t) {
  if (t < kClipLo || t > kClipHi) return 0.0;
  return std::exp((a - 1.0) * std::log(t) + (b - 1.0) * std::log1p(-t) - log_truncated_norm(a, b));
}

Dataset sample_dgp(const DGPSpec& spec) {
  if (spec.n < 100) throw ConfigError("simulation needs n >= 100");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(-0.5, 0.5);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Mat x(spec.n, 4);
  Vec t(spec.n);
  Vec y(spec.n);
  for (Index i = 0; i < spec.n; ++i) {
    for (int k = 0; k < 4; ++k) x(i, k) = unif(rng);
    const double a = dgp_shape(x.row(i).transpose());
    std::gamma_distribution<double> g1(a, 1.0);
    std::gamma_distribution<double> g2(1.0 - a, 1.0);
    double u = 0.0;
    double v = 0.0;
    do {
      u = g1(rng);
      v = g2(rng);
    } while (u + v == 0.0);
    const double ti = std::clamp(u / (u + v), kClipLo, kClipHi);
    t[i] = ti;
    y[i] = dgp_mean(x.row(i).transpose(), ti) + dgp_sd(x.row(i).transpose(), ti) * gauss(rng);
  }
  return Dataset(std::move(x), std::move(t), std::move(y), dgp_domain());
}

NuisanceBundle analytic_nuisances(Model model, bool outcomes_negated) {
  const double sign = outcomes_negated ? -1.0 : 1.0;
  NuisanceBundle b;
  b.model = model;
  b.density = std::make_shared<AnalyticDensity>();
  b.mean = std::make_shared<AnalyticMean>(sign);
  if (model == Model::rosenbaum) {
    b.expectile = std::make_shared<AnalyticLevel>(LevelKind::expectile, sign);
    b.tail_cdf = std::make_shared<AnalyticTail>(sign);
  } else {
    b.quantile = std::make_shared<AnalyticLevel>(LevelKind::quantile, sign);
    b.cvar = std::make_shared<AnalyticLevel>(LevelKind::cvar, sign);
  }
  return b;
}

BundleFactory analytic_factory() {
  return [](const Dataset& i3, const RunConfig& cfg, bool negated) {
    if (!(i3.domain() == dgp_domain())) throw ConfigError("analytic nuisances need the benchmark domain [0.01, 0.99]");
    return analytic_nuisances(cfg.model, negated);
  };
}

std::vector<double> true_bound_curve(Model model, Side side, const SensitivitySpec& sens,
                                     const std::vector<double>& grid, Index draws, std::uint64_t seed) {
  const Dataset ds = sample_dgp({std::max<Index>(draws, 100), seed});
  const auto sf = make_family(sens, ds.domain());
  const double sign = side == Side::upper ? -1.0 : 1.0;
  const auto rows = row_laws(ds.x());
  std::vector<double> out;
  for (double t : grid) {
    require_exposure(t);
    double s = 0.0;
    for (Index j = 0; j < ds.size(); ++j) {
      const double g = sf(t, ds.t()[j]);
      const double tau = 1.0 / (1.0 + g);
      const Law l = law_of(rows[static_cast<std::size_t>(j)], t, sign);
      double v = 0.0;
      if (model == Model::rosenbaum) {
        v = l.mu + l.sd * normal::expectile(tau);
      } else {
        v = zeta_from(l.mu, l.mu + l.sd * normal::upper_tail_mean(tau), g);
      }
      s += sign * v;
    }
    out.push_back(s / static_cast<double>(ds.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------

SimulationConfig parse_simulation_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  SimulationConfig cfg;
  cfg.run = parse_run_config(j);
  if (!j.contains("simulation")) return cfg;
  const auto& s = j.at("simulation");
  if (!s.is_object()) throw ConfigError("'simulation' must be an object");
  try {
    if (s.contains("reps")) cfg.reps = s.at("reps").get<int>();
    if (s.contains("n")) cfg.n = s.at("n").get<Index>();
    if (s.contains("threads")) cfg.threads = s.at("threads").get<int>();
    if (s.contains("analytic_nuisances")) cfg.analytic_nuisances = s.at("analytic_nuisances").get<bool>();
    if (s.contains("bounds")) cfg.bounds = s.at("bounds").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("bad simulation setting: ") + e.what());
  }
  if (s.contains("rosenbaum_sensitivity")) cfg.rosenbaum_sensitivity = parse_spec(s.at("rosenbaum_sensitivity"), cfg.rosenbaum_sensitivity);
  if (s.contains("marginal_sensitivity")) cfg.marginal_sensitivity = parse_spec(s.at("marginal_sensitivity"), cfg.marginal_sensitivity);
  return cfg;
}

SimulationConfig load_simulation_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_simulation_config(j);
}

std::uint64_t rep_seed(std::uint64_t seed, int rep) {
  return splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(rep));
}

ExperimentReport run_experiment(const SimulationConfig& cfg, const std::function<void(int)>& on_rep_done) {
  if (cfg.reps < 1) throw ConfigError("reps must be >= 1");
  if (cfg.n < 100) throw ConfigError("simulation needs n >= 100");
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
  cfg.run.validate();
  const auto start = std::chrono::steady_clock::now();
  const BundleFactory factory = cfg.analytic_nuisances ? analytic_factory() : builtin_factory();

  ExperimentReport rep;
  rep.reps = cfg.reps;
  rep.n = cfg.n;
  rep.bounds = cfg.bounds;
  rep.grid = cfg.run.grid;
  for (double t : rep.grid) rep.truth.push_back(true_nuc_curve(t));
  rep.curves.resize(static_cast<std::size_t>(cfg.reps));
  std::vector<double> clipped(static_cast<std::size_t>(cfg.reps), 0.0);

  auto one = [&](int r) {
    const std::uint64_t seed = rep_seed(cfg.run.seed, r);
    const Dataset ds = sample_dgp({cfg.n, seed});
    Index c = 0;
    for (Index i = 0; i < ds.size(); ++i) c += (ds.t()[i] == kClipLo || ds.t()[i] == kClipHi) ? 1 : 0;
    clipped[static_cast<std::size_t>(r)] = static_cast<double>(c) / static_cast<double>(ds.size());

    RunConfig base = cfg.run;
    base.seed = seed;
    base.domain = dgp_domain();
    auto run = [&](Model m, Side s, const SensitivitySpec& sens) {
      RunConfig rc = base;
      rc.model = m;
      rc.side = s;
      rc.sensitivity = sens;
      return estimate_bound_curve(ds, rc, factory).curve;
    };
    RepCurves& out = rep.curves[static_cast<std::size_t>(r)];
    out.nuc = run(Model::rosenbaum, Side::lower, SensitivitySpec{"constant", {1.0}});
    if (cfg.bounds) {
      out.rosenbaum_lower = run(Model::rosenbaum, Side::lower, cfg.rosenbaum_sensitivity);
      out.rosenbaum_upper = run(Model::rosenbaum, Side::upper, cfg.rosenbaum_sensitivity);
      out.marginal_lower = run(Model::marginal, Side::lower, cfg.marginal_sensitivity);
      out.marginal_upper = run(Model::marginal, Side::upper, cfg.marginal_sensitivity);
    }
  };

  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const int r = next.fetch_add(1);
      if (r >= cfg.reps) return;
      {
        std::lock_guard<std::mutex> lock(mu);
        if (failure) return;
      }
      try {
        one(r);
        if (on_rep_done) {
          std::lock_guard<std::mutex> lock(mu);
          on_rep_done(r);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int workers = std::min(cfg.threads, cfg.reps);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);

  auto collect = [&](BoundCurve RepCurves::*member) {
    std::vector<const BoundCurve*> v;
    for (const auto& c : rep.curves) v.push_back(&(c.*member));
    return v;
  };
  rep.nuc = summarize(collect(&RepCurves::nuc), rep.truth, 0);
  const std::size_t g = rep.grid.size();
  rep.mean_abs_bias.resize(g);
  for (std::size_t k = 0; k < g; ++k) rep.mean_abs_bias[k] = std::abs(rep.nuc.mean[k] - rep.truth[k]);
  if (cfg.bounds) {
    rep.rosenbaum_lower = summarize(collect(&RepCurves::rosenbaum_lower), rep.truth, -1);
    rep.rosenbaum_upper = summarize(collect(&RepCurves::rosenbaum_upper), rep.truth, 1);
    rep.marginal_lower = summarize(collect(&RepCurves::marginal_lower), rep.truth, -1);
    rep.marginal_upper = summarize(collect(&RepCurves::marginal_upper), rep.truth, 1);
    rep.bracket_rosenbaum.assign(g, 0.0);
    rep.bracket_marginal.assign(g, 0.0);
    double all_r = 0.0;
    double all_m = 0.0;
    for (const auto& c : rep.curves) {
      bool ok_r = true;
      bool ok_m = true;
      for (std::size_t k = 0; k < g; ++k) {
        const Index i = static_cast<Index>(k);
        const bool br = c.rosenbaum_lower.values[i] <= rep.truth[k] && rep.truth[k] <= c.rosenbaum_upper.values[i];
        const bool bm = c.marginal_lower.values[i] <= rep.truth[k] && rep.truth[k] <= c.marginal_upper.values[i];
        rep.bracket_rosenbaum[k] += br ? 1.0 : 0.0;
        rep.bracket_marginal[k] += bm ? 1.0 : 0.0;
        ok_r = ok_r && br;
        ok_m = ok_m && bm;
      }
      all_r += ok_r ? 1.0 : 0.0;
      all_m += ok_m ? 1.0 : 0.0;
    }
    for (std::size_t k = 0; k < g; ++k) {
      rep.bracket_rosenbaum[k] /= cfg.reps;
      rep.bracket_marginal[k] /= cfg.reps;
    }
    rep.bracket_all_rosenbaum = all_r / cfg.reps;
    rep.bracket_all_marginal = all_m / cfg.reps;
  }
  double cs = 0.0;
  for (double v : clipped) cs += v;
  rep.clipped_share = cs / cfg.reps;
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

// ---------------------------------------------------------------------------

nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["reps"] = r.reps;
  j["n"] = r.n;
  j["grid"] = r.grid;
  j["truth"] = r.truth;
  j["nuc"] = summary_json(r.nuc);
  j["nuc"]["abs_bias"] = r.mean_abs_bias;
  if (r.bounds) {
    j["rosenbaum"] = {{"lower", summary_json(r.rosenbaum_lower)},
                      {"upper", summary_json(r.rosenbaum_upper)},
                      {"bracket", r.bracket_rosenbaum},
                      {"bracket_all", r.bracket_all_rosenbaum}};
    j["marginal"] = {{"lower", summary_json(r.marginal_lower)},
                     {"upper", summary_json(r.marginal_upper)},
                     {"bracket", r.bracket_marginal},
                     {"bracket_all", r.bracket_all_marginal}};
  }
  j["clipped_share"] = r.clipped_share;
  j["seconds"] = r.seconds;
  return j;
}

void write_curves_csv(const ExperimentReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "rep,t,model,estimate,se,lo,hi\n";
  for (std::size_t k = 0; k < r.curves.size(); ++k) {
    const auto& c = r.curves[k];
    for (std::size_t g = 0; g < r.grid.size(); ++g) {
      const Index i = static_cast<Index>(g);
      out << k << ',' << r.grid[g] << ",nuc," << c.nuc.values[i] << ',' << c.nuc.se[i] << ',' << c.nuc.ci_lo[i]
          << ',' << c.nuc.ci_hi[i] << '\n';
      if (!r.bounds) continue;
      const auto bound_row = [&](const char* name, const BoundCurve& lo, const BoundCurve& hi) {
        // estimate: bound midpoint; se: the larger of the two.
        out << k << ',' << r.grid[g] << ',' << name << ',' << 0.5 * (lo.values[i] + hi.values[i]) << ','
            << std::max(lo.se[i], hi.se[i]) << ',' << lo.values[i] << ',' << hi.values[i] << '\n';
      };
      bound_row("rosenbaum", c.rosenbaum_lower, c.rosenbaum_upper);
      bound_row("marginal", c.marginal_lower, c.marginal_upper);
    }
  }
}

void write_summary(const ExperimentReport& r, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::fixed << std::setprecision(4);
  out << "reps " << r.reps << "  n " << r.n << "  clipped exposure share " << r.clipped_share << "\n\n";
  out << "NUC curve\n";
  out << "     t     truth      mean        sd   mean_se  coverage  abs_bias\n";
  for (std::size_t k = 0; k < r.grid.size(); ++k) {
    out << std::setw(6) << r.grid[k] << std::setw(10) << r.truth[k] << std::setw(10) << r.nuc.mean[k] << std::setw(10)
        << r.nuc.sd[k] << std::setw(10) << r.nuc.mean_se[k] << std::setw(10) << r.nuc.coverage[k] << std::setw(10)
        << r.mean_abs_bias[k] << '\n';
  }
  if (!r.bounds) return;
  const auto table = [&](const char* name, const CurveSummary& lo, const CurveSummary& hi,
                         const std::vector<double>& bracket, double all) {
    out << '\n' << name << " bounds (bracket at every point in " << all << " of reps)\n";
    out << "     t  lower_mean  upper_mean    lower_sd    upper_sd     bracket\n";
    for (std::size_t k = 0; k < r.grid.size(); ++k) {
      out << std::setw(6) << r.grid[k] << std::setw(12) << lo.mean[k] << std::setw(12) << hi.mean[k] << std::setw(12)
          << lo.sd[k] << std::setw(12) << hi.sd[k] << std::setw(12) << bracket[k] << '\n';
    }
  };
  table("Rosenbaum", r.rosenbaum_lower, r.rosenbaum_upper, r.bracket_rosenbaum, r.bracket_all_rosenbaum);
  table("Marginal", r.marginal_lower, r.marginal_upper, r.bracket_marginal, r.bracket_all_marginal);
}

}  // namespace dosebound
