#ifndef DOSEBOUND_NUISANCE_HPP_
#define DOSEBOUND_NUISANCE_HPP_

// Nuisance evaluators used by the pseudo-outcomes, plus the built-in
// penalized sieve learners that fit them on the nuisance fold.

#include "dosebound/config.hpp"
#include "dosebound/core_data.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace dosebound {

/// Pool-adjacent-violators, equal weights, in place. Result is nondecreasing.
void isotonic_repair(std::span<double> v);

/// Legendre polynomials P_0..P_degree at u in [-1, 1].
void legendre_values(double u, int degree, double* out);

/// Kronecker features phi_x(x) (x) phi_t(t): standardized total-degree
/// monomials of x, Legendre polynomials of t on the domain. Feature 0 is the
/// constant.
class TensorFeatures {
 public:
  TensorFeatures() = default;
  TensorFeatures(const Mat& x_train, ExposureDomain domain, int x_degree, int t_degree);

  Index x_size() const { return static_cast<Index>(exponents_.size()); }
  Index t_size() const { return t_degree_ + 1; }
  Index size() const { return x_size() * t_size(); }

  void x_part(ConstVecRef x, double* out) const;
  void t_part(double t, double* out) const;
  Vec operator()(ConstVecRef x, double t) const;

  /// Row i holds the features of (x.row(i), t[i]).
  Mat design(const Mat& x, const Vec& t) const;
  Mat x_design(const Mat& x) const;

 private:
  Vec center_;
  Vec scale_;
  std::vector<std::vector<int>> exponents_;
  ExposureDomain domain_;
  int t_degree_ = 0;
  int max_degree_ = 0;
};

// ---------------------------------------------------------------------------
// Evaluator interfaces

/// t -> (1/m) sum_j f(t | x_j) for a fixed covariate sample.
class DensityAverage {
 public:
  virtual ~DensityAverage() = default;
  virtual double operator()(double t) const = 0;
};

class ConditionalDensity {
 public:
  virtual ~ConditionalDensity() = default;
  virtual double value(ConstVecRef x, double t) const = 0;
  virtual void evaluate(ConstVecRef x, std::span<const double> ts, std::span<double> out) const;
  /// Points where f(. | x) may fail to be smooth.
  virtual std::vector<double> breakpoints() const { return {}; }
  virtual std::unique_ptr<DensityAverage> average_over(const Mat& xs) const;
  virtual double floor() const { return 0.0; }
  virtual const ExposureDomain& domain() const = 0;
};

/// Values of a surface at rows x_j of a fixed covariate sample, all at one
/// exposure t, each at its own level tau_j.
class BoundRows {
 public:
  virtual ~BoundRows() = default;
  virtual void values(double t, std::span<const double> taus, std::span<double> out) const = 0;
};

/// A tau-indexed surface s(x, t, tau): expectile, quantile or tail mean.
class LevelSurface {
 public:
  virtual ~LevelSurface() = default;
  virtual double value(ConstVecRef x, double t, double tau) const = 0;
  /// Level actually used for a requested tau; identity for exact surfaces.
  virtual double snap(double tau) const { return tau; }
  /// Requested levels where snap() jumps, ascending.
  virtual std::vector<double> switch_levels() const { return {}; }
  /// For surfaces continuous in tau: the level where value(x, t, .) = y.
  virtual std::optional<double> crossing_level(ConstVecRef, double, double) const { return std::nullopt; }
  virtual std::unique_ptr<BoundRows> bind(const Mat& xs) const;
};

class TailCdf {
 public:
  virtual ~TailCdf() = default;
  /// F(y | x, t) in [0, 1], nondecreasing in y.
  virtual double value(ConstVecRef x, double t, double y) const = 0;
};

class MeanSurface {
 public:
  virtual ~MeanSurface() = default;
  virtual double value(ConstVecRef x, double t) const = 0;
  /// Same contract as LevelSurface::bind; taus are ignored.
  virtual std::unique_ptr<BoundRows> bind(const Mat& xs) const;
};

/// Fitted nuisances for one nuisance fold. Rosenbaum needs density,
/// expectile and tail_cdf; marginal needs density, quantile, mean and cvar.
struct NuisanceBundle {
  Model model = Model::rosenbaum;
  std::shared_ptr<const ConditionalDensity> density;
  std::shared_ptr<const LevelSurface> expectile;
  std::shared_ptr<const TailCdf> tail_cdf;
  std::shared_ptr<const LevelSurface> quantile;
  std::shared_ptr<const MeanSurface> mean;
  std::shared_ptr<const LevelSurface> cvar;  // E[Y | Y > q(tau), x, t]

  /// Throws ConfigError when a member required by `model` is missing.
  void require(Model m) const;
};

/// Builds the bundle for one nuisance fold. `outcomes_negated` tells
/// analytic factories that y has been sign-flipped by the upper-side path.
using BundleFactory = std::function<NuisanceBundle(const Dataset& i3, const RunConfig& cfg, bool outcomes_negated)>;

// ---------------------------------------------------------------------------
// Built-in learners

class BinnedDensity;
class SieveLevelSurface;

std::shared_ptr<const BinnedDensity> fit_conditional_density(const Dataset& ds, const LearnerSpec& spec,
                                                             double density_floor);
std::shared_ptr<const SieveLevelSurface> fit_expectile_surface(const Dataset& ds, const LearnerSpec& spec);
std::shared_ptr<const SieveLevelSurface> fit_quantile_surface(const Dataset& ds, const LearnerSpec& spec);
std::shared_ptr<const TailCdf> fit_tail_cdf(const Dataset& ds, const LearnerSpec& spec);
std::shared_ptr<const MeanSurface> fit_mean_surface(const Dataset& ds, const LearnerSpec& spec);

/// c(x, t, tau) = q(x, t, tau) + E[(Y - q)_+ | x, t] / (1 - tau), the
/// positive part regressed on the same features.
std::shared_ptr<const LevelSurface> fit_cvar_surface(const Dataset& ds,
                                                     std::shared_ptr<const SieveLevelSurface> quantile,
                                                     const LearnerSpec& spec);

struct TailAndZeta {
  std::shared_ptr<const TailCdf> tail_cdf;
  std::shared_ptr<const MeanSurface> mean;
  std::shared_ptr<const LevelSurface> cvar;
};
TailAndZeta fit_tail_and_zeta(const Dataset& ds, std::shared_ptr<const SieveLevelSurface> quantile,
                              const LearnerSpec& spec);

/// zeta = lambda m - (lambda - 1) c with tau = 1 / (1 + lambda).
double zeta_from(double mean, double cvar, double lambda);

/// Built-in bundle. With cfg.nested_split the first-stage surfaces are fitted
/// on one half of I3 and the tail/mean/cvar ingredients on the other.
NuisanceBundle assemble_bundle(const Dataset& i3, const RunConfig& cfg);
BundleFactory builtin_factory();

/// Row index halves used by the nested split.
std::pair<std::vector<Index>, std::vector<Index>> nested_halves(Index n, std::uint64_t seed);

/// Writes x-row index, t, tau and every available surface value on the probe grid.
void export_probe_grid(const NuisanceBundle& bundle, const Mat& xs, std::span<const double> ts,
                       std::span<const double> taus, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Concrete built-in evaluators

class BinnedDensity final : public ConditionalDensity {
 public:
  BinnedDensity(TensorFeatures features, Mat coef, ExposureDomain domain, int bins, double floor);

  double value(ConstVecRef x, double t) const override;
  void evaluate(ConstVecRef x, std::span<const double> ts, std::span<double> out) const override;
  std::vector<double> breakpoints() const override;
  std::unique_ptr<DensityAverage> average_over(const Mat& xs) const override;
  double floor() const override { return floor_; }
  const ExposureDomain& domain() const override { return domain_; }

  /// Floored, renormalized density value in each bin.
  Vec bin_densities(ConstVecRef x) const;
  int bin_of(double t) const;

 private:
  TensorFeatures features_;  // covariate part only
  Mat coef_;                 // bins x x_size, row 0 is the reference class
  ExposureDomain domain_;
  int bins_;
  double floor_;
};

class SieveLevelSurface final : public LevelSurface {
 public:
  SieveLevelSurface(TensorFeatures features, std::vector<double> taus, Mat coef);

  double value(ConstVecRef x, double t, double tau) const override;
  double snap(double tau) const override;
  std::vector<double> switch_levels() const override;
  std::unique_ptr<BoundRows> bind(const Mat& xs) const override;

  /// Repaired values at every grid level.
  Vec levels(ConstVecRef x, double t) const;
  Index snap_index(double tau) const;
  const std::vector<double>& taus() const { return taus_; }
  const TensorFeatures& features() const { return features_; }
  const Mat& coef() const { return coef_; }

 private:
  TensorFeatures features_;
  std::vector<double> taus_;
  Mat coef_;  // levels x features
};

}  // namespace dosebound

#endif  // DOSEBOUND_NUISANCE_HPP_
