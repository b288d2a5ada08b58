#ifndef DOSEBOUND_PSEUDO_OUTCOME_HPP_
#define DOSEBOUND_PSEUDO_OUTCOME_HPP_

#include "dosebound/config.hpp"
#include "dosebound/nuisance.hpp"
#include "dosebound/sensitivity.hpp"

#include <filesystem>
#include <memory>
#include <vector>

namespace dosebound {

struct QuadratureRule {
  Vec nodes;
  Vec weights;
};

/// n-point Gauss-Legendre rule on [a, b], any n >= 1.
QuadratureRule gauss_legendre(int n, double a, double b);

/// Same rule on the exposure domain; n >= 8.
QuadratureRule make_gauss_legendre(int n, const ExposureDomain& domain);

struct PseudoOutcomeSample {
  double t = 0.0;
  double y_hat = 0.0;
  Model model = Model::rosenbaum;
};

struct PseudoDiagnostics {
  Index rows = 0;
  double max_ratio = 0.0;   // f_bar(T) / f(T | X)
  double mean_ratio = 0.0;
  double max_snap_distance = 0.0;
  double mean_panels = 0.0;
};

/// Pseudo-outcome construction for one (bundle, I2) pair.
///
/// The t' integral is split into panels at the density breakpoints, the kinks
/// of the sensitivity function, and every t' where Gamma(t, t') crosses a
/// level at which the fitted surface changes (a tau-grid switch, or the
/// crossing of the outcome for exact surfaces). Each panel gets its own
/// Gauss-Legendre rule, so the integrand is smooth on every panel.
class PseudoOutcomeBuilder {
 public:
  PseudoOutcomeBuilder(const NuisanceBundle& bundle, const Dataset& i2, SensitivityFunction sf, int nodes,
                       Model model);

  PseudoOutcomeSample build(ConstVecRef x, double t, double y);

  /// (1/|I2|) sum_j f(t | X_j).
  double density_average(double t) const { return (*avg_)(t); }

  /// (1/|I2|) sum_j bound(X_j, t, Gamma(t, T_j)); cached on the last t.
  double aggregate_term(double t);

  /// int [integrand](t') f(t' | x) dt', before the density-ratio weight.
  double correction_term(ConstVecRef x, double t, double y);

  std::vector<double> panel_edges(ConstVecRef x, double t, double y) const;

  const PseudoDiagnostics& diagnostics() const { return diag_; }

 private:
  const NuisanceBundle& bundle_;
  Mat i2_x_;
  Vec i2_t_;
  SensitivityFunction sf_;
  QuadratureRule unit_;
  Model model_;
  std::unique_ptr<DensityAverage> avg_;
  std::unique_ptr<BoundRows> rows_a_;  // expectile, or cvar for marginal
  std::unique_ptr<BoundRows> rows_m_;  // mean for marginal
  std::vector<double> switch_gammas_;  // Gamma levels where the surface snaps
  double cached_t_ = 0.0;
  double cached_value_ = 0.0;
  bool has_cache_ = false;
  PseudoDiagnostics diag_;
  double ratio_sum_ = 0.0;
  double panel_sum_ = 0.0;
};

/// (1/|I2|) sum_{j in I2} f(t | X_j).
double marginal_density_average(const NuisanceBundle& bundle, const Dataset& i2, double t);

PseudoOutcomeSample build_rosenbaum_pseudo(ConstVecRef x, double t, double y, const NuisanceBundle& bundle,
                                           const Dataset& i2, const SensitivityFunction& sf, int nodes);
PseudoOutcomeSample build_marginal_pseudo(ConstVecRef x, double t, double y, const NuisanceBundle& bundle,
                                          const Dataset& i2, const SensitivityFunction& sf, int nodes);

struct PseudoOutcomeSet {
  RoleTriple roles;
  std::vector<Index> rows;  // I1 row indices into the full dataset
  std::vector<PseudoOutcomeSample> samples;
  PseudoDiagnostics diagnostics;
};

/// One sample set per role triple of the plan.
std::vector<PseudoOutcomeSet> build_all(const Dataset& ds, const FoldPlan& plan, const RunConfig& cfg,
                                        const BundleFactory& factory, bool outcomes_negated = false);

/// Long CSV: triple, row, t, y_hat.
void write_pseudo_csv(const std::vector<PseudoOutcomeSet>& sets, const std::filesystem::path& path);

}  // namespace dosebound

#endif  // DOSEBOUND_PSEUDO_OUTCOME_HPP_
