#ifndef DOSEBOUND_SIMULATION_HPP_
#define DOSEBOUND_SIMULATION_HPP_

// Benchmark data-generating process:
//   X ~ Uniform[-0.5, 0.5]^4
//   T | X ~ Beta(l(X), 1 - l(X)),  logit l(X) = 0.2 X1 + 0.5 X2 + 0.7 X3,
//   clipped to [0.01, 0.99]
//   Y | T, X ~ N(0.4 X1 + 0.2 X2 + 0.9 X3 + sin(pi T) + sin(2 pi T), (1 + X4^2)(1 + T))

#include "dosebound/config.hpp"
#include "dosebound/nuisance.hpp"
#include "dosebound/sieve.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace dosebound {

struct DGPSpec {
  Index n = 5000;
  std::uint64_t seed = 0;
};

ExposureDomain dgp_domain();
Dataset sample_dgp(const DGPSpec& spec);

double true_nuc_curve(double t);
double dgp_mean(ConstVecRef x, double t);
double dgp_sd(ConstVecRef x, double t);
/// First Beta shape l(X); the second is 1 - l(X).
double dgp_shape(ConstVecRef x);
/// Beta(a, b) density truncated and renormalized to [0.01, 0.99].
double truncated_beta_density(double a, double b, double t);
/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// Exact nuisances of the benchmark process. With outcomes_negated the
/// surfaces describe -Y.
NuisanceBundle analytic_nuisances(Model model, bool outcomes_negated = false);
BundleFactory analytic_factory();

/// Reference curve r(t) = E_{X,T}[bound(X, t, Gamma(t, T))] of the exact
/// nuisances, by Monte Carlo over `draws` (X, T) pairs.
std::vector<double> true_bound_curve(Model model, Side side, const SensitivitySpec& sens,
                                     const std::vector<double>& grid, Index draws, std::uint64_t seed);

struct SimulationConfig {
  RunConfig run;  // model and side are set per pipeline
  SensitivitySpec rosenbaum_sensitivity{"exp_abs_diff", {3.2188758248682006}};  // log 25
  SensitivitySpec marginal_sensitivity{"exp_abs_diff", {1.6094379124341003}};   // log 5
  bool analytic_nuisances = true;
  bool bounds = true;  // also run the four bound pipelines
  int reps = 100;
  Index n = 5000;
  int threads = 1;
};

SimulationConfig parse_simulation_config(const nlohmann::json& j);
SimulationConfig load_simulation_config(const std::filesystem::path& path);

struct CurveSummary {
  std::vector<double> mean;
  std::vector<double> sd;
  std::vector<double> mean_se;
  // NUC: the CI covers the truth. Lower bounds: ci_lo <= truth. Upper: ci_hi >= truth.
  std::vector<double> coverage;
};

struct RepCurves {
  BoundCurve nuc;
  BoundCurve rosenbaum_lower, rosenbaum_upper;
  BoundCurve marginal_lower, marginal_upper;
};

struct ExperimentReport {
  int reps = 0;
  Index n = 0;
  bool bounds = false;
  std::vector<double> grid;
  std::vector<double> truth;
  CurveSummary nuc;
  CurveSummary rosenbaum_lower, rosenbaum_upper;
  CurveSummary marginal_lower, marginal_upper;
  std::vector<double> bracket_rosenbaum;  // share of reps with lower <= truth <= upper
  std::vector<double> bracket_marginal;
  double bracket_all_rosenbaum = 0.0;     // share of reps bracketing at every grid point
  double bracket_all_marginal = 0.0;
  std::vector<double> mean_abs_bias;      // |mean NUC estimate - truth|
  double clipped_share = 0.0;             // exposures clipped to the domain ends
  double seconds = 0.0;
  std::vector<RepCurves> curves;
};

/// Per-replication seed derived from the run seed.
std::uint64_t rep_seed(std::uint64_t seed, int rep);

ExperimentReport run_experiment(const SimulationConfig& cfg, const std::function<void(int)>& on_rep_done = {});

nlohmann::json report_to_json(const ExperimentReport& r);
/// rep, t, model, estimate, se, lo, hi. For the NUC rows lo/hi are the CI;
/// for the bound models they are the lower and upper bound estimates.
void write_curves_csv(const ExperimentReport& r, const std::filesystem::path& path);
void write_summary(const ExperimentReport& r, const std::filesystem::path& path);

}  // namespace dosebound

#endif  // DOSEBOUND_SIMULATION_HPP_
