#ifndef DOSEBOUND_CONFIG_HPP_
#define DOSEBOUND_CONFIG_HPP_

#include "dosebound/core_data.hpp"
#include "dosebound/sensitivity.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dosebound {

struct BasisSpec {
  std::string kind = "legendre";  // polynomial | legendre | bspline | fourier
  int J = 6;
};

/// Hyperparameters of the built-in sieve learners.
struct LearnerSpec {
  int bins = 10;          // density bins
  int x_degree = 2;       // total degree of the covariate polynomial
  int t_degree = 3;       // Legendre degree in the exposure
  double ridge = 1e-4;    // relative to the total weight
  int tau_points = 41;
  double tau_lo = 0.02;
  double tau_hi = 0.98;
  int max_iter = 200;
  int cdf_points = 41;    // probes of the tail CDF in y

  void validate() const;
  std::vector<double> tau_grid() const;
};

struct RunConfig {
  Model model = Model::rosenbaum;
  Side side = Side::lower;
  SensitivitySpec sensitivity;
  BasisSpec basis;
  int quadrature_nodes = 64;
  double density_floor = 0.0;  // <= 0 selects 0.05 / width
  std::uint64_t seed = 0;
  double alpha = 0.05;
  std::optional<ExposureDomain> domain;
  int folds = 3;
  bool cross_fit = false;
  bool nested_split = false;
  std::string allocation = "equal";  // equal | half (I1:I2:I3 = 1:1:2)
  LearnerSpec learner;
  std::vector<double> grid{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

  double floor_for(const ExposureDomain& d) const;
  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);
nlohmann::json to_json(const RunConfig& cfg);

/// Plan for the configured allocation.
FoldPlan plan_for(const RunConfig& cfg, Index n);

}  // namespace dosebound

#endif  // DOSEBOUND_CONFIG_HPP_
