#ifndef DOSEBOUND_ORACLE_HPP_
#define DOSEBOUND_ORACLE_HPP_

// Brute-force references for the closed-form bounds: direct optimization of
// E[L Y] over likelihood ratios L on a finite support, under
//   rosenbaum: 0 <= L(y) <= gamma L(y~) for all support points
//   marginal:  1/lambda <= L(y) <= lambda
// with the normalization E[L] = 1.

#include "dosebound/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dosebound {

struct DiscreteDist {
  std::vector<double> values;  // strictly increasing
  std::vector<double> probs;   // positive, sum to 1

  static DiscreteDist make(std::vector<double> values, std::vector<double> probs);
  double mean() const;
  DiscreteDist negated() const;
};

/// Fractional greedy: L = lambda on the smallest outcomes, 1/lambda on the
/// largest, one fractional boundary value for the normalization.
double oracle_marginal(const DiscreteDist& dist, double lambda);

/// Enumerates all n + 1 thresholds of the two-valued ratio {c gamma, c}.
double oracle_rosenbaum(const DiscreteDist& dist, double gamma);

/// Same problems posed as generic dense LPs (simplex); slow, used to check
/// the structural claims behind the two oracles above.
double oracle_rosenbaum_lp(const DiscreteDist& dist, double gamma);
double oracle_marginal_lp(const DiscreteDist& dist, double lambda);

/// Upper-side oracles via negation.
double oracle_marginal_upper(const DiscreteDist& dist, double lambda);
double oracle_rosenbaum_upper(const DiscreteDist& dist, double gamma);

/// min c'x  s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  x >= 0.
struct LpResult {
  bool feasible = false;
  bool bounded = false;
  double objective = 0.0;
  Vec x;
};
LpResult solve_dense_lp(const Vec& c, const Mat& a_eq, const Vec& b_eq, const Mat& a_ub, const Vec& b_ub);

struct CrossCheckReport {
  double marginal = 0.0;       // marginal(value)
  double rosenbaum = 0.0;      // rosenbaum(value)
  double marginal_sqrt = 0.0;  // marginal(sqrt(value))
};

/// Asserts marginal(v) <= rosenbaum(v) <= marginal(sqrt v) and that each
/// oracle agrees with its closed form within 1e-9. Throws VerificationError
/// with the counterexample otherwise.
CrossCheckReport oracle_cross_check(const DiscreteDist& dist, double sf_value);

struct OracleSuiteOptions {
  int instances = 1000;
  int max_support = 12;
  double param_lo = 1.0;
  double param_hi = 10.0;
  std::uint64_t seed = 0;
  double tolerance = 1e-9;
  int lp_spot_checks = 50;  // instances also solved by the dense LP
};

struct OracleSuiteReport {
  int instances = 0;
  int equivalence_violations = 0;  // closed form vs oracle, both sides
  int ordering_violations = 0;     // marginal/rosenbaum/marginal-sqrt chain, both sides
  int lp_violations = 0;           // oracle vs generic LP
  double max_abs_error = 0.0;
  double seconds = 0.0;
  std::optional<std::string> counterexample;

  bool passed() const { return equivalence_violations == 0 && ordering_violations == 0 && lp_violations == 0; }
};

DiscreteDist random_discrete_dist(std::uint64_t seed, int max_support);
OracleSuiteReport run_oracle_suite(const OracleSuiteOptions& opts);

std::string describe(const DiscreteDist& dist);

}  // namespace dosebound

#endif  // DOSEBOUND_ORACLE_HPP_
