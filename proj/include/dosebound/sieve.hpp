#ifndef DOSEBOUND_SIEVE_HPP_
#define DOSEBOUND_SIEVE_HPP_

#include "dosebound/config.hpp"
#include "dosebound/pseudo_outcome.hpp"

#include <json.hpp>

#include <filesystem>
#include <vector>

namespace dosebound {

enum class BasisKind { polynomial, legendre, bspline, fourier };

const char* to_string(BasisKind k);
BasisKind parse_basis_kind(const std::string& name);

/// phi_J(t) in R^J with phi_1 = 1.
///   polynomial: monomials of the domain coordinate u in [-1, 1]
///   legendre:   P_0..P_{J-1}(u)
///   bspline:    1 followed by cubic B-splines 2..J on uniform knots (J >= 4)
///   fourier:    1, cos(2 pi s), sin(2 pi s), cos(4 pi s), ... with s in [0, 1]
class BasisSystem {
 public:
  BasisSystem(BasisKind kind, int J, ExposureDomain domain);

  BasisKind kind() const { return kind_; }
  int size() const { return J_; }
  const ExposureDomain& domain() const { return domain_; }

  void eval(double t, double* out) const;
  Vec operator()(double t) const;
  Mat design(std::span<const double> ts) const;

  /// sup_t ||phi(t)|| over a dense grid.
  double xi() const;
  /// Condition number of the Gram matrix under the uniform measure on the domain.
  double gram_condition() const;

 private:
  BasisKind kind_;
  int J_;
  ExposureDomain domain_;
};

BasisSystem make_basis(const BasisSpec& spec, const ExposureDomain& domain);

struct OlsFit {
  Vec beta;
  Mat Q_hat;
  Index n = 0;
};

struct BoundCurve {
  Vec beta;
  Mat Q_hat;
  Mat Omega_hat;
  std::vector<double> grid;
  Vec values;
  Vec se;
  Vec ci_lo;
  Vec ci_hi;
  Index n_used = 0;
  double alpha = 0.05;
};

/// Least squares of y on phi(t) with a condition-number guard at 1e10.
OlsFit fit_ols(std::span<const double> t, std::span<const double> y, const BasisSystem& basis);
OlsFit fit_ols(const std::vector<PseudoOutcomeSample>& samples, const BasisSystem& basis);

/// Omega = Q^-1 Sigma Q^-1 with Sigma = mean of eps^2 phi phi'.
Mat estimate_variance(std::span<const double> t, std::span<const double> y, const BasisSystem& basis,
                      const OlsFit& fit);
Mat estimate_variance(const std::vector<PseudoOutcomeSample>& samples, const BasisSystem& basis, const OlsFit& fit);

BoundCurve predict_curve(const OlsFit& fit, const Mat& omega, const BasisSystem& basis, const std::vector<double>& grid,
                         double alpha);

/// Pointwise mean of values and of se; beta and the matrices are averaged too.
BoundCurve cross_fit_average(const std::vector<BoundCurve>& curves, double alpha);

/// Fits one curve per sample set and averages them.
BoundCurve fit_bound_curve(const std::vector<PseudoOutcomeSet>& sets, const BasisSystem& basis,
                           const std::vector<double>& grid, double alpha, std::vector<BoundCurve>* per_triple = nullptr);

/// values -> -values, bands swapped; Omega is unchanged.
BoundCurve negate_curve(const BoundCurve& c);

void write_curve_csv(const BoundCurve& c, const std::filesystem::path& path);
nlohmann::json curve_to_json(const BoundCurve& c);

}  // namespace dosebound

#endif  // DOSEBOUND_SIEVE_HPP_
