#ifndef DOSEBOUND_NORMAL_HPP_
#define DOSEBOUND_NORMAL_HPP_

// Standard-normal helpers used by the analytic nuisances, the CI critical
// values, and the test oracles.

namespace dosebound::normal {

double pdf(double z);
double cdf(double z);

/// Inverse CDF, full double precision on (0, 1).
double quantile(double p);

/// Partial moments E[(Z - e)_+] and E[(e - Z)_+].
double upper_partial_moment(double e);
double lower_partial_moment(double e);

/// tau-expectile of the standard normal: the root e of
/// tau * E[(Z - e)_+] = (1 - tau) * E[(e - Z)_+].
double expectile(double tau);

/// Table-interpolated expectile() and quantile(), accurate to about 1e-12
/// and much cheaper; used in hot loops.
double fast_expectile(double tau);
double fast_quantile(double tau);

/// E[Z | Z > Phi^{-1}(tau)] = phi(z) / (1 - tau).
double upper_tail_mean(double tau);

}  // namespace dosebound::normal

#endif  // DOSEBOUND_NORMAL_HPP_
