#ifndef DOSEBOUND_IDENTIFICATION_HPP_
#define DOSEBOUND_IDENTIFICATION_HPP_

// Closed-form conditional bounds on a weighted empirical outcome law.
//
// Lower side (the default): the sharp lower bound on the mean outcome over
// likelihood ratios L with E[L] = 1 and either
//   * L(y) <= gamma L(y~) for all y, y~      -> expectile theta, or
//   * L in [1/lambda, lambda]                 -> quantile / CVaR value zeta.
// Upper side is the mirror image (largest mean), computed natively here so
// that the negation identity upper(y) = -lower(-y) is a genuine check.

#include "dosebound/common.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

namespace dosebound {

template <typename T>
struct WeightedSample {
  using Vector = Eigen::Matrix<T, Eigen::Dynamic, 1>;
  Vector values;
  Vector weights;
};

/// Validates and returns a sample; weights must be nonnegative and sum to 1
/// within 1e-12.
template <typename T, typename DerivedV, typename DerivedW>
WeightedSample<T> make_weighted_sample(const Eigen::MatrixBase<DerivedV>& values,
                                       const Eigen::MatrixBase<DerivedW>& weights) {
  if (values.size() == 0) throw InputError("weighted sample is empty");
  if (values.size() != weights.size()) throw InputError("values and weights differ in length");
  if (!values.allFinite() || !weights.allFinite()) throw InputError("weighted sample is not finite");
  if ((weights.array() < T(0)).any()) throw InputError("weights must be nonnegative");
  if (std::abs(weights.sum() - T(1)) > T(1e-12)) throw InputError("weights must sum to 1");
  return WeightedSample<T>{values.template cast<T>(), weights.template cast<T>()};
}

template <typename T, typename DerivedV>
WeightedSample<T> uniform_sample(const Eigen::MatrixBase<DerivedV>& values) {
  const Index n = values.size();
  if (n == 0) throw InputError("weighted sample is empty");
  using Vector = typename WeightedSample<T>::Vector;
  return make_weighted_sample<T>(values, Vector::Constant(n, T(1) / T(n)));
}

enum class BoundKind { rosenbaum_theta, marginal_zeta };

template <typename T>
struct ConditionalBound {
  T value{};
  BoundKind kind = BoundKind::rosenbaum_theta;
  T nu{};   // rosenbaum: P(Y > theta) + gamma P(Y <= theta) (lower side)
  T q{};    // marginal: the quantile the bound is built on
  T tau{};  // marginal: (lambda + 1)^{-1}
};

namespace detail {

template <typename T>
struct SortedSample {
  std::vector<T> y;  // distinct values, ascending
  std::vector<T> w;  // pooled weight per value
};

template <typename T>
SortedSample<T> sort_and_pool(const WeightedSample<T>& ws) {
  const Index n = ws.values.size();
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return ws.values[a] < ws.values[b]; });
  SortedSample<T> s;
  for (Index k : order) {
    if (!s.y.empty() && s.y.back() == ws.values[k]) {
      s.w.back() += ws.weights[k];
    } else {
      s.y.push_back(ws.values[k]);
      s.w.push_back(ws.weights[k]);
    }
  }
  return s;
}

}  // namespace detail

/// theta = sup{mu : sum_i w_i psi_mu(y_i) >= 0}, psi_mu(y) = (y - mu)_+ - gamma (y - mu)_-.
///
/// The map mu -> E[psi_mu] is continuous, piecewise linear, with slope at
/// most -1, so the root is unique. On the piece between consecutive support
/// points it reads (S_a - W_a mu) - gamma (W_b mu - S_b) = 0, giving the exact
/// solution mu = (S_a + gamma S_b) / (W_a + gamma W_b).
template <typename T>
ConditionalBound<T> solve_expectile(const WeightedSample<T>& ws, T gamma, Side side = Side::lower) {
  if (ws.values.size() == 0) throw InputError("weighted sample is empty");
  if (!(gamma >= T(1))) throw InputError("expectile sensitivity must be >= 1");
  const auto s = detail::sort_and_pool(ws);
  const std::size_t m = s.y.size();
  // For the upper side the heavy weight gamma sits on the upper set.
  const T w_low = side == Side::lower ? gamma : T(1);
  const T w_high = side == Side::lower ? T(1) : gamma;

  T total_w = 0;
  T total_s = 0;
  for (std::size_t k = 0; k < m; ++k) {
    total_w += s.w[k];
    total_s += s.w[k] * s.y[k];
  }

  T theta = s.y.front();
  // Lower set = support points <= y_k; candidate root on [y_k, y_{k+1}].
  T wb = 0;
  T sb = 0;
  bool found = false;
  for (std::size_t k = 0; k < m; ++k) {
    wb += s.w[k];
    sb += s.w[k] * s.y[k];
    const T wa = total_w - wb;
    const T sa = total_s - sb;
    const T mu = (w_high * sa + w_low * sb) / (w_high * wa + w_low * wb);
    const T right = k + 1 < m ? s.y[k + 1] : s.y[k];
    if (mu >= s.y[k] && mu <= right) {
      theta = mu;
      found = true;
      break;
    }
  }
  if (!found) {
    // Rounding can push the root a hair outside every bracket; fall back to
    // the bracket with the smallest violation.
    T best = std::numeric_limits<T>::infinity();
    wb = 0;
    sb = 0;
    for (std::size_t k = 0; k < m; ++k) {
      wb += s.w[k];
      sb += s.w[k] * s.y[k];
      const T wa = total_w - wb;
      const T sa = total_s - sb;
      const T mu = (w_high * sa + w_low * sb) / (w_high * wa + w_low * wb);
      const T right = k + 1 < m ? s.y[k + 1] : s.y[k];
      const T miss = std::max(s.y[k] - mu, mu - right);
      if (miss < best) {
        best = miss;
        theta = std::clamp(mu, s.y[k], right);
      }
    }
  }

  ConditionalBound<T> out;
  out.kind = BoundKind::rosenbaum_theta;
  out.value = theta;
  T nu = 0;
  for (std::size_t k = 0; k < m; ++k) {
    if (side == Side::lower) {
      nu += s.y[k] > theta ? s.w[k] : gamma * s.w[k];
    } else {
      nu += s.y[k] < theta ? s.w[k] : gamma * s.w[k];
    }
  }
  out.nu = nu;
  return out;
}

/// Left-continuous inversion inf{y : F(y) >= tau} (lower side). The upper
/// side returns sup{y : P(Y >= y) >= tau}, the mirror quantile.
template <typename T>
T solve_quantile(const WeightedSample<T>& ws, T tau, Side side = Side::lower) {
  if (ws.values.size() == 0) throw InputError("weighted sample is empty");
  if (!(tau > T(0) && tau < T(1))) throw InputError("quantile level must lie in (0, 1)");
  const auto s = detail::sort_and_pool(ws);
  const T slack = T(64) * std::numeric_limits<T>::epsilon();
  T cum = 0;
  if (side == Side::lower) {
    for (std::size_t k = 0; k < s.y.size(); ++k) {
      cum += s.w[k];
      if (cum >= tau - slack) return s.y[k];
    }
    return s.y.back();
  }
  for (std::size_t k = s.y.size(); k-- > 0;) {
    cum += s.w[k];
    if (cum >= tau - slack) return s.y[k];
  }
  return s.y.front();
}

/// zeta = q + E[rho_q(Y)], rho_q(y) = lambda^{-1} (y - q)_+ - lambda (y - q)_-,
/// q the (lambda + 1)^{-1} quantile. Upper side swaps the roles of the tails.
template <typename T>
ConditionalBound<T> marginal_bound(const WeightedSample<T>& ws, T lambda, Side side = Side::lower) {
  if (!(lambda >= T(1))) throw InputError("marginal sensitivity must be >= 1");
  const T tau = T(1) / (lambda + T(1));
  const T q = solve_quantile(ws, tau, side);
  T acc = 0;
  for (Index i = 0; i < ws.values.size(); ++i) {
    const T r = ws.values[i] - q;
    if (side == Side::lower) {
      acc += ws.weights[i] * (r > T(0) ? r / lambda : lambda * r);
    } else {
      acc += ws.weights[i] * (r > T(0) ? lambda * r : r / lambda);
    }
  }
  ConditionalBound<T> out;
  out.kind = BoundKind::marginal_zeta;
  out.value = q + acc;
  out.q = q;
  out.tau = tau;
  return out;
}

/// lambda * mean - (lambda - 1) * cvar, with cvar = E[Y | Y > q].
template <typename T>
T marginal_bound_cvar_form(T mean, T cvar, T lambda) {
  return lambda * mean - (lambda - T(1)) * cvar;
}

}  // namespace dosebound

#endif  // DOSEBOUND_IDENTIFICATION_HPP_
