#include "dosebound/oracle.hpp"

#include "dosebound/identification.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>

namespace dosebound {

DiscreteDist DiscreteDist::make(std::vector<double> values, std::vector<double> probs) {
  if (values.empty() || values.size() != probs.size()) throw InputError("discrete distribution needs matching values/probs");
  double total = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (!std::isfinite(values[k]) || !(probs[k] > 0.0)) throw InputError("discrete distribution needs finite values and positive probs");
    if (k > 0 && !(values[k] > values[k - 1])) throw InputError("discrete distribution values must be strictly increasing");
    total += probs[k];
  }
  if (std::abs(total - 1.0) > 1e-12) throw InputError("discrete distribution probs must sum to 1");
  return DiscreteDist{std::move(values), std::move(probs)};
}

double DiscreteDist::mean() const {
  double m = 0.0;
  for (std::size_t k = 0; k < values.size(); ++k) m += probs[k] * values[k];
  return m;
}

DiscreteDist DiscreteDist::negated() const {
  DiscreteDist out;
  out.values.assign(values.rbegin(), values.rend());
  for (double& v : out.values) v = -v;
  out.probs.assign(probs.rbegin(), probs.rend());
  return out;
}

double oracle_marginal(const DiscreteDist& dist, double lambda) {
  if (!(lambda >= 1.0)) throw InputError("marginal oracle needs lambda >= 1");
  const double lo = 1.0 / lambda;
  double budget = 1.0 - lo;  // mass still to distribute above the floor 1/lambda
  double objective = 0.0;
  for (std::size_t k = 0; k < dist.values.size(); ++k) {
    const double p = dist.probs[k];
    const double cost = (lambda - lo) * p;
    double ratio = lo;
    if (budget >= cost) {
      ratio = lambda;
      budget -= cost;
    } else if (budget > 0.0) {
      ratio = lo + budget / p;
      budget = 0.0;
    }
    objective += ratio * p * dist.values[k];
  }
  return objective;
}

double oracle_rosenbaum(const DiscreteDist& dist, double gamma) {
  if (!(gamma >= 1.0)) throw InputError("rosenbaum oracle needs gamma >= 1");
  const std::size_t n = dist.values.size();
  double total_py = 0.0;
  for (std::size_t k = 0; k < n; ++k) total_py += dist.probs[k] * dist.values[k];
  double best = std::numeric_limits<double>::infinity();
  double mass_below = 0.0;
  double py_below = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    // Points with index < k carry ratio c * gamma, the rest carry c.
    const double c = 1.0 / (gamma * mass_below + 1.0 - mass_below);
    const double obj = c * (gamma * py_below + (total_py - py_below));
    best = std::min(best, obj);
    if (k < n) {
      mass_below += dist.probs[k];
      py_below += dist.probs[k] * dist.values[k];
    }
  }
  return best;
}

double oracle_marginal_upper(const DiscreteDist& dist, double lambda) { return -oracle_marginal(dist.negated(), lambda); }

double oracle_rosenbaum_upper(const DiscreteDist& dist, double gamma) {
  return -oracle_rosenbaum(dist.negated(), gamma);
}

namespace {

constexpr double kPivotTol = 1e-11;

// Dense two-phase tableau simplex with Bland's rule.
class Tableau {
 public:
  Tableau(Mat table, std::vector<Index> basis, Index n_cols) : t_(std::move(table)), basis_(std::move(basis)), n_(n_cols) {}

  // Minimizes the cost row stored in the last row of the table; columns in
  // [0, allowed) may enter. Returns false when unbounded.
  bool optimize(Index allowed) {
    const Index m = t_.rows() - 1;
    for (int iter = 0; iter < 100000; ++iter) {
      Index enter = -1;
      for (Index j = 0; j < allowed; ++j) {
        if (t_(m, j) < -kPivotTol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) return true;
      Index leave = -1;
      double best = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < m; ++i) {
        if (t_(i, enter) > kPivotTol) {
          const double ratio = t_(i, n_) / t_(i, enter);
          if (ratio < best - 1e-14 || (std::abs(ratio - best) <= 1e-14 && leave >= 0 && basis_[i] < basis_[leave])) {
            best = ratio;
            leave = i;
          }
        }
      }
      if (leave < 0) return false;
      pivot(leave, enter);
    }
    throw NumericError("simplex iteration limit reached");
  }

  void pivot(Index row, Index col) {
    t_.row(row) /= t_(row, col);
    for (Index i = 0; i < t_.rows(); ++i) {
      if (i != row && t_(i, col) != 0.0) t_.row(i) -= t_(i, col) * t_.row(row);
    }
    basis_[row] = col;
  }

  Mat& table() { return t_; }
  std::vector<Index>& basis() { return basis_; }

 private:
  Mat t_;
  std::vector<Index> basis_;
  Index n_;
};

}  // namespace

LpResult solve_dense_lp(const Vec& c, const Mat& a_eq, const Vec& b_eq, const Mat& a_ub, const Vec& b_ub) {
  const Index nx = c.size();
  const Index meq = a_eq.rows();
  const Index mub = a_ub.rows();
  const Index m = meq + mub;
  // Columns: x | slack/surplus for ub rows | artificials.
  std::vector<bool> needs_art(static_cast<std::size_t>(m), false);
  Index n_art = 0;
  for (Index i = 0; i < meq; ++i) {
    needs_art[static_cast<std::size_t>(i)] = true;
    ++n_art;
  }
  for (Index i = 0; i < mub; ++i) {
    if (b_ub[i] < 0.0) {
      needs_art[static_cast<std::size_t>(meq + i)] = true;
      ++n_art;
    }
  }
  const Index n_cols = nx + mub + n_art;
  Mat t = Mat::Zero(m + 1, n_cols + 1);
  std::vector<Index> basis(static_cast<std::size_t>(m));
  Index art = nx + mub;
  for (Index i = 0; i < meq; ++i) {
    const double sign = b_eq[i] < 0.0 ? -1.0 : 1.0;
    t.row(i).head(nx) = sign * a_eq.row(i);
    t(i, n_cols) = sign * b_eq[i];
    t(i, art) = 1.0;
    basis[static_cast<std::size_t>(i)] = art++;
  }
  for (Index i = 0; i < mub; ++i) {
    const Index r = meq + i;
    if (b_ub[i] < 0.0) {
      t.row(r).head(nx) = -a_ub.row(i);
      t(r, nx + i) = -1.0;
      t(r, n_cols) = -b_ub[i];
      t(r, art) = 1.0;
      basis[static_cast<std::size_t>(r)] = art++;
    } else {
      t.row(r).head(nx) = a_ub.row(i);
      t(r, nx + i) = 1.0;
      t(r, n_cols) = b_ub[i];
      basis[static_cast<std::size_t>(r)] = nx + i;
    }
  }
  // Phase 1 cost: sum of artificials, reduced against the basic rows.
  for (Index i = 0; i < m; ++i) {
    if (needs_art[static_cast<std::size_t>(i)]) t.row(m) -= t.row(i);
  }
  for (Index j = nx + mub; j < n_cols; ++j) t(m, j) = 0.0;

  Tableau tab(std::move(t), std::move(basis), n_cols);
  LpResult result;
  if (n_art > 0) {
    tab.optimize(n_cols);
    if (-tab.table()(m, n_cols) > 1e-9) return result;  // infeasible
    // Drive zero-level artificials out of the basis where possible.
    for (Index i = 0; i < m; ++i) {
      if (tab.basis()[static_cast<std::size_t>(i)] >= nx + mub) {
        for (Index j = 0; j < nx + mub; ++j) {
          if (std::abs(tab.table()(i, j)) > kPivotTol) {
            tab.pivot(i, j);
            break;
          }
        }
      }
    }
  }
  result.feasible = true;
  Mat& tt = tab.table();
  tt.row(m).setZero();
  tt.row(m).head(nx) = c.transpose();
  for (Index i = 0; i < m; ++i) {
    const Index b = tab.basis()[static_cast<std::size_t>(i)];
    if (b < nx && c[b] != 0.0) tt.row(m) -= c[b] * tt.row(i);
  }
  if (!tab.optimize(nx + mub)) return result;
  result.bounded = true;
  result.x = Vec::Zero(nx);
  for (Index i = 0; i < m; ++i) {
    const Index b = tab.basis()[static_cast<std::size_t>(i)];
    if (b < nx) result.x[b] = tt(i, n_cols);
  }
  result.objective = c.dot(result.x);
  return result;
}

double oracle_rosenbaum_lp(const DiscreteDist& dist, double gamma) {
  const Index n = static_cast<Index>(dist.values.size());
  Vec c(n);
  Mat a_eq(1, n);
  for (Index i = 0; i < n; ++i) {
    c[i] = dist.probs[static_cast<std::size_t>(i)] * dist.values[static_cast<std::size_t>(i)];
    a_eq(0, i) = dist.probs[static_cast<std::size_t>(i)];
  }
  const Index rows = n * (n - 1);
  Mat a_ub = Mat::Zero(rows, n);
  Index r = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < n; ++j) {
      if (i == j) continue;
      a_ub(r, i) = 1.0;
      a_ub(r, j) = -gamma;
      ++r;
    }
  }
  const auto res = solve_dense_lp(c, a_eq, Vec::Ones(1), a_ub, Vec::Zero(rows));
  if (!res.feasible || !res.bounded) throw NumericError("rosenbaum LP failed");
  return res.objective;
}

double oracle_marginal_lp(const DiscreteDist& dist, double lambda) {
  const Index n = static_cast<Index>(dist.values.size());
  Vec c(n);
  Mat a_eq(1, n);
  for (Index i = 0; i < n; ++i) {
    c[i] = dist.probs[static_cast<std::size_t>(i)] * dist.values[static_cast<std::size_t>(i)];
    a_eq(0, i) = dist.probs[static_cast<std::size_t>(i)];
  }
  Mat a_ub = Mat::Zero(2 * n, n);
  Vec b_ub(2 * n);
  for (Index i = 0; i < n; ++i) {
    a_ub(i, i) = 1.0;
    b_ub[i] = lambda;
    a_ub(n + i, i) = -1.0;
    b_ub[n + i] = -1.0 / lambda;
  }
  const auto res = solve_dense_lp(c, a_eq, Vec::Ones(1), a_ub, b_ub);
  if (!res.feasible || !res.bounded) throw NumericError("marginal LP failed");
  return res.objective;
}

std::string describe(const DiscreteDist& dist) {
  std::ostringstream out;
  out << std::setprecision(17) << "{\"values\":[";
  for (std::size_t k = 0; k < dist.values.size(); ++k) out << (k ? "," : "") << dist.values[k];
  out << "],\"probs\":[";
  for (std::size_t k = 0; k < dist.probs.size(); ++k) out << (k ? "," : "") << dist.probs[k];
  out << "]}";
  return out.str();
}

namespace {

WeightedSample<double> as_sample(const DiscreteDist& dist) {
  const Index n = static_cast<Index>(dist.values.size());
  return make_weighted_sample<double>(Eigen::Map<const Vec>(dist.values.data(), n),
                                      Eigen::Map<const Vec>(dist.probs.data(), n));
}

}  // namespace

CrossCheckReport oracle_cross_check(const DiscreteDist& dist, double sf_value) {
  if (!(sf_value >= 1.0)) throw InputError("sensitivity value must be >= 1");
  CrossCheckReport rep;
  rep.marginal = oracle_marginal(dist, sf_value);
  rep.rosenbaum = oracle_rosenbaum(dist, sf_value);
  rep.marginal_sqrt = oracle_marginal(dist, std::sqrt(sf_value));
  const auto ws = as_sample(dist);
  const double cf_m = marginal_bound(ws, sf_value).value;
  const double cf_r = solve_expectile(ws, sf_value).value;
  const double cf_ms = marginal_bound(ws, std::sqrt(sf_value)).value;
  constexpr double tol = 1e-9;
  std::ostringstream why;
  if (rep.marginal > rep.rosenbaum + tol || rep.rosenbaum > rep.marginal_sqrt + tol) {
    why << "ordering violated: marginal=" << rep.marginal << " rosenbaum=" << rep.rosenbaum
        << " marginal_sqrt=" << rep.marginal_sqrt;
  } else if (std::abs(cf_m - rep.marginal) > tol || std::abs(cf_r - rep.rosenbaum) > tol ||
             std::abs(cf_ms - rep.marginal_sqrt) > tol) {
    why << "closed form disagrees with oracle: marginal " << cf_m << " vs " << rep.marginal << ", rosenbaum "
        << cf_r << " vs " << rep.rosenbaum << ", marginal_sqrt " << cf_ms << " vs " << rep.marginal_sqrt;
  }
  if (!why.str().empty()) {
    throw VerificationError(why.str() + " for value " + std::to_string(sf_value) + " on " + describe(dist));
  }
  return rep;
}

DiscreteDist random_discrete_dist(std::uint64_t seed, int max_support) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> size_dist(1, std::max(1, max_support));
  std::normal_distribution<double> value_dist(0.0, 2.0);
  std::exponential_distribution<double> weight_dist(1.0);
  const int n = size_dist(rng);
  std::vector<double> values;
  while (static_cast<int>(values.size()) < n) {
    const double v = value_dist(rng);
    if (std::find(values.begin(), values.end(), v) == values.end()) values.push_back(v);
  }
  std::sort(values.begin(), values.end());
  std::vector<double> probs(static_cast<std::size_t>(n));
  double total = 0.0;
  for (double& p : probs) {
    p = weight_dist(rng) + 1e-3;
    total += p;
  }
  for (double& p : probs) p /= total;
  // Renormalize once more so the sum is 1 to rounding.
  double again = 0.0;
  for (double p : probs) again += p;
  probs.back() += 1.0 - again;
  return DiscreteDist::make(std::move(values), std::move(probs));
}

OracleSuiteReport run_oracle_suite(const OracleSuiteOptions& opts) {
  if (opts.instances <= 0) throw ConfigError("oracle suite needs at least one instance");
  if (opts.max_support < 1) throw ConfigError("max support must be >= 1");
  if (!(opts.param_lo >= 1.0) || !(opts.param_hi >= opts.param_lo)) {
    throw ConfigError("parameter range must satisfy 1 <= lo <= hi");
  }
  const auto start = std::chrono::steady_clock::now();
  OracleSuiteReport rep;
  std::mt19937_64 master(opts.seed);
  std::uniform_real_distribution<double> param_dist(opts.param_lo, opts.param_hi);
  auto note = [&](const std::string& what) {
    if (!rep.counterexample) rep.counterexample = what;
  };
  for (int k = 0; k < opts.instances; ++k) {
    const std::uint64_t inst_seed = master();
    const double value = param_dist(master);
    const auto dist = random_discrete_dist(inst_seed, opts.max_support);
    const auto ws = as_sample(dist);
    const double root = std::sqrt(value);

    struct Pair {
      double closed;
      double oracle;
      const char* name;
    };
    const Pair pairs[] = {
        {solve_expectile(ws, value).value, oracle_rosenbaum(dist, value), "rosenbaum lower"},
        {marginal_bound(ws, value).value, oracle_marginal(dist, value), "marginal lower"},
        {marginal_bound(ws, root).value, oracle_marginal(dist, root), "marginal(sqrt) lower"},
        {solve_expectile(ws, value, Side::upper).value, oracle_rosenbaum_upper(dist, value), "rosenbaum upper"},
        {marginal_bound(ws, value, Side::upper).value, oracle_marginal_upper(dist, value), "marginal upper"},
        {marginal_bound(ws, root, Side::upper).value, oracle_marginal_upper(dist, root), "marginal(sqrt) upper"},
    };
    for (const auto& p : pairs) {
      const double err = std::abs(p.closed - p.oracle);
      rep.max_abs_error = std::max(rep.max_abs_error, err);
      if (!(err <= opts.tolerance)) {
        ++rep.equivalence_violations;
        std::ostringstream msg;
        msg << std::setprecision(17) << p.name << ": closed form " << p.closed << " vs oracle " << p.oracle
            << " at value " << value << " on " << describe(dist);
        note(msg.str());
      }
    }
    const double tol = opts.tolerance;
    const bool lower_ok = pairs[1].oracle <= pairs[0].oracle + tol && pairs[0].oracle <= pairs[2].oracle + tol;
    const bool upper_ok = pairs[4].oracle >= pairs[3].oracle - tol && pairs[3].oracle >= pairs[5].oracle - tol;
    if (!lower_ok || !upper_ok) {
      ++rep.ordering_violations;
      std::ostringstream msg;
      msg << std::setprecision(17) << "ordering violated at value " << value << " on " << describe(dist);
      note(msg.str());
    }
    if (k < opts.lp_spot_checks) {
      const double lp_r = oracle_rosenbaum_lp(dist, value);
      const double lp_m = oracle_marginal_lp(dist, value);
      if (std::abs(lp_r - pairs[0].oracle) > 1e-7 || std::abs(lp_m - pairs[1].oracle) > 1e-7) {
        ++rep.lp_violations;
        std::ostringstream msg;
        msg << std::setprecision(17) << "LP disagrees: rosenbaum " << lp_r << " vs " << pairs[0].oracle
            << ", marginal " << lp_m << " vs " << pairs[1].oracle << " at value " << value << " on "
            << describe(dist);
        note(msg.str());
      }
    }
    ++rep.instances;
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace dosebound
