#include "dosebound/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <sstream>

namespace dosebound {

void isotonic_repair(std::span<double> v) {
  const std::size_t n = v.size();
  if (n < 2) return;
  std::vector<double> level(n);
  std::vector<std::size_t> count(n);
  std::size_t blocks = 0;
  for (std::size_t i = 0; i < n; ++i) {
    level[blocks] = v[i];
    count[blocks] = 1;
    ++blocks;
    while (blocks > 1 && level[blocks - 2] > level[blocks - 1]) {
      const double c1 = static_cast<double>(count[blocks - 2]);
      const double c2 = static_cast<double>(count[blocks - 1]);
      level[blocks - 2] = (c1 * level[blocks - 2] + c2 * level[blocks - 1]) / (c1 + c2);
      count[blocks - 2] += count[blocks - 1];
      --blocks;
    }
  }
  std::size_t k = 0;
  for (std::size_t b = 0; b < blocks; ++b) {
    for (std::size_t c = 0; c < count[b]; ++c) v[k++] = level[b];
  }
}

void legendre_values(double u, int degree, double* out) {
  out[0] = 1.0;
  if (degree >= 1) out[1] = u;
  for (int k = 2; k <= degree; ++k) {
    out[k] = ((2.0 * k - 1.0) * u * out[k - 1] - (k - 1.0) * out[k - 2]) / k;
  }
}

// ---------------------------------------------------------------------------
// Features

namespace {

void total_degree_exponents(int dim, int degree, std::vector<std::vector<int>>& out) {
  out.clear();
  for (int total = 0; total <= degree; ++total) {
    std::vector<int> e(static_cast<std::size_t>(dim), 0);
    // Enumerate compositions of `total` into `dim` parts.
    std::function<void(int, int)> rec = [&](int pos, int left) {
      if (pos == dim - 1) {
        e[static_cast<std::size_t>(pos)] = left;
        out.push_back(e);
        return;
      }
      for (int k = left; k >= 0; --k) {
        e[static_cast<std::size_t>(pos)] = k;
        rec(pos + 1, left - k);
      }
    };
    if (dim == 0) {
      if (total == 0) out.push_back({});
    } else {
      rec(0, total);
    }
  }
}

}  // namespace

TensorFeatures::TensorFeatures(const Mat& x_train, ExposureDomain domain, int x_degree, int t_degree)
    : domain_(domain), t_degree_(t_degree) {
  const Index p = x_train.cols();
  const Index n = x_train.rows();
  if (n == 0) throw InputError("feature map needs training rows");
  center_ = x_train.colwise().mean().transpose();
  scale_ = Vec::Ones(p);
  for (Index k = 0; k < p; ++k) {
    const double sd = std::sqrt((x_train.col(k).array() - center_[k]).square().mean());
    if (sd > 0.0) scale_[k] = sd;
  }
  total_degree_exponents(static_cast<int>(p), x_degree, exponents_);
  max_degree_ = x_degree;
}

void TensorFeatures::x_part(ConstVecRef x, double* out) const {
  const Index p = center_.size();
  const int stride = max_degree_ + 1;
  // powers[k * stride + d] = z_k^d
  thread_local std::vector<double> powers;
  powers.resize(static_cast<std::size_t>(p * stride));
  for (Index k = 0; k < p; ++k) {
    const double z = (x[k] - center_[k]) / scale_[k];
    double* row = powers.data() + k * stride;
    row[0] = 1.0;
    for (int d = 1; d <= max_degree_; ++d) row[d] = row[d - 1] * z;
  }
  for (std::size_t f = 0; f < exponents_.size(); ++f) {
    double v = 1.0;
    for (Index k = 0; k < p; ++k) v *= powers[static_cast<std::size_t>(k * stride + exponents_[f][static_cast<std::size_t>(k)])];
    out[f] = v;
  }
}

void TensorFeatures::t_part(double t, double* out) const {
  const double u = 2.0 * (t - domain_.lo) / domain_.width() - 1.0;
  legendre_values(u, t_degree_, out);
}

Vec TensorFeatures::operator()(ConstVecRef x, double t) const {
  Vec fx(x_size());
  Vec ft(t_size());
  x_part(x, fx.data());
  t_part(t, ft.data());
  Vec out(size());
  for (Index a = 0; a < x_size(); ++a) out.segment(a * t_size(), t_size()) = fx[a] * ft;
  return out;
}

Mat TensorFeatures::design(const Mat& x, const Vec& t) const {
  Mat a(x.rows(), size());
  for (Index i = 0; i < x.rows(); ++i) a.row(i) = (*this)(x.row(i).transpose(), t[i]).transpose();
  return a;
}

Mat TensorFeatures::x_design(const Mat& x) const {
  Mat a(x.rows(), x_size());
  Vec row(x_size());
  for (Index i = 0; i < x.rows(); ++i) {
    x_part(x.row(i).transpose(), row.data());
    a.row(i) = row.transpose();
  }
  return a;
}

// ---------------------------------------------------------------------------
// Default evaluator plumbing

void ConditionalDensity::evaluate(ConstVecRef x, std::span<const double> ts, std::span<double> out) const {
  for (std::size_t k = 0; k < ts.size(); ++k) out[k] = value(x, ts[k]);
}

namespace {

class LoopDensityAverage final : public DensityAverage {
 public:
  LoopDensityAverage(const ConditionalDensity& d, const Mat& xs) : d_(d), xs_(xs) {}
  double operator()(double t) const override {
    double s = 0.0;
    for (Index j = 0; j < xs_.rows(); ++j) s += d_.value(xs_.row(j).transpose(), t);
    return s / static_cast<double>(xs_.rows());
  }

 private:
  const ConditionalDensity& d_;
  Mat xs_;
};

class LoopLevelRows final : public BoundRows {
 public:
  LoopLevelRows(const LevelSurface& s, const Mat& xs) : s_(s), xs_(xs) {}
  void values(double t, std::span<const double> taus, std::span<double> out) const override {
    for (Index j = 0; j < xs_.rows(); ++j) {
      out[static_cast<std::size_t>(j)] = s_.value(xs_.row(j).transpose(), t, taus[static_cast<std::size_t>(j)]);
    }
  }

 private:
  const LevelSurface& s_;
  Mat xs_;
};

class LoopMeanRows final : public BoundRows {
 public:
  LoopMeanRows(const MeanSurface& s, const Mat& xs) : s_(s), xs_(xs) {}
  void values(double t, std::span<const double>, std::span<double> out) const override {
    for (Index j = 0; j < xs_.rows(); ++j) out[static_cast<std::size_t>(j)] = s_.value(xs_.row(j).transpose(), t);
  }

 private:
  const MeanSurface& s_;
  Mat xs_;
};

}  // namespace

std::unique_ptr<DensityAverage> ConditionalDensity::average_over(const Mat& xs) const {
  if (xs.rows() == 0) throw InputError("density average needs at least one row");
  return std::make_unique<LoopDensityAverage>(*this, xs);
}

std::unique_ptr<BoundRows> LevelSurface::bind(const Mat& xs) const { return std::make_unique<LoopLevelRows>(*this, xs); }

std::unique_ptr<BoundRows> MeanSurface::bind(const Mat& xs) const { return std::make_unique<LoopMeanRows>(*this, xs); }

void NuisanceBundle::require(Model m) const {
  if (!density) throw ConfigError("bundle is missing the conditional density");
  if (m == Model::rosenbaum) {
    if (!expectile || !tail_cdf) throw ConfigError("rosenbaum bundle needs expectile and tail_cdf surfaces");
  } else {
    if (!quantile || !mean || !cvar) throw ConfigError("marginal bundle needs quantile, mean and cvar surfaces");
  }
}

double zeta_from(double mean, double cvar, double lambda) { return lambda * mean - (lambda - 1.0) * cvar; }

// ---------------------------------------------------------------------------
// Linear algebra helpers

namespace {

double gram_condition(const Mat& a) {
  const Mat g = (a.transpose() * a) / static_cast<double>(a.rows());
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
}

void check_design(const Mat& a, const char* what) {
  const double cond = gram_condition(a);
  if (!(cond <= 1e10)) {
    std::ostringstream msg;
    msg << what << ": feature design is rank deficient (condition number " << std::setprecision(3) << cond
        << "); lower the polynomial degrees";
    throw FitError(msg.str());
  }
}

/// Penalized normal equations a' W a + pen I (intercept unpenalized).
Eigen::LDLT<Mat> ridge_factor(const Mat& a, const Vec& w, double ridge) {
  Mat g = a.transpose() * (a.array().colwise() * w.array()).matrix();
  const double pen = ridge * w.sum();
  for (Index k = 1; k < g.rows(); ++k) g(k, k) += pen;
  Eigen::LDLT<Mat> ldlt(g);
  if (ldlt.info() != Eigen::Success) throw FitError("ridge normal equations could not be factorized");
  return ldlt;
}

Vec ridge_fit(const Mat& a, const Vec& w, const Vec& y, double ridge) {
  const auto f = ridge_factor(a, w, ridge);
  return f.solve(a.transpose() * (w.array() * y.array()).matrix());
}

Index nearest_index(const std::vector<double>& grid, double tau) {
  const auto it = std::lower_bound(grid.begin(), grid.end(), tau);
  if (it == grid.begin()) return 0;
  if (it == grid.end()) return static_cast<Index>(grid.size()) - 1;
  const Index k = static_cast<Index>(it - grid.begin());
  // Ties go to the lower level.
  return (tau - grid[static_cast<std::size_t>(k - 1)] <= grid[static_cast<std::size_t>(k)] - tau) ? k - 1 : k;
}

std::vector<double> midpoints(const std::vector<double>& grid) {
  std::vector<double> m;
  for (std::size_t k = 0; k + 1 < grid.size(); ++k) m.push_back(0.5 * (grid[k] + grid[k + 1]));
  return m;
}

Index half_index(const std::vector<double>& taus) { return nearest_index(taus, 0.5); }

}  // namespace

// ---------------------------------------------------------------------------
// Binned density

BinnedDensity::BinnedDensity(TensorFeatures features, Mat coef, ExposureDomain domain, int bins, double floor)
    : features_(std::move(features)), coef_(std::move(coef)), domain_(domain), bins_(bins), floor_(floor) {}

int BinnedDensity::bin_of(double t) const {
  const double w = domain_.width() / bins_;
  const int b = static_cast<int>(std::floor((t - domain_.lo) / w));
  return std::clamp(b, 0, bins_ - 1);
}

Vec BinnedDensity::bin_densities(ConstVecRef x) const {
  Vec fx(features_.x_size());
  features_.x_part(x, fx.data());
  Vec eta = coef_ * fx;
  eta.array() -= eta.maxCoeff();
  Vec p = eta.array().exp();
  p /= p.sum();
  // Water-filling: find s with sum_b max(s p_b, floor w) = 1.
  const double w = domain_.width() / bins_;
  const double cell = floor_ * w;
  std::vector<Index> order(static_cast<std::size_t>(bins_));
  std::iota(order.begin(), order.end(), Index{0});
  std::sort(order.begin(), order.end(), [&](Index a, Index b) { return p[a] > p[b]; });
  double top = 0.0;
  double s = 1.0;
  for (int k = 1; k <= bins_; ++k) {
    top += p[order[static_cast<std::size_t>(k - 1)]];
    const double cand = (1.0 - (bins_ - k) * cell) / top;
    const bool inside = cand * p[order[static_cast<std::size_t>(k - 1)]] >= cell;
    const bool next_out = k == bins_ || cand * p[order[static_cast<std::size_t>(k)]] <= cell;
    if (inside && next_out) {
      s = cand;
      break;
    }
  }
  Vec dens(bins_);
  for (int b = 0; b < bins_; ++b) dens[b] = std::max(s * p[b], cell) / w;
  return dens;
}

double BinnedDensity::value(ConstVecRef x, double t) const { return bin_densities(x)[bin_of(t)]; }

void BinnedDensity::evaluate(ConstVecRef x, std::span<const double> ts, std::span<double> out) const {
  const Vec d = bin_densities(x);
  for (std::size_t k = 0; k < ts.size(); ++k) out[k] = d[bin_of(ts[k])];
}

std::vector<double> BinnedDensity::breakpoints() const {
  std::vector<double> e;
  for (int b = 1; b < bins_; ++b) e.push_back(domain_.lo + domain_.width() * b / bins_);
  return e;
}

namespace {

class BinnedAverage final : public DensityAverage {
 public:
  BinnedAverage(const BinnedDensity& d, Vec avg) : d_(d), avg_(std::move(avg)) {}
  double operator()(double t) const override { return avg_[d_.bin_of(t)]; }

 private:
  const BinnedDensity& d_;
  Vec avg_;
};

}  // namespace

std::unique_ptr<DensityAverage> BinnedDensity::average_over(const Mat& xs) const {
  if (xs.rows() == 0) throw InputError("density average needs at least one row");
  Vec acc = Vec::Zero(bins_);
  for (Index j = 0; j < xs.rows(); ++j) acc += bin_densities(xs.row(j).transpose());
  return std::make_unique<BinnedAverage>(*this, acc / static_cast<double>(xs.rows()));
}

std::shared_ptr<const BinnedDensity> fit_conditional_density(const Dataset& ds, const LearnerSpec& spec,
                                                             double density_floor) {
  spec.validate();
  const int bins = spec.bins;
  const auto& dom = ds.domain();
  if (!(density_floor > 0.0)) throw ConfigError("density floor must be > 0");
  if (!(density_floor * dom.width() < 1.0)) throw ConfigError("density floor times domain width must be < 1");
  if (ds.size() < 10 * bins) {
    throw InputError("density fit needs at least " + std::to_string(10 * bins) + " rows, got " +
                     std::to_string(ds.size()));
  }
  const Index n = ds.size();
  const double w = dom.width() / bins;
  std::vector<int> label(static_cast<std::size_t>(n));
  std::vector<int> counts(static_cast<std::size_t>(bins), 0);
  for (Index i = 0; i < n; ++i) {
    const int b = std::clamp(static_cast<int>(std::floor((ds.t()[i] - dom.lo) / w)), 0, bins - 1);
    label[static_cast<std::size_t>(i)] = b;
    ++counts[static_cast<std::size_t>(b)];
  }
  if (std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) < 2) {
    throw FitError("density fit: all exposures fall into a single bin");
  }
  TensorFeatures feats(ds.x(), dom, spec.x_degree, 0);
  const Mat z = feats.x_design(ds.x());
  check_design(z, "density fit");
  const Index d = z.cols();
  const int free = bins - 1;
  const Index m = free * d;
  const double pen = spec.ridge * static_cast<double>(n);

  Mat onehot = Mat::Zero(n, bins);
  for (Index i = 0; i < n; ++i) onehot(i, label[static_cast<std::size_t>(i)]) = 1.0;

  Mat theta = Mat::Zero(bins, d);  // row 0 pinned at zero
  // Start from the marginal bin frequencies.
  for (int b = 1; b < bins; ++b) {
    theta(b, 0) = std::log((counts[static_cast<std::size_t>(b)] + 0.5) / (counts[0] + 0.5));
  }
  auto probs = [&](const Mat& th) {
    Mat eta = z * th.transpose();
    for (Index i = 0; i < n; ++i) {
      const double mx = eta.row(i).maxCoeff();
      eta.row(i).array() = (eta.row(i).array() - mx).exp();
      eta.row(i) /= eta.row(i).sum();
    }
    return eta;
  };
  auto objective = [&](const Mat& th, const Mat& p) {
    double ll = 0.0;
    for (Index i = 0; i < n; ++i) ll += std::log(std::max(p(i, label[static_cast<std::size_t>(i)]), 1e-300));
    return -ll + 0.5 * pen * th.bottomRows(free).squaredNorm();
  };
  Mat p = probs(theta);
  double obj = objective(theta, p);
  bool converged = false;
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    Vec grad(m);
    for (int k = 0; k < free; ++k) {
      grad.segment(k * d, d) = z.transpose() * (onehot.col(k + 1) - p.col(k + 1)) - pen * theta.row(k + 1).transpose();
    }
    Mat h(m, m);
    for (int k = 0; k < free; ++k) {
      for (int l = k; l < free; ++l) {
        Vec c = -(p.col(k + 1).array() * p.col(l + 1).array()).matrix();
        if (k == l) c += p.col(k + 1);
        const Mat blk = z.transpose() * (z.array().colwise() * c.array()).matrix();
        h.block(k * d, l * d, d, d) = blk;
        h.block(l * d, k * d, d, d) = blk.transpose();
      }
    }
    h.diagonal().array() += pen;
    Eigen::LDLT<Mat> ldlt(h);
    if (ldlt.info() != Eigen::Success) throw FitError("density fit: singular Newton system");
    const Vec step = ldlt.solve(grad);
    double scale = 1.0;
    Mat next;
    Mat pn;
    double on = obj;
    for (int ls = 0; ls < 40; ++ls) {
      next = theta;
      for (int k = 0; k < free; ++k) next.row(k + 1) += scale * step.segment(k * d, d).transpose();
      pn = probs(next);
      on = objective(next, pn);
      if (on <= obj + 1e-12 * std::abs(obj)) break;
      scale *= 0.5;
    }
    const double change = obj - on;
    theta = next;
    p = pn;
    obj = on;
    if (scale * step.lpNorm<Eigen::Infinity>() < 1e-9 || std::abs(change) < 1e-12 * (1.0 + std::abs(obj))) {
      converged = true;
      break;
    }
  }
  if (!converged) throw FitError("density fit: Newton iterations did not converge");
  return std::make_shared<BinnedDensity>(std::move(feats), std::move(theta), dom, bins, density_floor);
}

// ---------------------------------------------------------------------------
// Tau surfaces

SieveLevelSurface::SieveLevelSurface(TensorFeatures features, std::vector<double> taus, Mat coef)
    : features_(std::move(features)), taus_(std::move(taus)), coef_(std::move(coef)) {}

Vec SieveLevelSurface::levels(ConstVecRef x, double t) const {
  Vec v = coef_ * features_(x, t);
  isotonic_repair(std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
  return v;
}

Index SieveLevelSurface::snap_index(double tau) const { return nearest_index(taus_, tau); }

double SieveLevelSurface::snap(double tau) const { return taus_[static_cast<std::size_t>(snap_index(tau))]; }

double SieveLevelSurface::value(ConstVecRef x, double t, double tau) const {
  if (!(tau > 0.0 && tau < 1.0)) throw InputError("surface level must lie in (0, 1)");
  return levels(x, t)[snap_index(tau)];
}

std::vector<double> SieveLevelSurface::switch_levels() const { return midpoints(taus_); }

namespace {

/// Per-row partial contractions G_j(k, b) = sum_a C(k, a nt + b) phi_x,a(x_j).
Mat contract_rows(const TensorFeatures& f, const Mat& coef, const Mat& xs) {
  const Index nx = f.x_size();
  const Index nt = f.t_size();
  const Index levels = coef.rows();
  Mat out(xs.rows(), levels * nt);
  Vec fx(nx);
  for (Index j = 0; j < xs.rows(); ++j) {
    f.x_part(xs.row(j).transpose(), fx.data());
    for (Index k = 0; k < levels; ++k) {
      for (Index b = 0; b < nt; ++b) {
        double s = 0.0;
        for (Index a = 0; a < nx; ++a) s += coef(k, a * nt + b) * fx[a];
        out(j, k * nt + b) = s;
      }
    }
  }
  return out;
}

class SieveRows final : public BoundRows {
 public:
  SieveRows(const SieveLevelSurface& s, const Mat& xs)
      : s_(s), g_(contract_rows(s.features(), s.coef(), xs)) {}

  void values(double t, std::span<const double> taus, std::span<double> out) const override {
    const Index nt = s_.features().t_size();
    const Index levels = s_.coef().rows();
    Vec ft(nt);
    s_.features().t_part(t, ft.data());
    std::vector<double> v(static_cast<std::size_t>(levels));
    for (Index j = 0; j < g_.rows(); ++j) {
      for (Index k = 0; k < levels; ++k) {
        double s = 0.0;
        for (Index b = 0; b < nt; ++b) s += g_(j, k * nt + b) * ft[b];
        v[static_cast<std::size_t>(k)] = s;
      }
      isotonic_repair(v);
      out[static_cast<std::size_t>(j)] = v[static_cast<std::size_t>(s_.snap_index(taus[static_cast<std::size_t>(j)]))];
    }
  }

 private:
  const SieveLevelSurface& s_;
  Mat g_;
};

}  // namespace

std::unique_ptr<BoundRows> SieveLevelSurface::bind(const Mat& xs) const { return std::make_unique<SieveRows>(*this, xs); }

namespace {

struct SurfaceInputs {
  TensorFeatures features;
  Mat a;
};

SurfaceInputs surface_inputs(const Dataset& ds, const LearnerSpec& spec, const char* what) {
  spec.validate();
  TensorFeatures f(ds.x(), ds.domain(), spec.x_degree, spec.t_degree);
  if (ds.size() <= f.size()) {
    throw InputError(std::string(what) + ": needs more rows than features (" + std::to_string(f.size()) + ")");
  }
  Mat a = f.design(ds.x(), ds.t());
  check_design(a, what);
  return {std::move(f), std::move(a)};
}

/// Order in which tau levels are visited: outward from the median level so
/// each fit warm-starts from its neighbour.
std::vector<Index> outward_order(Index levels, Index mid) {
  std::vector<Index> order{mid};
  for (Index d = 1; d < levels; ++d) {
    if (mid + d < levels) order.push_back(mid + d);
    if (mid - d >= 0) order.push_back(mid - d);
  }
  return order;
}

/// Newton on the penalized asymmetric squared loss with a backtracking line
/// search; the penalty is fixed at its tau = 1/2 scale so every iterate
/// minimizes the same objective.
Vec fit_expectile_level(const Mat& a, const Vec& y, double tau, Vec beta, const LearnerSpec& spec) {
  const Index n = a.rows();
  const Index p = a.cols();
  const double pen = 0.5 * spec.ridge * static_cast<double>(n);
  auto weights = [&](const Vec& r) {
    Vec out(n);
    for (Index i = 0; i < n; ++i) out[i] = r[i] > 0.0 ? tau : 1.0 - tau;
    return out;
  };
  auto objective = [&](const Vec& b) {
    const Vec r = y - a * b;
    return 0.5 * (weights(r).array() * r.array().square()).sum() + 0.5 * pen * b.tail(p - 1).squaredNorm();
  };
  double obj = objective(beta);
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    const Vec w = weights(y - a * beta);
    Mat g = a.transpose() * (a.array().colwise() * w.array()).matrix();
    for (Index k = 1; k < p; ++k) g(k, k) += pen;
    Eigen::LDLT<Mat> ldlt(g);
    if (ldlt.info() != Eigen::Success) throw FitError("expectile normal equations could not be factorized");
    const Vec full = ldlt.solve(a.transpose() * (w.array() * y.array()).matrix());
    // A full step that keeps the sign pattern lands on the exact minimizer.
    if ((weights(y - a * full) - w).cwiseAbs().maxCoeff() == 0.0) return full;
    const Vec step = full - beta;
    double scale = 1.0;
    Vec next = full;
    double on = objective(next);
    for (int ls = 0; ls < 60 && on > obj; ++ls) {
      scale *= 0.5;
      next = beta + scale * step;
      on = objective(next);
    }
    if (!(on <= obj)) return beta;
    const double change = obj - on;
    beta = next;
    obj = on;
    if (change <= 1e-14 * (1.0 + obj) || scale * step.lpNorm<Eigen::Infinity>() < 1e-12) return beta;
  }
  throw FitError("expectile fit did not converge at tau=" + std::to_string(tau) + " after " +
                 std::to_string(spec.max_iter) + " iterations");
}

/// Smoothed check loss: quadratic within +-h of zero, linear outside.
double smooth_check(double r, double tau, double h) {
  const double a = std::abs(r);
  const double wt = r > 0.0 ? tau : 1.0 - tau;
  return wt * (a <= h ? a * a / (2.0 * h) : a - 0.5 * h);
}

Vec fit_quantile_level(const Mat& a, const Vec& y, double tau, Vec beta, double h, const LearnerSpec& spec) {
  const Index n = a.rows();
  const Index p = a.cols();
  const double pen = spec.ridge * static_cast<double>(n);
  auto objective = [&](const Vec& b) {
    const Vec r = y - a * b;
    double s = 0.0;
    for (Index i = 0; i < n; ++i) s += smooth_check(r[i], tau, h);
    return s + 0.5 * pen * b.tail(p - 1).squaredNorm();
  };
  double obj = objective(beta);
  for (int iter = 0; iter < spec.max_iter; ++iter) {
    const Vec r = y - a * beta;
    Vec score(n);
    Vec curv(n);
    for (Index i = 0; i < n; ++i) {
      const double wt = r[i] > 0.0 ? tau : 1.0 - tau;
      if (std::abs(r[i]) <= h) {
        score[i] = wt * r[i] / h;
        curv[i] = wt / h;
      } else {
        score[i] = r[i] > 0.0 ? wt : -wt;
        curv[i] = 0.0;
      }
    }
    Vec grad = a.transpose() * score;
    grad.tail(p - 1) -= pen * beta.tail(p - 1);
    Mat hess = a.transpose() * (a.array().colwise() * curv.array()).matrix();
    for (Index k = 1; k < p; ++k) hess(k, k) += pen;
    hess.diagonal().array() += 1e-10 * static_cast<double>(n);
    Eigen::LDLT<Mat> ldlt(hess);
    const Vec step = ldlt.solve(grad);
    double scale = 1.0;
    Vec next = beta;
    double on = obj;
    for (int ls = 0; ls < 60; ++ls) {
      next = beta + scale * step;
      on = objective(next);
      if (on <= obj) break;
      scale *= 0.5;
    }
    if (!(on <= obj)) return beta;  // no descent left at working precision
    const double change = obj - on;
    beta = next;
    obj = on;
    if (change <= 1e-13 * (1.0 + std::abs(obj)) || scale * step.lpNorm<Eigen::Infinity>() < 1e-11) return beta;
  }
  throw FitError("quantile fit did not converge at tau=" + std::to_string(tau) + " after " +
                 std::to_string(spec.max_iter) + " iterations");
}

}  // namespace

std::shared_ptr<const SieveLevelSurface> fit_expectile_surface(const Dataset& ds, const LearnerSpec& spec) {
  auto in = surface_inputs(ds, spec, "expectile fit");
  const auto taus = spec.tau_grid();
  const Index levels = static_cast<Index>(taus.size());
  const Index mid = half_index(taus);
  Mat coef(levels, in.a.cols());
  const Vec ones = Vec::Ones(ds.size());
  const Vec start = ridge_fit(in.a, ones, ds.y(), spec.ridge);
  Vec prev_up = start;
  Vec prev_down = start;
  for (Index k : outward_order(levels, mid)) {
    Vec& warm = k >= mid ? prev_up : prev_down;
    const Vec b = fit_expectile_level(in.a, ds.y(), taus[static_cast<std::size_t>(k)], warm, spec);
    coef.row(k) = b.transpose();
    if (k == mid) prev_down = b;
    warm = b;
  }
  return std::make_shared<SieveLevelSurface>(std::move(in.features), taus, std::move(coef));
}

std::shared_ptr<const SieveLevelSurface> fit_quantile_surface(const Dataset& ds, const LearnerSpec& spec) {
  auto in = surface_inputs(ds, spec, "quantile fit");
  const auto taus = spec.tau_grid();
  const Index levels = static_cast<Index>(taus.size());
  const Index mid = half_index(taus);
  const Index n = ds.size();
  const double sd = std::sqrt((ds.y().array() - ds.y().mean()).square().mean());
  // Smoothing width shrinks with n so the smoothing bias vanishes.
  const double h = std::max(sd, 1e-12) * 0.5 * std::pow(static_cast<double>(n), -1.0 / 3.0);
  Mat coef(levels, in.a.cols());
  const Vec start = ridge_fit(in.a, Vec::Ones(n), ds.y(), spec.ridge);
  Vec prev_up = start;
  Vec prev_down = start;
  for (Index k : outward_order(levels, mid)) {
    Vec& warm = k >= mid ? prev_up : prev_down;
    const Vec b = fit_quantile_level(in.a, ds.y(), taus[static_cast<std::size_t>(k)], warm, h, spec);
    coef.row(k) = b.transpose();
    if (k == mid) prev_down = b;
    warm = b;
  }
  return std::make_shared<SieveLevelSurface>(std::move(in.features), taus, std::move(coef));
}

// ---------------------------------------------------------------------------
// Tail CDF, mean, CVaR

namespace {

class SieveTailCdf final : public TailCdf {
 public:
  SieveTailCdf(TensorFeatures f, std::vector<double> probes, Mat coef)
      : f_(std::move(f)), probes_(std::move(probes)), coef_(std::move(coef)) {}

  double value(ConstVecRef x, double t, double y) const override {
    if (y < probes_.front()) return 0.0;
    if (y >= probes_.back()) return 1.0;
    Vec v = coef_ * f_(x, t);
    for (Index k = 0; k < v.size(); ++k) v[k] = std::clamp(v[k], 0.0, 1.0);
    isotonic_repair(std::span<double>(v.data(), static_cast<std::size_t>(v.size())));
    const auto it = std::upper_bound(probes_.begin(), probes_.end(), y);
    const std::size_t k = static_cast<std::size_t>(it - probes_.begin());  // probes_[k-1] <= y < probes_[k]
    const double a = probes_[k - 1];
    const double b = probes_[k];
    const double s = (y - a) / (b - a);
    return (1.0 - s) * v[static_cast<Index>(k - 1)] + s * v[static_cast<Index>(k)];
  }

 private:
  TensorFeatures f_;
  std::vector<double> probes_;
  Mat coef_;  // probes x features
};

class SieveMean final : public MeanSurface {
 public:
  SieveMean(TensorFeatures f, Vec beta) : f_(std::move(f)), beta_(std::move(beta)) {}
  double value(ConstVecRef x, double t) const override { return f_(x, t).dot(beta_); }

 private:
  TensorFeatures f_;
  Vec beta_;
};

class SieveCvar final : public LevelSurface {
 public:
  SieveCvar(std::shared_ptr<const SieveLevelSurface> q, TensorFeatures f, Mat excess)
      : q_(std::move(q)), f_(std::move(f)), excess_(std::move(excess)) {}

  double value(ConstVecRef x, double t, double tau) const override {
    if (!(tau > 0.0 && tau < 1.0)) throw InputError("cvar level must lie in (0, 1)");
    const Index k = q_->snap_index(tau);
    const double q = q_->levels(x, t)[k];
    const double e = std::max(excess_.row(k).dot(f_(x, t)), 0.0);
    return q + e / (1.0 - q_->taus()[static_cast<std::size_t>(k)]);
  }
  double snap(double tau) const override { return q_->snap(tau); }
  std::vector<double> switch_levels() const override { return q_->switch_levels(); }
  std::unique_ptr<BoundRows> bind(const Mat& xs) const override;

  const SieveLevelSurface& quantile() const { return *q_; }
  const TensorFeatures& features() const { return f_; }
  const Mat& excess() const { return excess_; }

 private:
  std::shared_ptr<const SieveLevelSurface> q_;
  TensorFeatures f_;
  Mat excess_;  // levels x features
};

class SieveCvarRows final : public BoundRows {
 public:
  SieveCvarRows(const SieveCvar& c, const Mat& xs)
      : c_(c), q_rows_(c.quantile().bind(xs)), g_(contract_rows(c.features(), c.excess(), xs)) {}

  void values(double t, std::span<const double> taus, std::span<double> out) const override {
    q_rows_->values(t, taus, out);
    const Index nt = c_.features().t_size();
    Vec ft(nt);
    c_.features().t_part(t, ft.data());
    const auto& grid = c_.quantile().taus();
    for (Index j = 0; j < g_.rows(); ++j) {
      const Index k = c_.quantile().snap_index(taus[static_cast<std::size_t>(j)]);
      double e = 0.0;
      for (Index b = 0; b < nt; ++b) e += g_(j, k * nt + b) * ft[b];
      out[static_cast<std::size_t>(j)] += std::max(e, 0.0) / (1.0 - grid[static_cast<std::size_t>(k)]);
    }
  }

 private:
  const SieveCvar& c_;
  std::unique_ptr<BoundRows> q_rows_;
  Mat g_;
};

std::unique_ptr<BoundRows> SieveCvar::bind(const Mat& xs) const { return std::make_unique<SieveCvarRows>(*this, xs); }

}  // namespace

std::shared_ptr<const TailCdf> fit_tail_cdf(const Dataset& ds, const LearnerSpec& spec) {
  auto in = surface_inputs(ds, spec, "tail cdf fit");
  const Index n = ds.size();
  std::vector<double> sorted(ds.y().data(), ds.y().data() + n);
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> probes;
  for (int g = 0; g < spec.cdf_points; ++g) {
    const double pos = static_cast<double>(g) / (spec.cdf_points - 1) * static_cast<double>(n - 1);
    const double v = sorted[static_cast<std::size_t>(std::llround(pos))];
    if (probes.empty() || v > probes.back()) probes.push_back(v);
  }
  if (probes.size() < 2) probes.push_back(probes.front() + 1.0);
  Mat ind(n, static_cast<Index>(probes.size()));
  for (Index i = 0; i < n; ++i) {
    for (std::size_t g = 0; g < probes.size(); ++g) ind(i, static_cast<Index>(g)) = ds.y()[i] <= probes[g] ? 1.0 : 0.0;
  }
  const auto f = ridge_factor(in.a, Vec::Ones(n), spec.ridge);
  Mat coef = f.solve(in.a.transpose() * ind).transpose();
  return std::make_shared<SieveTailCdf>(std::move(in.features), std::move(probes), std::move(coef));
}

std::shared_ptr<const MeanSurface> fit_mean_surface(const Dataset& ds, const LearnerSpec& spec) {
  auto in = surface_inputs(ds, spec, "mean fit");
  Vec beta = ridge_fit(in.a, Vec::Ones(ds.size()), ds.y(), spec.ridge);
  return std::make_shared<SieveMean>(std::move(in.features), std::move(beta));
}

std::shared_ptr<const LevelSurface> fit_cvar_surface(const Dataset& ds,
                                                     std::shared_ptr<const SieveLevelSurface> quantile,
                                                     const LearnerSpec& spec) {
  if (!quantile) throw ConfigError("cvar fit needs a fitted quantile surface");
  auto in = surface_inputs(ds, spec, "cvar fit");
  const Index n = ds.size();
  const Index levels = static_cast<Index>(quantile->taus().size());
  Mat target(n, levels);
  for (Index i = 0; i < n; ++i) {
    const Vec q = quantile->levels(ds.x_row(i), ds.t()[i]);
    for (Index k = 0; k < levels; ++k) target(i, k) = std::max(ds.y()[i] - q[k], 0.0);
  }
  const auto f = ridge_factor(in.a, Vec::Ones(n), spec.ridge);
  Mat excess = f.solve(in.a.transpose() * target).transpose();
  return std::make_shared<SieveCvar>(std::move(quantile), std::move(in.features), std::move(excess));
}

TailAndZeta fit_tail_and_zeta(const Dataset& ds, std::shared_ptr<const SieveLevelSurface> quantile,
                              const LearnerSpec& spec) {
  TailAndZeta out;
  out.tail_cdf = fit_tail_cdf(ds, spec);
  out.mean = fit_mean_surface(ds, spec);
  out.cvar = fit_cvar_surface(ds, std::move(quantile), spec);
  return out;
}

// ---------------------------------------------------------------------------
// Assembly

std::pair<std::vector<Index>, std::vector<Index>> nested_halves(Index n, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
  std::vector<Index> a(perm.begin(), perm.begin() + n / 2);
  std::vector<Index> b(perm.begin() + n / 2, perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return {a, b};
}

NuisanceBundle assemble_bundle(const Dataset& i3, const RunConfig& cfg) {
  NuisanceBundle b;
  b.model = cfg.model;
  const auto& spec = cfg.learner;
  b.density = fit_conditional_density(i3, spec, cfg.floor_for(i3.domain()));
  Dataset first = i3;
  Dataset second = i3;
  if (cfg.nested_split) {
    const auto [h1, h2] = nested_halves(i3.size(), cfg.seed);
    first = i3.subset(h1);
    second = i3.subset(h2);
  }
  b.mean = fit_mean_surface(second, spec);
  if (cfg.model == Model::rosenbaum) {
    b.expectile = fit_expectile_surface(first, spec);
    b.tail_cdf = fit_tail_cdf(second, spec);
  } else {
    auto q = fit_quantile_surface(first, spec);
    b.quantile = q;
    b.cvar = fit_cvar_surface(second, q, spec);
  }
  return b;
}

BundleFactory builtin_factory() {
  return [](const Dataset& i3, const RunConfig& cfg, bool) { return assemble_bundle(i3, cfg); };
}

void export_probe_grid(const NuisanceBundle& bundle, const Mat& xs, std::span<const double> ts,
                       std::span<const double> taus, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "row,t,tau,density,expectile,quantile,cvar,mean\n";
  auto cell = [&](bool have, auto fn) {
    out << ',';
    if (have) out << fn();
  };
  for (Index j = 0; j < xs.rows(); ++j) {
    const Vec x = xs.row(j).transpose();
    for (double t : ts) {
      for (double tau : taus) {
        out << j << ',' << t << ',' << tau;
        cell(static_cast<bool>(bundle.density), [&] { return bundle.density->value(x, t); });
        cell(static_cast<bool>(bundle.expectile), [&] { return bundle.expectile->value(x, t, tau); });
        cell(static_cast<bool>(bundle.quantile), [&] { return bundle.quantile->value(x, t, tau); });
        cell(static_cast<bool>(bundle.cvar), [&] { return bundle.cvar->value(x, t, tau); });
        cell(static_cast<bool>(bundle.mean), [&] { return bundle.mean->value(x, t); });
        out << '\n';
      }
    }
  }
}

}  // namespace dosebound
