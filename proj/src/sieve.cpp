#include "dosebound/sieve.hpp"

#include "dosebound/normal.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <sstream>

namespace dosebound {

const char* to_string(BasisKind k) {
  switch (k) {
    case BasisKind::polynomial: return "polynomial";
    case BasisKind::legendre: return "legendre";
    case BasisKind::bspline: return "bspline";
    case BasisKind::fourier: return "fourier";
  }
  return "unknown";
}

BasisKind parse_basis_kind(const std::string& name) {
  for (auto k : {BasisKind::polynomial, BasisKind::legendre, BasisKind::bspline, BasisKind::fourier}) {
    if (name == to_string(k)) return k;
  }
  throw ConfigError("unknown basis kind '" + name + "'");
}

BasisSystem::BasisSystem(BasisKind kind, int J, ExposureDomain domain) : kind_(kind), J_(J), domain_(domain) {
  if (J < 1) throw ConfigError("basis dimension J must be >= 1");
  if (kind == BasisKind::bspline && J < 4) throw ConfigError("cubic bspline basis needs J >= 4");
}

BasisSystem make_basis(const BasisSpec& spec, const ExposureDomain& domain) {
  return BasisSystem(parse_basis_kind(spec.kind), spec.J, domain);
}

namespace {

// Cox-de Boor on a clamped uniform cubic knot vector with `count` functions.
void cubic_bsplines(double s, int count, double* out) {
  const int degree = 3;
  const int inner = count - degree;  // number of knot spans
  std::vector<double> knots;
  for (int k = 0; k < degree; ++k) knots.push_back(0.0);
  for (int k = 0; k <= inner; ++k) knots.push_back(static_cast<double>(k) / inner);
  for (int k = 0; k < degree; ++k) knots.push_back(1.0);
  const int m = static_cast<int>(knots.size()) - 1;
  std::vector<double> b(static_cast<std::size_t>(m), 0.0);
  const double sc = std::clamp(s, 0.0, 1.0);
  for (int i = 0; i < m; ++i) {
    const bool last = sc == 1.0 && knots[static_cast<std::size_t>(i + 1)] == 1.0 && knots[static_cast<std::size_t>(i)] < 1.0;
    if ((knots[static_cast<std::size_t>(i)] <= sc && sc < knots[static_cast<std::size_t>(i + 1)]) || last) b[static_cast<std::size_t>(i)] = 1.0;
  }
  for (int d = 1; d <= degree; ++d) {
    for (int i = 0; i + d < m; ++i) {
      const double k0 = knots[static_cast<std::size_t>(i)];
      const double kd = knots[static_cast<std::size_t>(i + d)];
      const double k1 = knots[static_cast<std::size_t>(i + 1)];
      const double kd1 = knots[static_cast<std::size_t>(i + d + 1)];
      double v = 0.0;
      if (kd > k0) v += (sc - k0) / (kd - k0) * b[static_cast<std::size_t>(i)];
      if (kd1 > k1) v += (kd1 - sc) / (kd1 - k1) * b[static_cast<std::size_t>(i + 1)];
      b[static_cast<std::size_t>(i)] = v;
    }
  }
  for (int i = 0; i < count; ++i) out[i] = b[static_cast<std::size_t>(i)];
}

}  // namespace

void BasisSystem::eval(double t, double* out) const {
  const double s = (t - domain_.lo) / domain_.width();
  const double u = 2.0 * s - 1.0;
  switch (kind_) {
    case BasisKind::polynomial: {
      out[0] = 1.0;
      for (int k = 1; k < J_; ++k) out[k] = out[k - 1] * u;
      break;
    }
    case BasisKind::legendre: {
      out[0] = 1.0;
      if (J_ > 1) out[1] = u;
      for (int k = 2; k < J_; ++k) out[k] = ((2.0 * k - 1.0) * u * out[k - 1] - (k - 1.0) * out[k - 2]) / k;
      break;
    }
    case BasisKind::bspline: {
      std::vector<double> b(static_cast<std::size_t>(J_));
      cubic_bsplines(s, J_, b.data());
      // The B-splines sum to one, so dropping the first keeps the span.
      out[0] = 1.0;
      for (int k = 1; k < J_; ++k) out[k] = b[static_cast<std::size_t>(k)];
      break;
    }
    case BasisKind::fourier: {
      out[0] = 1.0;
      for (int k = 1; k < J_; ++k) {
        const int freq = (k + 1) / 2;
        const double arg = 2.0 * std::numbers::pi * freq * s;
        out[k] = (k % 2 == 1) ? std::cos(arg) : std::sin(arg);
      }
      break;
    }
  }
}

Vec BasisSystem::operator()(double t) const {
  Vec v(J_);
  eval(t, v.data());
  return v;
}

Mat BasisSystem::design(std::span<const double> ts) const {
  Mat a(static_cast<Index>(ts.size()), J_);
  Vec row(J_);
  for (std::size_t i = 0; i < ts.size(); ++i) {
    eval(ts[i], row.data());
    a.row(static_cast<Index>(i)) = row.transpose();
  }
  return a;
}

double BasisSystem::xi() const {
  double best = 0.0;
  Vec row(J_);
  for (int k = 0; k <= 2000; ++k) {
    eval(domain_.lo + domain_.width() * k / 2000.0, row.data());
    best = std::max(best, row.norm());
  }
  return best;
}

double BasisSystem::gram_condition() const {
  const auto q = gauss_legendre(std::max(64, 2 * J_ + 8), domain_.lo, domain_.hi);
  Mat g = Mat::Zero(J_, J_);
  Vec row(J_);
  for (Index k = 0; k < q.nodes.size(); ++k) {
    eval(q.nodes[k], row.data());
    g += (q.weights[k] / domain_.width()) * row * row.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(g, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  return lo > 0.0 ? es.eigenvalues().maxCoeff() / lo : std::numeric_limits<double>::infinity();
}

OlsFit fit_ols(std::span<const double> t, std::span<const double> y, const BasisSystem& basis) {
  if (t.size() != y.size()) throw InputError("t and y differ in length");
  const Index n = static_cast<Index>(t.size());
  const int J = basis.size();
  if (n <= J) throw InputError("OLS needs more samples than basis functions");
  for (double v : t) {
    if (!basis.domain().contains(v)) throw InputError("sample exposure outside the basis domain");
  }
  const Mat a = basis.design(t);
  const Eigen::Map<const Vec> yv(y.data(), n);
  OlsFit fit;
  fit.n = n;
  fit.Q_hat = (a.transpose() * a) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Mat> es(fit.Q_hat, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double cond = lo > 0.0 ? es.eigenvalues().maxCoeff() / lo : std::numeric_limits<double>::infinity();
  if (!(cond <= 1e10)) {
    std::ostringstream msg;
    msg << "sieve Gram matrix is ill-conditioned (condition number " << std::setprecision(3) << cond
        << "); use a smaller J or the legendre basis";
    throw FitError(msg.str());
  }
  Eigen::LLT<Mat> llt(fit.Q_hat);
  if (llt.info() != Eigen::Success) throw FitError("sieve Gram matrix is not positive definite");
  fit.beta = llt.solve(a.transpose() * yv / static_cast<double>(n));
  return fit;
}

namespace {

void split_samples(const std::vector<PseudoOutcomeSample>& s, std::vector<double>& t, std::vector<double>& y) {
  t.resize(s.size());
  y.resize(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    t[i] = s[i].t;
    y[i] = s[i].y_hat;
  }
}

}  // namespace

OlsFit fit_ols(const std::vector<PseudoOutcomeSample>& samples, const BasisSystem& basis) {
  std::vector<double> t;
  std::vector<double> y;
  split_samples(samples, t, y);
  return fit_ols(t, y, basis);
}

Mat estimate_variance(std::span<const double> t, std::span<const double> y, const BasisSystem& basis,
                      const OlsFit& fit) {
  const Index n = static_cast<Index>(t.size());
  const int J = basis.size();
  Mat sigma = Mat::Zero(J, J);
  Vec row(J);
  for (Index i = 0; i < n; ++i) {
    basis.eval(t[static_cast<std::size_t>(i)], row.data());
    const double eps = y[static_cast<std::size_t>(i)] - row.dot(fit.beta);
    sigma.selfadjointView<Eigen::Lower>().rankUpdate(row, eps * eps);
  }
  sigma = sigma.selfadjointView<Eigen::Lower>();
  sigma /= static_cast<double>(n);
  Eigen::LLT<Mat> llt(fit.Q_hat);
  if (llt.info() != Eigen::Success) throw FitError("sieve Gram matrix is not positive definite");
  const Mat qinv = llt.solve(Mat::Identity(J, J));
  Mat omega = qinv * sigma * qinv;
  return 0.5 * (omega + omega.transpose());
}

Mat estimate_variance(const std::vector<PseudoOutcomeSample>& samples, const BasisSystem& basis, const OlsFit& fit) {
  std::vector<double> t;
  std::vector<double> y;
  split_samples(samples, t, y);
  return estimate_variance(t, y, basis, fit);
}

BoundCurve predict_curve(const OlsFit& fit, const Mat& omega, const BasisSystem& basis, const std::vector<double>& grid,
                         double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const double z = normal::quantile(1.0 - alpha / 2.0);
  BoundCurve c;
  c.beta = fit.beta;
  c.Q_hat = fit.Q_hat;
  c.Omega_hat = omega;
  c.grid = grid;
  c.n_used = fit.n;
  c.alpha = alpha;
  const Index g = static_cast<Index>(grid.size());
  c.values.resize(g);
  c.se.resize(g);
  c.ci_lo.resize(g);
  c.ci_hi.resize(g);
  Vec row(basis.size());
  for (Index k = 0; k < g; ++k) {
    const double t = grid[static_cast<std::size_t>(k)];
    if (!basis.domain().contains(t)) throw InputError("grid point " + std::to_string(t) + " lies outside the domain");
    basis.eval(t, row.data());
    c.values[k] = row.dot(fit.beta);
    c.se[k] = std::sqrt(std::max(row.dot(omega * row), 0.0) / static_cast<double>(fit.n));
    c.ci_lo[k] = c.values[k] - z * c.se[k];
    c.ci_hi[k] = c.values[k] + z * c.se[k];
  }
  return c;
}

BoundCurve cross_fit_average(const std::vector<BoundCurve>& curves, double alpha) {
  if (curves.empty()) throw InputError("no curves to average");
  if (curves.size() == 1) return curves.front();
  const double z = normal::quantile(1.0 - alpha / 2.0);
  BoundCurve out = curves.front();
  const double m = static_cast<double>(curves.size());
  for (std::size_t k = 1; k < curves.size(); ++k) {
    const auto& c = curves[k];
    if (c.grid != out.grid || c.beta.size() != out.beta.size()) throw InputError("curves use different grids or bases");
    out.beta += c.beta;
    out.Q_hat += c.Q_hat;
    out.Omega_hat += c.Omega_hat;
    out.values += c.values;
    out.se += c.se;
    out.n_used += c.n_used;
  }
  out.beta /= m;
  out.Q_hat /= m;
  out.Omega_hat /= m;
  out.values /= m;
  out.se /= m;
  out.n_used = static_cast<Index>(std::llround(static_cast<double>(out.n_used) / m));
  out.alpha = alpha;
  out.ci_lo = out.values - z * out.se;
  out.ci_hi = out.values + z * out.se;
  return out;
}

BoundCurve fit_bound_curve(const std::vector<PseudoOutcomeSet>& sets, const BasisSystem& basis,
                           const std::vector<double>& grid, double alpha, std::vector<BoundCurve>* per_triple) {
  std::vector<BoundCurve> curves;
  for (const auto& s : sets) {
    const auto fit = fit_ols(s.samples, basis);
    const Mat omega = estimate_variance(s.samples, basis, fit);
    curves.push_back(predict_curve(fit, omega, basis, grid, alpha));
  }
  if (per_triple) *per_triple = curves;
  return cross_fit_average(curves, alpha);
}

BoundCurve negate_curve(const BoundCurve& c) {
  BoundCurve out = c;
  out.beta = -c.beta;
  out.values = -c.values;
  out.ci_lo = -c.ci_hi;
  out.ci_hi = -c.ci_lo;
  return out;
}

void write_curve_csv(const BoundCurve& c, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "t,estimate,se,ci_lo,ci_hi\n";
  for (std::size_t k = 0; k < c.grid.size(); ++k) {
    const Index i = static_cast<Index>(k);
    out << c.grid[k] << ',' << c.values[i] << ',' << c.se[i] << ',' << c.ci_lo[i] << ',' << c.ci_hi[i] << '\n';
  }
}

nlohmann::json curve_to_json(const BoundCurve& c) {
  auto vec = [](const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  auto mat = [](const Mat& m) {
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(m.rows()));
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) rows[static_cast<std::size_t>(i)].push_back(m(i, j));
    }
    return rows;
  };
  nlohmann::json j;
  j["beta"] = vec(c.beta);
  j["Q_hat"] = mat(c.Q_hat);
  j["Omega_hat"] = mat(c.Omega_hat);
  j["grid"] = c.grid;
  j["estimate"] = vec(c.values);
  j["se"] = vec(c.se);
  j["ci_lo"] = vec(c.ci_lo);
  j["ci_hi"] = vec(c.ci_hi);
  j["n_used"] = c.n_used;
  j["alpha"] = c.alpha;
  return j;
}

}  // namespace dosebound
