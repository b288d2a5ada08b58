#ifndef DOSEBOUND_CORE_DATA_HPP_
#define DOSEBOUND_CORE_DATA_HPP_

#include "dosebound/common.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace dosebound {

/// Compact exposure interval [lo, hi].
struct ExposureDomain {
  Scalar lo = 0.0;
  Scalar hi = 1.0;

  static ExposureDomain make(Scalar lo, Scalar hi);

  Scalar width() const { return hi - lo; }
  bool contains(Scalar t) const { return t >= lo && t <= hi; }
  bool operator==(const ExposureDomain&) const = default;
};

/// Observed rows (x, t, y). Immutable once built; every constructor path
/// validates finiteness, a common covariate dimension, and t in the domain.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Mat x, Vec t, Vec y, ExposureDomain domain);

  Index size() const { return t_.size(); }
  Index dim() const { return x_.cols(); }
  const ExposureDomain& domain() const { return domain_; }

  const Mat& x() const { return x_; }
  const Vec& t() const { return t_; }
  const Vec& y() const { return y_; }
  auto x_row(Index i) const { return x_.row(i).transpose(); }

  Dataset subset(std::span<const Index> rows) const;

 private:
  Mat x_;
  Vec t_;
  Vec y_;
  ExposureDomain domain_;
};

/// y -> -y; applying it twice returns the original dataset.
Dataset negate_outcomes(const Dataset& ds);

struct RoleTriple {
  std::vector<int> i1_folds;  // evaluation / regression set
  int i2_fold = 0;            // aggregation averages
  int i3_fold = 0;            // nuisance fitting
};

/// Fold assignment plus the role rotation used for cross-fitting.
struct FoldPlan {
  Index n = 0;
  int folds = 0;
  std::vector<int> assignment;
  std::vector<RoleTriple> roles;

  std::vector<Index> rows_in(int fold) const;
  std::vector<Index> rows_in(std::span<const int> folds) const;
};

/// Seeded shuffle then round-robin assignment. With cross_fit the roles
/// enumerate every ordered (I2, I3) pair of distinct folds.
FoldPlan make_fold_plan(Index n, int folds, std::uint64_t seed, bool cross_fit);

/// Single-triple plan with I1/I2/I3 sizes proportional to the given shares,
/// e.g. {1, 1, 2} puts half of the rows in the nuisance fold.
FoldPlan make_weighted_plan(Index n, std::span<const double> shares, std::uint64_t seed);

/// CSV with a header `x1,...,xp,t,y`.
Dataset read_dataset_csv(const std::filesystem::path& path, const ExposureDomain* domain = nullptr);
void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path);

}  // namespace dosebound

#endif  // DOSEBOUND_CORE_DATA_HPP_
