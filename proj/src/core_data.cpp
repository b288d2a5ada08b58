#include "dosebound/core_data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace dosebound {

Model parse_model(const std::string& name) {
  if (name == "rosenbaum") return Model::rosenbaum;
  if (name == "marginal") return Model::marginal;
  throw ConfigError("unknown model '" + name + "' (expected rosenbaum or marginal)");
}

Side parse_side(const std::string& name) {
  if (name == "lower") return Side::lower;
  if (name == "upper") return Side::upper;
  throw ConfigError("unknown side '" + name + "' (expected lower or upper)");
}

ExposureDomain ExposureDomain::make(Scalar lo, Scalar hi) {
  if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
    throw ConfigError("exposure domain must be a finite interval with lo < hi");
  }
  return ExposureDomain{lo, hi};
}

Dataset::Dataset(Mat x, Vec t, Vec y, ExposureDomain domain)
    : x_(std::move(x)), t_(std::move(t)), y_(std::move(y)), domain_(domain) {
  if (x_.rows() != t_.size() || y_.size() != t_.size()) {
    throw InputError("dataset columns have mismatched lengths");
  }
  if (!x_.allFinite() || !t_.allFinite() || !y_.allFinite()) {
    throw InputError("dataset contains non-finite values");
  }
  for (Index i = 0; i < t_.size(); ++i) {
    if (!domain_.contains(t_[i])) {
      std::ostringstream msg;
      msg << "row " << i << ": exposure " << t_[i] << " outside [" << domain_.lo << ", "
          << domain_.hi << "]";
      throw InputError(msg.str());
    }
  }
}

Dataset Dataset::subset(std::span<const Index> rows) const {
  Mat xs(static_cast<Index>(rows.size()), x_.cols());
  Vec ts(static_cast<Index>(rows.size()));
  Vec ys(static_cast<Index>(rows.size()));
  for (Index k = 0; k < static_cast<Index>(rows.size()); ++k) {
    const Index i = rows[static_cast<std::size_t>(k)];
    xs.row(k) = x_.row(i);
    ts[k] = t_[i];
    ys[k] = y_[i];
  }
  return Dataset(std::move(xs), std::move(ts), std::move(ys), domain_);
}

Dataset negate_outcomes(const Dataset& ds) { return Dataset(ds.x(), ds.t(), -ds.y(), ds.domain()); }

std::vector<Index> FoldPlan::rows_in(int fold) const {
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i) {
    if (assignment[static_cast<std::size_t>(i)] == fold) rows.push_back(i);
  }
  return rows;
}

std::vector<Index> FoldPlan::rows_in(std::span<const int> fold_set) const {
  std::vector<Index> rows;
  for (Index i = 0; i < n; ++i) {
    const int f = assignment[static_cast<std::size_t>(i)];
    if (std::find(fold_set.begin(), fold_set.end(), f) != fold_set.end()) rows.push_back(i);
  }
  return rows;
}

namespace {

std::vector<Index> shuffled_rows(Index n, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  std::mt19937_64 rng(seed);
  // Fisher-Yates with an explicit draw so the permutation does not depend on
  // the standard library's shuffle implementation.
  for (std::size_t i = perm.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  return perm;
}

std::vector<int> complement(int folds, int a, int b) {
  std::vector<int> rest;
  for (int f = 0; f < folds; ++f) {
    if (f != a && f != b) rest.push_back(f);
  }
  return rest;
}

}  // namespace

FoldPlan make_fold_plan(Index n, int folds, std::uint64_t seed, bool cross_fit) {
  if (folds < 3) throw ConfigError("fold plan needs at least 3 folds");
  if (n < 10 * static_cast<Index>(folds)) {
    throw ConfigError("fold plan needs at least 10 rows per fold (n=" + std::to_string(n) +
                      ", K=" + std::to_string(folds) + ")");
  }
  FoldPlan plan;
  plan.n = n;
  plan.folds = folds;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  const auto perm = shuffled_rows(n, seed);
  for (std::size_t k = 0; k < perm.size(); ++k) {
    plan.assignment[static_cast<std::size_t>(perm[k])] = static_cast<int>(k % static_cast<std::size_t>(folds));
  }
  if (cross_fit) {
    for (int i2 = 0; i2 < folds; ++i2) {
      for (int i3 = 0; i3 < folds; ++i3) {
        if (i2 == i3) continue;
        plan.roles.push_back(RoleTriple{complement(folds, i2, i3), i2, i3});
      }
    }
  } else {
    plan.roles.push_back(RoleTriple{complement(folds, 1, 2), 1, 2});
  }
  return plan;
}

FoldPlan make_weighted_plan(Index n, std::span<const double> shares, std::uint64_t seed) {
  if (shares.size() != 3) throw ConfigError("weighted plan needs exactly three shares (I1, I2, I3)");
  const double total = shares[0] + shares[1] + shares[2];
  for (double s : shares) {
    if (!(s > 0.0)) throw ConfigError("weighted plan shares must be positive");
  }
  std::array<Index, 3> sizes{};
  Index assigned = 0;
  for (std::size_t k = 0; k < 2; ++k) {
    sizes[k] = static_cast<Index>(std::floor(static_cast<double>(n) * shares[k] / total));
    assigned += sizes[k];
  }
  sizes[2] = n - assigned;
  for (Index s : sizes) {
    if (s < 10) throw ConfigError("weighted plan leaves fewer than 10 rows in a role");
  }
  FoldPlan plan;
  plan.n = n;
  plan.folds = 3;
  plan.assignment.assign(static_cast<std::size_t>(n), 0);
  const auto perm = shuffled_rows(n, seed);
  std::size_t k = 0;
  for (int fold = 0; fold < 3; ++fold) {
    for (Index c = 0; c < sizes[static_cast<std::size_t>(fold)]; ++c) {
      plan.assignment[static_cast<std::size_t>(perm[k++])] = fold;
    }
  }
  plan.roles.push_back(RoleTriple{{0}, 1, 2});
  return plan;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t\r\"");
    const auto e = cell.find_last_not_of(" \t\r\"");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, std::size_t line_no) {
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used != cell.size()) throw std::invalid_argument(cell);
    return v;
  } catch (const std::exception&) {
    throw InputError("line " + std::to_string(line_no) + ": cannot parse '" + cell + "' as a number");
  }
}

}  // namespace

Dataset read_dataset_csv(const std::filesystem::path& path, const ExposureDomain* domain) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open data file " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError("data file is empty: " + path.string());
  const auto header = split_csv_line(line);
  if (header.size() < 3) throw InputError("header must be x1,...,xp,t,y");
  const std::size_t p = header.size() - 2;
  for (std::size_t j = 0; j < p; ++j) {
    if (header[j] != "x" + std::to_string(j + 1)) {
      throw InputError("header column " + std::to_string(j + 1) + " is '" + header[j] + "', expected x" +
                       std::to_string(j + 1));
    }
  }
  if (header[p] != "t" || header[p + 1] != "y") throw InputError("last two header columns must be t,y");

  std::vector<double> values;
  std::size_t rows = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw InputError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                       " columns, found " + std::to_string(cells.size()));
    }
    for (const auto& c : cells) values.push_back(parse_cell(c, line_no));
    ++rows;
  }
  if (rows == 0) throw InputError("data file has no rows");

  const Index n = static_cast<Index>(rows);
  const Index cols = static_cast<Index>(header.size());
  Eigen::Map<const RowMat> raw(values.data(), n, cols);
  Mat x = raw.leftCols(static_cast<Index>(p));
  Vec t = raw.col(cols - 2);
  Vec y = raw.col(cols - 1);
  const ExposureDomain dom = domain ? *domain : ExposureDomain::make(t.minCoeff(), t.maxCoeff());
  return Dataset(std::move(x), std::move(t), std::move(y), dom);
}

void write_dataset_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path.string());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Index j = 0; j < ds.dim(); ++j) out << 'x' << (j + 1) << ',';
  out << "t,y\n";
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) out << ds.x()(i, j) << ',';
    out << ds.t()[i] << ',' << ds.y()[i] << '\n';
  }
}

}  // namespace dosebound
