#ifndef DOSEBOUND_TEST_UTIL_HPP_
#define DOSEBOUND_TEST_UTIL_HPP_

// Small hand-rolled generators for the property tests.

#include "dosebound/common.hpp"

#include <cstdint>
#include <random>
#include <vector>

namespace testutil {

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : rng_(seed) {}

  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double normal(double mu = 0.0, double sd = 1.0) { return std::normal_distribution<double>(mu, sd)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }

  dosebound::Vec normals(int n, double sd = 1.0) {
    dosebound::Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = normal(0.0, sd);
    return v;
  }

  /// Positive weights summing to one.
  dosebound::Vec simplex(int n) {
    dosebound::Vec w(n);
    for (int i = 0; i < n; ++i) w[i] = uniform(0.05, 1.0);
    return w / w.sum();
  }

  std::mt19937_64& engine() { return rng_; }

 private:
  std::mt19937_64 rng_;
};

}  // namespace testutil

#endif  // DOSEBOUND_TEST_UTIL_HPP_
