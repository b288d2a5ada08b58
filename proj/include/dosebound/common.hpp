#ifndef DOSEBOUND_COMMON_HPP_
#define DOSEBOUND_COMMON_HPP_

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace dosebound {

using Scalar = double;
using Index = Eigen::Index;

using Vec = Eigen::VectorX<Scalar>;
using Mat = Eigen::MatrixX<Scalar>;
using RowMat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstVecRef = Eigen::Ref<const Vec>;

// Error taxonomy. The CLI maps ConfigError/InputError to exit code 2 and
// everything else to exit code 1.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InputError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class VerificationError : public Error {
 public:
  using Error::Error;
};

enum class Model { rosenbaum, marginal };
enum class Side { lower, upper };

inline const char* to_string(Model m) { return m == Model::rosenbaum ? "rosenbaum" : "marginal"; }
inline const char* to_string(Side s) { return s == Side::lower ? "lower" : "upper"; }

Model parse_model(const std::string& name);
Side parse_side(const std::string& name);

}  // namespace dosebound

#endif  // DOSEBOUND_COMMON_HPP_
