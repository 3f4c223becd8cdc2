#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace exlasso {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when a caller violates a precondition (dimensions, signs, labels).
class InvalidArgument : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerical routine fails in a way that indicates a bug or a
/// breakdown (loss of definiteness, line-search failure, CG stagnation).
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline void require(bool cond, const std::string& what) {
  if (!cond) throw InvalidArgument(what);
}

inline void require_size(Index got, Index want, const char* what) {
  if (got != want) {
    throw InvalidArgument(std::string(what) + ": expected length " +
                          std::to_string(want) + ", got " +
                          std::to_string(got));
  }
}

inline double sign(double v) { return (v > 0.0) - (v < 0.0); }

}  // namespace detail
}  // namespace exlasso
