#pragma once

#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace dualenkf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Inconsistent matrix shapes or malformed inputs. Distinct from a model
/// that is well-formed but violates a standing assumption.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Base class for every failure that originates in floating point work
/// (loss of definiteness, divergence, non-convergence).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dualenkf
