#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace treenet {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntMatrix = Eigen::MatrixXi;
using Index = Eigen::Index;

/// Invalid input (shape, symmetry, sign, rank, ...).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The positive-weight graph has no spanning tree (disconnected support,
/// or a Laplacian minor that is not positive definite).
class NoSpanningTreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite values or overflow produced while iterating.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace treenet
