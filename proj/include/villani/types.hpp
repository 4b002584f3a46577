#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace villani {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Flattened optimization variable T. The two factor blocks are stored back
/// to back, each in column-major order.
using ParamPoint = Vector;

/// Sizes of the two factor blocks inside a ParamPoint.
struct FactorDims {
  Index first = 0;
  Index second = 0;
  Index total() const { return first + second; }
};

/// Bad shapes, bad indices, empty batches, malformed configs.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Inputs outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Non-finite values produced during a computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

/// Concatenates two matrices column-major into one flat vector.
ParamPoint pack(const Matrix& a, const Matrix& b);

/// Inverse of pack for known block shapes.
void unpack(const ParamPoint& t, Matrix& a, Matrix& b);

}  // namespace villani
