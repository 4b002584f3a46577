#pragma once

// Synthetic Darcy flow samples: -div(a grad u) = f on the unit square with
// zero Dirichlet data, discretized on the n x n interior nodes.

#include "villani/rng.hpp"
#include "villani/types.hpp"

#include <vector>

namespace villani::darcy {

struct DarcyField {
  Matrix a;  // n x n permeability, strictly positive
  Matrix u;  // n x n pressure at interior nodes
};

struct SolveStats {
  int iterations = 0;
  double rel_residual = 0.0;
  std::vector<double> residual_history;
};

class SolverError : public NumericError {
 public:
  SolverError(const std::string& what, std::vector<double> history)
      : NumericError(what), history_(std::move(history)) {}
  const std::vector<double>& residual_history() const { return history_; }

 private:
  std::vector<double> history_;
};

struct FieldConfig {
  double low = 3.0;
  double high = 12.0;
  double smoothing = 0.0;  // Gaussian kernel width in grid cells; 0 means n / 8
};

/// Applies the 5-point operator with harmonic-mean face coefficients.
Matrix apply_operator(const Matrix& a, const Matrix& u);

/// Jacobi-preconditioned CG for -div(a grad u) = f. Throws SolverError if
/// the final relative residual exceeds 1e-8.
Matrix solve_darcy(const Matrix& a, double f = 1.0, double tol = 1e-10,
                   SolveStats* stats = nullptr);

/// Thresholded smoothed Gaussian random field with values {low, high}.
Matrix random_permeability(Index n, Rng& rng, const FieldConfig& cfg = {});

DarcyField gen_darcy(Index n, Rng& rng, const FieldConfig& cfg = {});

}  // namespace villani::darcy
