#include "villani/darcy/field.hpp"

#include <cmath>

namespace villani::darcy {
namespace {

double face(const Matrix& a, Index i, Index j, Index k, Index l) {
  const Index n = a.rows();
  if (k < 0 || l < 0 || k >= n || l >= n) return a(i, j);
  const double x = a(i, j), y = a(k, l);
  return 2.0 * x * y / (x + y);
}

constexpr Index kDi[4] = {-1, 1, 0, 0};
constexpr Index kDj[4] = {0, 0, -1, 1};

Matrix diagonal(const Matrix& a) {
  const Index n = a.rows();
  const double inv_h2 = static_cast<double>((n + 1) * (n + 1));
  Matrix diag(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (int q = 0; q < 4; ++q) s += face(a, i, j, i + kDi[q], j + kDj[q]);
      diag(i, j) = s * inv_h2;
    }
  return diag;
}

double dot(const Matrix& x, const Matrix& y) { return (x.array() * y.array()).sum(); }

}  // namespace

Matrix apply_operator(const Matrix& a, const Matrix& u) {
  const Index n = a.rows();
  require(a.cols() == n && u.rows() == n && u.cols() == n, "apply_operator: shape mismatch");
  const double inv_h2 = static_cast<double>((n + 1) * (n + 1));
  Matrix out(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (int q = 0; q < 4; ++q) {
        const Index k = i + kDi[q], l = j + kDj[q];
        const bool inside = k >= 0 && l >= 0 && k < n && l < n;
        s += face(a, i, j, k, l) * (u(i, j) - (inside ? u(k, l) : 0.0));
      }
      out(i, j) = s * inv_h2;
    }
  return out;
}

Matrix solve_darcy(const Matrix& a, double f, double tol, SolveStats* stats) {
  const Index n = a.rows();
  require(n >= 1 && a.cols() == n, "solve_darcy: permeability must be square");
  if (!(a.array() > 0.0).all() || !a.allFinite())
    throw DomainError("solve_darcy: permeability must be positive and finite");

  const Matrix b = Matrix::Constant(n, n, f);
  const Matrix dinv = diagonal(a).cwiseInverse();
  Matrix x = Matrix::Zero(n, n);
  Matrix r = b;
  Matrix z = dinv.cwiseProduct(r);
  Matrix p = z;
  double rz = dot(r, z);
  const double bnorm = b.norm();
  std::vector<double> history{1.0};
  if (bnorm == 0.0) {
    if (stats) *stats = {0, 0.0, history};
    return x;
  }
  const int max_iter = static_cast<int>(std::max<Index>(100, 20 * n * n));
  int it = 0;
  double rel = 1.0;
  for (; it < max_iter && rel > tol; ++it) {
    const Matrix Ap = apply_operator(a, p);
    const double alpha = rz / dot(p, Ap);
    x += alpha * p;
    r -= alpha * Ap;
    rel = r.norm() / bnorm;
    history.push_back(rel);
    z = dinv.cwiseProduct(r);
    const double rz_next = dot(r, z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  const double true_rel = (b - apply_operator(a, x)).norm() / bnorm;
  if (!(true_rel <= 1e-8))
    throw SolverError("solve_darcy: relative residual " + std::to_string(true_rel) +
                          " after " + std::to_string(it) + " iterations",
                      history);
  if (stats) *stats = {it, true_rel, history};
  return x;
}

Matrix random_permeability(Index n, Rng& rng, const FieldConfig& cfg) {
  require(n >= 1, "random_permeability: n must be positive");
  require(cfg.low > 0.0 && cfg.high > 0.0, "random_permeability: values must be positive");
  const double sigma = cfg.smoothing > 0.0 ? cfg.smoothing : std::max(1.0, n / 8.0);
  const Matrix noise = gaussian_matrix(n, n, rng);
  const Index radius = static_cast<Index>(std::ceil(3.0 * sigma));
  Vector kernel(2 * radius + 1);
  for (Index k = -radius; k <= radius; ++k)
    kernel[k + radius] = std::exp(-0.5 * (k * k) / (sigma * sigma));

  // Separable smoothing with zero padding.
  Matrix tmp = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index k = -radius; k <= radius; ++k)
        if (j + k >= 0 && j + k < n) tmp(i, j) += kernel[k + radius] * noise(i, j + k);
  Matrix smooth = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      for (Index k = -radius; k <= radius; ++k)
        if (i + k >= 0 && i + k < n) smooth(i, j) += kernel[k + radius] * tmp(i + k, j);

  Matrix a(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) a(i, j) = smooth(i, j) >= 0.0 ? cfg.high : cfg.low;
  return a;
}

DarcyField gen_darcy(Index n, Rng& rng, const FieldConfig& cfg) {
  require(n >= 8, "gen_darcy: grid must be at least 8");
  DarcyField field;
  field.a = random_permeability(n, rng, cfg);
  field.u = solve_darcy(field.a);
  return field;
}

}  // namespace villani::darcy
