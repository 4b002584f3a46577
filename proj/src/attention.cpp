#include "villani/attention.hpp"

#include <cmath>
#include <string>

namespace villani {
namespace {

void check_probability_row(const Vector& s) {
  if (s.size() == 0) throw DomainError("softmax row is empty");
  double sum = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    if (!std::isfinite(s[i]) || s[i] < 0.0 || s[i] > 1.0)
      throw DomainError("softmax row entry outside [0,1]");
    sum += s[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) throw DomainError("softmax row does not sum to one");
}

void check_shapes(const AttnSample& sample, const AttnParams& params) {
  const Index t = sample.X.rows();
  const Index d = sample.X.cols();
  require(t >= 1 && d >= 1, "attention: X must be non-empty");
  require(sample.Y.rows() == t && sample.Y.cols() == d, "attention: Y must match X shape");
  require(params.Wq.rows() == d && params.Wk.rows() == d, "attention: W_Q/W_K need d rows");
  require(params.Wq.cols() == params.Wk.cols(), "attention: W_Q and W_K rank differ");
  require(params.Wv.rows() == d && params.Wv.cols() == d, "attention: W_V must be d x d");
  require(params.beta > 0.0, "attention: beta must be positive");
}

}  // namespace

Matrix row_softmax(const Matrix& M, double beta) {
  if (!M.allFinite()) throw DomainError("row_softmax: non-finite score");
  Matrix S(M.rows(), M.cols());
  for (Index i = 0; i < M.rows(); ++i) {
    const double mx = M.row(i).maxCoeff();
    double total = 0.0;
    for (Index j = 0; j < M.cols(); ++j) {
      S(i, j) = std::exp(beta * (M(i, j) - mx));
      total += S(i, j);
    }
    S.row(i) /= total;
  }
  return S;
}

Matrix softmax_jacobian_row(const Vector& s, double beta) {
  check_probability_row(s);
  Matrix J = -s * s.transpose();
  J.diagonal() += s;
  return beta * J;
}

double softmax_hessian_entry(const Vector& s, double beta, Index j, Index k, Index l) {
  const Index t = s.size();
  if (j < 0 || k < 0 || l < 0 || j >= t || k >= t || l >= t)
    throw UsageError("softmax_hessian_entry: index out of range");
  const double djk = j == k ? 1.0 : 0.0;
  const double djl = j == l ? 1.0 : 0.0;
  const double dkl = k == l ? 1.0 : 0.0;
  return beta * beta * s[j] *
         (2.0 * s[k] * s[l] + djk * djl - dkl * s[k] - djk * s[l] - djl * s[k]);
}

std::vector<double> softmax_hessian_row_tensor(const Vector& s, double beta) {
  check_probability_row(s);
  const Index t = s.size();
  std::vector<double> h(static_cast<std::size_t>(t * t * t));
  for (Index j = 0; j < t; ++j)
    for (Index k = 0; k < t; ++k)
      for (Index l = 0; l < t; ++l)
        h[static_cast<std::size_t>(j * t * t + k * t + l)] = softmax_hessian_entry(s, beta, j, k, l);
  return h;
}

Vector softmax_hessian_quadratic(const Vector& s, double beta, const Vector& v) {
  // sum_{kl} H_{jkl} v_k v_l = b^2 s_j (2 (s.v)^2 + v_j^2 - sum_k s_k v_k^2 - 2 v_j (s.v))
  const double sv = s.dot(v);
  const double svv = s.dot(v.cwiseProduct(v));
  Vector out(s.size());
  for (Index j = 0; j < s.size(); ++j)
    out[j] = beta * beta * s[j] * (2.0 * sv * sv + v[j] * v[j] - svv - 2.0 * v[j] * sv);
  return out;
}

Matrix softmax_backward(const Matrix& S, const Matrix& dS, double beta) {
  require(S.rows() == dS.rows() && S.cols() == dS.cols(), "softmax_backward: shape mismatch");
  Matrix dM(S.rows(), S.cols());
  for (Index i = 0; i < S.rows(); ++i) {
    const double inner = S.row(i).dot(dS.row(i));
    dM.row(i) = beta * (S.row(i).cwiseProduct(dS.row(i)) - inner * S.row(i));
  }
  return dM;
}

AttnIntermediates attention_forward(const AttnSample& sample, const AttnParams& params) {
  check_shapes(sample, params);
  const double scale = 1.0 / std::sqrt(static_cast<double>(sample.X.cols()));
  AttnIntermediates out;
  const Matrix XQ = sample.X * params.Wq;
  const Matrix XK = sample.X * params.Wk;
  out.M = scale * (XQ * XK.transpose());
  out.S = row_softmax(out.M, params.beta);
  out.Yhat = out.S * (sample.X * params.Wv);
  out.E = out.Yhat - sample.Y;
  return out;
}

double sample_loss(const AttnSample& sample, const AttnParams& params) {
  const AttnIntermediates f = attention_forward(sample, params);
  return 0.5 * f.E.squaredNorm();
}

QKGrad sample_loss_grad(const AttnSample& sample, const AttnParams& params) {
  const AttnIntermediates f = attention_forward(sample, params);
  const Matrix& X = sample.X;
  const double scale = 1.0 / std::sqrt(static_cast<double>(X.cols()));
  const Matrix dS = f.E * params.Wv.transpose() * X.transpose();
  const Matrix dM = softmax_backward(f.S, dS, params.beta);
  QKGrad g;
  g.dWq = scale * (X.transpose() * dM * (X * params.Wk));
  g.dWk = scale * (X.transpose() * dM.transpose() * (X * params.Wq));
  return g;
}

double sample_loss_laplacian(const AttnSample& sample, const AttnParams& params) {
  const AttnIntermediates f = attention_forward(sample, params);
  const Matrix& X = sample.X;
  const Index t = X.rows();
  const Index d = X.cols();
  const Index r = params.Wq.cols();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  const Matrix P = X * params.Wv;
  const Matrix G = f.E * P.transpose();  // gradient of the loss w.r.t. S

  // Every coordinate perturbation of W_Q or W_K moves M by a rank one matrix
  // u v^T; row i then moves by u_i v. The second derivative of the loss along
  // that coordinate is ||dS P||^2 + <G, d^2 S>, both of which factor through
  // per-row quantities that only depend on v.
  auto row_terms = [&](const Vector& v) {
    Vector terms(t);
    for (Index i = 0; i < t; ++i) {
      const Vector s = f.S.row(i).transpose();
      const Vector q = params.beta * (s.cwiseProduct(v) - s.dot(v) * s);
      const double first = (q.transpose() * P).squaredNorm();
      const double second = G.row(i).dot(softmax_hessian_quadratic(s, params.beta, v));
      terms[i] = first + second;
    }
    return terms;
  };

  double lap = 0.0;
  const Matrix XK = X * params.Wk;
  const Vector xrow_sq = X.rowwise().squaredNorm();
  for (Index b = 0; b < r; ++b) lap += xrow_sq.dot(row_terms(scale * XK.col(b)));

  const Matrix XQ = X * params.Wq;
  const Vector qrow_sq = XQ.rowwise().squaredNorm();
  for (Index a = 0; a < d; ++a) lap += qrow_sq.dot(row_terms(scale * X.col(a)));
  return lap;
}

double empirical_risk(std::span<const AttnSample> batch, const AttnParams& params) {
  require(!batch.empty(), "empirical_risk: empty batch");
  double total = 0.0;
  for (const auto& s : batch) total += sample_loss(s, params);
  return total / static_cast<double>(batch.size());
}

QKGrad empirical_risk_grad(std::span<const AttnSample> batch, const AttnParams& params) {
  require(!batch.empty(), "empirical_risk_grad: empty batch");
  QKGrad acc{Matrix::Zero(params.Wq.rows(), params.Wq.cols()),
             Matrix::Zero(params.Wk.rows(), params.Wk.cols())};
  for (const auto& s : batch) {
    const QKGrad g = sample_loss_grad(s, params);
    acc.dWq += g.dWq;
    acc.dWk += g.dWk;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  acc.dWq *= inv;
  acc.dWk *= inv;
  return acc;
}

double empirical_risk_laplacian(std::span<const AttnSample> batch, const AttnParams& params) {
  require(!batch.empty(), "empirical_risk_laplacian: empty batch");
  double total = 0.0;
  for (const auto& s : batch) total += sample_loss_laplacian(s, params);
  return total / static_cast<double>(batch.size());
}

double attention_grad_bound_constant(double Bx, double By, double Bw, double beta, Index t,
                                     Index d) {
  constexpr double kJacobianBound = 2.0;
  const double err = std::sqrt(static_cast<double>(t)) * Bx * Bw + By;
  return err * Bw * Bx * beta * kJacobianBound * Bx * Bx / std::sqrt(static_cast<double>(d));
}

double attention_laplacian_bound_constant(double Bx, double By, double Bw, double beta, Index t,
                                          Index d) {
  constexpr double kJacobianBound = 2.0;
  const double hessian_bound = 6.0 * static_cast<double>(t * t);
  const double err = std::sqrt(static_cast<double>(t)) * Bx * Bw + By;
  const double jac = beta * kJacobianBound * Bx * Bw;
  return std::pow(Bx, 4) / static_cast<double>(d) *
         (jac * jac + err * Bx * Bw * beta * beta * hessian_bound);
}

}  // namespace villani
