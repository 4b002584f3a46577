#pragma once

// Single-head softmax attention regressor with exact first and second order
// calculus in (W_Q, W_K).

#include "villani/types.hpp"

#include <span>
#include <vector>

namespace villani {

struct AttnSample {
  Matrix X;  // t x d token embeddings
  Matrix Y;  // t x d target
};

struct AttnParams {
  Matrix Wq;  // d x r
  Matrix Wk;  // d x r
  Matrix Wv;  // d x d, constant of the loss
  double beta = 1.0;
};

struct AttnIntermediates {
  Matrix M;     // scores X Wq Wk^T X^T / sqrt(d)
  Matrix S;     // row softmax of beta * M
  Matrix Yhat;  // S X Wv
  Matrix E;     // Yhat - Y
};

struct QKGrad {
  Matrix dWq;
  Matrix dWk;
};

/// Row-wise softmax of beta*M with per-row max subtraction.
Matrix row_softmax(const Matrix& M, double beta);

/// beta * (diag(s) - s s^T) for one probability row.
Matrix softmax_jacobian_row(const Vector& s, double beta);

/// d^2 S_j / dM_k dM_l for one softmax row (zero-based indices).
double softmax_hessian_entry(const Vector& s, double beta, Index j, Index k, Index l);

/// All t^3 entries of the per-row Hessian tensor, laid out as
/// [j * t * t + k * t + l].
std::vector<double> softmax_hessian_row_tensor(const Vector& s, double beta);

/// Contracts the per-row Hessian with one direction twice: returns the vector
/// with entries sum_{k,l} H_{jkl} v_k v_l.
Vector softmax_hessian_quadratic(const Vector& s, double beta, const Vector& v);

/// Pulls an upstream gradient on S back to the scores M, row block by row
/// block. `S` is the softmax output, `dS` the gradient w.r.t. it.
Matrix softmax_backward(const Matrix& S, const Matrix& dS, double beta);

AttnIntermediates attention_forward(const AttnSample& sample, const AttnParams& params);

double sample_loss(const AttnSample& sample, const AttnParams& params);
QKGrad sample_loss_grad(const AttnSample& sample, const AttnParams& params);

/// Exact Laplacian of the per-sample loss over the flattened (W_Q, W_K).
double sample_loss_laplacian(const AttnSample& sample, const AttnParams& params);

double empirical_risk(std::span<const AttnSample> batch, const AttnParams& params);
QKGrad empirical_risk_grad(std::span<const AttnSample> batch, const AttnParams& params);
double empirical_risk_laplacian(std::span<const AttnSample> batch, const AttnParams& params);

/// Lemma constant C with ||grad R_A(T)|| <= C ||T||.
double attention_grad_bound_constant(double Bx, double By, double Bw, double beta, Index t,
                                     Index d);

/// Lemma constant C with |Laplacian R_A(T)| <= C ||T||^2.
double attention_laplacian_bound_constant(double Bx, double By, double Bw, double beta, Index t,
                                          Index d);

}  // namespace villani
