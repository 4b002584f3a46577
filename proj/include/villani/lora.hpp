#pragma once

// Depth-2 network z = a^T sigma(U V^T x) with factor gradients and exact
// Laplacians over the flattened (U, V).

#include "villani/types.hpp"

#include <span>
#include <string>

namespace villani {

enum class ActivationKind { Tanh, Sigmoid };

struct BoundedActivation {
  ActivationKind kind = ActivationKind::Tanh;

  double value(double x) const;
  double d1(double x) const;
  double d2(double x) const;

  /// Suprema of |sigma|, |sigma'|, |sigma''| over the real line.
  double B_sigma() const;
  double B_sigma1() const;
  double B_sigma2() const;

  static BoundedActivation parse(const std::string& name);
  std::string name() const;
};

struct LoraParams {
  Matrix U;  // p x r
  Matrix V;  // d x r
  Vector a;  // p, fixed
};

struct LoraSample {
  Vector x;  // d
  double y = 0.0;
};

struct LoraForward {
  double z = 0.0;
  Vector h;  // V^T x
  Vector s;  // U h
};

struct FactorGrad {
  Matrix dU;
  Matrix dV;
};

LoraForward lora_forward(const LoraSample& sample, const LoraParams& params,
                         const BoundedActivation& act);

/// Gradient of z (not of the loss) with respect to U and V.
FactorGrad lora_grad_z(const LoraSample& sample, const LoraParams& params,
                       const BoundedActivation& act);

/// L(T) = (1/n) sum 1/2 (y_i - z_i)^2.
double lora_loss(std::span<const LoraSample> batch, const LoraParams& params,
                 const BoundedActivation& act);

FactorGrad lora_loss_grad(std::span<const LoraSample> batch, const LoraParams& params,
                          const BoundedActivation& act);

/// Exact Laplacian of L over the flattened (U, V).
double lora_laplacian(std::span<const LoraSample> batch, const LoraParams& params,
                      const BoundedActivation& act);

/// (U A, V A^{-T}); keeps U V^T fixed.
LoraParams scaling_orbit(const LoraParams& params, const Matrix& A);

/// B_0 = ||a||_2 sqrt(p) B_sigma + B_y, the bound on |z_i - y_i|.
double lora_b0(const Vector& a, const BoundedActivation& act, double By);

/// C with ||grad L(T)|| <= C ||T||.
double lora_grad_bound_constant(const Vector& a, const BoundedActivation& act, double Bx,
                                double By);

/// C with |Laplacian L(T)| <= C ||T||^2.
double lora_laplacian_bound_constant(const Vector& a, const BoundedActivation& act, double Bx,
                                     double By);

}  // namespace villani
