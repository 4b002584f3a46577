#include "villani/lora.hpp"

#include <Eigen/SVD>

#include <cmath>

namespace villani {
namespace {

void check_shapes(const LoraSample& sample, const LoraParams& params) {
  require(params.U.rows() == params.a.size(), "lora: U must have p = len(a) rows");
  require(params.U.cols() == params.V.cols(), "lora: U and V rank differ");
  require(params.V.rows() == sample.x.size(), "lora: V must have d = len(x) rows");
}

}  // namespace

double BoundedActivation::value(double x) const {
  if (kind == ActivationKind::Tanh) return std::tanh(x);
  return 1.0 / (1.0 + std::exp(-x));
}

double BoundedActivation::d1(double x) const {
  if (kind == ActivationKind::Tanh) {
    const double t = std::tanh(x);
    return 1.0 - t * t;
  }
  const double s = value(x);
  return s * (1.0 - s);
}

double BoundedActivation::d2(double x) const {
  if (kind == ActivationKind::Tanh) {
    const double t = std::tanh(x);
    return -2.0 * t * (1.0 - t * t);
  }
  const double s = value(x);
  return s * (1.0 - s) * (1.0 - 2.0 * s);
}

double BoundedActivation::B_sigma() const { return 1.0; }

double BoundedActivation::B_sigma1() const {
  return kind == ActivationKind::Tanh ? 1.0 : 0.25;
}

double BoundedActivation::B_sigma2() const {
  return kind == ActivationKind::Tanh ? 4.0 / (3.0 * std::sqrt(3.0))
                                      : 1.0 / (6.0 * std::sqrt(3.0));
}

BoundedActivation BoundedActivation::parse(const std::string& name) {
  if (name == "tanh") return {ActivationKind::Tanh};
  if (name == "sigmoid") return {ActivationKind::Sigmoid};
  throw UsageError("unknown activation '" + name + "' (expected tanh or sigmoid)");
}

std::string BoundedActivation::name() const {
  return kind == ActivationKind::Tanh ? "tanh" : "sigmoid";
}

LoraForward lora_forward(const LoraSample& sample, const LoraParams& params,
                         const BoundedActivation& act) {
  check_shapes(sample, params);
  LoraForward f;
  f.h = params.V.transpose() * sample.x;
  f.s = params.U * f.h;
  f.z = 0.0;
  for (Index j = 0; j < f.s.size(); ++j) f.z += params.a[j] * act.value(f.s[j]);
  return f;
}

FactorGrad lora_grad_z(const LoraSample& sample, const LoraParams& params,
                       const BoundedActivation& act) {
  const LoraForward f = lora_forward(sample, params, act);
  Vector g(f.s.size());
  for (Index j = 0; j < g.size(); ++j) g[j] = params.a[j] * act.d1(f.s[j]);
  FactorGrad out;
  out.dU = g * f.h.transpose();
  out.dV = sample.x * (params.U.transpose() * g).transpose();
  return out;
}

double lora_loss(std::span<const LoraSample> batch, const LoraParams& params,
                 const BoundedActivation& act) {
  require(!batch.empty(), "lora_loss: empty batch");
  double total = 0.0;
  for (const auto& s : batch) {
    const double r = lora_forward(s, params, act).z - s.y;
    total += 0.5 * r * r;
  }
  return total / static_cast<double>(batch.size());
}

FactorGrad lora_loss_grad(std::span<const LoraSample> batch, const LoraParams& params,
                          const BoundedActivation& act) {
  require(!batch.empty(), "lora_loss_grad: empty batch");
  FactorGrad acc{Matrix::Zero(params.U.rows(), params.U.cols()),
                 Matrix::Zero(params.V.rows(), params.V.cols())};
  for (const auto& s : batch) {
    const double r = lora_forward(s, params, act).z - s.y;
    const FactorGrad g = lora_grad_z(s, params, act);
    acc.dU += r * g.dU;
    acc.dV += r * g.dV;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  acc.dU *= inv;
  acc.dV *= inv;
  return acc;
}

double lora_laplacian(std::span<const LoraSample> batch, const LoraParams& params,
                      const BoundedActivation& act) {
  require(!batch.empty(), "lora_laplacian: empty batch");
  const Vector urow_sq = params.U.rowwise().squaredNorm();
  double total = 0.0;
  for (const auto& smp : batch) {
    const LoraForward f = lora_forward(smp, params, act);
    double sum_u = 0.0;
    double sum_v = 0.0;
    for (Index j = 0; j < f.s.size(); ++j) {
      const double c = params.a[j] * act.d2(f.s[j]);
      sum_u += c;
      sum_v += c * urow_sq[j];
    }
    const double lap_z = f.h.squaredNorm() * sum_u + smp.x.squaredNorm() * sum_v;
    const FactorGrad g = lora_grad_z(smp, params, act);
    const double grad_sq = g.dU.squaredNorm() + g.dV.squaredNorm();
    total += grad_sq + (f.z - smp.y) * lap_z;
  }
  return total / static_cast<double>(batch.size());
}

LoraParams scaling_orbit(const LoraParams& params, const Matrix& A) {
  require(A.rows() == A.cols() && A.rows() == params.U.cols(), "scaling_orbit: A must be r x r");
  Eigen::JacobiSVD<Matrix> svd(A);
  const auto& sv = svd.singularValues();
  const double smin = sv[sv.size() - 1];
  if (!(smin > 0.0) || sv[0] / smin > 1e12)
    throw DomainError("scaling_orbit: A is singular or ill-conditioned");
  LoraParams out = params;
  out.U = params.U * A;
  // V A^{-T} = (A^{-1} V^T)^T
  out.V = A.partialPivLu().solve(params.V.transpose()).transpose();
  return out;
}

double lora_b0(const Vector& a, const BoundedActivation& act, double By) {
  return a.norm() * std::sqrt(static_cast<double>(a.size())) * act.B_sigma() + By;
}

double lora_grad_bound_constant(const Vector& a, const BoundedActivation& act, double Bx,
                                double By) {
  return lora_b0(a, act, By) * act.B_sigma1() * Bx * a.norm();
}

double lora_laplacian_bound_constant(const Vector& a, const BoundedActivation& act, double Bx,
                                     double By) {
  const double g = act.B_sigma1() * Bx * a.norm();
  return g * g + lora_b0(a, act, By) * act.B_sigma2() * a.lpNorm<1>() * Bx * Bx;
}

}  // namespace villani
