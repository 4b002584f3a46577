#include "villani/potential.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace villani {
namespace {

double reg_coercivity(const RegularizerSpec& reg, double L) {
  if (reg.lambda <= 0.0) return 0.0;
  switch (reg.kind) {
    case RegKind::None: return 0.0;
    case RegKind::LogAmplified: return 0.5 * reg.lambda * std::log1p(L * L);
    case RegKind::Power:
      // power mean: |b1|^{2+e} + |b2|^{2+e} >= 2 (||T||^2 / 2)^{1+e/2}
      return 0.5 * reg.lambda * std::pow(2.0, -0.5 * reg.epsilon) * std::pow(L, reg.epsilon);
  }
  return 0.0;
}

std::string potential_name(const std::string& model, const RegularizerSpec& reg) {
  return model + "-" + reg_kind_name(reg.kind);
}

}  // namespace

AttentionProblem random_attention_problem(Index t, Index d, Index r, Index n, double x_scale,
                                          double y_scale, double w_scale, Rng& rng) {
  require(t >= 1 && d >= 1 && r >= 1 && n >= 1, "attention problem: dims must be positive");
  AttentionProblem prob;
  prob.t = t;
  prob.d = d;
  prob.r = r;
  prob.Wv = gaussian_matrix(d, d, rng, w_scale);
  prob.Bw = prob.Wv.norm();
  for (Index i = 0; i < n; ++i) {
    AttnSample s{gaussian_matrix(t, d, rng, x_scale), gaussian_matrix(t, d, rng, y_scale)};
    prob.Bx = std::max(prob.Bx, s.X.norm());
    prob.By = std::max(prob.By, s.Y.norm());
    prob.samples.push_back(std::move(s));
  }
  return prob;
}

LoraProblem random_lora_problem(Index p, Index d, Index r, Index n, double x_scale,
                                double y_scale, BoundedActivation act, Rng& rng) {
  require(p >= 1 && d >= 1 && r >= 1 && n >= 1, "lora problem: dims must be positive");
  LoraProblem prob;
  prob.p = p;
  prob.d = d;
  prob.r = r;
  prob.act = act;
  prob.a = gaussian_vector(p, rng, 1.0 / std::sqrt(static_cast<double>(p)));
  for (Index i = 0; i < n; ++i) {
    LoraSample s{gaussian_vector(d, rng, x_scale), y_scale * gaussian_vector(1, rng)[0]};
    prob.Bx = std::max(prob.Bx, s.x.norm());
    prob.By = std::max(prob.By, std::abs(s.y));
    prob.samples.push_back(std::move(s));
  }
  return prob;
}

AttnParams attention_params_from(const AttentionProblem& prob, const ParamPoint& T) {
  AttnParams params;
  params.Wq.resize(prob.d, prob.r);
  params.Wk.resize(prob.d, prob.r);
  unpack(T, params.Wq, params.Wk);
  params.Wv = prob.Wv;
  params.beta = prob.beta;
  return params;
}

LoraParams lora_params_from(const LoraProblem& prob, const ParamPoint& T) {
  LoraParams params;
  params.U.resize(prob.p, prob.r);
  params.V.resize(prob.d, prob.r);
  unpack(T, params.U, params.V);
  params.a = prob.a;
  return params;
}

Potential make_attention_potential(AttentionProblem prob, RegularizerSpec reg) {
  reg.dims = {prob.d * prob.r, prob.d * prob.r};
  reg.validate();
  auto shared = std::make_shared<const AttentionProblem>(std::move(prob));
  const AttentionProblem& P = *shared;

  Potential pot;
  pot.name = potential_name("att", reg);
  pot.dims = reg.dims;
  pot.dim = reg.D();
  pot.value = [shared, reg](const ParamPoint& T) {
    return empirical_risk(shared->samples, attention_params_from(*shared, T)) +
           reg_value(T, reg);
  };
  pot.gradient = [shared, reg](const ParamPoint& T) {
    const QKGrad g = empirical_risk_grad(shared->samples, attention_params_from(*shared, T));
    return ParamPoint(pack(g.dWq, g.dWk) + reg_grad(T, reg));
  };
  pot.laplacian = [shared, reg](const ParamPoint& T) {
    return empirical_risk_laplacian(shared->samples, attention_params_from(*shared, T)) +
           reg_laplacian(T, reg);
  };
  pot.coercivity = [reg](double L) { return reg_coercivity(reg, L); };
  pot.bound_constants = {
      {"B_x", P.Bx},
      {"B_y", P.By},
      {"B_w", P.Bw},
      {"beta", P.beta},
      {"B_s1", 2.0},
      {"B_s2", 6.0 * static_cast<double>(P.t * P.t)},
      {"C_grad", attention_grad_bound_constant(P.Bx, P.By, P.Bw, P.beta, P.t, P.d)},
      {"C_lap", attention_laplacian_bound_constant(P.Bx, P.By, P.Bw, P.beta, P.t, P.d)},
  };
  return pot;
}

Potential make_lora_potential(LoraProblem prob, RegularizerSpec reg) {
  reg.dims = {prob.p * prob.r, prob.d * prob.r};
  reg.validate();
  auto shared = std::make_shared<const LoraProblem>(std::move(prob));
  const LoraProblem& P = *shared;

  Potential pot;
  pot.name = potential_name("lora", reg);
  pot.dims = reg.dims;
  pot.dim = reg.D();
  pot.value = [shared, reg](const ParamPoint& T) {
    return lora_loss(shared->samples, lora_params_from(*shared, T), shared->act) +
           reg_value(T, reg);
  };
  pot.gradient = [shared, reg](const ParamPoint& T) {
    const FactorGrad g = lora_loss_grad(shared->samples, lora_params_from(*shared, T), shared->act);
    return ParamPoint(pack(g.dU, g.dV) + reg_grad(T, reg));
  };
  pot.laplacian = [shared, reg](const ParamPoint& T) {
    return lora_laplacian(shared->samples, lora_params_from(*shared, T), shared->act) +
           reg_laplacian(T, reg);
  };
  pot.coercivity = [reg](double L) { return reg_coercivity(reg, L); };
  pot.bound_constants = {
      {"B_x", P.Bx},
      {"B_y", P.By},
      {"B_sigma", P.act.B_sigma()},
      {"B_sigma1", P.act.B_sigma1()},
      {"B_sigma2", P.act.B_sigma2()},
      {"B_0", lora_b0(P.a, P.act, P.By)},
      {"C_grad", lora_grad_bound_constant(P.a, P.act, P.Bx, P.By)},
      {"C_lap", lora_laplacian_bound_constant(P.a, P.act, P.Bx, P.By)},
  };
  return pot;
}

Potential make_quadratic_potential(const Vector& center, double curvature) {
  require(curvature > 0.0, "quadratic potential: curvature must be positive");
  Potential pot;
  pot.name = "quadratic";
  pot.dim = center.size();
  pot.dims = {center.size(), 0};
  pot.value = [center, curvature](const ParamPoint& T) {
    return 0.5 * curvature * (T - center).squaredNorm();
  };
  pot.gradient = [center, curvature](const ParamPoint& T) {
    return ParamPoint(curvature * (T - center));
  };
  pot.laplacian = [curvature, n = center.size()](const ParamPoint&) {
    return curvature * static_cast<double>(n);
  };
  pot.coercivity = [c = center.norm(), curvature](double L) {
    if (L <= c) return 0.0;
    const double f = 1.0 - c / L;
    return 0.5 * curvature * f * f;
  };
  pot.bound_constants = {{"curvature", curvature}};
  return pot;
}

Potential make_regularizer_potential(RegularizerSpec reg) {
  reg.validate();
  Potential pot;
  pot.name = "reg-" + reg_kind_name(reg.kind);
  pot.dims = reg.dims;
  pot.dim = reg.D();
  pot.value = [reg](const ParamPoint& T) { return reg_value(T, reg); };
  pot.gradient = [reg](const ParamPoint& T) { return reg_grad(T, reg); };
  pot.laplacian = [reg](const ParamPoint& T) { return reg_laplacian(T, reg); };
  pot.coercivity = [reg](double L) { return reg_coercivity(reg, L); };
  return pot;
}

}  // namespace villani
