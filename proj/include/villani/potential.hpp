#pragma once

// Assembled potentials V = data term + factor regularizer over a flat T.

#include "villani/attention.hpp"
#include "villani/lora.hpp"
#include "villani/regularizers.hpp"
#include "villani/rng.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace villani {

struct Potential {
  std::string name;
  Index dim = 0;
  FactorDims dims;
  std::function<double(const ParamPoint&)> value;
  std::function<ParamPoint(const ParamPoint&)> gradient;
  /// Empty when no exact Laplacian is available.
  std::function<double(const ParamPoint&)> laplacian;
  /// c0(L) such that V(T) >= c0(L) ||T||^2 whenever ||T|| >= L. Zero when the
  /// potential is not known to be coercive.
  std::function<double(double)> coercivity;
  std::map<std::string, double> bound_constants;

  bool has_exact_laplacian() const { return static_cast<bool>(laplacian); }
};

struct AttentionProblem {
  std::vector<AttnSample> samples;
  Matrix Wv;
  double beta = 1.0;
  Index t = 0, d = 0, r = 0;
  double Bx = 0.0, By = 0.0, Bw = 0.0;  // realized maxima over the samples
};

struct LoraProblem {
  std::vector<LoraSample> samples;
  Vector a;
  BoundedActivation act;
  Index p = 0, d = 0, r = 0;
  double Bx = 0.0, By = 0.0;
};

/// Random attention regression instance. Entries of X, Y and W_V are
/// standard normal times the given scales.
AttentionProblem random_attention_problem(Index t, Index d, Index r, Index n, double x_scale,
                                          double y_scale, double w_scale, Rng& rng);

/// Random LoRA instance with a ~ N(0, 1/p), x ~ x_scale N(0, I), y ~ y_scale N(0, 1).
LoraProblem random_lora_problem(Index p, Index d, Index r, Index n, double x_scale,
                                double y_scale, BoundedActivation act, Rng& rng);

AttnParams attention_params_from(const AttentionProblem& prob, const ParamPoint& T);
LoraParams lora_params_from(const LoraProblem& prob, const ParamPoint& T);

Potential make_attention_potential(AttentionProblem prob, RegularizerSpec reg);
Potential make_lora_potential(LoraProblem prob, RegularizerSpec reg);

/// V(T) = 1/2 ||T - center||^2 * curvature.
Potential make_quadratic_potential(const Vector& center, double curvature = 1.0);

/// Regularizer alone, used as a reference potential.
Potential make_regularizer_potential(RegularizerSpec reg);

}  // namespace villani
