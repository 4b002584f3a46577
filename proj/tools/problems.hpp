#pragma once

#include "villani/potential.hpp"

#include <optional>
#include <string>

namespace villani::cli {

struct ProblemSpec {
  std::string potential;  // att-log | att-power | lora-log | lora-power
  Index t = 3, d = 1, r = 1, p = 1;
  Index n_samples = 8;
  double x_scale = 0.1, y_scale = 0.1, w_scale = 1.0;
  std::string activation = "tanh";
  double lambda = 1e-3;
  double epsilon = 0.5;
};

struct BuiltProblem {
  Potential potential;
  std::optional<LoraProblem> lora;
};

bool is_lora(const std::string& potential);

/// Draws the data instance and assembles the potential.
BuiltProblem build_problem(const ProblemSpec& spec, Rng& rng);

}  // namespace villani::cli
