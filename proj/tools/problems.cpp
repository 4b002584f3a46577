#include "problems.hpp"

namespace villani::cli {

bool is_lora(const std::string& potential) { return potential.rfind("lora-", 0) == 0; }

BuiltProblem build_problem(const ProblemSpec& spec, Rng& rng) {
  const bool lora = is_lora(spec.potential);
  require(lora || spec.potential.rfind("att-", 0) == 0,
          "unknown potential '" + spec.potential + "' (att-log, att-power, lora-log, lora-power)");
  const std::string kind = spec.potential.substr(spec.potential.find('-') + 1);
  require(kind == "log" || kind == "power", "unknown potential '" + spec.potential + "'");
  require(spec.t >= 1 && spec.d >= 1 && spec.r >= 1 && spec.p >= 1 && spec.n_samples >= 1,
          "problem dims must be positive");

  RegularizerSpec reg;
  reg.kind = parse_reg_kind(kind);
  reg.lambda = spec.lambda;
  reg.epsilon = spec.epsilon;

  BuiltProblem out;
  if (lora) {
    LoraProblem prob = random_lora_problem(spec.p, spec.d, spec.r, spec.n_samples, spec.x_scale,
                                           spec.y_scale, BoundedActivation::parse(spec.activation), rng);
    reg.dims = {spec.p * spec.r, spec.d * spec.r};
    out.lora = prob;
    out.potential = make_lora_potential(std::move(prob), reg);
  } else {
    AttentionProblem prob = random_attention_problem(spec.t, spec.d, spec.r, spec.n_samples,
                                                     spec.x_scale, spec.y_scale, spec.w_scale, rng);
    reg.dims = {spec.d * spec.r, spec.d * spec.r};
    out.potential = make_attention_potential(std::move(prob), reg);
  }
  return out;
}

}  // namespace villani::cli
