#include "commands.hpp"
#include "problems.hpp"

#include "villani/sde.hpp"

#include <iostream>
#include <sstream>

namespace villani::cli {
namespace {

class TrainSde : public Command {
 public:
  TrainSde(CLI::App& parent, Globals& g) {
    name = "train-sde";
    app = parent.add_subcommand(name, "Euler-Maruyama training chains with an exponential-decay fit");
    params.add(app, "potential", spec_.potential, "att-log | att-power | lora-log | lora-power");
    params.add(app, "s", cfg_.s, "temperature");
    params.add(app, "step-size", cfg_.h, "Euler-Maruyama step h");
    params.add(app, "steps", cfg_.steps, "steps per chain");
    params.add(app, "chains", cfg_.chains, "independent chains averaged");
    params.add(app, "record-every", cfg_.record_every, "steps between records");
    params.add(app, "init-scale", cfg_.init_scale, "std of the Gaussian start around 0");
    params.add(app, "max-halvings", cfg_.max_halvings, "step halvings allowed on divergence");
    params.add(app, "lambda", spec_.lambda, "regularizer strength");
    params.add(app, "eps", spec_.epsilon, "power regularizer exponent offset");
    params.add(app, "t", spec_.t, "attention sequence length");
    params.add(app, "d", spec_.d, "input dimension");
    params.add(app, "r", spec_.r, "factor rank");
    params.add(app, "p", spec_.p, "LoRA output dimension");
    params.add(app, "n-samples", spec_.n_samples, "training samples in the instance");
    params.add(app, "x-scale", spec_.x_scale, "input scale");
    params.add(app, "y-scale", spec_.y_scale, "target scale");
    params.add(app, "w-scale", spec_.w_scale, "W_V scale");
    params.add(app, "activation", spec_.activation, "tanh | sigmoid");
    params.add(app, "vstar-restarts", restarts_, "multi-start descents for the infimum estimate");
    params.add(app, "vstar-budget", budget_, "iterations per descent");
    params.bind("seed", g.seed_opt, g.seed);
  }

  int run(const Globals& g) override {
    cfg_.seed = g.seed;
    cfg_.threads = resolve_thread_flag(g);
    cfg_.validate();
    require(restarts_ >= 8 && budget_ >= 1, "train-sde: need vstar-restarts >= 8 and vstar-budget >= 1");
    const std::string out = g.out.empty() ? "traj.csv" : g.out;
    const ojson config = params.resolved(name);

    Rng rng = make_stream(splitmix64(g.seed), 0);
    const BuiltProblem built = build_problem(spec_, rng);
    const Potential& pot = built.potential;

    const Trajectory traj = run_sde(pot, ParamPoint::Zero(pot.dim), cfg_);
    std::ostringstream csv;
    traj.write_csv(csv);
    write_file(out, csv.str());
    write_sidecar(out, config);
    if (!traj.diagnostic.empty()) std::cerr << traj.diagnostic << "\n";

    Rng vrng = make_stream(splitmix64(g.seed), 2);
    double v_star = estimate_v_star(pot, restarts_, budget_, vrng, cfg_.init_scale);
    for (const auto& row : traj.rows) v_star = std::min(v_star, row.v);
    const DecayFit fit = fit_decay(traj, v_star);

    ojson doc = ojson::parse(fit.to_json());
    doc["ok"] = fit.ok;
    doc["message"] = fit.message;
    doc["v_star"] = v_star;
    doc["h_used"] = traj.h;
    doc["halvings"] = traj.halvings;
    doc["diverged"] = traj.diverged;
    doc["config"] = config;
    const std::string text = doc.dump(2) + "\n";
    write_file(out + ".fit.json", text);
    std::cout << text;
    return !traj.diverged && fit.ok && fit.lambda_hat > 0.0 ? kPass : kCheckFailed;
  }

 private:
  ProblemSpec spec_{"lora-log", 3, 2, 2, 2, 8, 1.0, 1.0, 1.0};
  SdeConfig cfg_{1e-3, 1e-3, 20000, 0, 100};
  int restarts_ = 8;
  int budget_ = 2000;
};

}  // namespace

std::unique_ptr<Command> make_train_sde(CLI::App& parent, Globals& g) {
  return std::make_unique<TrainSde>(parent, g);
}

}  // namespace villani::cli
