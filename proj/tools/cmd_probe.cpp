#include "commands.hpp"
#include "problems.hpp"

#include "villani/probe.hpp"

#include <iostream>
#include <sstream>

namespace villani::cli {
namespace {

class ProbeVillani : public Command {
 public:
  ProbeVillani(CLI::App& parent, Globals& g) {
    name = "probe-villani";
    app = parent.add_subcommand(name, "Scan F(R) = |grad V|^2 / s - Laplacian V along random rays");
    params.add(app, "potential", spec_.potential, "att-log | att-power | lora-log | lora-power");
    params.add(app, "s", s_, "temperature");
    params.add(app, "lambda", spec_.lambda, "regularizer strength");
    params.add(app, "eps", spec_.epsilon, "power regularizer exponent offset");
    params.add(app, "radii", radii_, "comma-separated increasing radii")->delimiter(',');
    params.add(app, "dirs", dirs_, "number of random directions");
    params.add(app, "t", spec_.t, "attention sequence length");
    params.add(app, "d", spec_.d, "input dimension");
    params.add(app, "r", spec_.r, "factor rank");
    params.add(app, "p", spec_.p, "LoRA output dimension");
    params.add(app, "n-samples", spec_.n_samples, "training samples in the instance");
    params.add(app, "x-scale", spec_.x_scale, "input scale (default 0.1 attention, 1e-3 LoRA)");
    params.add(app, "y-scale", spec_.y_scale, "target scale (default as x-scale)");
    params.add(app, "w-scale", spec_.w_scale, "W_V scale");
    params.add(app, "activation", spec_.activation, "tanh | sigmoid");
    params.add(app, "hutchinson-probes", probes_, "probe vectors when no exact Laplacian exists");
    params.add(app, "fd-max-dim", fd_max_dim_, "largest dimension for finite-difference Laplacians");
    params.bind("seed", g.seed_opt, g.seed);
  }

  int run(const Globals& g) override {
    if (is_lora(spec_.potential)) {
      if (!params.given("x_scale")) spec_.x_scale = 1e-3;
      if (!params.given("y_scale")) spec_.y_scale = 1e-3;
    }
    require(s_ > 0.0, "probe-villani: --s must be positive");
    require(spec_.lambda >= 0.0, "probe-villani: --lambda must be non-negative");
    require(dirs_ >= 1, "probe-villani: --dirs must be at least 1");
    require(!radii_.empty(), "probe-villani: --radii is empty");
    for (std::size_t i = 0; i < radii_.size(); ++i)
      require(radii_[i] > 0.0 && (i == 0 || radii_[i] > radii_[i - 1]),
              "probe-villani: radii must be positive and strictly increasing");
    const std::string out = g.out.empty() ? "probe.csv" : g.out;
    const ojson config = params.resolved(name);

    Rng rng = make_stream(splitmix64(g.seed), 0);
    const BuiltProblem built = build_problem(spec_, rng);

    bool orbit_flat = false;
    if (built.lora && spec_.lambda == 0.0) {
      Rng orng = make_stream(splitmix64(g.seed), 1);
      orbit_flat = scaling_orbit_check(built.potential, *built.lora, {1.0, 10.0, 100.0, 1e3, 1e4}, orng)
                       .non_confining;
    }

    RayScanOptions opts;
    opts.hutchinson_probes = probes_;
    opts.fd_max_dim = fd_max_dim_;
    opts.seed = g.seed;
    const ProbeResult res = probe_potential(built.potential, dirs_, radii_, s_, g.seed,
                                            resolve_thread_flag(g), opts);
    std::ostringstream csv;
    write_probe_csv(csv, res);
    write_file(out, csv.str());
    write_sidecar(out, config);

    std::cout << "potential " << res.potential << " dim " << built.potential.dim << " dirs " << dirs_
              << "\nvillani_ok " << res.villani_ok << "\nconfining_ok " << res.confining_ok
              << "\nmin_top_F " << res.min_top_villani << "\n";
    if (orbit_flat) {
      std::cerr << "non-confining orbit detected: V is constant along (cU, V/c) while |T| grows\n";
      return kCheckFailed;
    }
    return res.villani_ok && res.confining_ok ? kPass : kCheckFailed;
  }

 private:
  ProblemSpec spec_{"lora-log"};
  double s_ = 0.1;
  std::vector<double> radii_{1.0, 10.0, 100.0, 1e3, 1e4};
  int dirs_ = 16;
  int probes_ = 128;
  Index fd_max_dim_ = 200;
};

}  // namespace

std::unique_ptr<Command> make_probe_villani(CLI::App& parent, Globals& g) {
  return std::make_unique<ProbeVillani>(parent, g);
}

}  // namespace villani::cli
