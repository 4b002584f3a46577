// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on failure.

#include "oracles.hpp"

#include "villani/attention.hpp"
#include "villani/darcy/protocol.hpp"
#include "villani/lora.hpp"
#include "villani/potential.hpp"
#include "villani/probe.hpp"
#include "villani/sde.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

using namespace villani;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", x);
  return buf;
}

Index draw(Rng& rng, Index max) { return 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(max)); }

RegularizerSpec reg(RegKind kind, double lambda, FactorDims dims, double eps = 0.5) {
  RegularizerSpec r;
  r.kind = kind;
  r.lambda = lambda;
  r.epsilon = eps;
  r.dims = dims;
  return r;
}

Outcome softmax_calculus() {
  Rng rng = make_stream(101, 0);
  double worst_jac = 0.0, worst_hess = 0.0;
  const int rows = 2000;
  for (int k = 0; k < rows; ++k) {
    const Index t = draw(rng, 8);
    const double beta = uniform(rng, 0.5, 2.0);
    const Vector z = gaussian_vector(t, rng, uniform(rng, 0.1, 2.0));
    const Vector s = row_softmax(z.transpose(), beta).row(0).transpose();
    const Matrix J = softmax_jacobian_row(s, beta);
    Matrix fd(t, t);
    for (Index j = 0; j < t; ++j) {
      auto comp = [&](const Vector& x) { return row_softmax(x.transpose(), beta)(0, j); };
      fd.row(j) = oracle::fd_gradient(comp, z, 1e-5).transpose();
    }
    worst_jac = std::max(worst_jac, oracle::rel_err(Vector(J.reshaped()), Vector(fd.reshaped())));
    for (Index j = 0; j < t; ++j)
      for (Index a = 0; a < t; ++a)
        for (Index b = 0; b < t; ++b)
          worst_hess = std::max(worst_hess, std::abs(softmax_hessian_entry(s, beta, j, a, b)) / (beta * beta));
  }
  return {worst_jac <= 1e-6 && worst_hess < 6.0,
          std::to_string(rows) + " rows, Jacobian rel err " + fmt(worst_jac) + ", max |H|/beta^2 " + fmt(worst_hess) + " < 6"};
}

Outcome attention_gradients() {
  Rng rng = make_stream(102, 0);
  double worst = 0.0;
  const int instances = 200;
  for (int k = 0; k < instances; ++k) {
    const Index t = draw(rng, 6), d = draw(rng, 6), r = draw(rng, 6);
    std::vector<AttnSample> batch;
    for (int i = 0; i < 3; ++i) batch.push_back({gaussian_matrix(t, d, rng), gaussian_matrix(t, d, rng)});
    AttnParams p{gaussian_matrix(d, r, rng), gaussian_matrix(d, r, rng), gaussian_matrix(d, d, rng), uniform(rng, 0.5, 2.0)};
    auto f = [&](const Vector& T) {
      AttnParams q = p;
      unpack(T, q.Wq, q.Wk);
      return empirical_risk(batch, q);
    };
    const QKGrad g = empirical_risk_grad(batch, p);
    worst = std::max(worst, oracle::rel_err(pack(g.dWq, g.dWk), oracle::fd_gradient(f, pack(p.Wq, p.Wk))));
  }
  int violations = 0;
  double max_ratio = 0.0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const Index t = draw(rng, 6), d = draw(rng, 6), r = draw(rng, 6);
    AttentionProblem prob = random_attention_problem(t, d, r, 4, uniform(rng, 0.1, 2.0), uniform(rng, 0.0, 2.0),
                                                     uniform(rng, 0.1, 2.0), rng);
    prob.beta = uniform(rng, 0.5, 2.0);
    const ParamPoint T = std::pow(10.0, uniform(rng, -2.0, 2.0)) * unit_vector(2 * d * r, rng);
    const AttnParams p = attention_params_from(prob, T);
    const QKGrad g = empirical_risk_grad(prob.samples, p);
    const double bound = attention_grad_bound_constant(prob.Bx, prob.By, prob.Bw, p.beta, t, d) * T.norm();
    const double ratio = pack(g.dWq, g.dWk).norm() / bound;
    max_ratio = std::max(max_ratio, ratio);
    violations += ratio > 1.0;
  }
  return {worst <= 1e-6 && violations == 0,
          std::to_string(instances) + " instances, grad rel err " + fmt(worst) + "; " + std::to_string(draws) +
              " bound draws, " + std::to_string(violations) + " violations, max ratio " + fmt(max_ratio)};
}

Outcome lora_calculus() {
  Rng rng = make_stream(103, 0);
  double worst_grad = 0.0, worst_lap = 0.0;
  const int instances = 200;
  for (int k = 0; k < instances; ++k) {
    const Index p = draw(rng, 5), d = draw(rng, 5), r = draw(rng, 5);
    const BoundedActivation act{k % 2 ? ActivationKind::Sigmoid : ActivationKind::Tanh};
    LoraParams q{gaussian_matrix(p, r, rng, 0.8), gaussian_matrix(d, r, rng, 0.8), gaussian_vector(p, rng)};
    std::vector<LoraSample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({gaussian_vector(d, rng), gaussian_vector(1, rng)[0]});
    auto f = [&](const Vector& T) {
      LoraParams c = q;
      unpack(T, c.U, c.V);
      return lora_loss(batch, c, act);
    };
    const Vector T0 = pack(q.U, q.V);
    const FactorGrad g = lora_loss_grad(batch, q, act);
    worst_grad = std::max(worst_grad, oracle::rel_err(pack(g.dU, g.dV), oracle::fd_gradient(f, T0)));
    worst_lap = std::max(worst_lap, oracle::rel_err(lora_laplacian(batch, q, act), oracle::fd_laplacian(f, T0, 1e-4)));
  }
  int violations = 0;
  double max_ratio = 0.0;
  const int draws = 10000;
  for (int k = 0; k < draws; ++k) {
    const Index p = draw(rng, 5), d = draw(rng, 5), r = draw(rng, 5);
    const BoundedActivation act{k % 2 ? ActivationKind::Sigmoid : ActivationKind::Tanh};
    const LoraProblem prob = random_lora_problem(p, d, r, 4, uniform(rng, 0.1, 2.0), uniform(rng, 0.0, 2.0), act, rng);
    const ParamPoint T = std::pow(10.0, uniform(rng, -2.0, 2.0)) * unit_vector((p + d) * r, rng);
    const LoraParams q = lora_params_from(prob, T);
    const double bound = lora_laplacian_bound_constant(prob.a, act, prob.Bx, prob.By) * T.squaredNorm();
    const double ratio = std::abs(lora_laplacian(prob.samples, q, act)) / bound;
    max_ratio = std::max(max_ratio, ratio);
    violations += ratio > 1.0;
  }
  return {worst_grad <= 1e-6 && worst_lap <= 1e-4 && violations == 0,
          std::to_string(instances) + " instances, grad rel err " + fmt(worst_grad) + ", Laplacian rel err " +
              fmt(worst_lap) + "; " + std::to_string(draws) + " bound draws, " + std::to_string(violations) +
              " violations, max ratio " + fmt(max_ratio)};
}

Outcome scaling_orbits() {
  Rng rng = make_stream(104, 0);
  double worst = 0.0;
  for (int k = 0; k < 100; ++k) {
    const Index p = draw(rng, 5), d = draw(rng, 5), r = draw(rng, 4);
    const BoundedActivation act{k % 2 ? ActivationKind::Sigmoid : ActivationKind::Tanh};
    LoraParams q{gaussian_matrix(p, r, rng), gaussian_matrix(d, r, rng), gaussian_vector(p, rng)};
    std::vector<LoraSample> batch;
    for (int i = 0; i < 6; ++i) batch.push_back({gaussian_vector(d, rng), gaussian_vector(1, rng)[0]});
    Matrix A = gaussian_matrix(r, r, rng) + 2.0 * Matrix::Identity(r, r);
    const double L0 = lora_loss(batch, q, act);
    const double L1 = lora_loss(batch, scaling_orbit(q, A), act);
    worst = std::max(worst, std::abs(L1 - L0) / std::abs(L0));
  }

  Rng prng = make_stream(104, 1);
  const LoraProblem prob = random_lora_problem(1, 1, 1, 8, 1.0, 1.0, {ActivationKind::Tanh}, prng);
  const Potential flat = make_lora_potential(prob, reg(RegKind::None, 0.0, {1, 1}));
  const Potential held = make_lora_potential(prob, reg(RegKind::LogAmplified, 0.1, {1, 1}));
  std::vector<double> z_flat, z_held;
  for (double L : {10.0, 100.0, 1000.0}) {
    z_flat.push_back(gibbs_normalizability_check(flat, 1.0, L).box_integral);
    z_held.push_back(gibbs_normalizability_check(held, 1.0, L).box_integral);
  }
  const bool diverges = z_flat[1] > 2.0 * z_flat[0] && z_flat[2] > 2.0 * z_flat[1];
  const double plateau = std::abs(z_held[2] - z_held[1]) / z_held[2];
  return {worst <= 1e-10 && diverges && plateau <= 1e-4,
          "100 orbits, max rel loss change " + fmt(worst) + "; unregularized Z(L) " + fmt(z_flat[0]) + ", " +
              fmt(z_flat[1]) + ", " + fmt(z_flat[2]) + "; regularized Z(1e3)/Z(1e2) - 1 = " + fmt(plateau)};
}

std::vector<Potential> probe_potentials(std::uint64_t seed) {
  std::vector<Potential> out;
  for (RegKind kind : {RegKind::LogAmplified, RegKind::Power}) {
    Rng a = make_stream(seed, 0);
    out.push_back(make_attention_potential(random_attention_problem(3, 1, 1, 8, 0.1, 0.1, 1.0, a),
                                           reg(kind, 1e-3, {1, 1})));
    Rng b = make_stream(seed, 1);
    out.push_back(make_lora_potential(random_lora_problem(1, 1, 1, 8, 1e-3, 1e-3, {ActivationKind::Tanh}, b),
                                      reg(kind, 1e-3, {1, 1})));
  }
  return out;
}

Outcome villani_probe() {
  bool ok = true;
  std::string detail;
  for (const Potential& pot : probe_potentials(105)) {
    const ProbeResult res = probe_potential(pot, 16, {1.0, 10.0, 100.0, 1e3, 1e4}, 0.1, 205, 1);
    ok = ok && res.villani_ok && res.confining_ok;
    detail += pot.name + (res.villani_ok && res.confining_ok ? " ok" : " FAILED") + " (min F(1e4) " +
              fmt(res.min_top_villani) + "); ";
  }
  return {ok, "16 directions each: " + detail};
}

Outcome sde_sanity() {
  const double s = 0.5, h = 0.01;
  const Index D = 16;
  Rng rng = make_stream(106, 0);
  ParamPoint T = ParamPoint::Zero(D);
  for (int k = 0; k < 2000; ++k) T = em_step(T, T, s, h, rng);
  double sum_sq = 0.0;
  long n = 0;
  for (long k = 0; k < 100000; ++k) {
    T = em_step(T, T, s, h, rng);
    sum_sq += T.squaredNorm();
    n += D;
  }
  const double var = sum_sq / n;
  const bool ou_ok = std::abs(var - s / 2.0) <= 0.05 * s / 2.0;

  Rng nrng = make_stream(106, 1);
  double worst_lambda = 0.0, worst_eps = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> t, v;
    for (int i = 0; i <= 200; ++i) {
      t.push_back(i * 0.025);
      v.push_back(1.0 + std::exp(-2.0 * t.back()) + 0.01 * gaussian_vector(1, nrng)[0]);
    }
    const DecayFit fit = fit_decay(t, v, 0.0);
    worst_lambda = std::max(worst_lambda, std::abs(fit.lambda_hat - 2.0) / 2.0);
    worst_eps = std::max(worst_eps, std::abs(fit.asymptote_hat - 1.0));
  }
  const bool fit_ok = worst_lambda <= 0.1 && worst_eps <= 0.1;

  bool chains_ok = true;
  std::string chains;
  for (RegKind kind : {RegKind::LogAmplified, RegKind::Power}) {
    for (int model = 0; model < 2; ++model) {
      Rng prng = make_stream(106, 10 + model);
      const Potential pot =
          model == 0 ? make_attention_potential(random_attention_problem(3, 2, 2, 8, 1.0, 1.0, 1.0, prng), reg(kind, 1e-3, {4, 4}))
                     : make_lora_potential(random_lora_problem(2, 2, 2, 8, 1.0, 1.0, {ActivationKind::Tanh}, prng),
                                           reg(kind, 1e-3, {4, 4}));
      SdeConfig cfg;
      cfg.s = 1e-3;
      cfg.h = 1e-3;
      cfg.steps = 20000;
      cfg.record_every = 100;
      cfg.chains = 32;
      cfg.seed = 306;
      const Trajectory tr = run_sde(pot, ParamPoint::Zero(pot.dim), cfg);
      Rng vrng = make_stream(106, 20 + model);
      double v_star = estimate_v_star(pot, 8, 2000, vrng);
      for (const auto& row : tr.rows) v_star = std::min(v_star, row.v);
      const DecayFit fit = fit_decay(tr, v_star);
      const bool ok = !tr.diverged && fit.lambda_hat > 0.0 && fit.r2 >= 0.8;
      chains_ok = chains_ok && ok;
      chains += pot.name + " lambda_hat " + fmt(fit.lambda_hat) + " R2 " + fmt(fit.r2) + (ok ? "" : " FAILED") + "; ";
    }
  }
  return {ou_ok && fit_ok && chains_ok,
          "OU variance " + fmt(var) + " vs " + fmt(s / 2.0) + "; synthetic fit max rel lambda err " + fmt(worst_lambda) +
              ", max eps err " + fmt(worst_eps) + "; " + chains};
}

double series_center() {
  double s = 0.0;
  for (int m = 1; m <= 401; m += 2)
    for (int n = 1; n <= 401; n += 2)
      s += 16.0 / (std::pow(M_PI, 4) * m * n * (m * m + n * n)) * std::sin(m * M_PI / 2) * std::sin(n * M_PI / 2);
  return s;
}

double darcy_fd_error(darcy::ModelConfig mc, std::uint64_t seed) {
  using namespace villani::darcy;
  Rng rng = make_stream(seed, 0);
  ModelParams params = init_model(mc, rng);
  params.Wq *= 3.0;
  params.Wk *= 3.0;
  params.P = gaussian_matrix(params.P.rows(), params.P.cols(), rng, 0.3);
  params.visit([&](const char*, Matrix& m) {
    if (m.rows() == 1) m = gaussian_matrix(1, m.cols(), rng, 0.1);
  });
  const Matrix a = gaussian_matrix(mc.n, mc.n, rng), u = gaussian_matrix(mc.n, mc.n, rng);
  ModelParams grad;
  sample_loss_grad(mc, params, a, u, GradMode::Full, grad);
  std::vector<Matrix*> ps, gs;
  params.visit([&](const char*, Matrix& m) { ps.push_back(&m); });
  grad.visit([&](const char*, Matrix& m) { gs.push_back(&m); });
  double worst = 0.0;
  for (std::size_t k = 0; k < ps.size(); ++k) {
    if (ps[k]->size() == 0) continue;
    Matrix& w = *ps[k];
    auto f = [&](const Vector& x) {
      const Matrix keep = w;
      w = Eigen::Map<const Matrix>(x.data(), w.rows(), w.cols());
      const double v = sample_loss(mc, params, a, u);
      w = keep;
      return v;
    };
    const Vector x0 = Eigen::Map<const Vector>(w.data(), w.size());
    const Vector g = Eigen::Map<const Vector>(gs[k]->data(), gs[k]->size());
    worst = std::max(worst, oracle::rel_err(g, oracle::fd_gradient(f, x0)));
  }
  return worst;
}

Outcome darcy_bench() {
  using namespace villani::darcy;
  const Index n = 64;
  const Matrix u = solve_darcy(Matrix::Ones(n, n));
  const double center = 0.25 * (u(31, 31) + u(31, 32) + u(32, 31) + u(32, 32));
  const double oracle_value = series_center();
  const bool solve_ok = std::abs(center - oracle_value) <= 1e-3;

  const ModelConfig tiny = ProtocolConfig::tiny().model();
  ModelConfig conv = tiny;
  conv.encoder = EncoderKind::Conv;
  conv.patch = 2;
  const double fd_err = std::max(darcy_fd_error(tiny, 107), darcy_fd_error(conv, 108));
  const bool fd_ok = fd_err <= 1e-4;

  const int seeds = 5;
  double qk[3] = {0, 0, 0};
  double worst_spread = 0.0;
  for (int seed = 1; seed <= seeds; ++seed) {
    ProtocolConfig cfg = ProtocolConfig::desk();
    cfg.seed = static_cast<std::uint64_t>(seed);
    const DarcyDataset raw = generate_dataset(cfg.n, cfg.n_train + cfg.n_test, 1000 + seed, 1);
    const PreparedData data = prepare_data(raw, cfg.n_train, cfg.n_test);
    const Phase1Result p1 = run_phase1(cfg, data);
    double lo = INFINITY, hi = 0.0;
    int i = 0;
    for (RegKind kind : {RegKind::None, RegKind::LogAmplified, RegKind::Power}) {
      const MetricsRow last = run_phase2(p1.checkpoint, data, phase2_defaults(cfg, kind)).back();
      lo = std::min(lo, last.test_rmse);
      hi = std::max(hi, last.test_rmse);
      qk[i++] += last.qk_norm_sq / seeds;
    }
    worst_spread = std::max(worst_spread, (hi - lo) / lo);
  }
  const bool rmse_ok = worst_spread <= 0.1;
  const bool order_ok = qk[2] <= qk[1] && qk[1] <= qk[0];
  return {solve_ok && fd_ok && rmse_ok && order_ok,
          "center " + fmt(center) + " vs series " + fmt(oracle_value) + "; tiny-preset FD rel err " + fmt(fd_err) +
              "; desk preset over 5 seeds: max test RMSE spread " + fmt(worst_spread) + ", mean QK norm^2 none " +
              std::to_string(qk[0]) + " log " + std::to_string(qk[1]) + " power " + std::to_string(qk[2])};
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Outcome determinism() {
  const std::string cli = VILLANI_CLI_PATH;
  const std::vector<std::string> commands = {
      "check-grads --model attention --trials 20 --seed 3 --out cg_att.json",
      "check-grads --model lora --trials 20 --seed 3 --out cg_lora.json",
      "check-grads --model darcy --trials 2 --seed 3 --out cg_darcy.json",
      "verify-bounds --model lora --trials 200 --seed 3 --out vb.json",
      "probe-villani --potential att-power --seed 3 --out probe.csv",
      "train-sde --potential lora-log --steps 2000 --chains 8 --seed 3 --out traj.csv",
      "darcy gen --grid 8 --n 16 --seed 3 --out d.bin",
      "darcy train --phase 1 --preset tiny --data d.bin --checkpoint ck.bin --seed 3 --out p1.csv",
      "darcy train --phase 2 --reg none --data d.bin --checkpoint ck.bin --out p2n.csv --save f_none.bin",
      "darcy train --phase 2 --reg log --data d.bin --checkpoint ck.bin --out p2l.csv --save f_log.bin",
      "darcy train --phase 2 --reg power --data d.bin --checkpoint ck.bin --out p2p.csv --save f_pow.bin",
      "darcy eval --data d.bin --checkpoint f_pow.bin --out eval.json",
  };
  const fs::path root = fs::temp_directory_path() / ("villani_accept_" + std::to_string(::getpid()));
  bool ok = true;
  std::string failures;
  std::size_t files = 0;
  for (const char* run : {"a", "b"}) {
    const fs::path dir = root / run;
    fs::create_directories(dir);
    for (std::size_t k = 0; k < commands.size(); ++k) {
      const std::string cmd = "cd '" + dir.string() + "' && '" + cli + "' --threads 1 " + commands[k] +
                              " > stdout_" + std::to_string(k) + ".txt 2> stderr_" + std::to_string(k) + ".txt";
      if (std::system(cmd.c_str()) != 0) {
        ok = false;
        failures += "[" + commands[k] + " exited nonzero] ";
      }
    }
  }
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    const fs::path other = root / "b" / entry.path().filename();
    ++files;
    if (!fs::exists(other) || slurp(entry.path()) != slurp(other)) {
      ok = false;
      failures += entry.path().filename().string() + " differs; ";
    }
  }
  fs::remove_all(root);
  return {ok, std::to_string(commands.size()) + " commands run twice, " + std::to_string(files) +
                  " artifacts compared byte for byte" + (failures.empty() ? "" : ": " + failures)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"softmax calculus", softmax_calculus},
      {"attention gradients and gradient bound", attention_gradients},
      {"LoRA calculus and Laplacian bound", lora_calculus},
      {"scaling-orbit invariance and Gibbs quadrature", scaling_orbits},
      {"Villani probe on four potentials", villani_probe},
      {"SDE sanity and decay fits", sde_sanity},
      {"Darcy solver, gradients and protocol", darcy_bench},
      {"CLI determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << i + 1 << "] " << criteria[i].first << " (" << fmt(secs)
              << " s): " << o.detail << std::endl;
    failed += !o.pass;
  }
  return failed == 0 ? 0 : 1;
}
