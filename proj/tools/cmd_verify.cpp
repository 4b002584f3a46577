#include "commands.hpp"

#include "villani/attention.hpp"
#include "villani/darcy/model.hpp"
#include "villani/darcy/protocol.hpp"
#include "villani/lora.hpp"
#include "villani/probe.hpp"

#include <cmath>
#include <iostream>
#include <map>

namespace villani::cli {
namespace {

template <class F>
Vector central_gradient(F&& f, Vector x, double h) {
  Vector g(x.size());
  for (Index i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double fp = f(x);
    x[i] = keep - h;
    const double fm = f(x);
    x[i] = keep;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// the scale never drops below floor
double rel_err(const Matrix& a, const Matrix& b, double floor = 1e-300) {
  const double scale = std::max({a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff(), floor});
  return (a - b).cwiseAbs().maxCoeff() / scale;
}

// fourth-order: Richardson extrapolation of the h and 2h stencils
template <class F>
double richardson_laplacian(F&& f, const Vector& x) {
  return (4.0 * fd_laplacian(f, x, 1e-3) - fd_laplacian(f, x, 2e-3)) / 3.0;
}

Index draw_dim(Rng& rng, Index max) { return 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(max)); }

ojson lemma_json(const LemmaReport& rep) {
  ojson j;
  j["trials"] = rep.trials;
  j["grad_violations"] = rep.grad_violations;
  j["lap_violations"] = rep.lap_violations;
  j["max_grad_ratio"] = rep.max_grad_ratio;
  j["max_lap_ratio"] = rep.max_lap_ratio;
  ojson v = ojson::array();
  for (const auto& x : rep.violations)
    v.push_back({{"trial", x.trial}, {"seed", x.seed}, {"grad_ratio", x.grad_ratio}, {"lap_ratio", x.lap_ratio}});
  j["violations"] = v;
  return j;
}

constexpr double kGradTol = 1e-6;
constexpr double kLapTol = 1e-4;
constexpr double kModelTol = 1e-4;

ojson check_attention(int trials, std::uint64_t seed, unsigned threads, bool& pass) {
  double worst_jac = 0.0, worst_hess = 0.0, worst_grad = 0.0, worst_lap = 0.0;
  for (int k = 0; k < trials; ++k) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(k));
    const Index t = draw_dim(rng, 8);
    const double beta = uniform(rng, 0.5, 2.0);
    const Matrix logits = gaussian_matrix(1, t, rng, 2.0);
    const Vector s = row_softmax(logits, beta).row(0).transpose();
    Matrix fd(t, t);
    for (Index j = 0; j < t; ++j) {
      auto comp = [&](const Vector& z) { return row_softmax(z.transpose(), beta)(0, j); };
      fd.row(j) = central_gradient(comp, Vector(logits.row(0).transpose()), 1e-5).transpose();
    }
    worst_jac = std::max(worst_jac, rel_err(softmax_jacobian_row(s, beta), fd, 1e-4 * beta));
    for (double h : softmax_hessian_row_tensor(s, beta))
      worst_hess = std::max(worst_hess, std::abs(h) / (beta * beta));

    const Index ta = draw_dim(rng, 6), d = draw_dim(rng, 6), r = draw_dim(rng, 6);
    AttnSample sample{gaussian_matrix(ta, d, rng), gaussian_matrix(ta, d, rng)};
    AttnParams params{gaussian_matrix(d, r, rng, 0.5), gaussian_matrix(d, r, rng, 0.5), gaussian_matrix(d, d, rng),
                      uniform(rng, 0.5, 2.0)};
    auto loss = [&](const Vector& T) {
      AttnParams p = params;
      unpack(T, p.Wq, p.Wk);
      return sample_loss(sample, p);
    };
    const Vector T0 = pack(params.Wq, params.Wk);
    const QKGrad g = sample_loss_grad(sample, params);
    worst_grad = std::max(worst_grad, rel_err(pack(g.dWq, g.dWk), central_gradient(loss, T0, 1e-5),
                                              1e-4 * std::max(1.0, std::abs(loss(T0)))));
    const double exact = sample_loss_laplacian(sample, params);
    worst_lap = std::max(worst_lap, std::abs(exact - richardson_laplacian(loss, T0)) / std::max(1.0, std::abs(exact)));
  }
  LemmaConfig lc;
  lc.model = LemmaModel::Attention;
  lc.trials = trials;
  lc.seed = seed;
  lc.random_dims = true;
  lc.max_dim = 5;
  lc.threads = threads;
  const LemmaReport rep = verify_lemma_bounds(lc);

  pass = worst_jac <= kGradTol && worst_hess < 6.0 && worst_grad <= kGradTol && worst_lap <= kLapTol && rep.ok();
  ojson j;
  j["softmax_jacobian_max_rel_err"] = worst_jac;
  j["softmax_hessian_max_over_beta2"] = worst_hess;
  j["softmax_hessian_limit_over_beta2"] = 6.0;
  j["softmax_hessian_margin"] = 6.0 - worst_hess;
  j["grad_max_rel_err"] = worst_grad;
  j["laplacian_max_rel_err"] = worst_lap;
  j["bounds"] = lemma_json(rep);
  return j;
}

ojson check_lora(int trials, std::uint64_t seed, unsigned threads, bool& pass) {
  double worst_grad = 0.0, worst_lap = 0.0;
  for (int k = 0; k < trials; ++k) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(k));
    const Index p = draw_dim(rng, 5), d = draw_dim(rng, 5), r = draw_dim(rng, 5);
    const BoundedActivation act{k % 2 ? ActivationKind::Sigmoid : ActivationKind::Tanh};
    LoraParams q{gaussian_matrix(p, r, rng, 0.7), gaussian_matrix(d, r, rng, 0.7), gaussian_vector(p, rng)};
    std::vector<LoraSample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({gaussian_vector(d, rng), gaussian_vector(1, rng)[0]});
    auto loss = [&](const Vector& T) {
      LoraParams c = q;
      unpack(T, c.U, c.V);
      return lora_loss(batch, c, act);
    };
    const Vector T0 = pack(q.U, q.V);
    const FactorGrad g = lora_loss_grad(batch, q, act);
    worst_grad = std::max(worst_grad, rel_err(pack(g.dU, g.dV), central_gradient(loss, T0, 1e-5),
                                              1e-4 * std::max(1.0, std::abs(loss(T0)))));
    const double exact = lora_laplacian(batch, q, act);
    worst_lap = std::max(worst_lap, std::abs(exact - richardson_laplacian(loss, T0)) / std::max(1.0, std::abs(exact)));
  }
  LemmaConfig lc;
  lc.model = LemmaModel::Lora;
  lc.trials = trials;
  lc.seed = seed;
  lc.random_dims = true;
  lc.max_dim = 5;
  lc.threads = threads;
  const LemmaReport rep = verify_lemma_bounds(lc);

  pass = worst_grad <= kGradTol && worst_lap <= kLapTol && rep.ok();
  ojson j;
  j["grad_max_rel_err"] = worst_grad;
  j["laplacian_max_rel_err"] = worst_lap;
  j["bounds"] = lemma_json(rep);
  return j;
}

ojson check_darcy(int trials, std::uint64_t seed, bool& pass) {
  using namespace villani::darcy;
  std::map<std::string, double> worst;
  for (int k = 0; k < trials; ++k) {
    Rng rng = make_stream(seed, static_cast<std::uint64_t>(k));
    ModelConfig mc = ProtocolConfig::tiny().model();
    if (k % 2) {
      mc.encoder = EncoderKind::Conv;
      mc.patch = 2;
    }
    ModelParams params = init_model(mc, rng);
    params.Wq *= 3.0;
    params.Wk *= 3.0;
    params.P = gaussian_matrix(params.P.rows(), params.P.cols(), rng, 0.3);
    params.visit([&](const char*, Matrix& m) {
      if (m.rows() == 1) m = gaussian_matrix(1, m.cols(), rng, 0.1);
    });
    const Matrix a = gaussian_matrix(mc.n, mc.n, rng);
    const Matrix u = gaussian_matrix(mc.n, mc.n, rng);
    ModelParams grad;
    const double loss = sample_loss_grad(mc, params, a, u, GradMode::Full, grad);
    const double floor = 1e-6 * std::max(1.0, std::abs(loss));
    std::vector<std::pair<const char*, Matrix*>> ps;
    std::vector<Matrix*> gs;
    params.visit([&](const char* name, Matrix& m) { ps.emplace_back(name, &m); });
    grad.visit([&](const char*, Matrix& m) { gs.push_back(&m); });
    for (std::size_t i = 0; i < ps.size(); ++i) {
      Matrix& w = *ps[i].second;
      if (w.size() == 0) continue;
      Matrix fd(w.rows(), w.cols());
      for (Index e = 0; e < w.size(); ++e) {
        const double keep = w.data()[e];
        w.data()[e] = keep + 1e-5;
        const double fp = sample_loss(mc, params, a, u);
        w.data()[e] = keep - 1e-5;
        const double fm = sample_loss(mc, params, a, u);
        w.data()[e] = keep;
        fd.data()[e] = (fp - fm) / 2e-5;
      }
      double& slot = worst[ps[i].first];
      slot = std::max(slot, rel_err(*gs[i], fd, floor));
    }
  }
  pass = true;
  ojson j;
  for (const auto& [name, err] : worst) {
    j[name] = err;
    pass = pass && err <= kModelTol;
  }
  return {{"tensor_max_rel_err", j}};
}

class CheckGrads : public Command {
 public:
  CheckGrads(CLI::App& parent, Globals& g) {
    name = "check-grads";
    app = parent.add_subcommand(name, "Finite-difference checks of gradients, Laplacians and lemma bounds");
    params.add(app, "model", model_, "attention | lora | darcy");
    params.add(app, "trials", trials_, "number of random instances");
    params.bind("seed", g.seed_opt, g.seed);
  }

  int run(const Globals& g) override {
    require(trials_ >= 1, "check-grads: --trials must be at least 1");
    const unsigned threads = resolve_thread_flag(g);
    bool pass = false;
    ojson results;
    if (model_ == "attention")
      results = check_attention(trials_, g.seed, threads, pass);
    else if (model_ == "lora")
      results = check_lora(trials_, g.seed, threads, pass);
    else if (model_ == "darcy")
      results = check_darcy(trials_, g.seed, pass);
    else
      throw UsageError("check-grads: unknown model '" + model_ + "' (attention, lora, darcy)");
    ojson doc;
    doc["config"] = params.resolved(name);
    doc["results"] = results;
    doc["pass"] = pass;
    emit_json(g, doc);
    std::cerr << "check-grads " << model_ << ": " << (pass ? "PASS" : "FAIL") << "\n";
    return pass ? kPass : kCheckFailed;
  }

 private:
  std::string model_ = "attention";
  int trials_ = 100;
};

class VerifyBounds : public Command {
 public:
  VerifyBounds(CLI::App& parent, Globals& g) {
    name = "verify-bounds";
    app = parent.add_subcommand(name, "Random-draw check of the gradient and Laplacian growth bounds");
    params.add(app, "model", model_, "attention | lora");
    params.add(app, "trials", trials_, "number of draws");
    params.add(app, "max-dim", max_dim_, "largest dimension drawn");
    params.add(app, "n-samples", n_samples_, "samples per draw");
    params.bind("seed", g.seed_opt, g.seed);
  }

  int run(const Globals& g) override {
    require(trials_ >= 1, "verify-bounds: --trials must be at least 1");
    require(max_dim_ >= 1 && n_samples_ >= 1, "verify-bounds: dims must be positive");
    LemmaConfig lc;
    if (model_ == "attention")
      lc.model = LemmaModel::Attention;
    else if (model_ == "lora")
      lc.model = LemmaModel::Lora;
    else
      throw UsageError("verify-bounds: unknown model '" + model_ + "' (attention, lora)");
    lc.trials = trials_;
    lc.seed = g.seed;
    lc.random_dims = true;
    lc.max_dim = max_dim_;
    lc.n_samples = n_samples_;
    lc.threads = resolve_thread_flag(g);
    const LemmaReport rep = verify_lemma_bounds(lc);
    ojson doc;
    doc["config"] = params.resolved(name);
    doc["results"] = lemma_json(rep);
    doc["pass"] = rep.ok();
    emit_json(g, doc);
    std::cerr << "verify-bounds " << model_ << ": " << (rep.ok() ? "PASS" : "FAIL") << "\n";
    return rep.ok() ? kPass : kCheckFailed;
  }

 private:
  std::string model_ = "attention";
  int trials_ = 1000;
  Index max_dim_ = 5;
  Index n_samples_ = 4;
};

}  // namespace

std::unique_ptr<Command> make_check_grads(CLI::App& parent, Globals& g) {
  return std::make_unique<CheckGrads>(parent, g);
}

std::unique_ptr<Command> make_verify_bounds(CLI::App& parent, Globals& g) {
  return std::make_unique<VerifyBounds>(parent, g);
}

}  // namespace villani::cli
