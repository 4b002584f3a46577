#include "commands.hpp"

#include "villani/darcy/protocol.hpp"

#include <iostream>
#include <sstream>

namespace villani::cli {
namespace {

using namespace villani::darcy;

ojson stats_json(const NormStats& st) {
  return {{"a_mean", st.a_mean}, {"a_std", st.a_std}, {"u_mean", st.u_mean}, {"u_std", st.u_std}};
}

ojson metrics_json(const MetricsRow& m) {
  return {{"train_rmse", m.train_rmse}, {"test_rmse", m.test_rmse}, {"rel_l2", m.rel_l2},
          {"qk_norm_sq", m.qk_norm_sq}, {"gen_gap", m.gen_gap}};
}

class DarcyGen : public Command {
 public:
  DarcyGen(CLI::App& parent, Globals& g) {
    name = "darcy-gen";
    app = parent.add_subcommand("gen", "Generate a synthetic Darcy dataset");
    params.add(app, "grid", grid_, "interior grid size n");
    params.add(app, "n", count_, "number of samples");
    params.add(app, "low", field_.low, "permeability below the threshold");
    params.add(app, "high", field_.high, "permeability above the threshold");
    params.add(app, "smoothing", field_.smoothing, "Gaussian kernel width in cells (0: n / 8)");
    params.bind("seed", g.seed_opt, g.seed);
  }

  int run(const Globals& g) override {
    require(count_ >= 1, "darcy gen: --n must be at least 1");
    require(field_.low > 0.0 && field_.high > 0.0, "darcy gen: permeabilities must be positive");
    const std::string out = g.out.empty() ? "darcy.bin" : g.out;
    const DarcyDataset ds = generate_dataset(grid_, count_, g.seed, resolve_thread_flag(g), field_);
    write_dataset(out, ds);
    ojson side;
    side["config"] = params.resolved(name);
    side["generator_seed"] = g.seed;
    side["count"] = count_;
    side["grid"] = grid_;
    side["stats"] = stats_json(compute_stats(ds));
    write_file(out + ".json", side.dump(2) + "\n");
    std::cout << "wrote " << count_ << " samples on a " << grid_ << "x" << grid_ << " grid to " << out << "\n";
    return kPass;
  }

 private:
  Index grid_ = 16;
  std::size_t count_ = 240;
  FieldConfig field_;
};

ProtocolConfig preset_named(const std::string& name) {
  if (name == "desk") return ProtocolConfig::desk();
  if (name == "paper") return ProtocolConfig::paper();
  if (name == "tiny") return ProtocolConfig::tiny();
  throw UsageError("unknown preset '" + name + "' (desk, paper, tiny)");
}

class DarcyTrain : public Command {
 public:
  DarcyTrain(CLI::App& parent, Globals& g) {
    name = "darcy-train";
    app = parent.add_subcommand("train", "Phase 1 pretraining or phase 2 Q/K retraining");
    params.add(app, "phase", phase_, "1 or 2");
    params.add(app, "data", data_, "dataset file from darcy gen");
    params.add(app, "checkpoint", ckpt_, "written by phase 1, read by phase 2");
    params.add(app, "preset", preset_, "desk | paper | tiny (phase 1)");
    params.add(app, "patch", patch_, "patch size");
    params.add(app, "d", d_, "embedding width");
    params.add(app, "r", r_, "query/key width");
    params.add(app, "encoder", encoder_, "linear | conv");
    params.add(app, "n-train", n_train_, "training samples");
    params.add(app, "n-test", n_test_, "test samples");
    params.add(app, "epochs", epochs_, "epochs of the selected phase");
    params.add(app, "lr", lr_, "Adam learning rate of the selected phase");
    params.add(app, "batch", batch_, "batch size of the selected phase");
    params.add(app, "reg", reg_, "phase 2 objective: none | log | power");
    params.add(app, "lambda", lambda_, "phase 2 regularizer strength (default from preset)");
    params.add(app, "eps", eps_, "power exponent offset (default from preset)");
    params.add(app, "optimizer", optimizer_, "phase 2 optimizer: adam | sgld");
    params.add(app, "sgld-s", sgld_s_, "SGLD temperature");
    params.add(app, "save", save_, "phase 2: write the final parameters as a checkpoint");
    params.bind("seed", g.seed_opt, g.seed);
  }

  int run(const Globals& g) override {
    require(phase_ == 1 || phase_ == 2, "darcy train: --phase must be 1 or 2");
    require(!data_.empty(), "darcy train: --data is required");
    const std::string out = g.out.empty() ? "metrics.csv" : g.out;
    const DarcyDataset raw = read_dataset(data_);
    return phase_ == 1 ? run_phase_one(g, raw, out) : run_phase_two(g, raw, out);
  }

 private:
  PhaseConfig& selected(ProtocolConfig& cfg) const { return phase_ == 1 ? cfg.phase1 : cfg.phase2; }

  // Fills every unset option from `cfg` so the echoed config is the one used.
  void sync_from(ProtocolConfig& cfg) {
    PhaseConfig& ph = selected(cfg);
    if (!params.given("patch")) patch_ = cfg.patch;
    if (!params.given("d")) d_ = cfg.d;
    if (!params.given("r")) r_ = cfg.r;
    if (!params.given("encoder")) encoder_ = encoder_name(cfg.encoder);
    if (!params.given("n_train")) n_train_ = cfg.n_train;
    if (!params.given("n_test")) n_test_ = cfg.n_test;
    if (!params.given("epochs")) epochs_ = ph.epochs;
    if (!params.given("lr")) lr_ = ph.lr;
    if (!params.given("batch")) batch_ = ph.batch;
    if (!params.given("eps")) eps_ = cfg.epsilon;
  }

  void write_metrics(const std::string& out, const std::vector<MetricsRow>& rows, const ojson& config) {
    std::ostringstream csv;
    write_metrics_csv(csv, rows);
    write_file(out, csv.str());
    write_sidecar(out, config);
    const MetricsRow& last = rows.back();
    std::cout << "epoch " << last.epoch << " train_rmse " << last.train_rmse << " test_rmse "
              << last.test_rmse << " rel_l2 " << last.rel_l2 << " qk_norm_sq " << last.qk_norm_sq << "\n";
  }

  int run_phase_one(const Globals& g, const DarcyDataset& raw, const std::string& out) {
    ProtocolConfig cfg = preset_named(preset_);
    cfg.n = raw.n;
    sync_from(cfg);
    cfg.patch = patch_;
    cfg.d = d_;
    cfg.r = r_;
    cfg.encoder = parse_encoder(encoder_);
    cfg.n_train = n_train_;
    cfg.n_test = n_test_;
    cfg.phase1 = {epochs_, lr_, batch_};
    cfg.epsilon = eps_;
    cfg.seed = g.seed;
    cfg.threads = resolve_thread_flag(g);
    cfg.validate();
    const PreparedData data = prepare_data(raw, cfg.n_train, cfg.n_test);
    const Phase1Result res = run_phase1(cfg, data);
    save_checkpoint(ckpt_, res.checkpoint);
    write_metrics(out, res.metrics, params.resolved(name));
    return kPass;
  }

  int run_phase_two(const Globals& g, const DarcyDataset& raw, const std::string& out) {
    Checkpoint ckpt = load_checkpoint(ckpt_);
    ProtocolConfig& cfg = ckpt.config;
    require(raw.n == cfg.n, "darcy train: dataset grid does not match the checkpoint");
    auto same = [&](const char* key, bool equal) {
      require(!params.given(key) || equal,
              std::string("darcy train: --") + key + " differs from the checkpoint");
    };
    same("patch", patch_ == cfg.patch);
    same("d", d_ == cfg.d);
    same("r", r_ == cfg.r);
    same("encoder", encoder_ == encoder_name(cfg.encoder));
    same("n_train", n_train_ == cfg.n_train);
    same("n_test", n_test_ == cfg.n_test);
    same("seed", g.seed == cfg.seed);
    sync_from(cfg);
    preset_ = "checkpoint";
    cfg.phase2 = {epochs_, lr_, batch_};
    cfg.threads = resolve_thread_flag(g);
    cfg.validate();

    Phase2Options opts = phase2_defaults(cfg, parse_reg_kind(reg_));
    if (params.given("lambda")) opts.lambda = lambda_;
    lambda_ = opts.lambda;
    opts.epsilon = eps_;
    if (optimizer_ == "sgld")
      opts.optimizer = Phase2Optimizer::Sgld;
    else
      require(optimizer_ == "adam", "darcy train: --optimizer must be adam or sgld");
    opts.sgld_s = sgld_s_;

    ojson config = params.resolved(name);
    config["seed"] = cfg.seed;

    const PreparedData data = prepare_data(raw, cfg.n_train, cfg.n_test);
    ModelParams final_params;
    const std::vector<MetricsRow> rows = run_phase2(ckpt, data, opts, &final_params);
    if (!save_.empty()) {
      Checkpoint done = ckpt;
      done.params = final_params;
      save_checkpoint(save_, done);
    }
    write_metrics(out, rows, config);
    return kPass;
  }

  int phase_ = 1;
  std::string data_;
  std::string ckpt_ = "ckpt.bin";
  std::string preset_ = "desk";
  Index patch_ = 4, d_ = 16, r_ = 16;
  std::string encoder_ = "linear";
  std::size_t n_train_ = 200, n_test_ = 40;
  int epochs_ = 150;
  double lr_ = 1e-3;
  int batch_ = 16;
  std::string reg_ = "none";
  double lambda_ = 0.0;
  double eps_ = 1e-6;
  std::string optimizer_ = "adam";
  double sgld_s_ = 1e-6;
  std::string save_;
};

class DarcyEval : public Command {
 public:
  DarcyEval(CLI::App& parent, Globals&) {
    name = "darcy-eval";
    app = parent.add_subcommand("eval", "Metrics of a checkpoint on a dataset");
    params.add(app, "data", data_, "dataset file");
    params.add(app, "checkpoint", ckpt_, "checkpoint file");
  }

  int run(const Globals& g) override {
    require(!data_.empty(), "darcy eval: --data is required");
    const DarcyDataset raw = read_dataset(data_);
    const Checkpoint ckpt = load_checkpoint(ckpt_);
    const ProtocolConfig& cfg = ckpt.config;
    require(raw.n == cfg.n, "darcy eval: dataset grid does not match the checkpoint");
    require(raw.size() >= cfg.n_train + cfg.n_test, "darcy eval: dataset is smaller than the configured splits");
    PreparedData data;
    data.stats = ckpt.stats;
    data.train = standardize(slice(raw, 0, cfg.n_train), ckpt.stats);
    data.test = standardize(slice(raw, cfg.n_train, cfg.n_train + cfg.n_test), ckpt.stats);
    const MetricsRow m = compute_metrics(cfg.model(), ckpt.params, data, resolve_thread_flag(g));
    ojson doc;
    doc["config"] = params.resolved(name);
    doc["protocol"] = cfg.to_json();
    doc["metrics"] = metrics_json(m);
    emit_json(g, doc);
    return kPass;
  }

 private:
  std::string data_;
  std::string ckpt_ = "ckpt.bin";
};

}  // namespace

std::unique_ptr<Command> make_darcy_gen(CLI::App& parent, Globals& g) {
  return std::make_unique<DarcyGen>(parent, g);
}

std::unique_ptr<Command> make_darcy_train(CLI::App& parent, Globals& g) {
  return std::make_unique<DarcyTrain>(parent, g);
}

std::unique_ptr<Command> make_darcy_eval(CLI::App& parent, Globals& g) {
  return std::make_unique<DarcyEval>(parent, g);
}

}  // namespace villani::cli
