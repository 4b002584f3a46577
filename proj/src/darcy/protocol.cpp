#include "villani/darcy/protocol.hpp"

#include "villani/io.hpp"
#include "villani/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>

namespace villani::darcy {
namespace {

constexpr char kCkptMagic[4] = {'V', 'B', 'C', 'K'};
constexpr std::uint32_t kCkptVersion = 1;

// Stream indices under the protocol seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kReinitStream = 2;
constexpr std::uint64_t kShuffleBase = 1000;
constexpr std::uint64_t kPhase2ShuffleBase = 500000;
constexpr std::uint64_t kSgldBase = 900000;

std::vector<std::size_t> shuffled(std::size_t n, Rng rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  // Fisher-Yates with explicit draws so the order is library independent.
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

nlohmann::ordered_json phase_json(const PhaseConfig& p) {
  return {{"epochs", p.epochs}, {"lr", p.lr}, {"batch", p.batch}};
}

PhaseConfig phase_from(const nlohmann::json& j, PhaseConfig base) {
  if (j.contains("epochs")) base.epochs = j.at("epochs").get<int>();
  if (j.contains("lr")) base.lr = j.at("lr").get<double>();
  if (j.contains("batch")) base.batch = j.at("batch").get<int>();
  return base;
}

void put_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& is) {
  std::uint32_t v = 0;
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw UsageError("checkpoint: truncated file");
  return v;
}

void put_tensor(std::ostream& os, const std::string& name, const Matrix& m) {
  put_u32(os, static_cast<std::uint32_t>(name.size()));
  os.write(name.data(), static_cast<std::streamsize>(name.size()));
  put_u32(os, static_cast<std::uint32_t>(m.rows()));
  put_u32(os, static_cast<std::uint32_t>(m.cols()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      const double v = m(i, j);
      os.write(reinterpret_cast<const char*>(&v), sizeof v);
    }
}

void adam_update(Matrix& w, const Matrix& g, AdamState& st, const AdamConfig& cfg) {
  Eigen::Map<Vector> wv(w.data(), w.size());
  const Vector gv = Eigen::Map<const Vector>(g.data(), g.size());
  adam_step(wv, gv, st, cfg);
}

}  // namespace

ProtocolConfig ProtocolConfig::desk() { return ProtocolConfig{}; }

ProtocolConfig ProtocolConfig::paper() {
  ProtocolConfig c;
  c.n = 64;
  c.patch = 4;
  c.d = 64;
  c.r = 64;
  c.n_train = 900;
  c.n_test = 124;
  c.phase1 = {500, 1e-3, 32};
  c.phase2 = {100, 1e-3, 32};
  return c;
}

ProtocolConfig ProtocolConfig::tiny() {
  ProtocolConfig c;
  c.n = 8;
  c.patch = 4;
  c.d = 4;
  c.r = 4;
  c.n_train = 8;
  c.n_test = 4;
  c.phase1 = {2, 1e-3, 4};
  c.phase2 = {2, 1e-3, 4};
  return c;
}

ModelConfig ProtocolConfig::model() const {
  ModelConfig m;
  m.n = n;
  m.patch = patch;
  m.d = d;
  m.r = r;
  m.encoder = encoder;
  return m;
}

void ProtocolConfig::validate() const {
  model().validate();
  require(n >= 8, "protocol: grid must be at least 8");
  require(n_train >= 1 && n_test >= 1, "protocol: splits must be non-empty");
  require(phase1.epochs >= 0 && phase2.epochs >= 0, "protocol: epochs must be >= 0");
  require(phase1.batch >= 1 && phase2.batch >= 1, "protocol: batch must be >= 1");
  require(phase1.lr > 0.0 && phase2.lr > 0.0, "protocol: lr must be positive");
  require(lambda_log >= 0.0 && lambda_pow >= 0.0, "protocol: lambda must be >= 0");
  require(epsilon > 0.0, "protocol: epsilon must be positive");
}

nlohmann::ordered_json ProtocolConfig::to_json() const {
  nlohmann::ordered_json j;
  j["grid"] = n;
  j["patch"] = patch;
  j["d"] = d;
  j["r"] = r;
  j["n_train"] = n_train;
  j["n_test"] = n_test;
  j["encoder"] = encoder_name(encoder);
  j["phase1"] = phase_json(phase1);
  j["phase2"] = phase_json(phase2);
  j["lambda_log"] = lambda_log;
  j["lambda_pow"] = lambda_pow;
  j["epsilon"] = epsilon;
  j["seed"] = seed;
  return j;
}

ProtocolConfig ProtocolConfig::from_json(const nlohmann::json& j) {
  ProtocolConfig c;
  if (j.contains("grid")) c.n = j.at("grid").get<Index>();
  if (j.contains("patch")) c.patch = j.at("patch").get<Index>();
  if (j.contains("d")) c.d = j.at("d").get<Index>();
  if (j.contains("r")) c.r = j.at("r").get<Index>();
  if (j.contains("n_train")) c.n_train = j.at("n_train").get<std::size_t>();
  if (j.contains("n_test")) c.n_test = j.at("n_test").get<std::size_t>();
  if (j.contains("encoder")) c.encoder = parse_encoder(j.at("encoder").get<std::string>());
  if (j.contains("phase1")) c.phase1 = phase_from(j.at("phase1"), c.phase1);
  if (j.contains("phase2")) c.phase2 = phase_from(j.at("phase2"), c.phase2);
  if (j.contains("lambda_log")) c.lambda_log = j.at("lambda_log").get<double>();
  if (j.contains("lambda_pow")) c.lambda_pow = j.at("lambda_pow").get<double>();
  if (j.contains("epsilon")) c.epsilon = j.at("epsilon").get<double>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows) {
  os << "epoch,train_rmse,test_rmse,rel_l2,qk_norm_sq,gen_gap\n";
  for (const auto& r : rows)
    os << r.epoch << ',' << fmt_double(r.train_rmse) << ',' << fmt_double(r.test_rmse) << ','
       << fmt_double(r.rel_l2) << ',' << fmt_double(r.qk_norm_sq) << ','
       << fmt_double(r.gen_gap) << '\n';
}

PreparedData prepare_data(const DarcyDataset& raw, std::size_t n_train, std::size_t n_test) {
  require(n_train >= 1 && n_test >= 1, "prepare_data: splits must be non-empty");
  require(raw.size() >= n_train + n_test, "prepare_data: dataset has " +
                                              std::to_string(raw.size()) + " samples, need " +
                                              std::to_string(n_train + n_test));
  PreparedData out;
  const DarcyDataset train = slice(raw, 0, n_train);
  out.stats = compute_stats(train);
  out.train = standardize(train, out.stats);
  out.test = standardize(slice(raw, n_train, n_train + n_test), out.stats);
  return out;
}

MetricsRow compute_metrics(const ModelConfig& cfg, const ModelParams& params,
                           const PreparedData& data, unsigned threads) {
  require(data.train.size() >= 1 && data.test.size() >= 1, "compute_metrics: empty split");
  auto split_mse = [&](const DarcyDataset& ds, std::vector<double>* rel) {
    std::vector<double> mse(ds.size());
    if (rel) rel->assign(ds.size(), 0.0);
    parallel_for(ds.size(), threads, [&](std::size_t k) {
      const Matrix pred = model_forward(cfg, params, ds.a[k]);
      mse[k] = (pred - ds.u[k]).squaredNorm() / static_cast<double>(pred.size());
      if (rel) {
        const Matrix up = (pred.array() * data.stats.u_std + data.stats.u_mean).matrix();
        const Matrix ut = (ds.u[k].array() * data.stats.u_std + data.stats.u_mean).matrix();
        (*rel)[k] = (up - ut).norm() / ut.norm();
      }
    });
    double total = 0.0;
    for (double m : mse) total += m;
    return total / static_cast<double>(ds.size());
  };
  std::vector<double> rel;
  const double train_mse = split_mse(data.train, nullptr);
  const double test_mse = split_mse(data.test, &rel);
  MetricsRow row;
  row.train_rmse = std::sqrt(train_mse);
  row.test_rmse = std::sqrt(test_mse);
  double rel_sum = 0.0;
  for (double v : rel) rel_sum += v;
  row.rel_l2 = rel_sum / static_cast<double>(rel.size());
  row.qk_norm_sq = params.Wq.squaredNorm() + params.Wk.squaredNorm();
  row.gen_gap = test_mse - train_mse;
  return row;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw UsageError("checkpoint: cannot open '" + path + "' for writing");
  nlohmann::ordered_json meta;
  meta["config"] = ckpt.config.to_json();
  meta["stats"] = {{"a_mean", ckpt.stats.a_mean},
                   {"a_std", ckpt.stats.a_std},
                   {"u_mean", ckpt.stats.u_mean},
                   {"u_std", ckpt.stats.u_std}};
  const std::string m = meta.dump();
  os.write(kCkptMagic, 4);
  put_u32(os, kCkptVersion);
  put_u32(os, static_cast<std::uint32_t>(m.size()));
  os.write(m.data(), static_cast<std::streamsize>(m.size()));
  std::uint32_t count = 2;
  ckpt.params.visit([&](const char*, const Matrix& t) { count += t.size() > 0 ? 1 : 0; });
  put_u32(os, count);
  ckpt.params.visit([&](const char* name, const Matrix& t) {
    if (t.size() > 0) put_tensor(os, name, t);
  });
  put_tensor(os, "Wq_reinit", ckpt.Wq_reinit);
  put_tensor(os, "Wk_reinit", ckpt.Wk_reinit);
  if (!os) throw UsageError("checkpoint: write to '" + path + "' failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw UsageError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kCkptMagic, 4) != 0) throw UsageError("checkpoint: bad magic");
  if (get_u32(is) != kCkptVersion) throw UsageError("checkpoint: unsupported version");
  std::string meta_str(get_u32(is), '\0');
  is.read(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));
  if (!is) throw UsageError("checkpoint: truncated metadata");
  const nlohmann::json meta = nlohmann::json::parse(meta_str);
  Checkpoint ck;
  ck.config = ProtocolConfig::from_json(meta.at("config"));
  const auto& st = meta.at("stats");
  ck.stats = {st.at("a_mean").get<double>(), st.at("a_std").get<double>(),
              st.at("u_mean").get<double>(), st.at("u_std").get<double>()};
  const std::uint32_t count = get_u32(is);
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name(get_u32(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    const Index rows = get_u32(is), cols = get_u32(is);
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) is.read(reinterpret_cast<char*>(&m(i, j)), sizeof(double));
    if (!is) throw UsageError("checkpoint: truncated tensor '" + name + "'");
    bool found = false;
    if (name == "Wq_reinit") {
      ck.Wq_reinit = std::move(m);
      found = true;
    } else if (name == "Wk_reinit") {
      ck.Wk_reinit = std::move(m);
      found = true;
    } else {
      ck.params.visit([&](const char* n, Matrix& t) {
        if (name == n) {
          t = m;
          found = true;
        }
      });
    }
    if (!found) throw UsageError("checkpoint: unknown tensor '" + name + "'");
  }
  return ck;
}

Phase1Result run_phase1(const ProtocolConfig& cfg, const PreparedData& data) {
  cfg.validate();
  const ModelConfig mc = cfg.model();
  require(data.train.n == cfg.n && data.test.n == cfg.n, "phase1: dataset grid does not match config");
  Rng init_rng = make_stream(cfg.seed, kInitStream);
  ModelParams params = init_model(mc, init_rng);

  std::vector<AdamState> states;
  params.visit([&](const char*, const Matrix& t) { states.emplace_back(t.size()); });
  const AdamConfig adam{cfg.phase1.lr};

  Phase1Result res;
  MetricsRow m0 = compute_metrics(mc, params, data, cfg.threads);
  m0.epoch = 0;
  res.metrics.push_back(m0);
  const std::size_t n = data.train.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.phase1.batch);
  for (int epoch = 1; epoch <= cfg.phase1.epochs; ++epoch) {
    const auto order = shuffled(n, make_stream(cfg.seed, kShuffleBase + epoch));
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t end = std::min(n, start + bs);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      ModelParams grad;
      batch_loss_grad(mc, params, data.train.a, data.train.u, idx, GradMode::Full, grad,
                      cfg.threads);
      std::vector<Matrix*> ws;
      params.visit([&](const char*, Matrix& t) { ws.push_back(&t); });
      std::vector<const Matrix*> gs;
      grad.visit([&](const char*, const Matrix& t) { gs.push_back(&t); });
      for (std::size_t k = 0; k < ws.size(); ++k)
        if (ws[k]->size() > 0) adam_update(*ws[k], *gs[k], states[k], adam);
    }
    MetricsRow row = compute_metrics(mc, params, data, cfg.threads);
    row.epoch = epoch;
    res.metrics.push_back(row);
  }

  Rng reinit_rng = make_stream(cfg.seed, kReinitStream);
  res.checkpoint.config = cfg;
  res.checkpoint.stats = data.stats;
  res.checkpoint.params = std::move(params);
  init_qk(mc, reinit_rng, res.checkpoint.Wq_reinit, res.checkpoint.Wk_reinit);
  return res;
}

Phase2Options phase2_defaults(const ProtocolConfig& cfg, RegKind variant) {
  Phase2Options o;
  o.variant = variant;
  o.epsilon = cfg.epsilon;
  if (variant == RegKind::LogAmplified) o.lambda = cfg.lambda_log;
  if (variant == RegKind::Power) o.lambda = cfg.lambda_pow;
  return o;
}

std::vector<MetricsRow> run_phase2(const Checkpoint& ckpt, const PreparedData& data,
                                   const Phase2Options& opts, ModelParams* final_params) {
  const ProtocolConfig& cfg = ckpt.config;
  cfg.validate();
  const ModelConfig mc = cfg.model();
  require(data.train.n == cfg.n && data.test.n == cfg.n,
          "phase2: checkpoint/config mismatch (grid size)");
  require(ckpt.Wq_reinit.rows() == cfg.d && ckpt.Wq_reinit.cols() == cfg.r &&
              ckpt.Wk_reinit.rows() == cfg.d && ckpt.Wk_reinit.cols() == cfg.r,
          "phase2: checkpoint/config mismatch (W_Q, W_K shape)");

  RegularizerSpec reg;
  reg.kind = opts.variant;
  reg.lambda = opts.lambda;
  reg.epsilon = opts.epsilon;
  reg.dims = {cfg.d * cfg.r, cfg.d * cfg.r};
  reg.validate();
  const bool penalized = reg.kind != RegKind::None && reg.lambda > 0.0;

  ModelParams params = ckpt.params;
  params.Wq = ckpt.Wq_reinit;
  params.Wk = ckpt.Wk_reinit;
  ParamPoint T = pack(params.Wq, params.Wk);
  AdamState state(T.size());
  const AdamConfig adam{cfg.phase2.lr};

  std::vector<MetricsRow> rows;
  MetricsRow m0 = compute_metrics(mc, params, data, cfg.threads);
  m0.epoch = 0;
  rows.push_back(m0);
  const std::size_t n = data.train.size();
  const std::size_t bs = static_cast<std::size_t>(cfg.phase2.batch);
  long step = 0;
  for (int epoch = 1; epoch <= cfg.phase2.epochs; ++epoch) {
    const auto order = shuffled(n, make_stream(cfg.seed, kPhase2ShuffleBase + epoch));
    for (std::size_t start = 0; start < n; start += bs, ++step) {
      const std::size_t end = std::min(n, start + bs);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      ModelParams grad;
      batch_loss_grad(mc, params, data.train.a, data.train.u, idx, GradMode::QKOnly, grad,
                      cfg.threads);
      ParamPoint g = pack(grad.Wq, grad.Wk);
      if (penalized) g += reg_grad(T, reg);
      if (opts.optimizer == Phase2Optimizer::Adam) {
        adam_step(T, g, state, adam);
      } else {
        Rng rng = make_stream(cfg.seed, kSgldBase + static_cast<std::uint64_t>(step));
        T = em_step(T, g, opts.sgld_s, cfg.phase2.lr, rng);
      }
      unpack(T, params.Wq, params.Wk);
    }
    MetricsRow row = compute_metrics(mc, params, data, cfg.threads);
    row.epoch = epoch;
    rows.push_back(row);
  }
  if (final_params) *final_params = std::move(params);
  return rows;
}

}  // namespace villani::darcy
