#pragma once

// Two-phase training: full pretraining with Adam, then (W_Q, W_K) are
// re-initialized and retrained alone under one of three objectives.

#include "villani/darcy/dataset.hpp"
#include "villani/darcy/model.hpp"
#include "villani/regularizers.hpp"
#include "villani/sde.hpp"

#include <json.hpp>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace villani::darcy {

struct PhaseConfig {
  int epochs = 0;
  double lr = 1e-3;
  int batch = 16;
};

struct ProtocolConfig {
  Index n = 16;
  Index patch = 4;
  Index d = 16;
  Index r = 16;
  std::size_t n_train = 200;
  std::size_t n_test = 40;
  EncoderKind encoder = EncoderKind::Linear;
  PhaseConfig phase1{150, 1e-3, 16};
  PhaseConfig phase2{50, 1e-3, 16};
  double lambda_log = 1e-5;
  double lambda_pow = 1e-4;
  double epsilon = 1e-6;
  std::uint64_t seed = 0;
  unsigned threads = 1;

  static ProtocolConfig desk();
  static ProtocolConfig paper();
  static ProtocolConfig tiny();  // n=8, p=4, d=r=4 for gradient checks

  ModelConfig model() const;
  void validate() const;
  nlohmann::ordered_json to_json() const;
  static ProtocolConfig from_json(const nlohmann::json& j);
};

/// One row per epoch.
struct MetricsRow {
  int epoch = 0;
  double train_rmse = 0.0;  // standardized space
  double test_rmse = 0.0;   // standardized space
  double rel_l2 = 0.0;      // physical space, mean over test samples
  double qk_norm_sq = 0.0;
  double gen_gap = 0.0;     // test MSE - train MSE
};

void write_metrics_csv(std::ostream& os, const std::vector<MetricsRow>& rows);

/// Standardized train / test splits plus the statistics used.
struct PreparedData {
  DarcyDataset train;
  DarcyDataset test;
  NormStats stats;
};

/// First n_train samples train, next n_test test; stats from train only.
PreparedData prepare_data(const DarcyDataset& raw, std::size_t n_train, std::size_t n_test);

MetricsRow compute_metrics(const ModelConfig& cfg, const ModelParams& params,
                           const PreparedData& data, unsigned threads = 1);

struct Checkpoint {
  ProtocolConfig config;
  NormStats stats;
  ModelParams params;
  Matrix Wq_reinit;  // shared starting point of every phase-2 run
  Matrix Wk_reinit;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

struct Phase1Result {
  Checkpoint checkpoint;
  std::vector<MetricsRow> metrics;
};

Phase1Result run_phase1(const ProtocolConfig& cfg, const PreparedData& data);

enum class Phase2Optimizer { Adam, Sgld };

struct Phase2Options {
  RegKind variant = RegKind::None;
  double lambda = 0.0;
  double epsilon = 1e-6;
  Phase2Optimizer optimizer = Phase2Optimizer::Adam;
  double sgld_s = 1e-6;  // temperature for the SGLD mode
};

/// Retrains only (W_Q, W_K) from the checkpoint's re-initialization.
std::vector<MetricsRow> run_phase2(const Checkpoint& ckpt, const PreparedData& data,
                                   const Phase2Options& opts, ModelParams* final_params = nullptr);

/// Phase-2 options for a variant at the configured lambda / epsilon.
Phase2Options phase2_defaults(const ProtocolConfig& cfg, RegKind variant);

}  // namespace villani::darcy
