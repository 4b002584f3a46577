#pragma once

// Euler-Maruyama discretization of dT = -grad V dt + sqrt(s) dB, chain
// averaging, exponential decay fit, and Adam.

#include "villani/potential.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace villani {

struct SdeConfig {
  double s = 1e-3;
  double h = 1e-3;
  long steps = 1000;
  std::uint64_t seed = 0;
  long record_every = 10;
  int chains = 32;
  double init_scale = 1.0;  // T0 ~ N(init_center, init_scale^2 I)
  int max_halvings = 5;
  unsigned threads = 1;

  void validate() const;
};

/// One step T - h grad + sqrt(s h) xi. Throws NumericError if the result is
/// not finite.
ParamPoint em_step(const ParamPoint& T, const ParamPoint& grad, double s, double h, Rng& rng);

struct TrajectoryRow {
  long step = 0;
  double time = 0.0;  // simulated time step * h
  double v = 0.0;
  double grad_norm = 0.0;
  double t_norm = 0.0;
  double v_std_error = 0.0;  // across chains
};

struct Trajectory {
  std::vector<TrajectoryRow> rows;
  double h = 0.0;       // step size actually used
  int halvings = 0;
  int chains = 0;
  bool diverged = false;
  std::string diagnostic;

  void write_csv(std::ostream& os) const;
};

/// Runs cfg.chains independent chains from T0 = init_center + init_scale * N(0, I)
/// and averages the records in chain order. Chain k draws from stream
/// (seed, k), so the result does not depend on the thread count.
Trajectory run_sde(const Potential& potential, const ParamPoint& init_center,
                   const SdeConfig& cfg);

struct DecayFit {
  double lambda_hat = 0.0;
  double asymptote_hat = 0.0;  // plateau of the excess, above v_star
  double amplitude_hat = 0.0;
  double r2 = 0.0;
  bool ok = false;
  std::string message;

  std::string to_json() const;
};

/// Fits v(t) - v_star ~ eps + A exp(-lambda t).
DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& v, double v_star);
DecayFit fit_decay(const Trajectory& traj, double v_star);

/// Best value from multi-start gradient descent with Armijo backtracking. An
/// upper bound on inf V. The first start is T = 0.
double estimate_v_star(const Potential& potential, int restarts, int budget, Rng& rng,
                       double init_scale = 1.0);

struct AdamState {
  Vector m;
  Vector v;
  long t = 0;

  explicit AdamState(Index n = 0) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam update, in place on T and state.
void adam_step(Eigen::Ref<Vector> T, const Vector& grad, AdamState& state, const AdamConfig& cfg);

}  // namespace villani
