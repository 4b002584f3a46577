#pragma once

// Numerical certification of confining / Villani behaviour and of the
// explicit lemma constants.

#include "villani/potential.hpp"

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

namespace villani {

using ScalarField = std::function<double(const ParamPoint&)>;
using VectorField = std::function<ParamPoint(const ParamPoint&)>;

/// Sum over coordinates of central second differences. 2D+1 evaluations.
double fd_laplacian(const ScalarField& f, const ParamPoint& T, double h = 1e-4);

struct TraceEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Hutchinson estimate of the Laplacian from Rademacher probes and central
/// differences of the gradient: v^T (grad f(T+hv) - grad f(T-hv)) / 2h.
TraceEstimate hutchinson_laplacian(const VectorField& grad, const ParamPoint& T, int n_probes,
                                   Rng& rng, double h = 1e-4);

enum class LaplacianSource { Exact, FiniteDifference, Hutchinson };
std::string laplacian_source_name(LaplacianSource src);

struct RayPoint {
  double radius = 0.0;
  double villani = 0.0;  // ||grad V||^2 / s - Laplacian V
  double value = 0.0;
  double grad_norm = 0.0;
  double laplacian = 0.0;
  double lap_std_error = 0.0;
  bool flagged = false;  // non-finite evaluation at this radius
};

struct RayScanReport {
  ParamPoint direction;
  std::vector<double> radii;
  std::vector<RayPoint> points;
  double s = 0.0;
  LaplacianSource source = LaplacianSource::Exact;

  /// F strictly increasing over all radii and positive at the top `top` radii.
  bool villani_ok(int top = 2) const;
  /// V strictly increasing over all radii.
  bool confining_ok() const;
};

struct RayScanOptions {
  int hutchinson_probes = 128;
  Index fd_max_dim = 200;
  double fd_step = 1e-4;
  std::uint64_t seed = 0;  // Hutchinson probes only
};

RayScanReport ray_scan(const Potential& potential, const ParamPoint& direction,
                       const std::vector<double>& radii, double s,
                       const RayScanOptions& opts = {});

struct ProbeResult {
  std::string potential;
  std::vector<RayScanReport> scans;
  bool villani_ok = true;
  bool confining_ok = true;
  double min_top_villani = 0.0;  // min over directions of F at the largest radius
};

/// Scans `n_dirs` random unit directions; direction k uses stream (seed, k).
ProbeResult probe_potential(const Potential& potential, int n_dirs,
                            const std::vector<double>& radii, double s, std::uint64_t seed,
                            unsigned threads, const RayScanOptions& opts = {});

void write_probe_csv(std::ostream& os, const ProbeResult& result);

/// Walks the LoRA scaling orbit (cU, V/c) for the given scales and reports
/// whether the potential stays flat while ||T|| grows without bound.
struct OrbitCheck {
  std::vector<double> scales;
  std::vector<double> norms;
  std::vector<double> values;
  double max_rel_spread = 0.0;
  bool non_confining = false;
};

OrbitCheck scaling_orbit_check(const Potential& lora_potential, const LoraProblem& prob,
                               const std::vector<double>& scales, Rng& rng);

enum class LemmaModel { Attention, Lora };

struct LemmaConfig {
  LemmaModel model = LemmaModel::Attention;
  int trials = 500;
  std::uint64_t seed = 0;
  /// When true each draw picks its own dims in [1, max_dim]; else all dims
  /// equal max_dim.
  bool random_dims = false;
  Index max_dim = 2;
  Index n_samples = 4;
  unsigned threads = 1;
};

struct LemmaViolation {
  int trial = 0;
  std::uint64_t seed = 0;
  double grad_ratio = 0.0;
  double lap_ratio = 0.0;
};

struct LemmaReport {
  int trials = 0;
  int grad_violations = 0;
  int lap_violations = 0;
  double max_grad_ratio = 0.0;
  double max_lap_ratio = 0.0;
  std::vector<LemmaViolation> violations;

  bool ok() const { return grad_violations == 0 && lap_violations == 0; }
};

LemmaReport verify_lemma_bounds(const LemmaConfig& cfg);

struct GibbsResult {
  double L = 0.0;
  double box_integral = 0.0;  // quadrature of exp(-2V/s) over [-L, L]^D
  double tail_bound = 0.0;    // bound on the mass outside the box
  bool normalizable = false;  // false when no coercivity is available
};

/// Tensor-product Gauss-Legendre quadrature on geometric panels.
GibbsResult gibbs_normalizability_check(const Potential& potential, double s, double L,
                                        int nodes_per_panel = 16);

}  // namespace villani
