#include "villani/probe.hpp"

#include "villani/io.hpp"
#include "villani/parallel.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace villani {
namespace {

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw NumericError(std::string(what) + ": non-finite evaluation");
}

struct GaussRule {
  Vector nodes;    // on [-1, 1]
  Vector weights;
};

// Golub-Welsch: nodes are eigenvalues of the Jacobi matrix of the Legendre
// recurrence, weights come from the first eigenvector components.
GaussRule gauss_legendre(int n) {
  Matrix J = Matrix::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    const double b = k / std::sqrt(4.0 * k * k - 1.0);
    J(k, k - 1) = b;
    J(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> es(J);
  GaussRule rule;
  rule.nodes = es.eigenvalues();
  rule.weights = 2.0 * es.eigenvectors().row(0).transpose().array().square();
  return rule;
}

// Panel edges 0, 0.5, 1, 2, 4, ... capped at L, mirrored to the negative side.
std::vector<double> panel_edges(double L) {
  std::vector<double> pos{0.0};
  double e = std::min(0.5, L);
  while (true) {
    pos.push_back(e);
    if (e >= L) break;
    e = std::min(e * 2.0, L);
  }
  std::vector<double> edges;
  for (auto it = pos.rbegin(); it != pos.rend(); ++it)
    if (*it != 0.0) edges.push_back(-*it);
  edges.insert(edges.end(), pos.begin(), pos.end());
  return edges;
}

double gaussian_tail(Index D, double c, double L) {
  const double pi = 3.14159265358979323846;
  const double cl2 = c * L * L;
  switch (D) {
    case 1: return std::sqrt(pi / c) * std::erfc(std::sqrt(c) * L);
    case 2: return pi / c * std::exp(-cl2);
    case 3:
      return std::pow(pi / c, 1.5) *
             (std::erfc(std::sqrt(c) * L) + 2.0 * std::sqrt(cl2 / pi) * std::exp(-cl2));
    default: throw UsageError("gaussian_tail: D must be 1, 2 or 3");
  }
}

}  // namespace

double fd_laplacian(const ScalarField& f, const ParamPoint& T, double h) {
  require(h >= 1e-6 && h <= 1e-2, "fd_laplacian: step must lie in [1e-6, 1e-2]");
  require(T.size() <= 5000, "fd_laplacian: dimension above 5000");
  const double f0 = f(T);
  check_finite(f0, "fd_laplacian");
  ParamPoint x = T;
  double total = 0.0;
  for (Index k = 0; k < T.size(); ++k) {
    x[k] = T[k] + h;
    const double fp = f(x);
    x[k] = T[k] - h;
    const double fm = f(x);
    x[k] = T[k];
    check_finite(fp, "fd_laplacian");
    check_finite(fm, "fd_laplacian");
    total += (fp - 2.0 * f0 + fm) / (h * h);
  }
  return total;
}

TraceEstimate hutchinson_laplacian(const VectorField& grad, const ParamPoint& T, int n_probes,
                                   Rng& rng, double h) {
  require(n_probes >= 16, "hutchinson_laplacian: need at least 16 probes");
  std::vector<double> samples(static_cast<std::size_t>(n_probes));
  for (int i = 0; i < n_probes; ++i) {
    const Vector v = rademacher_vector(T.size(), rng);
    const ParamPoint gp = grad(T + h * v);
    const ParamPoint gm = grad(T - h * v);
    const double q = v.dot(gp - gm) / (2.0 * h);
    check_finite(q, "hutchinson_laplacian");
    samples[static_cast<std::size_t>(i)] = q;
  }
  double mean = 0.0;
  for (double q : samples) mean += q;
  mean /= n_probes;
  double var = 0.0;
  for (double q : samples) var += (q - mean) * (q - mean);
  var /= (n_probes - 1);
  return {mean, std::sqrt(var / n_probes)};
}

std::string laplacian_source_name(LaplacianSource src) {
  switch (src) {
    case LaplacianSource::Exact: return "exact";
    case LaplacianSource::FiniteDifference: return "fd";
    case LaplacianSource::Hutchinson: return "hutchinson";
  }
  return "exact";
}

bool RayScanReport::villani_ok(int top) const {
  if (points.empty()) return false;
  for (const auto& p : points)
    if (p.flagged) return false;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i].villani > points[i - 1].villani)) return false;
  const std::size_t n = points.size();
  for (std::size_t i = n - std::min<std::size_t>(n, static_cast<std::size_t>(top)); i < n; ++i)
    if (!(points[i].villani > 0.0)) return false;
  return true;
}

bool RayScanReport::confining_ok() const {
  if (points.empty()) return false;
  for (const auto& p : points)
    if (p.flagged) return false;
  for (std::size_t i = 1; i < points.size(); ++i)
    if (!(points[i].value > points[i - 1].value)) return false;
  return true;
}

RayScanReport ray_scan(const Potential& potential, const ParamPoint& direction,
                       const std::vector<double>& radii, double s, const RayScanOptions& opts) {
  require(direction.size() == potential.dim, "ray_scan: direction has wrong dimension");
  require(std::abs(direction.norm() - 1.0) <= 1e-9, "ray_scan: direction must be a unit vector");
  require(s > 0.0, "ray_scan: temperature must be positive");
  require(!radii.empty(), "ray_scan: no radii");
  for (std::size_t i = 0; i < radii.size(); ++i) {
    require(radii[i] > 0.0, "ray_scan: radii must be positive");
    if (i > 0) require(radii[i] > radii[i - 1], "ray_scan: radii must be strictly increasing");
  }

  RayScanReport rep;
  rep.direction = direction;
  rep.radii = radii;
  rep.s = s;
  if (potential.has_exact_laplacian())
    rep.source = LaplacianSource::Exact;
  else if (potential.dim <= opts.fd_max_dim)
    rep.source = LaplacianSource::FiniteDifference;
  else
    rep.source = LaplacianSource::Hutchinson;

  Rng rng = make_stream(opts.seed, 0);
  for (double R : radii) {
    RayPoint pt;
    pt.radius = R;
    const ParamPoint T = R * direction;
    try {
      pt.value = potential.value(T);
      const ParamPoint g = potential.gradient(T);
      pt.grad_norm = g.norm();
      switch (rep.source) {
        case LaplacianSource::Exact: pt.laplacian = potential.laplacian(T); break;
        case LaplacianSource::FiniteDifference:
          pt.laplacian = fd_laplacian(potential.value, T, opts.fd_step);
          break;
        case LaplacianSource::Hutchinson: {
          const TraceEstimate est =
              hutchinson_laplacian(potential.gradient, T, opts.hutchinson_probes, rng);
          pt.laplacian = est.estimate;
          pt.lap_std_error = est.std_error;
          break;
        }
      }
      pt.villani = pt.grad_norm * pt.grad_norm / s - pt.laplacian;
      pt.flagged = !(std::isfinite(pt.value) && std::isfinite(pt.villani));
    } catch (const NumericError&) {
      pt.flagged = true;
    }
    rep.points.push_back(pt);
  }
  return rep;
}

ProbeResult probe_potential(const Potential& potential, int n_dirs,
                            const std::vector<double>& radii, double s, std::uint64_t seed,
                            unsigned threads, const RayScanOptions& opts) {
  require(n_dirs >= 1, "probe: need at least one direction");
  ProbeResult res;
  res.potential = potential.name;
  res.scans.resize(static_cast<std::size_t>(n_dirs));
  parallel_for(res.scans.size(), threads, [&](std::size_t k) {
    Rng rng = make_stream(seed, k);
    const ParamPoint u = unit_vector(potential.dim, rng);
    RayScanOptions o = opts;
    o.seed = splitmix64(seed ^ (0x5bd1e995ULL + k));
    res.scans[k] = ray_scan(potential, u, radii, s, o);
  });
  res.min_top_villani = std::numeric_limits<double>::infinity();
  for (const auto& scan : res.scans) {
    res.villani_ok = res.villani_ok && scan.villani_ok();
    res.confining_ok = res.confining_ok && scan.confining_ok();
    res.min_top_villani = std::min(res.min_top_villani, scan.points.back().villani);
  }
  return res;
}

void write_probe_csv(std::ostream& os, const ProbeResult& result) {
  os << "potential,direction,radius,villani,value,grad_norm,laplacian,lap_std_error,"
        "laplacian_source,flagged\n";
  for (std::size_t k = 0; k < result.scans.size(); ++k) {
    const auto& scan = result.scans[k];
    for (const auto& p : scan.points) {
      os << result.potential << ',' << k << ',' << fmt_double(p.radius) << ','
         << fmt_double(p.villani) << ',' << fmt_double(p.value) << ',' << fmt_double(p.grad_norm)
         << ',' << fmt_double(p.laplacian) << ',' << fmt_double(p.lap_std_error) << ','
         << laplacian_source_name(scan.source) << ',' << (p.flagged ? 1 : 0) << '\n';
    }
  }
}

OrbitCheck scaling_orbit_check(const Potential& lora_potential, const LoraProblem& prob,
                               const std::vector<double>& scales, Rng& rng) {
  require(!scales.empty(), "scaling_orbit_check: no scales");
  require(lora_potential.dim == (prob.p + prob.d) * prob.r,
          "scaling_orbit_check: potential does not match problem");
  LoraParams base;
  base.U = gaussian_matrix(prob.p, prob.r, rng);
  base.V = gaussian_matrix(prob.d, prob.r, rng);
  base.a = prob.a;

  OrbitCheck out;
  out.scales = scales;
  for (double c : scales) {
    const Matrix A = c * Matrix::Identity(prob.r, prob.r);
    const LoraParams q = scaling_orbit(base, A);
    const ParamPoint T = pack(q.U, q.V);
    out.norms.push_back(T.norm());
    out.values.push_back(lora_potential.value(T));
  }
  const auto [lo, hi] = std::minmax_element(out.values.begin(), out.values.end());
  out.max_rel_spread = (*hi - *lo) / (1.0 + std::abs(*lo));
  const double norm_growth = *std::max_element(out.norms.begin(), out.norms.end()) /
                             *std::min_element(out.norms.begin(), out.norms.end());
  out.non_confining = out.max_rel_spread <= 1e-10 && norm_growth > 10.0;
  return out;
}

LemmaReport verify_lemma_bounds(const LemmaConfig& cfg) {
  require(cfg.trials >= 1, "verify_lemma_bounds: trials must be >= 1");
  require(cfg.max_dim >= 1 && cfg.n_samples >= 1, "verify_lemma_bounds: bad dims");
  struct Draw {
    std::uint64_t seed = 0;
    double grad_ratio = 0.0;
    double lap_ratio = 0.0;
  };
  std::vector<Draw> draws(static_cast<std::size_t>(cfg.trials));

  parallel_for(draws.size(), cfg.threads, [&](std::size_t i) {
    Draw& dr = draws[i];
    dr.seed = splitmix64(cfg.seed + 0x9e3779b97f4a7c15ULL * (i + 1));
    Rng rng = make_stream(cfg.seed, i);
    auto pick_dim = [&] {
      if (!cfg.random_dims) return cfg.max_dim;
      return static_cast<Index>(rng() % static_cast<std::uint64_t>(cfg.max_dim)) + 1;
    };
    const double t_norm = i == 0 ? 0.0 : std::pow(10.0, uniform(rng, -2.0, 2.0));
    double grad_norm = 0.0, lap = 0.0, c_grad = 0.0, c_lap = 0.0;
    ParamPoint T;
    if (cfg.model == LemmaModel::Attention) {
      const Index t = pick_dim(), d = pick_dim(), r = pick_dim();
      AttentionProblem prob = random_attention_problem(
          t, d, r, cfg.n_samples, uniform(rng, 0.2, 2.0), uniform(rng, 0.0, 2.0),
          uniform(rng, 0.2, 2.0), rng);
      prob.beta = uniform(rng, 0.5, 2.0);
      T = t_norm * unit_vector(2 * d * r, rng);
      const AttnParams params = attention_params_from(prob, T);
      const QKGrad g = empirical_risk_grad(prob.samples, params);
      grad_norm = std::sqrt(g.dWq.squaredNorm() + g.dWk.squaredNorm());
      lap = empirical_risk_laplacian(prob.samples, params);
      c_grad = attention_grad_bound_constant(prob.Bx, prob.By, prob.Bw, prob.beta, t, d);
      c_lap = attention_laplacian_bound_constant(prob.Bx, prob.By, prob.Bw, prob.beta, t, d);
    } else {
      const Index p = pick_dim(), d = pick_dim(), r = pick_dim();
      const BoundedActivation act{i % 2 == 0 ? ActivationKind::Tanh : ActivationKind::Sigmoid};
      LoraProblem prob = random_lora_problem(p, d, r, cfg.n_samples, uniform(rng, 0.2, 2.0),
                                             uniform(rng, 0.0, 2.0), act, rng);
      T = t_norm * unit_vector((p + d) * r, rng);
      const LoraParams params = lora_params_from(prob, T);
      const FactorGrad g = lora_loss_grad(prob.samples, params, act);
      grad_norm = std::sqrt(g.dU.squaredNorm() + g.dV.squaredNorm());
      lap = lora_laplacian(prob.samples, params, act);
      c_grad = lora_grad_bound_constant(prob.a, act, prob.Bx, prob.By);
      c_lap = lora_laplacian_bound_constant(prob.a, act, prob.Bx, prob.By);
    }
    const double tn = T.norm();
    dr.grad_ratio = tn == 0.0 ? (grad_norm == 0.0 ? 0.0 : INFINITY) : grad_norm / (c_grad * tn);
    dr.lap_ratio = tn == 0.0 ? (lap == 0.0 ? 0.0 : INFINITY) : std::abs(lap) / (c_lap * tn * tn);
  });

  LemmaReport rep;
  rep.trials = cfg.trials;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const Draw& dr = draws[i];
    rep.max_grad_ratio = std::max(rep.max_grad_ratio, dr.grad_ratio);
    rep.max_lap_ratio = std::max(rep.max_lap_ratio, dr.lap_ratio);
    const bool gv = !(dr.grad_ratio <= 1.0);
    const bool lv = !(dr.lap_ratio <= 1.0);
    rep.grad_violations += gv ? 1 : 0;
    rep.lap_violations += lv ? 1 : 0;
    if (gv || lv)
      rep.violations.push_back({static_cast<int>(i), dr.seed, dr.grad_ratio, dr.lap_ratio});
  }
  return rep;
}

GibbsResult gibbs_normalizability_check(const Potential& potential, double s, double L,
                                        int nodes_per_panel) {
  require(potential.dim >= 1 && potential.dim <= 3, "gibbs check: dimension must be 1, 2 or 3");
  require(s > 0.0 && L > 0.0, "gibbs check: s and L must be positive");
  require(nodes_per_panel >= 2, "gibbs check: need at least two nodes per panel");

  const GaussRule rule = gauss_legendre(nodes_per_panel);
  const std::vector<double> edges = panel_edges(L);
  std::vector<double> x, w;
  for (std::size_t k = 0; k + 1 < edges.size(); ++k) {
    const double half = 0.5 * (edges[k + 1] - edges[k]);
    const double mid = 0.5 * (edges[k + 1] + edges[k]);
    for (int q = 0; q < nodes_per_panel; ++q) {
      x.push_back(mid + half * rule.nodes[q]);
      w.push_back(half * rule.weights[q]);
    }
  }

  const Index D = potential.dim;
  const std::size_t n = x.size();
  std::size_t total = 1;
  for (Index k = 0; k < D; ++k) total *= n;
  ParamPoint T(D);
  double sum = 0.0;
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t rem = flat;
    double weight = 1.0;
    for (Index k = 0; k < D; ++k) {
      const std::size_t idx = rem % n;
      rem /= n;
      T[k] = x[idx];
      weight *= w[idx];
    }
    sum += weight * std::exp(-2.0 * potential.value(T) / s);
  }

  GibbsResult res;
  res.L = L;
  res.box_integral = sum;
  const double c0 = potential.coercivity ? potential.coercivity(L) : 0.0;
  if (c0 > 0.0) {
    res.normalizable = true;
    res.tail_bound = gaussian_tail(D, 2.0 * c0 / s, L);
  } else {
    res.normalizable = false;
    res.tail_bound = std::numeric_limits<double>::infinity();
  }
  return res;
}

}  // namespace villani
