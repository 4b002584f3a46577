#include "villani/sde.hpp"

#include "villani/io.hpp"
#include "villani/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

namespace villani {

void SdeConfig::validate() const {
  require(s >= 0.0 && std::isfinite(s), "sde: s must be >= 0");
  require(h > 0.0 && std::isfinite(h), "sde: h must be positive");
  require(steps >= 1, "sde: steps must be >= 1");
  require(record_every >= 1, "sde: record_every must be >= 1");
  require(chains >= 1, "sde: chains must be >= 1");
  require(init_scale >= 0.0, "sde: init_scale must be >= 0");
  require(max_halvings >= 0, "sde: max_halvings must be >= 0");
}

ParamPoint em_step(const ParamPoint& T, const ParamPoint& grad, double s, double h, Rng& rng) {
  if (!grad.allFinite()) throw NumericError("em_step: non-finite gradient");
  ParamPoint next = T - h * grad;
  if (s > 0.0) next += std::sqrt(s * h) * gaussian_vector(T.size(), rng);
  if (!next.allFinite()) throw NumericError("em_step: non-finite state");
  return next;
}

void Trajectory::write_csv(std::ostream& os) const {
  os << "step,time_s,v,grad_norm,t_norm\n";
  for (const auto& r : rows)
    os << r.step << ',' << fmt_double(r.time) << ',' << fmt_double(r.v) << ','
       << fmt_double(r.grad_norm) << ',' << fmt_double(r.t_norm) << '\n';
}

namespace {

struct ChainRecord {
  std::vector<double> v, grad_norm, t_norm;
  bool failed = false;
  long failed_step = -1;
};

ChainRecord run_chain(const Potential& pot, const ParamPoint& center, const SdeConfig& cfg,
                      double h, long steps, long record_every, std::uint64_t stream_seed,
                      std::size_t k) {
  ChainRecord rec;
  Rng rng = make_stream(stream_seed, k);
  ParamPoint T = center + gaussian_vector(center.size(), rng, cfg.init_scale);
  for (long step = 0; step <= steps; ++step) {
    const ParamPoint g = pot.gradient(T);
    if (step % record_every == 0) {
      const double v = pot.value(T);
      if (!std::isfinite(v) || !g.allFinite()) {
        rec.failed = true;
        rec.failed_step = step;
        return rec;
      }
      rec.v.push_back(v);
      rec.grad_norm.push_back(g.norm());
      rec.t_norm.push_back(T.norm());
    }
    if (step == steps) break;
    try {
      T = em_step(T, g, cfg.s, h, rng);
    } catch (const NumericError&) {
      rec.failed = true;
      rec.failed_step = step + 1;
      return rec;
    }
  }
  return rec;
}

}  // namespace

Trajectory run_sde(const Potential& potential, const ParamPoint& init_center,
                   const SdeConfig& cfg) {
  cfg.validate();
  require(init_center.size() == potential.dim, "run_sde: init center has wrong dimension");

  Trajectory traj;
  traj.chains = cfg.chains;
  std::vector<ChainRecord> recs;
  long record_every = cfg.record_every;
  double h = cfg.h;
  for (int attempt = 0; attempt <= cfg.max_halvings; ++attempt) {
    const long factor = 1L << attempt;
    h = cfg.h / static_cast<double>(factor);
    record_every = cfg.record_every * factor;
    const long steps = cfg.steps * factor;
    const std::uint64_t stream_seed = attempt == 0 ? cfg.seed : splitmix64(cfg.seed + attempt);
    recs.assign(static_cast<std::size_t>(cfg.chains), ChainRecord{});
    parallel_for(recs.size(), cfg.threads, [&](std::size_t k) {
      recs[k] = run_chain(potential, init_center, cfg, h, steps, record_every, stream_seed, k);
    });
    traj.h = h;
    traj.halvings = attempt;
    const bool any_failed =
        std::any_of(recs.begin(), recs.end(), [](const ChainRecord& r) { return r.failed; });
    if (!any_failed) break;
    if (attempt == cfg.max_halvings) {
      traj.diverged = true;
      long first = std::numeric_limits<long>::max();
      for (const auto& r : recs)
        if (r.failed) first = std::min(first, r.failed_step);
      traj.diagnostic = "diverged at step " + std::to_string(first) + " with h=" +
                        fmt_double(h) + " after " + std::to_string(attempt) + " halvings";
    }
  }

  std::size_t n_rows = std::numeric_limits<std::size_t>::max();
  for (const auto& r : recs) n_rows = std::min(n_rows, r.v.size());
  const double nc = static_cast<double>(cfg.chains);
  for (std::size_t i = 0; i < n_rows; ++i) {
    TrajectoryRow row;
    row.step = static_cast<long>(i) * record_every;
    row.time = static_cast<double>(row.step) * h;
    double sum_sq = 0.0;
    for (const auto& r : recs) {
      row.v += r.v[i];
      row.grad_norm += r.grad_norm[i];
      row.t_norm += r.t_norm[i];
      sum_sq += r.v[i] * r.v[i];
    }
    row.v /= nc;
    row.grad_norm /= nc;
    row.t_norm /= nc;
    if (cfg.chains > 1) {
      const double var = std::max(0.0, (sum_sq - nc * row.v * row.v) / (nc - 1.0));
      row.v_std_error = std::sqrt(var / nc);
    }
    traj.rows.push_back(row);
  }

  int growing = 0;
  for (std::size_t i = 1; i < traj.rows.size(); ++i) {
    growing = traj.rows[i].v > traj.rows[i - 1].v ? growing + 1 : 0;
    if (growing >= 50 && traj.diagnostic.empty()) {
      traj.diagnostic = "warning: V grew for 50 consecutive records; h may be too large";
      break;
    }
  }
  return traj;
}

namespace {

struct LinearFit {
  double eps = 0.0, amp = 0.0, sse = std::numeric_limits<double>::infinity();
};

// For fixed lambda the model eps + A exp(-lambda t) is linear in (eps, A).
LinearFit fit_fixed_rate(const std::vector<double>& t, const std::vector<double>& y,
                         double lambda) {
  double n = 0, se = 0, see = 0, sy = 0, sey = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double e = std::exp(-lambda * t[i]);
    n += 1;
    se += e;
    see += e * e;
    sy += y[i];
    sey += e * y[i];
  }
  const double det = n * see - se * se;
  LinearFit f;
  if (!(std::abs(det) > 1e-300)) return f;
  f.amp = (n * sey - se * sy) / det;
  f.eps = (sy - f.amp * se) / n;
  double sse = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double r = y[i] - f.eps - f.amp * std::exp(-lambda * t[i]);
    sse += r * r;
  }
  f.sse = sse;
  return f;
}

}  // namespace

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& v, double v_star) {
  require(t.size() == v.size(), "fit_decay: size mismatch");
  DecayFit out;
  if (t.size() < 4) {
    out.message = "fit failed: fewer than 4 records";
    return out;
  }
  std::vector<double> y(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) y[i] = v[i] - v_star;
  const double ymin = *std::min_element(y.begin(), y.end());
  const double ymax = *std::max_element(y.begin(), y.end());
  const double span = ymax - ymin;
  const double t_span = t.back() - t.front();
  if (!(span > 0.0) || !(t_span > 0.0)) {
    out.message = "fit failed: flat trajectory";
    return out;
  }

  // Profile the asymptote: for each candidate, weighted log-linear fit of
  // log(y - eps) against t, scored by the residual in the original space.
  double best_sse = std::numeric_limits<double>::infinity();
  double best_lambda = 0.0;
  for (int k = 0; k <= 80; ++k) {
    const double delta = span * std::pow(10.0, -5.0 + 6.0 * k / 80.0);
    const double eps = ymin - delta;
    double sw = 0, st = 0, sz = 0, stt = 0, stz = 0;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double z = y[i] - eps;
      const double w = z * z;
      const double lz = std::log(z);
      sw += w;
      st += w * t[i];
      sz += w * lz;
      stt += w * t[i] * t[i];
      stz += w * t[i] * lz;
    }
    const double det = sw * stt - st * st;
    if (!(det > 0.0)) continue;
    const double slope = (sw * stz - st * sz) / det;
    const double lambda = -slope;
    if (!(lambda > 0.0)) continue;
    const LinearFit lf = fit_fixed_rate(t, y, lambda);
    if (lf.sse < best_sse) {
      best_sse = lf.sse;
      best_lambda = lambda;
    }
  }
  if (!(best_lambda > 0.0)) {
    out.message = "fit failed: no decaying segment";
    return out;
  }

  // Golden-section refinement of the rate with (eps, A) solved exactly.
  double lo = best_lambda / 4.0, hi = best_lambda * 4.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double a = hi - gr * (hi - lo), b = lo + gr * (hi - lo);
  double fa = fit_fixed_rate(t, y, a).sse, fb = fit_fixed_rate(t, y, b).sse;
  for (int it = 0; it < 200 && (hi - lo) > 1e-12 * best_lambda; ++it) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - gr * (hi - lo);
      fa = fit_fixed_rate(t, y, a).sse;
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + gr * (hi - lo);
      fb = fit_fixed_rate(t, y, b).sse;
    }
  }
  const double lambda = 0.5 * (lo + hi);
  const LinearFit lf = fit_fixed_rate(t, y, lambda);

  double mean = 0.0;
  for (double yi : y) mean += yi;
  mean /= static_cast<double>(y.size());
  double sst = 0.0;
  for (double yi : y) sst += (yi - mean) * (yi - mean);

  out.lambda_hat = lambda;
  out.asymptote_hat = lf.eps;
  out.amplitude_hat = lf.amp;
  out.r2 = 1.0 - lf.sse / sst;
  out.ok = lambda > 0.0 && lf.amp > 0.0 && out.r2 >= 0.5;
  if (!out.ok)
    out.message = out.r2 < 0.5 ? "fit failed: r2 below 0.5" : "fit failed: no decaying segment";
  return out;
}

DecayFit fit_decay(const Trajectory& traj, double v_star) {
  std::vector<double> t, v;
  for (const auto& r : traj.rows) {
    t.push_back(r.time);
    v.push_back(r.v);
  }
  return fit_decay(t, v, v_star);
}

std::string DecayFit::to_json() const {
  nlohmann::ordered_json j;
  j["lambda_hat"] = lambda_hat;
  j["asymptote_hat"] = asymptote_hat;
  j["r2"] = r2;
  return j.dump();
}

double estimate_v_star(const Potential& potential, int restarts, int budget, Rng& rng,
                       double init_scale) {
  require(restarts >= 8, "estimate_v_star: restarts must be >= 8");
  require(budget >= 1, "estimate_v_star: budget must be >= 1");
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < restarts; ++k) {
    ParamPoint T = k == 0 ? ParamPoint(ParamPoint::Zero(potential.dim))
                          : gaussian_vector(potential.dim, rng, init_scale);
    double f = potential.value(T);
    double step = 1.0;
    for (int it = 0; it < budget; ++it) {
      const ParamPoint g = potential.gradient(T);
      const double gg = g.squaredNorm();
      if (!(gg > 1e-28)) break;
      bool accepted = false;
      while (step > 1e-20) {
        const ParamPoint cand = T - step * g;
        const double fc = potential.value(cand);
        if (std::isfinite(fc) && fc <= f - 1e-4 * step * gg) {
          T = cand;
          f = fc;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      step = std::min(step * 2.0, 1e6);
    }
    if (std::isfinite(f)) best = std::min(best, f);
  }
  return best;
}

void adam_step(Eigen::Ref<Vector> T, const Vector& grad, AdamState& state, const AdamConfig& cfg) {
  require(T.size() == grad.size() && state.m.size() == grad.size(),
          "adam_step: size mismatch");
  state.t += 1;
  state.m = cfg.beta1 * state.m + (1.0 - cfg.beta1) * grad;
  state.v = cfg.beta2 * state.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (Index i = 0; i < T.size(); ++i) {
    const double mh = state.m[i] / c1;
    const double vh = state.v[i] / c2;
    T[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
  }
}

}  // namespace villani
