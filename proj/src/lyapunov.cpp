#include "rdlab/lyapunov.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "rdlab/linear_flow.hpp"
#include "rdlab/stats.hpp"

namespace rdlab {

double q_functional(const ProjectivePoint& p, const CorrelationKernel& kernel) {
  if (p.grid() != kernel.grid()) throw std::invalid_argument("grid mismatch");
  return kernel.quadratic_form(p.values());
}

double f_functional(const ProjectivePoint& p, const CorrelationKernel& kernel, double gamma, double lambda) {
  return gamma - lambda - 0.5 * q_functional(p, kernel);
}

double f_sup_bound(const CorrelationKernel& kernel, double gamma, double lambda) {
  return std::abs(lambda - gamma) + 0.5 * kernel.sup_norm();
}

double se_floor(double value) { return 64.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(value)); }

TrajectoryRecord log_radius_decompose(const std::vector<Field>& traj, const std::vector<double>& times,
                                      const CorrelationKernel& kernel, double gamma, double lambda) {
  if (traj.size() != times.size()) throw std::invalid_argument("trajectory and times differ in length");
  TrajectoryRecord rec;
  rec.times = times;
  for (std::size_t n = 0; n < traj.size(); ++n) {
    const double mass = grid_reduce(traj[n], Reduction::l1);
    auto pi = project(traj[n]);
    const double q = q_functional(pi, kernel);
    rec.log_r.push_back(std::log(mass));
    rec.Q_vals.push_back(q);
    rec.F_vals.push_back(gamma - lambda - 0.5 * q);
    if (n == 0) {
      rec.martingale_residual.push_back(0.0);
    } else {
      const double dt = times[n] - times[n - 1];
      rec.martingale_residual.push_back(rec.log_r[n] - rec.log_r[n - 1] - (gamma - 0.5 * rec.Q_vals[n - 1]) * dt);
    }
  }
  return rec;
}

PathExponent path_exponent(const CorrelationKernel& kernel, const LyapunovConfig& cfg, std::uint32_t path,
                           const std::vector<double>& v0) {
  const auto& g = kernel.grid();
  LinearPathSimulator sim(kernel, cfg.gamma, cfg.dt, {cfg.seed, path, cfg.stream_tag});
  if (v0.empty()) {
    const std::vector<double> ones(g.size(), 1.0);
    sim.add_flow(ones);
  } else {
    sim.add_flow(v0);
  }
  const auto steps = static_cast<std::size_t>(std::llround(cfg.horizon / cfg.dt));
  std::vector<double> pi(g.size());
  StreamingFit fit;
  double q_sum = 0.0;
  std::size_t q_count = 0;
  PathExponent out;
  auto observe = [&] {
    const double t = sim.time();
    if (t + 1e-9 < cfg.burn_in) return;
    const auto& flow = sim.flow(0);
    const double lr = flow.log_mass(sim.ou().Y());
    if (!std::isfinite(lr)) {
      out.excluded = true;
      return;
    }
    fit.add(t - cfg.burn_in, lr);
    // Left-point (Ito) average of Q: the last point contributes no interval.
    if (t + 0.5 * cfg.dt < cfg.horizon) {
      flow.projective(sim.ou().Y(), pi);
      q_sum += kernel.quadratic_form_factor(pi);
      ++q_count;
    }
  };
  observe();
  for (std::size_t n = 0; n < steps && !out.excluded; ++n) {
    sim.step();
    observe();
  }
  out.slope = fit.slope();
  out.mean_Q = q_count ? q_sum / static_cast<double>(q_count) : std::nan("");
  if (!std::isfinite(out.slope) || !std::isfinite(out.mean_Q)) out.excluded = true;
  return out;
}

LyapunovEstimate sample_exponent(const CorrelationKernel& kernel, const LyapunovConfig& cfg) {
  if (cfg.horizon < 20.0) throw std::invalid_argument("horizon must be >= 20");
  if (cfg.burn_in < 2.0) throw std::invalid_argument("burn_in must be >= 2");
  LyapunovEstimate est;
  est.gamma = cfg.gamma;
  est.burn_in = cfg.burn_in;
  est.paths = parallel_map<PathExponent>(cfg.n_paths, cfg.threads, [&](std::size_t i) {
    return path_exponent(kernel, cfg, static_cast<std::uint32_t>(i));
  });
  std::vector<double> slopes, fks;
  for (const auto& p : est.paths) {
    if (p.excluded) {
      ++est.excluded;
      continue;
    }
    slopes.push_back(p.slope);
    fks.push_back(cfg.gamma - 0.5 * p.mean_Q);
  }
  if (static_cast<double>(est.excluded) > 0.1 * static_cast<double>(cfg.n_paths))
    throw std::runtime_error("ensemble unreliable");
  const auto s = mean_se(slopes);
  const auto f = mean_se(fks);
  est.lambda_sample = s.mean;
  est.lambda_fk = f.mean;
  est.se_sample = std::max(s.se, se_floor(s.mean));
  est.se_fk = std::max(f.se, se_floor(f.mean));
  return est;
}

}  // namespace rdlab
