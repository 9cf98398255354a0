#include "rdlab/corrector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "rdlab/linear_flow.hpp"
#include "rdlab/lyapunov.hpp"
#include "rdlab/rng.hpp"
#include "rdlab/stats.hpp"

namespace rdlab {

namespace {

constexpr std::uint32_t kMainTag = 0;
constexpr std::uint32_t kSupermartingaleTag = 3;
constexpr std::uint32_t kInnerTagBase = 16;
constexpr std::uint32_t kPointTag = 7;

std::size_t steps_of(double horizon, double dt) { return static_cast<std::size_t>(std::llround(horizon / dt)); }

/// Projective densities of every flow of `sim`, sharing one exponential of Y.
class ProjectiveView {
 public:
  explicit ProjectiveView(std::size_t n) : ey_(n), pi_(n) {}

  void refresh(const LinearPathSimulator& sim) {
    const auto& y = sim.ou().Y();
    const double ymax = *std::max_element(y.begin(), y.end());
    for (std::size_t i = 0; i < y.size(); ++i) ey_[i] = std::exp(y[i] - ymax);
  }

  /// Q of flow k through the noise factor.
  double q(const LinearPathSimulator& sim, std::size_t k) {
    const auto& pb = sim.flow(k).phibar();
    double s = 0.0;
    for (std::size_t i = 0; i < pb.size(); ++i) {
      pi_[i] = ey_[i] * pb[i];
      s += pi_[i];
    }
    const double inv = 1.0 / (s * sim.kernel().grid().cell_volume());
    for (double& v : pi_) v *= inv;
    return sim.kernel().quadratic_form_factor(pi_);
  }

  const std::vector<double>& pi() const { return pi_; }

 private:
  std::vector<double> ey_, pi_;
};

double factor_q(const CorrelationKernel& kernel, std::span<const double> p) { return kernel.quadratic_form_factor(p); }

}  // namespace

StationaryPool StationaryPool::build(const CorrelationKernel& kernel, double gamma, double dt, double burn_in,
                                     std::size_t n, std::uint64_t seed, std::uint32_t tag, int threads) {
  StationaryPool pool;
  const auto& g = kernel.grid();
  pool.samples = parallel_map<std::vector<double>>(n, threads, [&](std::size_t i) {
    LinearPathSimulator sim(kernel, gamma, dt, {seed, static_cast<std::uint32_t>(i), tag});
    const std::vector<double> ones(g.size(), 1.0);
    sim.add_flow(ones);
    const auto steps = steps_of(burn_in, dt);
    for (std::size_t s = 0; s < steps; ++s) sim.step();
    std::vector<double> pi(g.size());
    sim.flow(0).projective(sim.ou().Y(), pi);
    return pi;
  });
  const std::vector<double> ones(g.size(), 1.0);
  for (const auto& s : pool.samples) pool.distance_to_uniform.push_back(hilbert_distance(s, ones));
  return pool;
}

double fit_zeta_prime(const std::vector<double>& times, const std::vector<double>& mean_distance, double floor) {
  if (mean_distance.empty() || !(mean_distance.front() >= floor)) return std::numeric_limits<double>::infinity();
  std::vector<double> t, y;
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (!(mean_distance[i] >= floor)) break;
    t.push_back(times[i]);
    y.push_back(std::log(mean_distance[i]));
  }
  if (t.size() < 3) return std::numeric_limits<double>::infinity();
  const double rate = -linear_fit(t, y).slope;
  if (!(rate > 0.0)) throw std::runtime_error("no contraction observed");
  return rate;
}

CorrectorSamples sample_corrector(const std::vector<std::vector<double>>& points, const CorrelationKernel& kernel,
                                  const CorrectorConfig& cfg, const StationaryPool& pool, bool also_2T) {
  if (pool.samples.empty()) throw std::invalid_argument("empty stationary pool");
  const std::size_t np = points.size();
  const std::size_t n_T = steps_of(cfg.T, cfg.dt);
  const std::size_t total = also_2T ? 2 * n_T : n_T;
  const std::size_t stride = std::max<std::size_t>(1, steps_of(0.01, cfg.dt));
  const auto& g = kernel.grid();

  struct PathOut {
    std::vector<double> at_T, at_2T, dist;
  };
  auto per_path = parallel_map<PathOut>(cfg.n_paths, cfg.threads, [&](std::size_t i) {
    LinearPathSimulator sim(kernel, cfg.gamma, cfg.dt, {cfg.seed, static_cast<std::uint32_t>(i), kMainTag});
    for (const auto& p : points) sim.add_flow(p);
    const std::size_t inf = sim.add_flow(pool.samples[i % pool.samples.size()]);
    ProjectiveView view(g.size());
    PathOut out;
    out.at_T.assign(np, 0.0);
    out.at_2T.assign(np, 0.0);
    std::vector<double> integral(np, 0.0), prev(np, 0.0);
    auto integrand = [&](std::vector<double>& d) {
      view.refresh(sim);
      const double qinf = view.q(sim, inf);
      for (std::size_t k = 0; k < np; ++k) d[k] = 0.5 * (view.q(sim, k) - qinf);
    };
    integrand(prev);
    out.dist.push_back(hilbert_distance(sim.flow(0).phibar(), sim.flow(inf).phibar()));
    std::vector<double> cur(np);
    for (std::size_t n = 1; n <= total; ++n) {
      sim.step();
      integrand(cur);
      for (std::size_t k = 0; k < np; ++k) integral[k] += 0.5 * cfg.dt * (prev[k] + cur[k]);
      std::swap(prev, cur);
      if (n == n_T) out.at_T = integral;
      if (n == total && also_2T) out.at_2T = integral;
      if (n % stride == 0 && n <= n_T)
        out.dist.push_back(hilbert_distance(sim.flow(0).phibar(), sim.flow(inf).phibar()));
    }
    return out;
  });

  CorrectorSamples s;
  s.at_T.assign(np, std::vector<double>(cfg.n_paths));
  if (also_2T) s.at_2T.assign(np, std::vector<double>(cfg.n_paths));
  for (std::size_t i = 0; i < cfg.n_paths; ++i)
    for (std::size_t k = 0; k < np; ++k) {
      s.at_T[k][i] = per_path[i].at_T[k];
      if (also_2T) s.at_2T[k][i] = per_path[i].at_2T[k];
    }
  const std::size_t nd = per_path.empty() ? 0 : per_path[0].dist.size();
  std::vector<double> col(cfg.n_paths);
  for (std::size_t m = 0; m < nd; ++m) {
    for (std::size_t i = 0; i < cfg.n_paths; ++i) col[i] = per_path[i].dist[m];
    s.times.push_back(static_cast<double>(m * stride) * cfg.dt);
    s.mean_distance.push_back(pairwise_sum(col) / static_cast<double>(cfg.n_paths));
  }
  s.zeta_prime = np ? fit_zeta_prime(s.times, s.mean_distance, cfg.resolution_floor)
                    : std::numeric_limits<double>::infinity();
  return s;
}

CorrectorEstimate estimate_G(const ProjectivePoint& p, const CorrelationKernel& kernel, const CorrectorConfig& cfg,
                             const StationaryPool& pool) {
  auto s = sample_corrector({std::vector<double>(p.values().begin(), p.values().end())}, kernel, cfg, pool);
  const auto m = mean_se(s.at_T[0]);
  CorrectorEstimate e;
  e.at = p;
  e.value = m.mean;
  e.se = std::max(m.se, se_floor(cfg.T * f_sup_bound(kernel, cfg.gamma, cfg.lambda)));
  e.truncation_T = cfg.T;
  e.zeta_prime = s.zeta_prime;
  e.tail_bound = std::isinf(s.zeta_prime)
                     ? 0.0
                     : f_sup_bound(kernel, cfg.gamma, cfg.lambda) * std::exp(-s.zeta_prime * cfg.T) / s.zeta_prime;
  return e;
}

GeneratorResidual generator_residual(const ProjectivePoint& p, double h, const CorrelationKernel& kernel,
                                     const CorrectorConfig& cfg, const StationaryPool& pool) {
  if (h < 1e-3 || h > 1e-1) throw std::invalid_argument("h must lie in [1e-3, 1e-1]");
  GeneratorResidual out;
  out.h = h;
  const double Fp = cfg.gamma - cfg.lambda - 0.5 * factor_q(kernel, p.values());
  if (kernel.is_zero()) {
    // Deterministic projective dynamics: Q vanishes, so G = 0 and the residual is -F(p) = lambda - gamma.
    out.deterministic = true;
    out.residual = -Fp;
    out.se = 0.0;
    return out;
  }
  const std::size_t hn = steps_of(h, cfg.dt);
  const std::size_t n_T = steps_of(cfg.T, cfg.dt);
  const std::size_t total = n_T + hn;
  const auto& g = kernel.grid();
  auto samples = parallel_map<double>(cfg.n_paths, cfg.threads, [&](std::size_t i) {
    LinearPathSimulator sim(kernel, cfg.gamma, cfg.dt, {cfg.seed, static_cast<std::uint32_t>(i), kMainTag});
    sim.add_flow(p.values());
    sim.add_flow(pool.samples[i % pool.samples.size()]);
    ProjectiveView view(g.size());
    // D = F(pi) - F(pi_inf) = -(Q(pi) - Q(pi_inf)) / 2
    auto integrand = [&] {
      view.refresh(sim);
      return -0.5 * (view.q(sim, 0) - view.q(sim, 1));
    };
    double prev = integrand(), head = 0.0, tail = 0.0;
    for (std::size_t n = 1; n <= total; ++n) {
      sim.step();
      const double cur = integrand();
      const double piece = 0.5 * cfg.dt * (prev + cur);
      if (n <= hn) head += piece;
      if (n > n_T) tail += piece;
      prev = cur;
    }
    return (head - tail) / h - Fp;
  });
  const auto m = mean_se(samples);
  out.residual = m.mean;
  out.se = std::max(m.se, se_floor(Fp));
  return out;
}

Field velocity_direction(const ProjectivePoint& p, const CorrelationKernel& kernel) {
  const Field kp = kernel.convolve(p.field());
  Field a(p.grid());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = p[i] * kp[i];
  const double m = grid_reduce(a, Reduction::mean);
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= m * p[i];
  return a;
}

FrechetCheck frechet_bound_check(const ProjectivePoint& p, const CorrelationKernel& kernel,
                                 const CorrectorConfig& cfg, const StationaryPool& pool, double lipschitz) {
  FrechetCheck c;
  const Field N = velocity_direction(p, kernel);
  for (std::size_t i = 0; i < N.size(); ++i) c.ratio_sup = std::max(c.ratio_sup, std::abs(N[i] / p[i]));
  c.uniform_bound = 2.0 * kernel.sup_norm();
  c.rhs = 2.0 * lipschitz * c.ratio_sup;

  double d1 = 1e-2;
  auto shifted = [&](double d) {
    Field f = p.field();
    for (std::size_t i = 0; i < f.size(); ++i) f[i] += d * N[i];
    return f;
  };
  while (grid_reduce(shifted(d1), Reduction::min) <= 0.0) {
    d1 /= 10.0;
    if (d1 < 1e-6) throw std::runtime_error("perturbed point left the positive cone");
  }
  const double d2 = d1 / 10.0;
  c.delta_used = d1;
  std::vector<std::vector<double>> pts{std::vector<double>(p.values().begin(), p.values().end()),
                                       project(shifted(d1)).field().values, project(shifted(d2)).field().values};
  auto s = sample_corrector(pts, kernel, cfg, pool);
  std::vector<double> ext(cfg.n_paths);
  for (std::size_t i = 0; i < cfg.n_paths; ++i) {
    const double D1 = (s.at_T[1][i] - s.at_T[0][i]) / d1;
    const double D2 = (s.at_T[2][i] - s.at_T[0][i]) / d2;
    ext[i] = D2 + (D2 - D1) * d2 / (d1 - d2);
  }
  const auto m = mean_se(ext);
  c.lhs = std::abs(m.mean);
  c.lhs_se = m.se;
  return c;
}

std::vector<ProjectivePoint> random_points(const GridDescriptor& g, std::size_t n, std::uint64_t seed,
                                           double spike_fraction) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<ProjectivePoint> out;
  out.reserve(n);
  const auto n_spikes = static_cast<std::size_t>(std::llround(spike_fraction * static_cast<double>(n)));
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> u(24);
    uniforms({seed, static_cast<std::uint32_t>(i), kPointTag}, 0, u);
    std::vector<double> z(16);
    standard_normals({seed, static_cast<std::uint32_t>(i), kPointTag}, 1, z);
    Field f(g);
    if (i < n - n_spikes) {
      const double amp = 0.2 + 1.3 * u[0];
      auto axis = [&](double x, std::size_t off) {
        double s = 0.0;
        for (int k = 1; k <= 4; ++k)
          s += amp / k * (z[off + 2 * (k - 1)] * std::cos(two_pi * k * x) + z[off + 2 * k - 1] * std::sin(two_pi * k * x));
        return s;
      };
      f = make_field(g, [&](double x, double y) { return std::exp(axis(x, 0) + (g.dim() == 2 ? axis(y, 8) : 0.0)); });
    } else {
      const double width = 0.02 + 0.04 * u[1];
      const double eps = std::exp(-(2.0 + 6.0 * u[2]));
      const double x0 = u[3], y0 = u[4];
      f = make_field(g, [&](double x, double y) {
        auto wrap = [](double d) { return d - std::round(d); };
        double r2 = wrap(x - x0) * wrap(x - x0);
        if (g.dim() == 2) r2 += wrap(y - y0) * wrap(y - y0);
        return eps + std::exp(-r2 / (2 * width * width));
      });
    }
    out.push_back(project(f));
  }
  return out;
}

LipschitzScan scan_corrector(const std::vector<ProjectivePoint>& points, const CorrelationKernel& kernel,
                             const CorrectorConfig& cfg, const StationaryPool& pool, double R) {
  std::vector<std::vector<double>> pts;
  for (const auto& p : points) pts.emplace_back(p.values().begin(), p.values().end());
  auto s = sample_corrector(pts, kernel, cfg, pool);
  LipschitzScan scan;
  scan.R = R;
  for (std::size_t k = 0; k < pts.size(); ++k) {
    const auto m = mean_se(s.at_T[k]);
    scan.values.push_back(m.mean);
    scan.ses.push_back(m.se);
    scan.sup_G = std::max(scan.sup_G, std::abs(m.mean));
    scan.max_se = std::max(scan.max_se, m.se);
  }
  for (std::size_t a = 0; a < pts.size(); ++a)
    for (std::size_t b = a + 1; b < pts.size(); ++b) {
      const double d = hilbert_distance(points[a], points[b]);
      if (!(d > 0.0)) continue;
      const double dG = std::abs(scan.values[a] - scan.values[b]);
      scan.lipschitz_dP = std::max(scan.lipschitz_dP, dG / d);
      scan.lipschitz_dR = std::max(scan.lipschitz_dR, dG / std::min(d, R));
    }
  return scan;
}

double eta_zero(double lambda, double kappa_sup, double lipschitz, double sup_G) {
  const double a = 0.5 * lambda / (0.5 * kappa_sup + 8.0 * lipschitz * kappa_sup);
  const double b = sup_G > 0.0 ? 1.0 / (2.0 * sup_G) : std::numeric_limits<double>::infinity();
  return std::min(a, b);
}

bool SupermartingaleReport::all_hold() const {
  return std::all_of(rows.begin(), rows.end(), [](const CheckpointRow& r) { return r.v_holds && r.v0_holds; });
}

SupermartingaleReport supermartingale_check(const ProjectivePoint& p0, const CorrelationKernel& kernel,
                                            const CorrectorConfig& cfg, const StationaryPool& pool,
                                            const SupermartingaleConfig& sm, double eta0) {
  if (!(cfg.lambda > 0.0)) throw std::invalid_argument("supermartingale check requires lambda > 0");
  if (sm.eta > eta0) throw std::invalid_argument("eta above admissible threshold eta0");
  SupermartingaleReport rep;
  rep.eta = sm.eta;
  rep.eta0 = eta0;
  rep.lambda = cfg.lambda;
  const auto& g = kernel.grid();
  // Constant kernels make Q constant on the projective space, so G vanishes identically.
  const bool trivial_G = sm.eta == 0.0 || kernel.spec().type == KernelSpec::Type::constant || kernel.is_zero();
  const double G0 = trivial_G ? 0.0 : estimate_G(p0, kernel, cfg, pool).value;
  const std::size_t nc = sm.checkpoints.size();
  std::vector<std::size_t> check_steps;
  for (double t : sm.checkpoints) check_steps.push_back(steps_of(t, cfg.dt));
  const std::size_t total = check_steps.empty() ? 0 : *std::max_element(check_steps.begin(), check_steps.end());
  const std::size_t inner_steps = steps_of(sm.inner_T, cfg.dt);

  struct PathOut {
    std::vector<double> r_neg, V;
  };
  auto paths = parallel_map<PathOut>(sm.n_paths, cfg.threads, [&](std::size_t i) {
    LinearPathSimulator sim(kernel, cfg.gamma, cfg.dt, {cfg.seed, static_cast<std::uint32_t>(i), kSupermartingaleTag});
    sim.add_flow(p0.values());
    PathOut out;
    out.r_neg.assign(nc, 0.0);
    out.V.assign(nc, 0.0);
    std::vector<double> pi(g.size());
    for (std::size_t n = 1; n <= total; ++n) {
      sim.step();
      for (std::size_t c = 0; c < nc; ++c) {
        if (check_steps[c] != n) continue;
        const double log_r = sim.flow(0).log_mass(sim.ou().Y());
        const double rn = std::exp(-sm.eta * log_r);
        double G = 0.0;
        if (!trivial_G) {
          sim.flow(0).projective(sim.ou().Y(), pi);
          double acc = 0.0;
          for (std::size_t j = 0; j < sm.inner_paths; ++j) {
            const std::size_t idx = i * sm.inner_paths + j;
            LinearPathSimulator inner(kernel, cfg.gamma, cfg.dt,
                                      {cfg.seed, static_cast<std::uint32_t>(idx),
                                       kInnerTagBase + static_cast<std::uint32_t>(c)});
            inner.add_flow(pi);
            inner.add_flow(pool.samples[idx % pool.samples.size()]);
            ProjectiveView view(g.size());
            auto integrand = [&] {
              view.refresh(inner);
              return 0.5 * (view.q(inner, 0) - view.q(inner, 1));
            };
            double prev = integrand(), integral = 0.0;
            for (std::size_t s = 1; s <= inner_steps; ++s) {
              inner.step();
              const double cur = integrand();
              integral += 0.5 * cfg.dt * (prev + cur);
              prev = cur;
            }
            acc += integral;
          }
          G = acc / static_cast<double>(sm.inner_paths);
        }
        out.r_neg[c] = rn;
        out.V[c] = rn * (1.0 + sm.eta * G);
      }
    }
    return out;
  });

  const double V0 = 1.0 + sm.eta * G0;  // r_0 = 1
  std::vector<double> col_v(sm.n_paths), col_r(sm.n_paths);
  for (std::size_t c = 0; c < nc; ++c) {
    const double t = sm.checkpoints[c];
    const double w = std::exp(0.5 * sm.eta * cfg.lambda * t);
    for (std::size_t i = 0; i < sm.n_paths; ++i) {
      col_v[i] = w * paths[i].V[c];
      col_r[i] = paths[i].r_neg[c];
    }
    const auto mv = mean_se(col_v);
    const auto mr = mean_se(col_r);
    CheckpointRow row;
    row.t = t;
    row.lhs = mv.mean;
    row.lhs_se = mv.se;
    row.rhs = V0;
    row.moment = mr.mean;
    row.moment_se = mr.se;
    row.v0_bound = std::pow(3.0 * std::exp(-0.5 * cfg.lambda * t), sm.eta);
    row.v_holds = row.lhs <= row.rhs + 3.0 * row.lhs_se + se_floor(row.rhs);
    row.v0_holds = row.moment <= row.v0_bound + 3.0 * row.moment_se + se_floor(row.v0_bound);
    rep.rows.push_back(row);
  }
  return rep;
}

}  // namespace rdlab
