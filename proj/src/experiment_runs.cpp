#include "experiment_runs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "rdlab/corrector.hpp"
#include "rdlab/linear_flow.hpp"
#include "rdlab/lyapunov.hpp"
#include "rdlab/nonlinear_flow.hpp"
#include "rdlab/projective.hpp"
#include "rdlab/stats.hpp"

namespace rdlab::detail {

CsvTable RunContext::table(const std::string& file) const {
  for (const auto& s : csv_schema(cfg.experiment))
    if (s.file == file) return CsvTable{s.columns, {}};
  throw std::logic_error("no schema for " + cfg.experiment + "/" + file);
}

void RunContext::write(const std::string& file, const CsvTable& t) const { emit_csv(t, dir_ / file); }

void RunContext::verdict(std::string name, bool pass, std::string detail) {
  verdicts.push_back({std::move(name), pass, std::move(detail)});
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kFourPiSq = 4.0 * std::numbers::pi * std::numbers::pi;

// Stream tags; each independent use of randomness inside one experiment gets its own tag.
constexpr std::uint32_t kMainTag = 0;
constexpr std::uint32_t kLambdaTag = 7;
constexpr std::uint32_t kPoolTag = 1;
constexpr std::uint32_t kStationaryTag = 2;
constexpr std::uint32_t kPiecewiseTag = 11;
constexpr std::uint32_t kNonlinearTag = 12;
constexpr std::uint32_t kLevelTag = 13;
constexpr std::uint32_t kExitTag = 15;
constexpr std::uint32_t kKernelTag = 21;

bool within(double value, double target, double se, double k = 3.0) { return std::abs(value - target) <= k * se; }

double flag(bool b) { return b ? 1.0 : 0.0; }

CorrelationKernel make_kernel(const ExperimentConfig& c) {
  return build_kernel(c.kernel_spec(), GridDescriptor(c.dim, c.points));
}

LyapunovConfig lyapunov_config(const RunContext& ctx, double gamma, std::size_t n_paths, std::uint32_t tag) {
  LyapunovConfig lc;
  lc.gamma = gamma;
  lc.dt = ctx.cfg.dt;
  lc.horizon = ctx.cfg.horizon;
  lc.burn_in = ctx.cfg.burn_in;
  lc.n_paths = n_paths;
  lc.seed = ctx.cfg.seed;
  lc.threads = ctx.threads;
  lc.stream_tag = tag;
  return lc;
}

// Lyapunov exponent of the linearization at 0 (FK estimator), computed before experiments that need it.
MeanSE estimate_lambda(const RunContext& ctx, const CorrelationKernel& k, double gamma) {
  auto lc = lyapunov_config(ctx, gamma, ctx.cfg.lyapunov_paths, kLambdaTag);
  lc.horizon = ctx.cfg.lyapunov_horizon;
  const auto e = sample_exponent(k, lc);
  MeanSE m;
  m.mean = e.lambda_fk;
  m.se = e.se_fk;
  m.n = e.paths.size();
  return m;
}

double analytic_lambda(const ExperimentConfig& c) {
  if (c.kernel == "zero") return c.gamma;
  if (c.kernel == "constant") return c.gamma - 0.5 * c.variance;
  return kNaN;
}

Field two_mode_field(const GridDescriptor& g, bool cosine) {
  constexpr double tp = 2.0 * std::numbers::pi;
  return make_field(g, [&](double x, double) { return 1.0 + 0.5 * (cosine ? std::cos(tp * x) : std::sin(tp * x)); });
}

ProjectivePoint smooth_point(const GridDescriptor& g) {
  constexpr double tp = 2.0 * std::numbers::pi;
  return project(make_field(g, [&](double x, double) { return 1.0 + 0.3 * std::cos(tp * x); }));
}

Field bump(const GridDescriptor& g, double sup) {
  constexpr double tp = 2.0 * std::numbers::pi;
  return make_field(g, [&](double x, double) { return sup * (1.0 + 0.5 * std::sin(tp * x)) / 1.5; });
}

// Two independent halves of an ensemble; "stable under doubling" means the halves agree.
struct Halves {
  MeanSE a, b;
  bool agree() const {
    return std::isfinite(a.mean) && std::isfinite(b.mean) &&
           std::abs(a.mean - b.mean) <= 3.0 * std::sqrt(a.se * a.se + b.se * b.se);
  }
};

Halves halves(const std::vector<double>& x) {
  const std::size_t h = x.size() / 2;
  return {mean_se(std::span(x).subspan(0, h)), mean_se(std::span(x).subspan(h))};
}

double percentile(std::vector<double> x, double q) {
  if (x.empty()) return 0.0;
  std::sort(x.begin(), x.end());
  const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(x.size()))) - 1;
  return x[std::min(idx, x.size() - 1)];
}

CorrectorConfig corrector_config(const RunContext& ctx, double lambda) {
  CorrectorConfig cc;
  cc.gamma = ctx.cfg.gamma;
  cc.lambda = lambda;
  cc.dt = ctx.cfg.dt;
  cc.T = ctx.cfg.corrector_T;
  cc.n_paths = ctx.cfg.n_paths;
  cc.burn_in = ctx.cfg.pool_burn_in;
  cc.seed = ctx.cfg.seed;
  cc.threads = ctx.threads;
  return cc;
}

StationaryPool build_pool(const RunContext& ctx, const CorrelationKernel& k) {
  return StationaryPool::build(k, ctx.cfg.gamma, ctx.cfg.dt, ctx.cfg.pool_burn_in, ctx.cfg.pool_size, ctx.cfg.seed,
                               kPoolTag, ctx.threads);
}

// FK value of lambda on the stationary pool: gamma - E_mu[Q] / 2.
double pool_lambda(const RunContext& ctx, const CorrelationKernel& k, const StationaryPool& pool) {
  std::vector<double> q;
  for (const auto& s : pool.samples) q.push_back(k.quadratic_form_factor(s));
  return ctx.cfg.gamma - 0.5 * mean_se(q).mean;
}

// --- lyapunov / fk-consistency -------------------------------------------------

LyapunovEstimate lyapunov_common(RunContext& ctx, const CorrelationKernel& k) {
  const auto& c = ctx.cfg;
  auto e = sample_exponent(k, lyapunov_config(ctx, c.gamma, c.n_paths, kMainTag));
  auto paths = ctx.table("lyapunov_paths.csv");
  for (std::size_t i = 0; i < e.paths.size(); ++i)
    paths.add_row({static_cast<double>(i), e.paths[i].slope, e.paths[i].mean_Q, flag(e.paths[i].excluded)});
  ctx.write("lyapunov_paths.csv", paths);
  auto sum = ctx.table("lyapunov_summary.csv");
  sum.add_row({e.gamma, e.lambda_sample, e.se_sample, e.lambda_fk, e.se_fk, analytic_lambda(c),
               static_cast<double>(e.excluded)});
  ctx.write("lyapunov_summary.csv", sum);
  return e;
}

void fk_verdict(RunContext& ctx, const LyapunovEstimate& e) {
  const double gap = std::abs(e.lambda_sample - e.lambda_fk);
  ctx.verdict("sample and Feynman-Kac estimates agree", gap <= 3.0 * (e.se_sample + e.se_fk),
              "|diff| = " + num(gap) + ", 3(se_sample + se_fk) = " + num(3.0 * (e.se_sample + e.se_fk)));
}

void run_lyapunov(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto e = lyapunov_common(ctx, k);
  const double exact = analytic_lambda(c);
  if (c.kernel == "zero") {
    const double err = std::max(std::abs(e.lambda_sample - exact), std::abs(e.lambda_fk - exact));
    ctx.verdict("lambda equals gamma without noise", err <= 1e-6, "max error = " + num(err));
  } else if (c.kernel == "constant") {
    ctx.verdict("lambda_sample within 3 SE of gamma - variance/2", within(e.lambda_sample, exact, e.se_sample),
                "lambda_sample = " + num(e.lambda_sample) + ", se = " + num(e.se_sample) + ", exact = " + num(exact));
    ctx.verdict("lambda_fk within 3 SE of gamma - variance/2", within(e.lambda_fk, exact, e.se_fk),
                "lambda_fk = " + num(e.lambda_fk) + ", se = " + num(e.se_fk) + ", exact = " + num(exact));
  } else {
    fk_verdict(ctx, e);
    if (c.gamma == 0.0)
      ctx.verdict("lambda negative at gamma = 0", e.lambda_sample < 0.0 && e.lambda_fk < 0.0,
                  "lambda_sample = " + num(e.lambda_sample) + ", lambda_fk = " + num(e.lambda_fk));
  }
}

void run_fk_consistency(RunContext& ctx) {
  const auto k = make_kernel(ctx.cfg);
  fk_verdict(ctx, lyapunov_common(ctx, k));
}

// --- sync --------------------------------------------------------------------

void run_sync(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  SyncOptions opt;
  opt.gamma = c.gamma;
  opt.dt = c.dt;
  opt.horizon = c.horizon;
  const auto p0 = project(two_mode_field(g, false));
  const auto q0 = project(two_mode_field(g, true));
  const std::size_t birkhoff_paths = std::min<std::size_t>(c.n_paths, 4);
  const auto s = synchronization_experiment(k, opt, c.seed, c.n_paths, p0, q0, ctx.threads, birkhoff_paths);
  const auto zero = build_kernel(KernelSpec::zero(), g);
  const auto control = synchronize_pair(zero, opt, {c.seed, 0, kMainTag}, p0, q0);

  auto paths = ctx.table("sync_paths.csv");
  auto windows = ctx.table("sync_windows.csv");
  std::size_t resolved_windows = 0;
  for (std::size_t i = 0; i < s.paths.size(); ++i) {
    const auto& r = s.paths[i];
    double max_ratio = kNaN;
    for (std::size_t w = 0; w < r.window_ratio.size(); ++w) {
      windows.add_row({static_cast<double>(i), static_cast<double>(w + 1), r.window_ratio[w]});
      if (!std::isnan(r.window_ratio[w])) {
        ++resolved_windows;
        max_ratio = std::isnan(max_ratio) ? r.window_ratio[w] : std::max(max_ratio, r.window_ratio[w]);
      }
    }
    paths.add_row({static_cast<double>(i), r.fitted_rate, r.resolved_until, max_ratio,
                   r.birkhoff_tau_window1.value_or(kNaN)});
  }
  ctx.write("sync_paths.csv", paths);
  ctx.write("sync_windows.csv", windows);
  auto traj = ctx.table("sync_trajectory.csv");
  if (!s.paths.empty())
    for (std::size_t n = 0; n < s.paths[0].times.size(); ++n)
      traj.add_row({s.paths[0].times[n], s.paths[0].d_P[n], std::log(s.paths[0].d_P[n])});
  ctx.write("sync_trajectory.csv", traj);
  auto sum = ctx.table("sync_summary.csv");
  sum.add_row({s.mean_window_ratio, s.max_window_ratio, s.mean_fitted_rate, s.max_fitted_rate, control.fitted_rate,
               -kFourPiSq, s.max_birkhoff_tau.value_or(kNaN)});
  ctx.write("sync_summary.csv", sum);

  ctx.verdict("every unit-window contraction ratio < 1", resolved_windows > 0 && s.max_window_ratio < 1.0,
              "max ratio = " + num(s.max_window_ratio) + " over " + std::to_string(resolved_windows) + " windows");
  ctx.verdict("fitted synchronization rate negative on every path", s.max_fitted_rate < 0.0,
              "max rate = " + num(s.max_fitted_rate));
  const double rel = std::abs(control.fitted_rate + kFourPiSq) / kFourPiSq;
  ctx.verdict("noiseless control rate within 5% of -4 pi^2", rel <= 0.05,
              "control rate = " + num(control.fitted_rate) + ", relative deviation = " + num(rel));
  ctx.verdict("noiseless control rate <= -0.9 * 4 pi^2", control.fitted_rate <= -0.9 * kFourPiSq,
              "control rate = " + num(control.fitted_rate));
  if (s.max_birkhoff_tau)
    ctx.verdict("Birkhoff contraction factor < 1 on the first window", *s.max_birkhoff_tau < 1.0,
                "max tau = " + num(*s.max_birkhoff_tau));
}

// --- contraction -------------------------------------------------------------

void run_contraction(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  const double cv = g.cell_volume();

  // L1 distance against the Hilbert metric.
  const auto pts = random_points(g, 2 * c.n_pairs, c.seed + 1, c.spike_fraction);
  auto pairs = ctx.table("contraction_pairs.csv");
  std::size_t l1_fail = 0;
  for (std::size_t i = 0; i < c.n_pairs; ++i) {
    const auto& p = pts[2 * i];
    const auto& q = pts[2 * i + 1];
    double l1 = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) l1 += std::abs(p[j] - q[j]);
    l1 *= cv;
    const double d = hilbert_distance(p, q);
    const double bound = std::expm1(d);
    if (!(l1 <= bound)) ++l1_fail;
    pairs.add_row({static_cast<double>(i), l1, d, bound});
  }
  ctx.write("contraction_pairs.csv", pairs);
  ctx.verdict("L1 distance <= exp(d_P) - 1 on every pair", l1_fail == 0,
              std::to_string(l1_fail) + " violations in " + std::to_string(c.n_pairs) + " pairs");

  // Uniform bound on the projective velocity.
  const auto vpts = random_points(g, c.n_pairs, c.seed + 2, c.spike_fraction);
  auto vel = ctx.table("contraction_velocity.csv");
  const double vbound = 2.0 * k.sup_norm();
  std::size_t v_fail = 0;
  for (std::size_t i = 0; i < vpts.size(); ++i) {
    const Field N = velocity_direction(vpts[i], k);
    double r = 0.0;
    for (std::size_t j = 0; j < N.size(); ++j) r = std::max(r, std::abs(N[j] / vpts[i][j]));
    if (!(r <= vbound)) ++v_fail;
    vel.add_row({static_cast<double>(i), r, vbound});
  }
  ctx.write("contraction_velocity.csv", vel);
  ctx.verdict("|N(p)/p|_inf <= 2 |kappa|_inf on every point", v_fail == 0,
              std::to_string(v_fail) + " violations in " + std::to_string(vpts.size()) + " points");

  // Pathwise sup-norm bound of the linear flow.
  struct PathSup {
    double sup_phi = 0.0, sup_y = 0.0, sup_grad = 0.0, w0_sup = 0.0;
  };
  const auto w0s = random_points(g, c.n_paths, c.seed + 3, c.spike_fraction);
  const auto steps = static_cast<std::size_t>(std::llround(c.horizon / c.dt));
  auto sups = parallel_map<PathSup>(c.n_paths, ctx.threads, [&](std::size_t i) {
    LinearPathSimulator sim(k, c.gamma, c.dt, {c.seed, static_cast<std::uint32_t>(i), kMainTag});
    sim.add_flow(w0s[i].values());
    PathSup s;
    s.w0_sup = grid_reduce(w0s[i].field(), Reduction::linf);
    s.sup_phi = s.w0_sup;
    std::vector<double> phi(g.size());
    for (std::size_t n = 0; n < steps; ++n) {
      sim.step();
      sim.flow(0).phi(sim.ou().Y(), phi);
      for (double v : phi) s.sup_phi = std::max(s.sup_phi, std::abs(v));
      s.sup_y = std::max(s.sup_y, sim.ou().sup_norm());
      s.sup_grad = std::max(s.sup_grad, sim.ou().grad_sup_norm());
    }
    return s;
  });
  auto paths = ctx.table("contraction_paths.csv");
  std::size_t sup_fail = 0;
  for (std::size_t i = 0; i < sups.size(); ++i) {
    const auto& s = sups[i];
    const double bound = pathwise_sup_bound(s.sup_y, s.sup_grad, c.horizon, s.w0_sup);
    if (!(s.sup_phi <= bound)) ++sup_fail;
    paths.add_row({static_cast<double>(i), s.sup_phi, s.sup_y, s.sup_grad, bound});
  }
  ctx.write("contraction_paths.csv", paths);
  ctx.verdict("pathwise sup-norm bound holds on every path", sup_fail == 0,
              std::to_string(sup_fail) + " violations in " + std::to_string(sups.size()) + " paths");

  // Birkhoff factor of the flow kernel over one unit of time on a few paths.
  if (!k.is_zero()) {
    const std::size_t nk = std::min<std::size_t>(c.n_paths, 3);
    auto stats = parallel_map<KernelStats>(nk, ctx.threads, [&](std::size_t i) {
      const auto ou = solve_Y(k, c.gamma, 1.0, c.dt, {c.seed, static_cast<std::uint32_t>(i), kKernelTag});
      return kernel_stats(compute_kernel_K(ou, k, 0.0, 1.0, 0.0));
    });
    auto kt = ctx.table("contraction_kernels.csv");
    double max_tau = 0.0;
    for (std::size_t i = 0; i < stats.size(); ++i) {
      kt.add_row({static_cast<double>(i), stats[i].birkhoff_diameter, stats[i].contraction()});
      max_tau = std::max(max_tau, stats[i].contraction());
    }
    ctx.write("contraction_kernels.csv", kt);
    ctx.verdict("flow kernel contraction factor < 1", max_tau < 1.0, "max tau = " + num(max_tau));
  } else {
    ctx.write("contraction_kernels.csv", ctx.table("contraction_kernels.csv"));
  }
}

// --- corrector ---------------------------------------------------------------

void run_corrector(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  if (k.is_zero()) throw ConfigError("kernel.type: the corrector experiment needs a noisy kernel");
  const auto pool = build_pool(ctx, k);
  const double lambda = c.kernel == "constant" ? analytic_lambda(c) : pool_lambda(ctx, k, pool);
  const double R = percentile(pool.distance_to_uniform, 0.99);
  const auto cc = corrector_config(ctx, lambda);
  const auto points = random_points(g, c.n_points, c.seed + 1, c.spike_fraction);
  const double floor_scale = cc.T * f_sup_bound(k, cc.gamma, cc.lambda);

  const auto scan = scan_corrector(points, k, cc, pool, R);
  auto pt = ctx.table("corrector_points.csv");
  const std::vector<double> ones(g.size(), 1.0);
  bool null_ok = true;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double se = std::max(scan.ses[i], se_floor(floor_scale));
    null_ok = null_ok && std::abs(scan.values[i]) <= 3.0 * se;
    pt.add_row({static_cast<double>(i), scan.values[i], se, hilbert_distance(points[i].values(), ones)});
  }
  ctx.write("corrector_points.csv", pt);

  std::vector<double> summary(15, kNaN);
  summary[0] = lambda;
  summary[1] = R;
  summary[2] = scan.sup_G;
  summary[3] = scan.lipschitz_dP;
  summary[4] = scan.lipschitz_dR;
  auto decay = ctx.table("corrector_decay.csv");

  if (c.kernel == "constant") {
    ctx.verdict("constant kernel: |G| <= 3 SE at every point", null_ok,
                "sup |G| = " + num(scan.sup_G) + " at " + std::to_string(points.size()) + " points");
  } else {
    // Stationary mean: points drawn from an independent stationary pool.
    const auto stationary = StationaryPool::build(k, c.gamma, c.dt, c.pool_burn_in, c.n_points, c.seed + 1,
                                                  kStationaryTag, ctx.threads);
    const auto ss = sample_corrector(stationary.samples, k, cc, pool);
    std::vector<double> per_point, per_path(cc.n_paths, 0.0);
    for (const auto& col : ss.at_T) {
      per_point.push_back(mean_se(col).mean);
      for (std::size_t i = 0; i < col.size(); ++i) per_path[i] += col[i] / static_cast<double>(ss.at_T.size());
    }
    // Point-sampling error and common-noise error of the double average.
    const auto mp = mean_se(per_point);
    const auto mq = mean_se(per_path);
    const double st_se = std::max(std::sqrt(mp.se * mp.se + mq.se * mq.se), se_floor(floor_scale));
    summary[7] = mp.mean;
    summary[8] = st_se;
    ctx.verdict("stationary mean of G within 3 SE of 0", std::abs(mp.mean) <= 3.0 * st_se,
                "mean = " + num(mp.mean) + ", se = " + num(st_se));

    // Truncation doubling at a smooth point.
    const auto p = smooth_point(g);
    const auto ds = sample_corrector({std::vector<double>(p.values().begin(), p.values().end())}, k, cc, pool, true);
    std::vector<double> diff(cc.n_paths);
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = ds.at_2T[0][i] - ds.at_T[0][i];
    const auto d = mean_se(diff);
    const double tail = std::isinf(ds.zeta_prime)
                            ? 0.0
                            : f_sup_bound(k, cc.gamma, cc.lambda) * std::exp(-ds.zeta_prime * cc.T) / ds.zeta_prime;
    summary[6] = ds.zeta_prime;
    summary[9] = d.mean;
    summary[10] = d.se;
    summary[11] = tail;
    for (std::size_t n = 0; n < ds.times.size(); ++n) decay.add_row({ds.times[n], ds.mean_distance[n]});
    ctx.verdict("doubling the truncation time stays within the tail bound",
                std::abs(d.mean) <= tail + 3.0 * d.se,
                "|G_2T - G_T| = " + num(std::abs(d.mean)) + ", tail = " + num(tail) + ", se = " + num(d.se));

    const auto fc = frechet_bound_check(p, k, cc, pool, scan.lipschitz_dP);
    summary[12] = fc.lhs;
    summary[13] = fc.lhs_se;
    summary[14] = fc.rhs;
    ctx.verdict("directional derivative bound at a smooth point", fc.holds(),
                "lhs = " + num(fc.lhs) + " +- " + num(fc.lhs_se) + ", rhs = " + num(fc.rhs));

    const double eta0 = eta_zero(lambda, k.sup_norm(), scan.lipschitz_dR, scan.sup_G);
    summary[5] = eta0;
    ctx.verdict("admissible eta0 estimate positive", eta0 > 0.0 && std::isfinite(eta0), "eta0 = " + num(eta0));
  }
  ctx.write("corrector_decay.csv", decay);
  auto sum = ctx.table("corrector_summary.csv");
  sum.add_row(summary);
  ctx.write("corrector_summary.csv", sum);
}

// --- generator ---------------------------------------------------------------

void run_generator(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  StationaryPool pool;
  double lambda = c.gamma;
  if (!k.is_zero()) {
    pool = build_pool(ctx, k);
    lambda = c.kernel == "constant" ? analytic_lambda(c) : pool_lambda(ctx, k, pool);
  } else {
    pool.samples.emplace_back(g.size(), 1.0);
  }
  const auto cc = corrector_config(ctx, lambda);
  const auto p = smooth_point(g);
  const double Fp = c.gamma - lambda - 0.5 * k.quadratic_form_factor(p.values());
  const auto r1 = generator_residual(p, c.h, k, cc, pool);
  const auto r2 = generator_residual(p, 2.0 * c.h, k, cc, pool);
  auto t = ctx.table("generator.csv");
  t.add_row({r1.h, r1.residual, r1.se, Fp, lambda});
  t.add_row({r2.h, r2.residual, r2.se, Fp, lambda});
  ctx.write("generator.csv", t);
  if (r1.deterministic) {
    ctx.verdict("noiseless projective dynamics: generator check skipped", true,
                "residual = lambda - gamma = " + num(r1.residual));
    return;
  }
  ctx.verdict("generator residual within 3 SE of 0 at h", std::abs(r1.residual) <= 3.0 * r1.se,
              "h = " + num(r1.h) + ", residual = " + num(r1.residual) + ", se = " + num(r1.se) +
                  ", F(p) = " + num(Fp));
  ctx.verdict("generator residual does not grow when h is halved",
              std::abs(r1.residual) <= std::abs(r2.residual) + 3.0 * (r1.se + r2.se),
              "|r(h)| = " + num(std::abs(r1.residual)) + ", |r(2h)| = " + num(std::abs(r2.residual)));
}

// --- supermartingale ---------------------------------------------------------

void run_supermartingale(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  if (k.is_zero()) throw ConfigError("kernel.type: the supermartingale experiment needs a noisy kernel");
  const auto lam = estimate_lambda(ctx, k, c.gamma);
  if (!(lam.mean > 0.0))
    throw ConfigError("model.gamma: supermartingale check requires lambda > 0 (estimated " + num(lam.mean) + ")");
  const auto pool = build_pool(ctx, k);
  const double R = percentile(pool.distance_to_uniform, 0.99);
  auto cc = corrector_config(ctx, lam.mean);
  const auto points = random_points(g, c.n_points, c.seed + 1, c.spike_fraction);
  const auto scan = scan_corrector(points, k, cc, pool, R);
  const double eta0 = eta_zero(lam.mean, k.sup_norm(), scan.lipschitz_dR, scan.sup_G);
  if (c.eta > eta0)
    throw ConfigError("run.eta: eta above admissible threshold eta0 (eta = " + num(c.eta) + ", eta0 = " +
                      num(eta0) + ")");

  SupermartingaleConfig sm;
  sm.eta = c.eta;
  sm.checkpoints = c.checkpoints;
  sm.n_paths = c.n_paths;
  sm.inner_paths = c.inner_paths;
  sm.inner_T = c.inner_T;
  const auto rep = supermartingale_check(uniform_point(g), k, cc, pool, sm, eta0);

  auto t = ctx.table("supermartingale.csv");
  for (const auto& r : rep.rows) {
    t.add_row({r.t, r.lhs, r.lhs_se, r.rhs, r.moment, r.moment_se, r.v0_bound, flag(r.v_holds), flag(r.v0_holds)});
    ctx.verdict("corrected functional decays at t = " + num(r.t), r.v_holds,
                "lhs = " + num(r.lhs) + " +- " + num(r.lhs_se) + ", rhs = " + num(r.rhs));
    ctx.verdict("negative moment below its bound at t = " + num(r.t), r.v0_holds,
                "moment = " + num(r.moment) + " +- " + num(r.moment_se) + ", bound = " + num(r.v0_bound));
  }
  ctx.write("supermartingale.csv", t);
  auto s = ctx.table("supermartingale_summary.csv");
  s.add_row({lam.mean, lam.se, c.eta, eta0, scan.sup_G, scan.lipschitz_dR, R});
  ctx.write("supermartingale_summary.csv", s);
}

// --- moments -----------------------------------------------------------------

void run_moments(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  const auto nl = c.make_nonlinearity();
  const auto lam = estimate_lambda(ctx, k, nl.f_prime_0);
  const bool contrast = !(lam.mean > 0.0);

  MomentConfig mc;
  mc.eta = c.eta;
  mc.scales = c.scales;
  mc.checkpoints = c.checkpoints;
  mc.n_paths = c.n_paths;
  mc.dt = c.dt;
  mc.seed = c.seed;
  mc.threads = ctx.threads;
  mc.stream_tag = kMainTag;
  const auto tab = negative_moment_experiment(nl, k, mc);

  // Exact law for the linear preset with space-independent noise:
  // u_t = exp((gamma - s2/2) t + B_t) P_t u0, so E[(min u_t)^{-eta}] = (min P_t u0)^{-eta} exp(eta(-gamma + (1+eta) s2/2) t).
  const bool gbm = c.nonlinearity == "linear" && c.kernel == "constant";
  const double s2 = c.variance;
  auto closed = [&](std::size_t si, std::size_t ci) {
    if (!gbm) return kNaN;
    const double t = tab.checkpoints[ci];
    const double m = grid_reduce(heat_semigroup_apply(moment_initial_condition(g, tab.scales[si]), t), Reduction::min);
    return std::pow(m, -c.eta) * std::exp(c.eta * (-c.gamma + (1.0 + c.eta) * 0.5 * s2) * t);
  };

  auto t = ctx.table("moments.csv");
  bool oracle_ok = true, growth = true, finite = true;
  std::string oracle_detail;
  double worst = 0.0;
  for (std::size_t si = 0; si < tab.scales.size(); ++si)
    for (std::size_t ci = 0; ci < tab.checkpoints.size(); ++ci) {
      const double mean = tab.mean[si][ci], se = tab.se[si][ci], exact = closed(si, ci);
      t.add_row({tab.scales[si], tab.checkpoints[ci], mean, se, exact, static_cast<double>(tab.blowups[si])});
      finite = finite && std::isfinite(mean);
      if (gbm) {
        const double z = std::abs(mean - exact) / std::max(se, se_floor(exact));
        worst = std::max(worst, z);
        oracle_ok = oracle_ok && z <= 3.0;
      }
      if (ci > 0) growth = growth && mean > tab.mean[si][ci - 1];
    }
  ctx.write("moments.csv", t);

  const double zeta_oracle = c.eta * (c.gamma - (1.0 + c.eta) * 0.5 * s2);
  auto f = ctx.table("moments_fit.csv");
  f.add_row({lam.mean, lam.se, flag(contrast), tab.fit.C1, tab.fit.zeta, tab.fit.C2, tab.fit.rms_residual,
             gbm ? zeta_oracle : kNaN});
  ctx.write("moments_fit.csv", f);

  ctx.verdict("negative moments finite", finite);
  if (contrast) {
    ctx.verdict("contrast mode: growth observed", growth,
                "lambda = " + num(lam.mean) + " +- " + num(lam.se) + "; moments increase across checkpoints");
    return;
  }
  if (gbm) {
    ctx.verdict("closed-form negative moments within 3 SE", oracle_ok, "worst |z| = " + num(worst));
    const double rel = std::abs(tab.fit.zeta - zeta_oracle) / std::abs(zeta_oracle);
    ctx.verdict("fitted zeta within 20% of eta(gamma - (1+eta) s2/2)", rel <= 0.2,
                "zeta = " + num(tab.fit.zeta) + ", oracle = " + num(zeta_oracle));
  }
  if (c.nonlinearity == "allen_cahn") {
    // Uniformity in the initial condition at the last checkpoint over scales <= 1e-2.
    double lo = INFINITY, hi = 0.0;
    const std::size_t last = tab.checkpoints.size() - 1;
    for (std::size_t si = 0; si < tab.scales.size(); ++si)
      if (tab.scales[si] <= 1e-2 * (1.0 + 1e-12)) {
        lo = std::min(lo, tab.mean[si][last]);
        hi = std::max(hi, tab.mean[si][last]);
      }
    const double factor = hi / lo;
    ctx.verdict("moments at the last checkpoint vary by at most a factor 3 across scales <= 1e-2",
                std::isfinite(factor) && factor <= 3.0, "factor = " + num(factor));
  }
}

// --- kernel-bounds -----------------------------------------------------------

void run_kernel_bounds(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  const auto n = g.size();
  const auto zero = build_kernel(KernelSpec::zero(), g);
  struct PathKernel {
    bool ok = false;
    KernelStats st;
  };
  auto paths = ctx.table("kernel_bounds_paths.csv");
  auto sum = ctx.table("kernel_bounds_summary.csv");
  bool positive = true, ratios_finite = true, stable = true, heat_ok = true;
  double worst_heat = 0.0;
  for (std::size_t li = 0; li < c.lags.size(); ++li) {
    const double lag = c.lags[li];
    auto res = parallel_map<PathKernel>(c.n_paths, ctx.threads, [&](std::size_t i) {
      PathKernel out;
      const auto ou = solve_Y(k, c.gamma, lag, c.dt, {c.seed, static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(kKernelTag + 1 + li)});
      try {
        out.st = kernel_stats(compute_kernel_K(ou, k, 0.0, lag, 0.0));
        out.ok = true;
      } catch (const std::runtime_error&) {
        out.ok = false;
      }
      return out;
    });
    std::vector<double> neg_min, pos_max;
    double max_ratio = 0.0;
    for (std::size_t i = 0; i < res.size(); ++i) {
      const auto& r = res[i];
      positive = positive && r.ok && r.st.min_entry > 0.0;
      paths.add_row({lag, static_cast<double>(i), r.ok ? r.st.min_entry : kNaN, r.ok ? r.st.max_entry : kNaN,
                     r.ok ? r.st.c_K : kNaN, r.ok ? r.st.birkhoff_diameter : kNaN});
      if (!r.ok) continue;
      neg_min.push_back(std::pow(r.st.min_entry, -c.eta));
      pos_max.push_back(std::pow(r.st.max_entry, c.eta));
      max_ratio = std::max(max_ratio, r.st.max_entry / r.st.min_entry);
    }
    ratios_finite = ratios_finite && std::isfinite(max_ratio);
    const auto hmin = halves(neg_min);
    const auto hmax = halves(pos_max);
    stable = stable && hmin.agree() && hmax.agree();

    // Noiseless kernel against the image-sum heat kernel.
    const auto ou0 = solve_Y(zero, 0.0, lag, c.dt, {c.seed, 0, kKernelTag});
    const auto K0 = compute_kernel_K(ou0, zero, 0.0, lag, 0.0);
    const int N = g.points_per_axis();
    double rel = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) {
        double dx, dy = 0.0;
        if (g.dim() == 1) {
          dx = g.coord(static_cast<int>(i)) - g.coord(static_cast<int>(j));
        } else {
          dx = g.coord(static_cast<int>(i) / N) - g.coord(static_cast<int>(j) / N);
          dy = g.coord(static_cast<int>(i) % N) - g.coord(static_cast<int>(j) % N);
        }
        const double exact = periodic_heat_kernel(lag, dx, dy, g.dim());
        rel = std::max(rel, std::abs(K0(i, j) - exact) / exact);
      }
    worst_heat = std::max(worst_heat, rel);
    heat_ok = heat_ok && rel <= 1e-4;
    sum.add_row({lag, hmin.a.mean, hmin.a.se, hmin.b.mean, hmin.b.se, hmax.a.mean, hmax.a.se, hmax.b.mean, hmax.b.se,
                 max_ratio, rel});
  }
  ctx.write("kernel_bounds_paths.csv", paths);
  ctx.write("kernel_bounds_summary.csv", sum);
  ctx.verdict("all flow kernel entries strictly positive", positive);
  ctx.verdict("max/min entry ratios finite", ratios_finite);
  ctx.verdict("moments of (min K)^-eta and (max K)^eta stable under ensemble doubling", stable);
  ctx.verdict("noiseless kernel matches the periodic heat kernel to 1e-4 relative", heat_ok,
              "max relative error = " + num(worst_heat));
}

// --- stopping-stats ----------------------------------------------------------

void run_stopping_stats(RunContext& ctx) {
  const auto& c = ctx.cfg;
  const auto k = make_kernel(c);
  const auto& g = k.grid();
  const auto nl = c.make_nonlinearity();
  if (!nl.sigma_is_identity)
    throw ConfigError("model.nonlinearity: stopping-stats needs a partially linear preset (linear, logistic, quadratic)");
  const auto lam = estimate_lambda(ctx, k, nl.f_prime_0);

  StoppingParams pl = c.stopping;
  if (pl.eps0 == 0.0) pl.eps0 = compute_eps0(nl, lam.mean);
  if (pl.eps == 0.0) pl.eps = 0.5 * pl.eps0;
  pl.validate(PiecewiseMode::partially_linear);
  StoppingParams fn = c.stopping;
  fn.eps0 = pl.eps0;
  fn.eps = c.stopping_eps1_level;
  fn.validate(PiecewiseMode::fully_nonlinear);
  const auto ac = Nonlinearity::shifted_allen_cahn(c.alpha);

  PiecewiseOptions opt;
  opt.horizon = c.horizon;
  opt.dt = c.dt;
  opt.lambda = lam.mean;
  opt.eta = c.eta;

  auto key = [&](std::size_t i, std::uint32_t tag) { return StreamKey{c.seed, static_cast<std::uint32_t>(i), tag}; };
  const auto pl_recs = parallel_map<PiecewiseRecord>(c.n_paths, ctx.threads, [&](std::size_t i) {
    return piecewise_process(bump(g, pl.eps), nl, k, pl, opt, PiecewiseMode::partially_linear, key(i, kPiecewiseTag));
  });
  const auto fn_recs = parallel_map<PiecewiseRecord>(c.n_paths, ctx.threads, [&](std::size_t i) {
    return piecewise_process(bump(g, fn.eps), ac, k, fn, opt, PiecewiseMode::fully_nonlinear, key(i, kNonlinearTag));
  });

  auto paths = ctx.table("stopping_paths.csv");
  auto hist = ctx.table("stopping_histogram.csv");
  struct Totals {
    std::size_t dom = 0, comparison = 0, points = 0;
    double sup_w = 0.0, min_ratio = INFINITY, y_c1 = 0.0;
    std::size_t counts[5] = {0, 0, 0, 0, 0};
  };
  auto tally = [&](const std::vector<PiecewiseRecord>& recs, double mode) {
    Totals t;
    for (std::size_t i = 0; i < recs.size(); ++i) {
      const auto& r = recs[i];
      t.dom += r.domination_violations;
      t.comparison += r.comparison_violations;
      t.points += r.checked_points;
      t.sup_w = std::max(t.sup_w, r.max_sup_w);
      t.min_ratio = std::min(t.min_ratio, r.min_comparison_ratio);
      t.y_c1 = std::max(t.y_c1, r.max_y_c1);
      for (const auto& s : r.segments) ++t.counts[static_cast<int>(s.reason)];
      paths.add_row({mode, static_cast<double>(i), static_cast<double>(r.segments.size()),
                     static_cast<double>(r.domination_violations), static_cast<double>(r.comparison_violations),
                     r.min_comparison_ratio, r.max_sup_w, r.max_y_c1, static_cast<double>(r.checked_points)});
    }
    for (int reason = 0; reason < 5; ++reason)
      hist.add_row({mode, static_cast<double>(reason), static_cast<double>(t.counts[reason])});
    return t;
  };
  const auto tp = tally(pl_recs, 0.0);
  const auto tn = tally(fn_recs, 1.0);
  ctx.write("stopping_paths.csv", paths);
  ctx.write("stopping_histogram.csv", hist);

  ctx.verdict("piecewise linearised process stays below u at all stored times", tp.dom == 0,
              std::to_string(tp.dom) + " violations in " + std::to_string(tp.points) + " points");
  ctx.verdict("piecewise linearised process bounded by eps0", tp.sup_w <= pl.eps0,
              "max |w| = " + num(tp.sup_w) + ", eps0 = " + num(pl.eps0));
  ctx.verdict("nonlinear piecewise process stays below u at all stored times", tn.dom == 0,
              std::to_string(tn.dom) + " violations in " + std::to_string(tn.points) + " points");
  ctx.verdict("nonlinear piecewise process bounded by eps1", tn.sup_w <= fn.eps1,
              "max |w| = " + num(tn.sup_w) + ", eps1 = " + num(fn.eps1));
  ctx.verdict("nonlinear flow dominates half the linear flow on every segment", tn.comparison == 0,
              std::to_string(tn.comparison) + " violations, min Psi/Phi = " + num(tn.min_ratio));
  ctx.verdict("Y-norm stop would never trigger at M = 1e6", tn.y_c1 < 1e6, "max |Y|_C1 = " + num(tn.y_c1));

  // Early-exit probability from two starting levels on common noise.
  auto levels = ctx.table("stopping_levels.csv");
  std::vector<double> p_exit;
  for (double level : {pl.eps0 / 1.2, pl.eps0 / 4.0}) {
    StoppingParams lp = pl;
    lp.eps = level;
    PiecewiseOptions lo = opt;
    lo.horizon = pl.frak_t;
    auto exits = parallel_map<double>(c.n_paths, ctx.threads, [&](std::size_t i) {
      const auto r = piecewise_process(bump(g, level), nl, k, lp, lo, PiecewiseMode::partially_linear, key(i, kLevelTag));
      return flag(!r.segments.empty() && r.segments.front().reason == StopReason::sup_exit);
    });
    const auto m = mean_se(exits);
    levels.add_row({level, m.mean, m.se});
    p_exit.push_back(m.mean);
  }
  ctx.write("stopping_levels.csv", levels);
  ctx.verdict("early-exit probability decreases with the starting level", p_exit[1] < p_exit[0],
              "P(eps0/1.2) = " + num(p_exit[0]) + ", P(eps0/4) = " + num(p_exit[1]));

  // Exit times of the linear flow from alpha = 0.5 to beta = 1; moments of tau^{-1/2}.
  constexpr double kExitAlpha = 0.5, kExitBeta = 1.0, kExitZeta = 0.5;
  const auto taus = parallel_map<double>(c.n_paths, ctx.threads, [&](std::size_t i) {
    return linear_exit_time(k, nl.f_prime_0, kExitAlpha, kExitBeta, c.horizon, c.dt, key(i, kExitTag));
  });
  auto et = ctx.table("exit_times.csv");
  std::vector<double> tau_moment;
  for (std::size_t i = 0; i < taus.size(); ++i) {
    et.add_row({static_cast<double>(i), taus[i]});
    tau_moment.push_back(std::pow(taus[i], -kExitZeta));
  }
  ctx.write("exit_times.csv", et);
  const auto hexit = halves(tau_moment);
  ctx.verdict("exit-time negative moments finite and stable under ensemble doubling", hexit.agree(),
              "halves " + num(hexit.a.mean) + " +- " + num(hexit.a.se) + " and " + num(hexit.b.mean) + " +- " +
                  num(hexit.b.se));

  // Growth of the segment negative moment: sup (min w)^{-eta} <= e^{c t} (min w at restart)^{-eta}.
  std::vector<double> ratio;
  for (const auto& r : pl_recs) {
    std::vector<double> per;
    for (const auto& s : r.segments)
      if (s.min_at_start > 0.0) per.push_back(s.sup_neg_moment / std::pow(s.min_at_start, -c.eta));
    if (!per.empty()) ratio.push_back(mean_se(per).mean);
  }
  const auto hc = halves(ratio);
  const double ca = std::log(hc.a.mean) / pl.frak_t, cb = std::log(hc.b.mean) / pl.frak_t;
  const double ca_se = hc.a.se / (hc.a.mean * pl.frak_t), cb_se = hc.b.se / (hc.b.mean * pl.frak_t);
  ctx.verdict("segment moment growth rate finite and stable under ensemble doubling", hc.agree(),
              "c = " + num(ca) + " +- " + num(ca_se) + " and " + num(cb) + " +- " + num(cb_se));

  auto sum = ctx.table("stopping_summary.csv");
  sum.add_row({lam.mean, pl.eps0, pl.eps, fn.eps1, ca, ca_se, cb, cb_se, hexit.a.mean, hexit.a.se, hexit.b.mean,
               hexit.b.se});
  ctx.write("stopping_summary.csv", sum);
}

// --- allen-cahn-threshold ----------------------------------------------------

void run_threshold(RunContext& ctx) {
  const auto& c = ctx.cfg;
  if (c.kernel != "constant") throw ConfigError("kernel.type: allen-cahn-threshold requires the constant kernel");
  const auto k = make_kernel(c);
  auto scan = ctx.table("threshold_scan.csv");
  std::vector<double> alphas, lambdas, ses;
  for (double alpha : c.alphas) {
    // The linearization of the shifted Allen-Cahn system at 0 has growth rate f'(0) = alpha.
    const auto e = sample_exponent(k, lyapunov_config(ctx, alpha, c.n_paths, kMainTag));
    scan.add_row({alpha, e.lambda_sample, e.se_sample, e.lambda_fk, e.se_fk});
    alphas.push_back(alpha);
    lambdas.push_back(e.lambda_sample);
    ses.push_back(e.se_sample);
  }
  ctx.write("threshold_scan.csv", scan);
  const auto fit = linear_fit(alphas, lambdas);
  const double crossing = -fit.intercept / fit.slope;
  const double se = mean_se(ses).mean / std::abs(fit.slope);
  const double target = 0.5 * c.variance;
  auto sum = ctx.table("threshold_summary.csv");
  sum.add_row({crossing, se, fit.slope, fit.intercept, target});
  ctx.write("threshold_summary.csv", sum);
  ctx.verdict("zero crossing of lambda(alpha) within 3 SE of variance/2", within(crossing, target, se),
              "crossing = " + num(crossing) + ", se = " + num(se) + ", target = " + num(target));
}

}  // namespace

void execute(RunContext& ctx) {
  const auto& e = ctx.cfg.experiment;
  if (e == "lyapunov") return run_lyapunov(ctx);
  if (e == "fk-consistency") return run_fk_consistency(ctx);
  if (e == "sync") return run_sync(ctx);
  if (e == "contraction") return run_contraction(ctx);
  if (e == "corrector") return run_corrector(ctx);
  if (e == "generator") return run_generator(ctx);
  if (e == "supermartingale") return run_supermartingale(ctx);
  if (e == "moments") return run_moments(ctx);
  if (e == "kernel-bounds") return run_kernel_bounds(ctx);
  if (e == "stopping-stats") return run_stopping_stats(ctx);
  if (e == "allen-cahn-threshold") return run_threshold(ctx);
  throw ConfigError("experiment: unknown experiment '" + e + "'");
}

}  // namespace rdlab::detail
