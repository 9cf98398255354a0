#include "rdlab/nonlinear_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "rdlab/linear_flow.hpp"
#include "rdlab/stats.hpp"

namespace rdlab {

namespace {

std::size_t steps_for(double horizon, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
  const double n = std::round(horizon / dt);
  if (std::abs(n * dt - horizon) > 1e-9 * std::max(1.0, horizon)) throw std::invalid_argument("dt must divide horizon");
  return static_cast<std::size_t>(n);
}

double sup_abs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double min_of(std::span<const double> v) { return *std::min_element(v.begin(), v.end()); }

double grad_sup(const std::vector<std::vector<double>>& g) {
  double m = 0.0;
  for (std::size_t i = 0; i < g[0].size(); ++i) {
    double s = 0.0;
    for (const auto& a : g) s += a[i] * a[i];
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

void require_nonnegative(const Field& u0) {
  for (double v : u0.values)
    if (!(v >= 0.0)) throw std::invalid_argument("initial condition not nonnegative");
}

}  // namespace

// --- presets -----------------------------------------------------------------

Nonlinearity Nonlinearity::linear(double gamma) {
  Nonlinearity nl;
  nl.name = "linear";
  nl.f = [gamma](double u) { return gamma * u; };
  nl.sigma = [](double u) { return u; };
  nl.f_over_u = [gamma](double) { return gamma; };
  nl.sigma_over_u = [](double) { return 1.0; };
  nl.f_prime_0 = gamma;
  nl.sigma_is_identity = true;
  return nl;
}

Nonlinearity Nonlinearity::logistic(double gamma) {
  Nonlinearity nl;
  nl.name = "logistic";
  nl.f = [gamma](double u) { return gamma * u - u * u; };
  nl.sigma = [](double u) { return u; };
  nl.f_over_u = [gamma](double u) { return gamma - u; };
  nl.sigma_over_u = [](double) { return 1.0; };
  nl.f_prime_0 = gamma;
  nl.sigma_is_identity = true;
  return nl;
}

Nonlinearity Nonlinearity::quadratic() {
  Nonlinearity nl;
  nl.name = "quadratic";
  nl.f = [](double u) { return u * u; };
  nl.sigma = [](double u) { return u; };
  nl.f_over_u = [](double u) { return u; };
  nl.sigma_over_u = [](double) { return 1.0; };
  nl.f_prime_0 = 0.0;
  nl.sigma_is_identity = true;
  return nl;
}

Nonlinearity Nonlinearity::partially_linear(std::string name, std::function<double(double)> f, double f_prime_0) {
  Nonlinearity nl;
  nl.name = std::move(name);
  nl.f = f;
  nl.sigma = [](double u) { return u; };
  nl.f_over_u = [f, f_prime_0](double u) { return u == 0.0 ? f_prime_0 : f(u) / u; };
  nl.sigma_over_u = [](double) { return 1.0; };
  nl.f_prime_0 = f_prime_0;
  nl.sigma_is_identity = true;
  return nl;
}

Nonlinearity Nonlinearity::shifted_allen_cahn(double alpha) {
  Nonlinearity nl;
  nl.name = "shifted_allen_cahn";
  nl.f = [alpha](double v) {
    const double w = 1.0 - v;
    return -0.5 * alpha * (w * w * w - w);
  };
  nl.sigma = [](double v) { return v - 0.5 * v * v; };
  nl.f_over_u = [alpha](double v) { return 0.5 * alpha * (1.0 - v) * (2.0 - v); };
  nl.sigma_over_u = [](double v) { return 1.0 - 0.5 * v; };
  nl.f_prime_0 = alpha;
  return nl;
}

void Nonlinearity::validate() const {
  if (!f || !sigma || !f_over_u || !sigma_over_u) throw std::invalid_argument("nonlinearity incomplete");
  if (f(0.0) != 0.0) throw std::invalid_argument("nonlinearity requires f(0) = 0");
  if (sigma(0.0) != 0.0) throw std::invalid_argument("nonlinearity requires sigma(0) = 0");
  double prev = std::numeric_limits<double>::infinity();
  for (double u : {1e-3, 1e-4, 1e-5}) {
    const double dev = std::abs(sigma(u) / u - 1.0);
    if (!(dev <= prev + 1e-15)) throw std::invalid_argument("sigma(u)/u does not approach 1 at 0");
    prev = dev;
  }
  if (prev > 1e-3) throw std::invalid_argument("sigma(u)/u does not approach 1 at 0");
}

double compute_eps0(const Nonlinearity& nl, double lambda, double cap) {
  const double slope = nl.f_prime_0 - 0.5 * lambda;
  double eps0 = 0.0;
  // Log grid from 1e-12 up to cap; eps0 is the last point before the inequality first fails.
  for (int k = 0; k <= 1200; ++k) {
    const double u = 1e-12 * std::pow(10.0, k * std::log10(cap / 1e-12) / 1200.0);
    if (nl.f(u) < slope * u) break;
    eps0 = u;
  }
  return eps0;
}

// --- stepper -----------------------------------------------------------------

NonlinearStepper::NonlinearStepper(const CorrelationKernel& kernel, const Nonlinearity& nl, double dt)
    : kernel_(&kernel), nl_(&nl), dt_(dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
}

bool NonlinearStepper::advance(std::vector<double>& u, std::span<const double> dW) {
  const auto& tr = kernel_->trace().values;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double x = u[i];
    if (x == 0.0) continue;
    const double a = nl_->f_over_u(x);
    const double b = nl_->sigma_over_u(x);
    u[i] = x * std::exp((a - 0.5 * b * b * tr[i]) * dt_ + b * dW[i]);
  }
  for (double v : u)
    if (!std::isfinite(v) || v > kBlowUpLevel) return false;
  SpectralWorkspace::local(kernel_->grid()).heat(u, dt_);
  bool ok = true;
  for (double& v : u) {
    if (!std::isfinite(v)) ok = false;
    else if (v > kBlowUpLevel) ok = false;
    else if (v < 0.0) {
      v = 0.0;
      ++floors_;
    }
  }
  return ok;
}

NonlinearTrajectory evolve_nonlinear(const Field& u0, const Nonlinearity& nl, const CorrelationKernel& kernel,
                                     double horizon, double dt, const StreamKey& key, std::uint32_t start_step,
                                     std::size_t store_every) {
  if (u0.grid != kernel.grid()) throw std::invalid_argument("grid mismatch");
  require_nonnegative(u0);
  if (store_every == 0) throw std::invalid_argument("store_every must be positive");
  const std::size_t n = steps_for(horizon, dt);
  NonlinearTrajectory out;
  NoiseSource noise(kernel, dt, key);
  NonlinearStepper stepper(kernel, nl, dt);
  std::vector<double> u = u0.values, dW(u.size());
  out.times.push_back(0.0);
  out.fields.push_back(u0);
  for (std::size_t k = 0; k < n; ++k) {
    noise.increment(start_step + static_cast<std::uint32_t>(k), dW);
    const bool ok = stepper.advance(u, dW);
    ++out.grid_steps;
    if (!ok) {
      out.blowup.blown_up = true;
      out.blowup.blow_up_time = static_cast<double>(k + 1) * dt;
      break;
    }
    if ((k + 1) % store_every == 0) {
      out.times.push_back(static_cast<double>(k + 1) * dt);
      out.fields.emplace_back(u0.grid, u);
    }
  }
  out.floor_count = stepper.floor_count();
  return out;
}

std::vector<Field> solve_X(const NonlinearTrajectory& u_traj, const Nonlinearity& nl, const CorrelationKernel& kernel,
                           double dt, const StreamKey& key, std::uint32_t start_step) {
  if (u_traj.fields.empty()) return {};
  const GridDescriptor g = kernel.grid();
  for (std::size_t k = 1; k < u_traj.times.size(); ++k)
    if (std::abs(u_traj.times[k] - u_traj.times[k - 1] - dt) > 1e-9 * dt)
      throw std::invalid_argument("trajectory must be stored at every step");
  NoiseSource noise(kernel, dt, key);
  std::vector<double> x(g.size(), 0.0), dW(g.size());
  std::vector<Field> out;
  out.emplace_back(g, x);
  for (std::size_t k = 0; k + 1 < u_traj.fields.size(); ++k) {
    const auto& u = u_traj.fields[k].values;
    if (!(min_of(u) > 0.0)) throw std::runtime_error("positivity lost");
    noise.increment(start_step + static_cast<std::uint32_t>(k), dW);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] += nl.f_over_u(u[i]) * dt + nl.sigma_over_u(u[i]) * dW[i];
    SpectralWorkspace::local(g).heat(x, dt);
    out.emplace_back(g, x);
  }
  return out;
}

// --- stopping ------------------------------------------------------------------

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::none: return "none";
    case StopReason::cap: return "cap";
    case StopReason::sup_exit: return "sup-exit";
    case StopReason::x_drift: return "X-drift";
    case StopReason::y_norm: return "Y-norm";
  }
  return "none";
}

void StoppingParams::validate(PiecewiseMode mode) const {
  if (!(frak_t > 1.0)) throw std::invalid_argument("frak_t must exceed 1");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
  if (mode == PiecewiseMode::partially_linear) {
    if (!(eps < eps0)) throw std::invalid_argument("eps must be below eps0");
    return;
  }
  if (!(eps < eps1)) throw std::invalid_argument("eps must be below eps1");
  if (!(rho > 0.0 && rho < 0.5)) throw std::invalid_argument("rho must lie in (0, 1/2)");
  if (!(delta > 0.0) || !(M > 0.0) || !(C > 0.0)) throw std::invalid_argument("delta, M, C must be positive");
  if (delta * std::exp(C * frak_t * M * M) > 1.0)
    throw std::invalid_argument("delta exp(C frak_t M^2) must not exceed 1");
}

StopReason check_stop(const StoppingParams& p, PiecewiseMode mode, const MonitorSample& s) {
  if (mode == PiecewiseMode::partially_linear) {
    if (s.sup_psi >= p.eps0) return StopReason::sup_exit;
  } else {
    if (s.sup_psi >= p.eps1) return StopReason::sup_exit;
    if (s.xy_sup + std::pow(s.elapsed, p.rho) * s.xy_grad_sup >= p.delta) return StopReason::x_drift;
    if (s.y_c1 >= p.M) return StopReason::y_norm;
  }
  if (s.elapsed >= p.frak_t * (1.0 - 1e-12)) return StopReason::cap;
  return StopReason::none;
}

std::pair<std::size_t, StopReason> stopping_monitor(const std::vector<MonitorSample>& segment,
                                                    const StoppingParams& p, PiecewiseMode mode) {
  if (segment.empty()) throw std::invalid_argument("empty segment");
  for (std::size_t k = 1; k < segment.size(); ++k) {
    const StopReason r = check_stop(p, mode, segment[k]);
    if (r != StopReason::none) return {k, r};
  }
  return {segment.size() - 1, StopReason::none};
}

// --- piecewise process -------------------------------------------------------------

PiecewiseRecord piecewise_process(const Field& u0, const Nonlinearity& nl, const CorrelationKernel& kernel,
                                  const StoppingParams& params, const PiecewiseOptions& opt, PiecewiseMode mode,
                                  const StreamKey& key) {
  if (u0.grid != kernel.grid()) throw std::invalid_argument("grid mismatch");
  require_nonnegative(u0);
  params.validate(mode);
  const GridDescriptor g = kernel.grid();
  const double dt = opt.dt;
  const std::size_t n = steps_for(opt.horizon, dt);
  const bool nonlinear = mode == PiecewiseMode::fully_nonlinear;

  // Segments of the dampened linear flow use the same multiplicative stepper with drift
  // f'(0) - lambda/2, so the discrete comparison with u is exact.
  const Nonlinearity damped = Nonlinearity::linear(nl.f_prime_0 - 0.5 * opt.lambda);
  const Nonlinearity& seg_nl = nonlinear ? nl : damped;

  NoiseSource noise(kernel, dt, key);
  NonlinearStepper u_step(kernel, nl, dt);
  NonlinearStepper w_step(kernel, seg_nl, dt);
  std::vector<double> u = u0.values, w(g.size()), dW(g.size());
  const auto cutoff = [&](std::vector<double>& v) {
    for (double& x : v) x = std::min(x, params.eps);
  };
  w = u;
  cutoff(w);

  // Fully nonlinear: X, Y and the linear flow from the segment start.
  OUStepper Y(g, nl.f_prime_0, dt);
  std::vector<double> X(g.size(), 0.0), xy(g.size());
  std::vector<std::vector<double>> gxy(static_cast<std::size_t>(g.dim()), std::vector<double>(g.size()));
  std::vector<std::span<double>> gxy_spans;
  for (auto& a : gxy) gxy_spans.emplace_back(a);
  std::optional<LinearFlowStepper> phi;
  std::vector<double> phi_vals(g.size());
  const auto restart_segment = [&]() {
    if (!nonlinear) return;
    std::fill(X.begin(), X.end(), 0.0);
    Y.reset();
    phi.emplace(kernel, w, Y.Y(), 0.0, 0.0);
  };
  restart_segment();

  PiecewiseRecord rec;
  rec.jump_times.push_back(0.0);
  SegmentStats seg;
  seg.start = 0.0;
  seg.min_at_start = min_of(w);
  const auto neg_moment = [&](double m) { return m > 0.0 ? std::pow(m, -opt.eta) : INFINITY; };
  seg.sup_neg_moment = neg_moment(seg.min_at_start);
  double seg_start = 0.0;

  const auto record_invariants = [&]() {
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] > u[i]) ++rec.domination_violations;
    }
    rec.max_sup_w = std::max(rec.max_sup_w, sup_abs(w));
    rec.checked_points += w.size();
  };
  const auto store = [&](double t) {
    rec.times.push_back(t);
    rec.w_fields.emplace_back(g, w);
    rec.u_fields.emplace_back(g, u);
  };
  record_invariants();
  if (opt.store_every) store(0.0);

  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k + 1) * dt;
    noise.increment(static_cast<std::uint32_t>(k), dW);
    if (nonlinear) {
      // X uses the coefficients at the start of the step.
      for (std::size_t i = 0; i < X.size(); ++i)
        X[i] += nl.f_over_u(w[i]) * dt + nl.sigma_over_u(w[i]) * dW[i];
      SpectralWorkspace::local(g).heat(X, dt);
      const auto grad_start = Y.grad();
      Y.advance(dW);
      phi->advance(dt, grad_start, Y.grad());
    }
    const bool ok_u = u_step.advance(u, dW);
    const bool ok_w = w_step.advance(w, dW);
    if (!ok_u) {
      rec.blowup.blown_up = true;
      rec.blowup.blow_up_time = t;
      break;
    }
    if (!ok_w) throw std::runtime_error("segment process blew up");
    if (nonlinear && !(min_of(w) > 0.0)) throw std::runtime_error("positivity lost");

    MonitorSample s;
    s.elapsed = t - seg_start;
    s.sup_psi = sup_abs(w);
    if (nonlinear) {
      for (std::size_t i = 0; i < xy.size(); ++i) xy[i] = X[i] - Y.Y()[i];
      SpectralWorkspace::local(g).gradient(xy, gxy_spans);
      s.xy_sup = sup_abs(xy);
      s.xy_grad_sup = grad_sup(gxy);
      s.y_c1 = Y.sup_norm() + Y.grad_sup_norm();
      rec.max_y_c1 = std::max(rec.max_y_c1, s.y_c1);
      phi->phi(Y.Y(), phi_vals);
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (phi_vals[i] > 0.0) rec.min_comparison_ratio = std::min(rec.min_comparison_ratio, w[i] / phi_vals[i]);
        if (w[i] < 0.5 * phi_vals[i]) ++rec.comparison_violations;
      }
    }
    seg.sup_neg_moment = std::max(seg.sup_neg_moment, neg_moment(min_of(w)));
    const StopReason r = check_stop(params, mode, s);
    if (r != StopReason::none) {
      seg.end = t;
      seg.reason = r;
      rec.segments.push_back(seg);
      rec.which_stop.push_back(r);
      rec.jump_times.push_back(t);
      if (rec.jump_times.size() > n + 1) throw std::runtime_error("stopping cascade");
      cutoff(w);
      seg = SegmentStats{};
      seg.start = t;
      seg.min_at_start = min_of(w);
      seg.sup_neg_moment = neg_moment(seg.min_at_start);
      seg_start = t;
      restart_segment();
    }
    record_invariants();
    if (opt.store_every && (k + 1) % opt.store_every == 0) store(t);
  }
  // Trailing open segment.
  seg.end = rec.blowup.blown_up ? *rec.blowup.blow_up_time : static_cast<double>(n) * dt;
  seg.reason = StopReason::none;
  if (seg.end > seg.start) rec.segments.push_back(seg);
  return rec;
}

// --- negative moments ----------------------------------------------------------

Field moment_initial_condition(const GridDescriptor& g, double scale) {
  return make_field(g, [scale](double x, double) { return scale * (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * x)) / 0.5; });
}

MomentFit fit_moment_model(const MomentTable& table, double eta) {
  const std::size_t ns = table.scales.size(), nc = table.checkpoints.size();
  if (ns == 0 || nc == 0) throw std::invalid_argument("empty moment table");
  struct Sol {
    double C1, C2, sse;
  };
  const auto solve = [&](double zeta) {
    // Normal equations for y = C1 a + C2.
    double saa = 0, sa = 0, s1 = 0, say = 0, sy = 0;
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t c = 0; c < nc; ++c) {
        const double a = std::exp(-zeta * table.checkpoints[c]) * std::pow(table.scales[s], -eta);
        const double y = table.mean[s][c];
        saa += a * a;
        sa += a;
        s1 += 1.0;
        say += a * y;
        sy += y;
      }
    const double det = saa * s1 - sa * sa;
    Sol out{0.0, 0.0, 0.0};
    if (std::abs(det) < 1e-300) {
      out.C2 = sy / s1;
    } else {
      out.C1 = (say * s1 - sa * sy) / det;
      out.C2 = (saa * sy - sa * say) / det;
    }
    for (std::size_t s = 0; s < ns; ++s)
      for (std::size_t c = 0; c < nc; ++c) {
        const double a = std::exp(-zeta * table.checkpoints[c]) * std::pow(table.scales[s], -eta);
        const double r = table.mean[s][c] - out.C1 * a - out.C2;
        out.sse += r * r;
      }
    return out;
  };
  // Coarse scan then golden-section refinement.
  const double lo = -5.0, hi = 10.0;
  const int grid = 3000;
  double best_z = lo, best = INFINITY;
  for (int i = 0; i <= grid; ++i) {
    const double z = lo + (hi - lo) * i / grid;
    const double v = solve(z).sse;
    if (v < best) {
      best = v;
      best_z = z;
    }
  }
  double a = best_z - (hi - lo) / grid, b = best_z + (hi - lo) / grid;
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int it = 0; it < 100; ++it) {
    const double c = b - phi * (b - a), d = a + phi * (b - a);
    if (solve(c).sse < solve(d).sse) b = d;
    else a = c;
  }
  const double z = 0.5 * (a + b);
  const Sol s = solve(z);
  MomentFit fit;
  fit.C1 = s.C1;
  fit.C2 = s.C2;
  fit.zeta = z;
  double ss = 0.0;
  for (std::size_t si = 0; si < ns; ++si)
    for (std::size_t c = 0; c < nc; ++c) {
      const double r = table.mean[si][c] - (s.C1 * std::exp(-z * table.checkpoints[c]) * std::pow(table.scales[si], -eta) + s.C2);
      fit.residuals.push_back(r);
      ss += r * r;
    }
  fit.rms_residual = std::sqrt(ss / static_cast<double>(ns * nc));
  return fit;
}

MomentTable negative_moment_experiment(const Nonlinearity& nl, const CorrelationKernel& kernel,
                                       const MomentConfig& cfg) {
  if (!(cfg.eta > 0.0)) throw std::invalid_argument("eta must be positive");
  if (cfg.scales.empty() || cfg.checkpoints.empty()) throw std::invalid_argument("scales and checkpoints required");
  if (!std::is_sorted(cfg.checkpoints.begin(), cfg.checkpoints.end()) || !(cfg.checkpoints.front() > 0.0))
    throw std::invalid_argument("checkpoints must be positive and increasing");
  if (cfg.n_paths < 2) throw std::invalid_argument("n_paths must be at least 2");
  const GridDescriptor g = kernel.grid();
  const double horizon = cfg.checkpoints.back();
  const std::size_t n = steps_for(horizon, cfg.dt);
  std::vector<std::size_t> check_steps;
  for (double c : cfg.checkpoints) check_steps.push_back(steps_for(c, cfg.dt));
  const std::size_t ns = cfg.scales.size(), nc = check_steps.size();

  struct PathResult {
    std::vector<double> values;  // [scale * nc + checkpoint]
    std::vector<char> blown;     // per scale
  };
  const auto results = parallel_map<PathResult>(cfg.n_paths, cfg.threads, [&](std::size_t p) {
    PathResult r{std::vector<double>(ns * nc, 0.0), std::vector<char>(ns, 0)};
    const StreamKey key{cfg.seed, static_cast<std::uint32_t>(p), cfg.stream_tag};
    NoiseSource noise(kernel, cfg.dt, key);
    std::vector<double> dW(g.size());
    std::vector<std::vector<double>> us;
    std::vector<NonlinearStepper> steppers;
    for (double s : cfg.scales) {
      us.push_back(moment_initial_condition(g, s).values);
      steppers.emplace_back(kernel, nl, cfg.dt);
    }
    std::size_t next = 0;
    for (std::size_t k = 0; k < n; ++k) {
      noise.increment(static_cast<std::uint32_t>(k), dW);
      for (std::size_t s = 0; s < ns; ++s) {
        if (r.blown[s]) continue;
        if (!steppers[s].advance(us[s], dW)) r.blown[s] = 1;
      }
      while (next < nc && check_steps[next] == k + 1) {
        for (std::size_t s = 0; s < ns; ++s) {
          if (r.blown[s]) continue;  // blown-up paths contribute 0
          const double m = min_of(us[s]);
          r.values[s * nc + next] = m > 0.0 ? std::pow(m, -cfg.eta) : INFINITY;
        }
        ++next;
      }
    }
    return r;
  });

  MomentTable t;
  t.scales = cfg.scales;
  t.checkpoints = cfg.checkpoints;
  t.mean.assign(ns, std::vector<double>(nc));
  t.se.assign(ns, std::vector<double>(nc));
  t.blowups.assign(ns, 0);
  std::vector<double> col(cfg.n_paths);
  for (std::size_t s = 0; s < ns; ++s) {
    for (const auto& r : results) t.blowups[s] += r.blown[s] ? 1 : 0;
    for (std::size_t c = 0; c < nc; ++c) {
      for (std::size_t p = 0; p < cfg.n_paths; ++p) col[p] = results[p].values[s * nc + c];
      const MeanSE m = mean_se(col);
      t.mean[s][c] = m.mean;
      t.se[s][c] = m.se;
    }
  }
  t.fit = fit_moment_model(t, cfg.eta);
  return t;
}

double linear_exit_time(const CorrelationKernel& kernel, double gamma, double alpha, double beta, double horizon,
                        double dt, const StreamKey& key) {
  if (!(0.0 < alpha && alpha < beta)) throw std::invalid_argument("exit levels require 0 < alpha < beta");
  const GridDescriptor g = kernel.grid();
  const Field w0 = make_field(g, [alpha](double x, double) {
    return alpha * (1.0 + 0.5 * std::sin(2.0 * std::numbers::pi * x)) / 1.5;
  });
  const std::size_t n = steps_for(horizon, dt);
  LinearPathSimulator sim(kernel, gamma, dt, key);
  sim.add_flow(w0.values);
  std::vector<double> phi(g.size());
  for (std::size_t k = 0; k < n; ++k) {
    sim.step();
    sim.flow(0).phi(sim.ou().Y(), phi);
    if (sup_abs(phi) >= beta) return sim.time();
  }
  return horizon;
}

}  // namespace rdlab
