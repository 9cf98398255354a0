#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "rdlab/linear_flow.hpp"
#include "rdlab/nonlinear_flow.hpp"

using namespace rdlab;

namespace {
constexpr double pi = std::numbers::pi;

Field bump(const GridDescriptor& g, double scale) {
  return make_field(g, [scale](double x, double) { return scale * (1.0 + 0.5 * std::sin(2 * pi * x)); });
}

double max_diff(const Field& a, const Field& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
}  // namespace

TEST_CASE("nonlinearity presets satisfy the normalization") {
  for (const auto& nl : {Nonlinearity::linear(1.0), Nonlinearity::logistic(1.0), Nonlinearity::quadratic(),
                         Nonlinearity::shifted_allen_cahn(1.5)}) {
    CHECK_NOTHROW(nl.validate());
    for (double u : {1e-3, 0.1, 0.7, 1.9}) {
      CHECK(nl.f_over_u(u) * u == doctest::Approx(nl.f(u)).epsilon(1e-12));
      CHECK(nl.sigma_over_u(u) * u == doctest::Approx(nl.sigma(u)).epsilon(1e-12));
    }
  }
  auto ac = Nonlinearity::shifted_allen_cahn(1.5);
  CHECK((ac.f(1e-7) - ac.f(-1e-7)) / 2e-7 == doctest::Approx(1.5).epsilon(1e-6));
  CHECK(ac.f(1.0) == doctest::Approx(0.0));
  CHECK(ac.f(2.0) == doctest::Approx(0.0));

  Nonlinearity bad = Nonlinearity::linear(1.0);
  bad.sigma = [](double u) { return 2.0 * u; };
  CHECK_THROWS(bad.validate());
  bad = Nonlinearity::linear(1.0);
  bad.f = [](double u) { return 1.0 + u; };
  CHECK_THROWS(bad.validate());
}

TEST_CASE("eps0 for the logistic reaction is lambda / 2") {
  auto nl = Nonlinearity::logistic(1.0);
  const double e0 = compute_eps0(nl, 0.6);
  CHECK(e0 <= 0.3);
  CHECK(e0 >= 0.29);
  CHECK(compute_eps0(Nonlinearity::linear(1.0), 0.6, 5.0) == doctest::Approx(5.0));
}

TEST_CASE("linear preset agrees with the transformed linear solver") {
  GridDescriptor g(1, 32);
  SUBCASE("constant kernel: both are exact") {
    auto k = build_kernel(KernelSpec::constant(1.0), g);
    const StreamKey key{3, 0, 0};
    auto tr = evolve_nonlinear(bump(g, 1.0), Nonlinearity::linear(1.0), k, 1.0, 1e-3, key, 0, 1000);
    auto ou = solve_Y(k, 1.0, 1.0, 1e-3, key);
    auto lin = evolve_linear(bump(g, 1.0), ou, k, 0.0);
    CHECK(max_diff(tr.fields.back(), lin.back()) <= 1e-10);
  }
  SUBCASE("gaussian kernel: difference shrinks under refinement") {
    auto k = build_kernel(KernelSpec::gaussian(0.25), g);
    const StreamKey key{3, 0, 0};
    double prev = INFINITY;
    for (double dt : {2e-3, 5e-4}) {
      auto tr = evolve_nonlinear(bump(g, 1.0), Nonlinearity::linear(1.0), k, 1.0, dt, key, 0,
                                 static_cast<std::size_t>(std::lround(1.0 / dt)));
      auto ou = solve_Y(k, 1.0, 1.0, dt, key);
      auto lin = evolve_linear(bump(g, 1.0), ou, k, 0.0);
      const double d = max_diff(tr.fields.back(), lin.back());
      CHECK(d < prev);
      prev = d;
    }
  }
}

TEST_CASE("quadratic reaction blows up at the ODE time") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::zero(), g);
  auto tr = evolve_nonlinear(Field(g, 2.0), Nonlinearity::quadratic(), k, 1.0, 1e-3, {1, 0, 0});
  REQUIRE(tr.blowup.blown_up);
  // The explicit step lags the exact blow-up time 1/u0 = 0.5 by O(dt log(1/dt)).
  CHECK(*tr.blowup.blow_up_time >= 0.5);
  CHECK(*tr.blowup.blow_up_time <= 0.52);
}

TEST_CASE("zero stays zero and negative data is rejected") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  auto tr = evolve_nonlinear(Field(g, 0.0), Nonlinearity::logistic(1.0), k, 0.5, 1e-3, {1, 0, 0}, 0, 100);
  for (const auto& f : tr.fields)
    for (double v : f.values) CHECK(v == 0.0);
  Field neg(g, 1.0);
  neg[2] = -1e-3;
  CHECK_THROWS_WITH(evolve_nonlinear(neg, Nonlinearity::logistic(1.0), k, 0.5, 1e-3, {1, 0, 0}),
                    "initial condition not nonnegative");
}

TEST_CASE("solution is monotone in the initial condition on common noise") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  auto a = evolve_nonlinear(bump(g, 0.2), Nonlinearity::logistic(1.0), k, 2.0, 1e-3, {4, 1, 0}, 0, 50);
  auto b = evolve_nonlinear(bump(g, 0.3), Nonlinearity::logistic(1.0), k, 2.0, 1e-3, {4, 1, 0}, 0, 50);
  std::size_t fails = 0;
  for (std::size_t n = 0; n < a.fields.size(); ++n)
    for (std::size_t i = 0; i < g.size(); ++i)
      if (a.fields[n][i] > b.fields[n][i]) ++fails;
  CHECK(fails == 0);
  CHECK(a.floor_count == 0);
}

TEST_CASE("X coincides with Y for the linear preset") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  const StreamKey key{6, 2, 0};
  auto tr = evolve_nonlinear(bump(g, 1.0), Nonlinearity::linear(0.7), k, 0.5, 1e-3, key);
  auto X = solve_X(tr, Nonlinearity::linear(0.7), k, 1e-3, key);
  auto ou = solve_Y(k, 0.7, 0.5, 1e-3, key);
  REQUIRE(X.size() == ou.fields.size());
  for (double v : X.front().values) CHECK(v == 0.0);
  for (std::size_t n = 0; n < X.size(); ++n) CHECK(max_diff(X[n], ou.fields[n]) <= 1e-12);
}

TEST_CASE("X stays close to Y at small amplitude for Allen-Cahn") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::constant(1.0), g);
  const StreamKey key{6, 3, 0};
  auto nl = Nonlinearity::shifted_allen_cahn(1.0);
  auto tr = evolve_nonlinear(bump(g, 1e-4), nl, k, 1.0, 1e-3, key);
  double usup = 0.0;
  for (const auto& f : tr.fields) usup = std::max(usup, grid_reduce(f, Reduction::linf));
  REQUIRE(usup <= 1e-3);
  auto X = solve_X(tr, nl, k, 1e-3, key);
  auto ou = solve_Y(k, 1.0, 1.0, 1e-3, key);
  double d = 0.0;
  for (std::size_t n = 0; n < X.size(); ++n) d = std::max(d, max_diff(X[n], ou.fields[n]));
  CHECK(d <= 1e-2);
}

TEST_CASE("solve_X rejects trajectories that lost positivity") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::zero(), g);
  auto tr = evolve_nonlinear(Field(g, 0.0), Nonlinearity::linear(1.0), k, 0.01, 1e-3, {1, 0, 0});
  CHECK_THROWS_WITH(solve_X(tr, Nonlinearity::linear(1.0), k, 1e-3, {1, 0, 0}), "positivity lost");
}

TEST_CASE("stopping monitor") {
  StoppingParams p;
  p.eps0 = 0.1;
  p.eps = 0.05;
  std::vector<MonitorSample> seg(5);
  for (std::size_t k = 0; k < seg.size(); ++k) seg[k].elapsed = 0.5 * k;
  auto [idx, why] = stopping_monitor(seg, p, PiecewiseMode::partially_linear);
  CHECK(idx == 3);
  CHECK(why == StopReason::cap);
  seg[2].sup_psi = 0.2;
  std::tie(idx, why) = stopping_monitor(seg, p, PiecewiseMode::partially_linear);
  CHECK(idx == 2);
  CHECK(why == StopReason::sup_exit);

  StoppingParams q;
  q.eps1 = 1e-7;
  q.eps = 5e-8;
  std::vector<MonitorSample> s2(3);
  s2[1].elapsed = 0.1;
  s2[1].xy_sup = 2e-6;
  CHECK(stopping_monitor(s2, q, PiecewiseMode::fully_nonlinear).second == StopReason::x_drift);
  s2[1].xy_sup = 0.0;
  s2[1].y_c1 = 5.0;
  CHECK(stopping_monitor(s2, q, PiecewiseMode::fully_nonlinear).second == StopReason::y_norm);

  q.M = 10.0;
  CHECK_THROWS(q.validate(PiecewiseMode::fully_nonlinear));
  q.M = 3.0;
  q.rho = 0.6;
  CHECK_THROWS(q.validate(PiecewiseMode::fully_nonlinear));
  StoppingParams r;
  r.frak_t = 0.5;
  CHECK_THROWS(r.validate(PiecewiseMode::partially_linear));
}

TEST_CASE("piecewise process without noise only stops at the cap") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::zero(), g);
  StoppingParams p;
  p.eps0 = 0.1;
  p.eps = 0.05;
  p.frak_t = 1.5;
  PiecewiseOptions opt;
  opt.horizon = 5.0;
  auto rec = piecewise_process(bump(g, 0.01), Nonlinearity::linear(0.0), k, p, opt, PiecewiseMode::partially_linear,
                               {1, 0, 0});
  CHECK(rec.jump_times.size() == 4);
  for (auto r : rec.which_stop) CHECK(r == StopReason::cap);
  for (std::size_t i = 1; i < rec.jump_times.size(); ++i)
    CHECK(rec.jump_times[i] - rec.jump_times[i - 1] <= p.frak_t + 1e-9);
}

TEST_CASE("deterministic logistic comparison keeps w below u") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::zero(), g);
  const double gamma = 1.0, lambda = gamma;  // lambda = gamma without noise
  auto nl = Nonlinearity::logistic(gamma);
  StoppingParams p;
  p.eps0 = compute_eps0(nl, lambda);
  p.eps = 0.5 * p.eps0;
  PiecewiseOptions opt;
  opt.horizon = 5.0;
  opt.lambda = lambda;
  opt.store_every = 100;
  auto rec = piecewise_process(bump(g, 0.01), nl, k, p, opt, PiecewiseMode::partially_linear, {1, 0, 0});
  CHECK(rec.domination_violations == 0);
  CHECK(rec.max_sup_w <= p.eps0);
  CHECK(rec.times.size() == 51);
}

TEST_CASE("single segment without stopping equals the damped flow of the cut initial datum") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  StoppingParams p;
  p.eps0 = INFINITY;
  p.eps = 0.3;
  p.frak_t = 2.0;
  PiecewiseOptions opt;
  opt.horizon = 2.0;
  opt.lambda = 0.4;
  opt.store_every = 2000;
  const StreamKey key{2, 0, 0};
  const Field u0 = bump(g, 0.4);
  auto rec = piecewise_process(u0, Nonlinearity::linear(1.0), k, p, opt, PiecewiseMode::partially_linear, key);
  CHECK(rec.segments.size() == 1);
  Field cut = u0;
  for (double& v : cut.values) v = std::min(v, p.eps);
  auto xi = evolve_nonlinear(cut, Nonlinearity::linear(1.0 - 0.2), k, 2.0, 1e-3, key, 0, 2000);
  // Final stored snapshot precedes the cut at the cap.
  REQUIRE(rec.w_fields.size() == 2);
  CHECK(max_diff(rec.u_fields.back(), evolve_nonlinear(u0, Nonlinearity::linear(1.0), k, 2.0, 1e-3, key, 0, 2000).fields.back()) == 0.0);
  Field recut = xi.fields.back();
  for (double& v : recut.values) v = std::min(v, p.eps);
  CHECK(max_diff(rec.w_fields.back(), recut) == 0.0);
}

TEST_CASE("fully nonlinear segments dominate half the linear flow") {
  // The spectral heat step is a positive operator only when exp(-4 pi^2 (N/2)^2 dt) is negligible;
  // at N = 32, dt = 1e-3 the discrete comparison fails at round-off level.
  GridDescriptor g(1, 64);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  auto nl = Nonlinearity::shifted_allen_cahn(1.5);
  StoppingParams q;
  q.frak_t = 1.5;
  q.M = 3.0;
  q.delta = 1e-6;
  q.eps1 = 1e-7;
  q.eps = 5e-8;
  PiecewiseOptions opt;
  opt.horizon = 3.0;
  for (std::uint32_t path = 0; path < 3; ++path) {
    auto rec = piecewise_process(bump(g, 4e-8), nl, k, q, opt, PiecewiseMode::fully_nonlinear, {7, path, 1});
    CHECK(rec.comparison_violations == 0);
    CHECK(rec.domination_violations == 0);
    CHECK(rec.max_sup_w < q.eps1);
    CHECK(rec.min_comparison_ratio > 0.5);
  }
}

TEST_CASE("negative moments of geometric Brownian motion") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::constant(1.0), g);
  MomentConfig cfg;
  cfg.eta = 0.05;
  cfg.n_paths = 200;
  cfg.checkpoints = {1.0, 2.0, 5.0};
  cfg.scales = {1e-1, 1e-3};
  const double gamma = 1.0;
  auto t = negative_moment_experiment(Nonlinearity::linear(gamma), k, cfg);
  for (std::size_t s = 0; s < cfg.scales.size(); ++s) {
    CHECK(t.blowups[s] == 0);
    for (std::size_t c = 0; c < cfg.checkpoints.size(); ++c) {
      const double tt = cfg.checkpoints[c];
      const double m0 = grid_reduce(heat_semigroup_apply(moment_initial_condition(g, cfg.scales[s]), tt), Reduction::min);
      const double exact = std::pow(m0, -cfg.eta) * std::exp(cfg.eta * (-gamma + (1 + cfg.eta) * 0.5) * tt);
      CHECK(std::abs(t.mean[s][c] - exact) <= 3.0 * t.se[s][c]);
    }
  }
}

TEST_CASE("moment model fit recovers planted parameters") {
  MomentTable t;
  t.scales = {1e-1, 1e-2, 1e-3};
  t.checkpoints = {1, 2, 5, 10};
  for (double s : t.scales) {
    std::vector<double> row;
    for (double c : t.checkpoints) row.push_back(2.0 * std::exp(-0.3 * c) * std::pow(s, -0.1) + 0.5);
    t.mean.push_back(row);
  }
  auto fit = fit_moment_model(t, 0.1);
  CHECK(fit.zeta == doctest::Approx(0.3).epsilon(1e-6));
  CHECK(fit.C1 == doctest::Approx(2.0).epsilon(1e-6));
  CHECK(fit.C2 == doctest::Approx(0.5).epsilon(1e-5));
  CHECK(fit.rms_residual <= 1e-8);
}

TEST_CASE("exit time of the noiseless linear flow") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::zero(), g);
  // Sup decays to the mean alpha/1.5 quickly, then grows like e^{gamma t}.
  const double t = linear_exit_time(k, 1.0, 0.3, 0.6, 5.0, 1e-3, {1, 0, 0});
  CHECK(t == doctest::Approx(std::log(0.6 / 0.2)).epsilon(1e-2));
  CHECK(linear_exit_time(k, -1.0, 0.3, 0.6, 2.0, 1e-3, {1, 0, 0}) == 2.0);
}
