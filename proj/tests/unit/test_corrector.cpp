#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rdlab/corrector.hpp"
#include "rdlab/lyapunov.hpp"
#include "rdlab/stats.hpp"

using namespace rdlab;

namespace {
constexpr double pi = std::numbers::pi;

CorrectorConfig small_config(double gamma, double lambda) {
  CorrectorConfig c;
  c.gamma = gamma;
  c.lambda = lambda;
  c.n_paths = 40;
  c.T = 1.0;
  c.burn_in = 5.0;
  c.seed = 17;
  return c;
}
}  // namespace

TEST_CASE("velocity direction vanishes for a constant kernel") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::constant(2.0), g);
  for (const auto& p : random_points(g, 10, 4, 0.3)) {
    const Field N = velocity_direction(p, k);
    for (double v : N.values) CHECK(std::abs(v) <= 1e-12);
  }
}

TEST_CASE("velocity direction at the uniform point matches brute-force sums") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  const std::size_t n = g.size();
  const Field N = velocity_direction(uniform_point(g), k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) total += k.kappa(i, j);
  total /= static_cast<double>(n * n);
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += k.kappa(i, j);
    row /= static_cast<double>(n);
    CHECK(std::abs(N[i] - (row - total)) <= 1e-12);
  }
}

TEST_CASE("uniform bound on the velocity ratio") {
  GridDescriptor g(1, 64);
  auto k = build_kernel(KernelSpec::gaussian(0.1), g);
  std::size_t fails = 0;
  for (const auto& p : random_points(g, 1000, 8, 0.3)) {
    const Field N = velocity_direction(p, k);
    double r = 0.0;
    for (std::size_t i = 0; i < N.size(); ++i) r = std::max(r, std::abs(N[i] / p[i]));
    if (r > 2.0 * k.sup_norm()) ++fails;
  }
  CHECK(fails == 0);
}

TEST_CASE("corrector vanishes for a constant kernel") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::constant(1.0), g);
  auto cfg = small_config(1.0, 0.5);
  auto pool = StationaryPool::build(k, cfg.gamma, cfg.dt, 2.0, 4, cfg.seed, 1, 1);
  for (const auto& p : random_points(g, 3, 2, 0.3)) {
    auto e = estimate_G(p, k, cfg, pool);
    CHECK(e.se > 0.0);
    CHECK(std::abs(e.value) <= 3.0 * e.se);
  }
  auto r = generator_residual(uniform_point(g), 0.02, k, cfg, pool);
  CHECK(std::abs(r.residual) <= 3.0 * r.se);
}

TEST_CASE("generator residual without noise is exact") {
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::zero(), g);
  auto cfg = small_config(0.3, 0.3);
  StationaryPool pool;
  pool.samples.push_back(std::vector<double>(g.size(), 1.0));
  auto r = generator_residual(uniform_point(g), 0.02, k, cfg, pool);
  CHECK(r.deterministic);
  CHECK(r.residual == 0.0);
  CHECK_THROWS(generator_residual(uniform_point(g), 0.5, k, cfg, pool));
}

TEST_CASE("gaussian kernel corrector: centering, truncation and generator refinement") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  auto cfg = small_config(0.6, 0.0);
  auto pool = StationaryPool::build(k, cfg.gamma, cfg.dt, cfg.burn_in, 40, cfg.seed, 1, 1);
  double mq = 0.0;
  for (const auto& s : pool.samples) mq += k.quadratic_form_factor(s);
  cfg.lambda = cfg.gamma - 0.5 * mq / static_cast<double>(pool.samples.size());

  SUBCASE("stationary mean of G is zero") {
    auto stationary = StationaryPool::build(k, cfg.gamma, cfg.dt, cfg.burn_in, 20, cfg.seed + 1, 2, 1);
    auto s = sample_corrector(stationary.samples, k, cfg, pool);
    std::vector<double> means;
    for (const auto& col : s.at_T) means.push_back(mean_se(col).mean);
    const auto m = mean_se(means);
    CHECK(std::abs(m.mean) <= 3.0 * m.se);
  }
  SUBCASE("doubling the truncation time stays inside the tail bound") {
    auto p = project(make_field(g, [](double x, double) { return 1.0 + 0.3 * std::cos(2 * pi * x); }));
    auto s = sample_corrector({std::vector<double>(p.values().begin(), p.values().end())}, k, cfg, pool, true);
    std::vector<double> diff(cfg.n_paths);
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = s.at_2T[0][i] - s.at_T[0][i];
    const auto d = mean_se(diff);
    const double tail = f_sup_bound(k, cfg.gamma, cfg.lambda) * std::exp(-s.zeta_prime * cfg.T) / s.zeta_prime;
    CHECK(s.zeta_prime > 0.0);
    CHECK(std::abs(d.mean) <= tail + 3.0 * d.se);
  }
  SUBCASE("generator residual shrinks when h is halved") {
    auto p = project(make_field(g, [](double x, double) { return 1.0 + 0.3 * std::cos(2 * pi * x); }));
    auto r1 = generator_residual(p, 0.04, k, cfg, pool);
    auto r2 = generator_residual(p, 0.02, k, cfg, pool);
    CHECK(std::abs(r2.residual) <= std::abs(r1.residual) + 3.0 * (r1.se + r2.se));
  }
}

TEST_CASE("Frechet bound at a smooth point") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  auto cfg = small_config(0.6, 0.29);
  auto pool = StationaryPool::build(k, cfg.gamma, cfg.dt, cfg.burn_in, 20, cfg.seed, 1, 1);
  auto pts = random_points(g, 12, 31);
  auto scan = scan_corrector(pts, k, cfg, pool, 1.0);
  CHECK(scan.lipschitz_dR >= scan.lipschitz_dP);
  auto p = project(make_field(g, [](double x, double) { return 1.0 + 0.3 * std::cos(2 * pi * x); }));
  auto c = frechet_bound_check(p, k, cfg, pool, scan.lipschitz_dP);
  CHECK(c.ratio_sup <= c.uniform_bound);
  CHECK(c.holds());
}

TEST_CASE("admissible eta and supermartingale preconditions") {
  CHECK(eta_zero(1.0, 1.0, 0.0, 0.0) == doctest::Approx(1.0));
  CHECK(eta_zero(1.0, 1.0, 1.0, 0.1) == doctest::Approx(0.5 / 8.5));
  CHECK(eta_zero(1.0, 1.0, 0.0, 2.0) == doctest::Approx(0.25));
  GridDescriptor g(1, 16);
  auto k = build_kernel(KernelSpec::constant(1.0), g);
  auto cfg = small_config(0.3, -0.2);
  StationaryPool pool;
  pool.samples.push_back(std::vector<double>(g.size(), 1.0));
  SupermartingaleConfig sm;
  CHECK_THROWS_WITH(supermartingale_check(uniform_point(g), k, cfg, pool, sm, 1.0),
                    "supermartingale check requires lambda > 0");
  cfg.lambda = 0.5;
  sm.eta = 0.2;
  CHECK_THROWS_WITH(supermartingale_check(uniform_point(g), k, cfg, pool, sm, 0.1),
                    "eta above admissible threshold eta0");
}

TEST_CASE("supermartingale check reproduces geometric Brownian negative moments") {
  GridDescriptor g(1, 16);
  const double gamma = 1.0, s2 = 1.0, eta = 0.05;
  auto k = build_kernel(KernelSpec::constant(s2), g);
  auto cfg = small_config(gamma, gamma - 0.5 * s2);
  StationaryPool pool;
  pool.samples.push_back(std::vector<double>(g.size(), 1.0));
  SupermartingaleConfig sm;
  sm.eta = eta;
  sm.n_paths = 300;
  sm.checkpoints = {1.0, 2.0, 5.0};
  auto rep = supermartingale_check(uniform_point(g), k, cfg, pool, sm, eta_zero(cfg.lambda, s2, 0.0, 0.0));
  for (const auto& row : rep.rows) {
    const double exact = std::exp(eta * (-gamma + (1.0 + eta) * s2 / 2.0) * row.t);
    CHECK(std::abs(row.moment - exact) <= 3.0 * row.moment_se);
    CHECK(row.v_holds);
    CHECK(row.v0_holds);
  }
  sm.eta = 0.0;
  auto flat = supermartingale_check(uniform_point(g), k, cfg, pool, sm, 1.0);
  for (const auto& row : flat.rows) {
    CHECK(row.lhs == 1.0);
    CHECK(row.rhs == 1.0);
  }
}
