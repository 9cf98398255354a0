#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rdlab/linear_flow.hpp"

using namespace rdlab;

namespace {
constexpr double pi = std::numbers::pi;

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}
}  // namespace

TEST_CASE("solve_Y without noise is pure drift") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::zero(), g);
  auto ou = solve_Y(k, 2.0, 1.0, 1e-2, {1, 0, 0});
  CHECK(ou.fields.size() == 101);
  for (double v : ou.fields.front().values) CHECK(v == 0.0);
  for (double v : ou.fields.back().values) CHECK(v == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(max_abs(ou.grad_fields.back()[0].values) <= 1e-12);
  CHECK_THROWS(solve_Y(k, 2.0, 1.0, 0.3, {1, 0, 0}));
}

TEST_CASE("solve_Y moments") {
  GridDescriptor g(1, 16);
  const int paths = 10000;
  SUBCASE("constant kernel gives a Brownian path with unit variance at t=1") {
    auto k = build_kernel(KernelSpec::constant(1.0), g);
    std::vector<double> y1(paths);
    for (int p = 0; p < paths; ++p) {
      auto ou = solve_Y(k, 0.0, 1.0, 0.02, {3, static_cast<std::uint32_t>(p), 0});
      const auto& last = ou.fields.back().values;
      for (double v : last) CHECK(v == doctest::Approx(last[0]).epsilon(1e-12));
      y1[p] = last[0];
    }
    double m = 0, m2 = 0, m4 = 0;
    for (double v : y1) m += v;
    m /= paths;
    for (double v : y1) {
      m2 += (v - m) * (v - m);
      m4 += std::pow(v - m, 4);
    }
    const double var = m2 / (paths - 1);
    const double se = std::sqrt((m4 / paths - var * var) / paths);
    CHECK(std::abs(var - 1.0) <= 3 * se);
  }
  SUBCASE("mean of Y_t equals gamma t") {
    auto k = build_kernel(KernelSpec::gaussian(0.25), g);
    std::vector<double> sum(16, 0.0), sum2(16, 0.0);
    for (int p = 0; p < paths; ++p) {
      auto ou = solve_Y(k, 0.5, 2.0, 0.05, {4, static_cast<std::uint32_t>(p), 0});
      for (int i = 0; i < 16; ++i) {
        const double v = ou.fields.back()[i];
        sum[i] += v;
        sum2[i] += v * v;
      }
    }
    for (int i = 0; i < 16; ++i) {
      const double m = sum[i] / paths;
      const double se = std::sqrt((sum2[i] / paths - m * m) / paths);
      CHECK(std::abs(m - 1.0) <= 3 * se);
    }
  }
}

TEST_CASE("evolve_linear reductions") {
  GridDescriptor g(1, 64);
  SUBCASE("noiseless flow is the heat flow") {
    auto k = build_kernel(KernelSpec::zero(), g);
    auto ou = solve_Y(k, 0.0, 0.2, 1e-3, {1, 0, 0});
    auto w0 = make_field(g, [](double x, double) { return 1 + 0.8 * std::sin(2 * pi * x) + 0.1 * std::cos(10 * pi * x); });
    auto traj = evolve_linear(w0, ou, k, 0.0);
    auto ref = heat_semigroup_apply(w0, 0.2);
    for (std::size_t i = 0; i < g.size(); ++i) CHECK(std::abs(traj.back()[i] - ref[i]) <= 1e-8);
  }
  SUBCASE("constant kernel reproduces geometric Brownian motion") {
    auto k = build_kernel(KernelSpec::constant(1.0), g);
    const double gamma = 0.7;
    auto ou = solve_Y(k, gamma, 1.0, 1e-3, {8, 1, 0});
    auto traj = evolve_linear(Field(g, 1.0), ou, k, 0.0);
    for (std::size_t n = 0; n < traj.size(); n += 50) {
      const double t = ou.times[n];
      const double b = ou.fields[n][0] - gamma * t;
      const double expected = (gamma - 0.5) * t + b;
      for (std::size_t i = 0; i < g.size(); i += 9) CHECK(std::abs(std::log(traj[n][i]) - expected) <= 1e-6);
    }
  }
  SUBCASE("damping multiplies by exp(-damping t)") {
    auto k = build_kernel(KernelSpec::gaussian(0.25), g);
    auto ou = solve_Y(k, 0.3, 0.5, 1e-3, {8, 2, 0});
    auto w0 = make_field(g, [](double x, double) { return 1 + 0.5 * std::cos(2 * pi * x); });
    auto a = evolve_linear(w0, ou, k, 0.0);
    auto b = evolve_linear(w0, ou, k, 0.4);
    for (std::size_t i = 0; i < g.size(); ++i)
      CHECK(b.back()[i] == doctest::Approx(a.back()[i] * std::exp(-0.2)).epsilon(1e-12));
  }
  SUBCASE("negative initial data is rejected") {
    auto k = build_kernel(KernelSpec::zero(), g);
    auto ou = solve_Y(k, 0.0, 0.01, 1e-3, {1, 0, 0});
    Field w(g, 1.0);
    w.values[4] = -1e-3;
    CHECK_THROWS_WITH(evolve_linear(w, ou, k, 0.0), "initial condition not nonnegative");
  }
}

TEST_CASE("evolve_linear structural properties on a correlated path") {
  GridDescriptor g(1, 64);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  for (std::uint32_t path = 0; path < 4; ++path) {
    auto ou = solve_Y(k, 0.5, 0.5, 1e-3, {21, path, 0});
    auto bump = make_field(g, [](double x, double) { return std::max(0.0, 0.1 - std::abs(x - 0.3)); });
    auto w2 = make_field(g, [](double x, double) { return 1 + 0.9 * std::cos(4 * pi * x); });
    auto tb = evolve_linear(bump, ou, k, 0.0);
    CHECK(grid_reduce(tb.back(), Reduction::min) > 0.0);

    // linearity
    Field comb(g);
    for (std::size_t i = 0; i < g.size(); ++i) comb[i] = 2.0 * bump[i] + 0.5 * w2[i];
    auto t2 = evolve_linear(w2, ou, k, 0.0);
    auto tc = evolve_linear(comb, ou, k, 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double lin = 2.0 * tb.back()[i] + 0.5 * t2.back()[i];
      CHECK(std::abs(tc.back()[i] - lin) <= 1e-8 * std::abs(lin));
    }
    // comparison: bump <= bump + w2
    Field upper(g);
    for (std::size_t i = 0; i < g.size(); ++i) upper[i] = bump[i] + w2[i];
    auto tu = evolve_linear(upper, ou, k, 0.0);
    for (std::size_t n = 0; n < tu.size(); n += 25)
      for (std::size_t i = 0; i < g.size(); ++i) CHECK(tb[n][i] <= tu[n][i]);

    // pathwise sup-norm bound
    double ysup = 0, gsup = 0, phisup = 0;
    for (std::size_t n = 0; n < ou.fields.size(); ++n) {
      ysup = std::max(ysup, grid_reduce(ou.fields[n], Reduction::linf));
      gsup = std::max(gsup, grid_reduce(ou.grad_fields[n][0], Reduction::linf));
      phisup = std::max(phisup, grid_reduce(t2[n], Reduction::linf));
    }
    CHECK(phisup <= pathwise_sup_bound(ysup, gsup, 0.5, grid_reduce(w2, Reduction::linf)));
  }
}

TEST_CASE("flow kernel against the analytic heat kernel") {
  GridDescriptor g(1, 64);
  auto k = build_kernel(KernelSpec::zero(), g);
  auto ou = solve_Y(k, 0.0, 0.1, 1e-3, {1, 0, 0});
  auto K = compute_kernel_K(ou, k, 0.0, 0.1, 0.0);
  double err = 0;
  for (std::size_t i = 0; i < g.size(); ++i)
    for (std::size_t j = 0; j < g.size(); ++j) {
      const double ref = periodic_heat_kernel(0.1, g.coord(i) - g.coord(j), 0, 1);
      err = std::max(err, std::abs(K(i, j) - ref) / ref);
    }
  CHECK(err <= 1e-4);
  auto st = kernel_stats(K);
  CHECK(std::abs(st.c_K - 1.0) <= 1e-10);
  CHECK(st.min_entry > 0);
  CHECK(st.c_K >= st.min_entry);
}

TEST_CASE("kernel statistics on explicit matrices") {
  GridDescriptor g(1, 8);
  FlowKernel ones{g, std::vector<double>(64, 1.0), 0, 1};
  auto s1 = kernel_stats(ones);
  CHECK(s1.birkhoff_diameter == 0.0);
  CHECK(s1.contraction() == 0.0);
  CHECK(s1.c_K == doctest::Approx(1.0));
  FlowKernel dd{g, std::vector<double>(64, 1.0), 0, 1};
  for (int i = 0; i < 8; ++i) dd.matrix[i * 8 + i] = 2.0;
  auto s2 = kernel_stats(dd);
  CHECK(s2.birkhoff_diameter == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(s2.contraction() == doctest::Approx(0.3333).epsilon(1e-3));
  dd.matrix[5] = 0.0;
  CHECK_THROWS(kernel_stats(dd));
}

TEST_CASE("flow kernel cocycle and diameter monotonicity") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  auto ou = solve_Y(k, 0.4, 1.0, 1e-3, {77, 0, 0});
  auto Ksu = compute_kernel_K(ou, k, 0.1, 0.3, 0.0);
  auto Kst = compute_kernel_K(ou, k, 0.1, 0.2, 0.0);
  auto Ktu = compute_kernel_K(ou, k, 0.2, 0.3, 0.0);
  const std::size_t n = g.size();
  double err = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0;
      for (std::size_t m = 0; m < n; ++m) s += Ktu(i, m) * Kst(m, j);
      s *= g.cell_volume();
      err = std::max(err, std::abs(s - Ksu(i, j)) / Ksu(i, j));
    }
  CHECK(err <= 1e-6);

  auto short_k = compute_kernel_K(ou, k, 0.0, 0.01, 0.0);
  auto long_k = compute_kernel_K(ou, k, 0.0, 1.0, 0.0);
  CHECK(kernel_stats(short_k).birkhoff_diameter > kernel_stats(long_k).birkhoff_diameter);
  CHECK(kernel_stats(long_k).contraction() < 1.0);
}
