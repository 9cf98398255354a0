#include <doctest.h>

#include <cmath>
#include <numbers>

#include "rdlab/corrector.hpp"
#include "rdlab/projective.hpp"

using namespace rdlab;

namespace {
constexpr double pi = std::numbers::pi;
}

TEST_CASE("project normalizes and rejects non-positive fields") {
  GridDescriptor g(1, 16);
  auto p = project(make_field(g, [](double x, double) { return 2.0 + std::cos(2 * pi * x); }));
  CHECK(grid_reduce(p.field(), Reduction::l1) == doctest::Approx(1.0).epsilon(1e-14));
  Field bad(g, 1.0);
  bad[3] = 0.0;
  CHECK_THROWS_WITH(project(bad), "not in the positive cone");
  bad[3] = -1.0;
  CHECK_THROWS_WITH(project(bad), "not in the positive cone");
  auto u = uniform_point(g);
  for (double v : u.values()) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("Hilbert distance is a projective metric with the L1 bound") {
  GridDescriptor g(1, 64);
  auto pts = random_points(g, 1000, 11, 0.2);
  auto more = random_points(g, 1000, 12, 0.2);
  std::size_t l1_fail = 0, tri_fail = 0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const auto& p = pts[i];
    const auto& q = pts[(i + 1) % pts.size()];
    const auto& r = more[i];
    const double d = hilbert_distance(p, q);
    CHECK(d >= 0.0);
    CHECK(hilbert_distance(p, p) == 0.0);
    CHECK(hilbert_distance(q, p) == doctest::Approx(d).epsilon(1e-12));
    if (hilbert_distance(p, r) > d + hilbert_distance(q, r) + 1e-12) ++tri_fail;
    double l1 = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k) l1 += std::abs(p[k] - q[k]) * g.cell_volume();
    if (l1 > std::expm1(d) * (1 + 1e-12)) ++l1_fail;
  }
  CHECK(l1_fail == 0);
  CHECK(tri_fail == 0);
}

TEST_CASE("Hilbert distance is scale invariant on raw arrays") {
  GridDescriptor g(1, 32);
  auto pts = random_points(g, 2, 5);
  std::vector<double> a(pts[0].values().begin(), pts[0].values().end());
  std::vector<double> b(pts[1].values().begin(), pts[1].values().end());
  const double d = hilbert_distance(a, b);
  for (double& x : a) x *= 37.5;
  for (double& x : b) x *= 1e-7;
  CHECK(hilbert_distance(a, b) == doctest::Approx(d).epsilon(1e-12));
  CHECK(hilbert_distance(pts[0], pts[1]) == doctest::Approx(d).epsilon(1e-12));
}

TEST_CASE("projective evolution never increases the distance between coupled points") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  auto ou = solve_Y(k, 0.6, 2.0, 1e-3, {2, 0, 0});
  auto pts = random_points(g, 2, 9, 0.5);
  auto a = evolve_projective(pts[0], ou, k);
  auto b = evolve_projective(pts[1], ou, k);
  double prev = hilbert_distance(a[0], b[0]);
  std::size_t increases = 0;
  for (std::size_t n = 1; n < a.size(); n += 10) {
    const double d = hilbert_distance(a[n], b[n]);
    if (d > prev * (1 + 1e-9) + 1e-12) ++increases;
    prev = d;
  }
  CHECK(increases == 0);
}

TEST_CASE("noiseless synchronization runs at the spectral gap of the heat semigroup") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::zero(), g);
  SyncOptions opt;
  opt.horizon = 10.0;
  auto p = project(make_field(g, [](double x, double) { return 1.0 + 0.5 * std::cos(2 * pi * x); }));
  auto rec = synchronize_pair(k, opt, {1, 0, 0}, p, uniform_point(g));
  const double gap = 4 * pi * pi;
  CHECK(rec.fitted_rate == doctest::Approx(-gap).epsilon(0.05));
  CHECK(rec.resolved_until > 0.2);
  CHECK(rec.resolved_until < 1.5);
  for (double r : rec.window_ratio)
    if (!std::isnan(r)) CHECK(r < 1.0);
}

TEST_CASE("noisy synchronization contracts on every unit window") {
  GridDescriptor g(1, 32);
  auto k = build_kernel(KernelSpec::gaussian(0.25), g);
  SyncOptions opt;
  opt.gamma = 0.6;
  opt.horizon = 10.0;
  auto pts = random_points(g, 2, 3, 0.5);
  auto s = synchronization_experiment(k, opt, 4, 4, pts[0], pts[1], 1, 1);
  CHECK(s.max_window_ratio < 1.0);
  CHECK(s.max_fitted_rate < 0.0);
  REQUIRE(s.max_birkhoff_tau.has_value());
  CHECK(*s.max_birkhoff_tau < 1.0);
  CHECK_THROWS(synchronization_experiment(k, SyncOptions{0.6, 1e-3, 5.0, 1e-10}, 4, 1, pts[0], pts[1], 1));
}
