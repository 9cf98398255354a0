#include "rdlab/projective.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "rdlab/stats.hpp"

namespace rdlab {

namespace {
std::atomic<std::uint64_t> g_floor_hits{0};
}

std::uint64_t positivity_floor_diagnostics() { return g_floor_hits.load(); }

ProjectivePoint project(const Field& field) {
  if (field.values.size() != field.grid.size()) throw std::invalid_argument("field length does not match grid");
  double mn = std::numeric_limits<double>::infinity();
  double sum = 0.0;
  for (double v : field.values) {
    if (!std::isfinite(v)) throw std::runtime_error("non-finite field");
    mn = std::min(mn, v);
    sum += v;
  }
  if (!(mn > 0.0)) throw std::invalid_argument("not in the positive cone");
  const double mass = sum * field.grid.cell_volume();
  Field out = field;
  // Exact power-of-two rescaling of the input leaves the result bit-identical.
  for (double& v : out.values) v /= mass;
  if (mn / mass < kPositivityFloor) g_floor_hits.fetch_add(1);
  return ProjectivePoint(std::move(out));
}

ProjectivePoint uniform_point(const GridDescriptor& g) { return project(Field(g, 1.0)); }

double hilbert_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("grid mismatch");
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double d = std::log(p[i]) - std::log(q[i]);
    hi = std::max(hi, d);
    lo = std::min(lo, d);
  }
  return hi - lo;
}

double hilbert_distance(const ProjectivePoint& p, const ProjectivePoint& q) {
  if (p.grid() != q.grid()) throw std::invalid_argument("grid mismatch");
  return hilbert_distance(p.values(), q.values());
}

std::vector<ProjectivePoint> evolve_projective(const ProjectivePoint& p0, const OUPath& ou,
                                               const CorrelationKernel& kernel) {
  auto traj = evolve_linear(p0.field(), ou, kernel, 0.0);
  std::vector<ProjectivePoint> out;
  out.reserve(traj.size());
  for (const auto& f : traj) out.push_back(project(f));
  return out;
}

SyncRecord synchronize_pair(const CorrelationKernel& kernel, const SyncOptions& opt, const StreamKey& key,
                            const ProjectivePoint& p0, const ProjectivePoint& q0, bool birkhoff_window1) {
  LinearPathSimulator sim(kernel, opt.gamma, opt.dt, key);
  sim.add_flow(p0.values());
  sim.add_flow(q0.values());
  const auto steps = static_cast<std::size_t>(std::llround(opt.horizon / opt.dt));
  const auto per_unit = static_cast<std::size_t>(std::llround(1.0 / opt.dt));
  const auto units = static_cast<std::size_t>(std::floor(opt.horizon + 1e-9));

  SyncRecord rec;
  std::vector<double> at_unit(units + 1, std::nan(""));
  double d = hilbert_distance(p0, q0);
  rec.times.push_back(0.0);
  rec.d_P.push_back(d);
  at_unit[0] = d;
  bool resolved = d >= opt.resolution_floor;
  for (std::size_t n = 1; n <= steps; ++n) {
    sim.step();
    d = hilbert_distance(sim.flow(0).phibar(), sim.flow(1).phibar());
    const bool unit_mark = n % per_unit == 0;
    if (unit_mark && n / per_unit <= units) at_unit[n / per_unit] = d;
    if (resolved || unit_mark) {
      rec.times.push_back(sim.time());
      rec.d_P.push_back(d);
    }
    resolved = d >= opt.resolution_floor;
  }
  for (std::size_t i = 0; i < rec.d_P.size(); ++i)
    if (rec.d_P[i] >= opt.resolution_floor) rec.resolved_until = rec.times[i];
  rec.window_ratio.assign(units, std::nan(""));
  for (std::size_t i = 1; i <= units; ++i)
    if (at_unit[i - 1] >= opt.resolution_floor) rec.window_ratio[i - 1] = at_unit[i] / at_unit[i - 1];

  std::vector<double> ft, fy;
  for (std::size_t i = 0; i < rec.d_P.size(); ++i)
    if (rec.times[i] >= 0.5 * rec.resolved_until && rec.times[i] <= rec.resolved_until &&
        rec.d_P[i] >= opt.resolution_floor) {
      ft.push_back(rec.times[i]);
      fy.push_back(std::log(rec.d_P[i]));
    }
  rec.fitted_rate = ft.size() >= 2 ? linear_fit(ft, fy).slope : std::nan("");

  if (birkhoff_window1) {
    auto ou = solve_Y(kernel, opt.gamma, 1.0, opt.dt, key);
    rec.birkhoff_tau_window1 = kernel_stats(compute_kernel_K(ou, kernel, 0.0, 1.0, 0.0)).contraction();
  }
  return rec;
}

SyncSummary synchronization_experiment(const CorrelationKernel& kernel, const SyncOptions& opt, std::uint64_t seed,
                                       std::size_t n_paths, const ProjectivePoint& p0, const ProjectivePoint& q0,
                                       int threads, std::size_t birkhoff_paths) {
  if (opt.horizon < 10.0) throw std::invalid_argument("synchronization horizon must be >= 10");
  SyncSummary s;
  s.paths = parallel_map<SyncRecord>(n_paths, threads, [&](std::size_t i) {
    return synchronize_pair(kernel, opt, {seed, static_cast<std::uint32_t>(i), 0}, p0, q0, i < birkhoff_paths);
  });
  std::vector<double> ratios, rates;
  s.max_fitted_rate = -std::numeric_limits<double>::infinity();
  for (const auto& r : s.paths) {
    for (double x : r.window_ratio)
      if (!std::isnan(x)) ratios.push_back(x);
    rates.push_back(r.fitted_rate);
    s.max_fitted_rate = std::max(s.max_fitted_rate, std::isnan(r.fitted_rate) ? INFINITY : r.fitted_rate);
    if (r.birkhoff_tau_window1)
      s.max_birkhoff_tau = std::max(s.max_birkhoff_tau.value_or(0.0), *r.birkhoff_tau_window1);
  }
  if (!ratios.empty()) {
    s.mean_window_ratio = mean_se(ratios).mean;
    s.max_window_ratio = *std::max_element(ratios.begin(), ratios.end());
  }
  s.mean_fitted_rate = rates.empty() ? 0.0 : mean_se(rates).mean;
  return s;
}

}  // namespace rdlab
