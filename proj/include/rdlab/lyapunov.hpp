#pragma once

#include <cstdint>
#include <vector>

#include "rdlab/grid.hpp"
#include "rdlab/noise.hpp"
#include "rdlab/projective.hpp"

namespace rdlab {

/// Q(p) = double integral of p(x) p(y) kappa(x,y) (dense grid sum).
double q_functional(const ProjectivePoint& p, const CorrelationKernel& kernel);

/// F = gamma - lambda - Q(p)/2.
double f_functional(const ProjectivePoint& p, const CorrelationKernel& kernel, double gamma, double lambda);

/// Bound |F| <= |lambda - gamma| + sup|kappa| / 2.
double f_sup_bound(const CorrelationKernel& kernel, double gamma, double lambda);

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<double> log_r;
  std::vector<double> Q_vals;
  std::vector<double> F_vals;
  /// Increment of log r over [t_{n-1}, t_n] minus (gamma - Q(pi_{n-1})/2) dt; entry 0 is 0.
  std::vector<double> martingale_residual;
};

/// Radial/angular split of a stored linear trajectory. F uses `lambda` (NaN gives NaN F values).
TrajectoryRecord log_radius_decompose(const std::vector<Field>& traj, const std::vector<double>& times,
                                      const CorrelationKernel& kernel, double gamma, double lambda);

struct LyapunovConfig {
  double gamma = 1.0;
  double dt = 1e-3;
  double horizon = 50.0;
  double burn_in = 2.0;
  std::size_t n_paths = 200;
  std::uint64_t seed = 1;
  int threads = 1;
  std::uint32_t stream_tag = 0;
};

struct PathExponent {
  double slope = 0.0;   // least-squares slope of log r over [burn_in, horizon]
  double mean_Q = 0.0;  // time average of Q(pi_t) over the same window
  bool excluded = false;
};

struct LyapunovEstimate {
  double lambda_sample = 0.0;
  double lambda_fk = 0.0;
  double se_sample = 0.0;
  double se_fk = 0.0;
  double gamma = 0.0;
  double burn_in = 0.0;
  std::size_t excluded = 0;
  std::vector<PathExponent> paths;
};

/// Floating-point resolution floor applied to reported standard errors so that
/// exactly degenerate ensembles still carry a strictly positive SE.
double se_floor(double value);

/// Single path from initial data v0 (uniform when empty).
PathExponent path_exponent(const CorrelationKernel& kernel, const LyapunovConfig& cfg, std::uint32_t path,
                           const std::vector<double>& v0 = {});

LyapunovEstimate sample_exponent(const CorrelationKernel& kernel, const LyapunovConfig& cfg);

}  // namespace rdlab
