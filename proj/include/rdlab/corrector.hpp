#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rdlab/noise.hpp"
#include "rdlab/projective.hpp"

namespace rdlab {

/// Settings shared by corrector estimators. The corrector is the solution of L G = F
/// (L the projective generator), normalized by mu_inf(G) = 0:
///   G(p) = -int_0^inf (E F(pi_t^p) - mu_inf F) dt = 1/2 int_0^inf E[Q(pi_t^p) - Q(pi_t^inf)] dt,
/// where pi^inf is a coupled stationary trajectory driven by the same noise.
struct CorrectorConfig {
  double gamma = 0.6;
  double lambda = 0.0;  // used for F(p) and the sup bound of F only
  double dt = 1e-3;
  double T = 2.0;       // truncation time
  std::size_t n_paths = 200;
  double burn_in = 10.0;
  std::uint64_t seed = 1;
  int threads = 1;
  double resolution_floor = 1e-10;
};

/// Approximate draws from the invariant measure of the projective process:
/// trajectories started from the uniform point and run for burn_in time units.
struct StationaryPool {
  std::vector<std::vector<double>> samples;
  /// d_P(sample, uniform) for every sample (used to fit the cut-off radius R).
  std::vector<double> distance_to_uniform;

  static StationaryPool build(const CorrelationKernel& kernel, double gamma, double dt, double burn_in, std::size_t n,
                              std::uint64_t seed, std::uint32_t tag, int threads);
};

struct CorrectorEstimate {
  std::optional<ProjectivePoint> at;
  double value = 0.0;
  double se = 0.0;
  double truncation_T = 0.0;
  double tail_bound = 0.0;
  double zeta_prime = 0.0;  // +inf when no separation was observable
};

/// Per-path samples of the truncated corrector at several points on common noise.
struct CorrectorSamples {
  std::vector<std::vector<double>> at_T;    // [point][path]
  std::vector<std::vector<double>> at_2T;   // filled when requested
  std::vector<double> times;                // coarse times for the coupling distance
  std::vector<double> mean_distance;        // ensemble mean of d_P(pi_t^p, pi_t^inf), first point
  double zeta_prime = 0.0;
};

CorrectorSamples sample_corrector(const std::vector<std::vector<double>>& points, const CorrelationKernel& kernel,
                                  const CorrectorConfig& cfg, const StationaryPool& pool, bool also_2T = false);

/// Empirical decay rate of the coupled-pair distance; +inf if no separation was resolved,
/// error "no contraction observed" if the fitted rate is not positive.
double fit_zeta_prime(const std::vector<double>& times, const std::vector<double>& mean_distance, double floor);

CorrectorEstimate estimate_G(const ProjectivePoint& p, const CorrelationKernel& kernel, const CorrectorConfig& cfg,
                             const StationaryPool& pool);

struct GeneratorResidual {
  double residual = 0.0;
  double se = 0.0;
  double h = 0.0;
  bool deterministic = false;  // kappa == 0: the projective process has no noise
};

/// (E[G(pi_h) | pi_0 = p] - G(p)) / h - F(p), with each path continued past h
/// (Markov property) so both corrector samples share noise.
GeneratorResidual generator_residual(const ProjectivePoint& p, double h, const CorrelationKernel& kernel,
                                     const CorrectorConfig& cfg, const StationaryPool& pool);

/// N(p) = p * (kappa * p) - <p * (kappa * p), 1> p.
Field velocity_direction(const ProjectivePoint& p, const CorrelationKernel& kernel);

struct FrechetCheck {
  double lhs = 0.0;
  double lhs_se = 0.0;
  double rhs = 0.0;
  double ratio_sup = 0.0;     // |N(p)/p|_inf
  double uniform_bound = 0.0; // 2 |kappa|_inf
  double delta_used = 0.0;
  bool holds() const { return lhs <= rhs + 3.0 * lhs_se && ratio_sup <= uniform_bound; }
};

FrechetCheck frechet_bound_check(const ProjectivePoint& p, const CorrelationKernel& kernel,
                                 const CorrectorConfig& cfg, const StationaryPool& pool, double lipschitz);

/// Random strictly positive points: smooth Fourier bumps and narrow spikes.
std::vector<ProjectivePoint> random_points(const GridDescriptor& g, std::size_t n, std::uint64_t seed,
                                           double spike_fraction = 0.0);

struct LipschitzScan {
  double sup_G = 0.0;          // max |G| over the scanned points
  double lipschitz_dP = 0.0;   // max |G(p)-G(q)| / d_P(p,q) over scanned pairs
  double lipschitz_dR = 0.0;   // same with d_R = min(d_P, R)
  double R = 0.0;
  double max_se = 0.0;
  std::vector<double> values;  // G at each scanned point
  std::vector<double> ses;     // standard error at each scanned point
};

/// Estimates G at the given points on common noise and measures sup|G| and Lipschitz
/// constants over all pairs.
LipschitzScan scan_corrector(const std::vector<ProjectivePoint>& points, const CorrelationKernel& kernel,
                             const CorrectorConfig& cfg, const StationaryPool& pool, double R);

/// Admissible eta_0 = min{ (lambda/2) / (|kappa|/2 + 8 Lip |kappa|), 1 / (2 sup|G|) }.
double eta_zero(double lambda, double kappa_sup, double lipschitz, double sup_G);

struct SupermartingaleConfig {
  double eta = 0.05;
  std::vector<double> checkpoints{1.0, 2.0, 5.0, 10.0};
  std::size_t n_paths = 500;
  std::size_t inner_paths = 4;   // corrector samples per checkpoint state
  double inner_T = 1.0;
};

struct CheckpointRow {
  double t = 0.0;
  double lhs = 0.0;       // E[exp(eta lambda t / 2) V(r_t)]
  double lhs_se = 0.0;
  double rhs = 0.0;       // V(r_0)
  double moment = 0.0;    // E[r_t^{-eta}]
  double moment_se = 0.0;
  double v0_bound = 0.0;  // (3 exp(-lambda t / 2) r_0)^{eta} with r_0 = 1
  bool v_holds = false;
  bool v0_holds = false;
};

struct SupermartingaleReport {
  double eta = 0.0;
  double eta0 = 0.0;
  double lambda = 0.0;
  std::vector<CheckpointRow> rows;
  bool all_hold() const;
};

/// Checks the corrected functional V = r^{-eta} (1 + eta G(pi)) along an ensemble started
/// from r_0 = 1 at the point p0. `eta0` is the admissible threshold computed by the caller.
SupermartingaleReport supermartingale_check(const ProjectivePoint& p0, const CorrelationKernel& kernel,
                                            const CorrectorConfig& cfg, const StationaryPool& pool,
                                            const SupermartingaleConfig& sm, double eta0);

}  // namespace rdlab
