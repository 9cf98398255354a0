#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "rdlab/grid.hpp"
#include "rdlab/linear_flow.hpp"
#include "rdlab/noise.hpp"

namespace rdlab {

/// Values below this level (but positive) are reported, never clamped.
inline constexpr double kPositivityFloor = 1e-300;

/// Number of times a projective point with min below kPositivityFloor was formed.
std::uint64_t positivity_floor_diagnostics();

/// Strictly positive field of unit L1 mass.
class ProjectivePoint {
 public:
  const Field& field() const { return field_; }
  const GridDescriptor& grid() const { return field_.grid; }
  std::span<const double> values() const { return field_.values; }
  double operator[](std::size_t i) const { return field_.values[i]; }

 private:
  friend ProjectivePoint project(const Field&);
  explicit ProjectivePoint(Field f) : field_(std::move(f)) {}
  Field field_;
};

ProjectivePoint project(const Field& field);
ProjectivePoint uniform_point(const GridDescriptor& g);

/// Hilbert projective metric, log max(p/q) - log min(p/q). Scale invariant, so it
/// also accepts any pair of strictly positive arrays.
double hilbert_distance(const ProjectivePoint& p, const ProjectivePoint& q);
double hilbert_distance(std::span<const double> p, std::span<const double> q);

std::vector<ProjectivePoint> evolve_projective(const ProjectivePoint& p0, const OUPath& ou,
                                               const CorrelationKernel& kernel);

struct SyncOptions {
  double gamma = 0.0;
  double dt = 1e-3;
  double horizon = 20.0;
  /// d_P below this level is treated as unresolved (floating-point floor).
  double resolution_floor = 1e-10;
};

struct SyncRecord {
  std::vector<double> times;
  std::vector<double> d_P;
  double fitted_rate = 0.0;
  double resolved_until = 0.0;   // last recorded time with d_P above the resolution floor
  std::vector<double> window_ratio;  // d_P(i)/d_P(i-1) for unit windows with resolved input; NaN otherwise
  std::optional<double> birkhoff_tau_window1;
};

/// Two projective trajectories from p0 and q0 on one noise path.
SyncRecord synchronize_pair(const CorrelationKernel& kernel, const SyncOptions& opt, const StreamKey& key,
                            const ProjectivePoint& p0, const ProjectivePoint& q0, bool birkhoff_window1 = false);

struct SyncSummary {
  std::vector<SyncRecord> paths;
  double mean_window_ratio = 0.0;   // ensemble mean over resolved unit windows
  double max_window_ratio = 0.0;
  double max_fitted_rate = 0.0;
  double mean_fitted_rate = 0.0;
  std::optional<double> max_birkhoff_tau;
};

SyncSummary synchronization_experiment(const CorrelationKernel& kernel, const SyncOptions& opt, std::uint64_t seed,
                                       std::size_t n_paths, const ProjectivePoint& p0, const ProjectivePoint& q0,
                                       int threads, std::size_t birkhoff_paths = 0);

}  // namespace rdlab
