#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rdlab/grid.hpp"
#include "rdlab/rng.hpp"

namespace rdlab {

struct KernelSpec {
  enum class Type { zero, constant, gaussian_periodic, matrix };
  Type type = Type::constant;
  double variance = 1.0;  // sigma-bar^2 for constant, peak amplitude for gaussian
  double length = 0.25;   // correlation length of the gaussian preset
  std::vector<double> matrix;  // row-major, grid.size()^2 entries (user matrix only)
  bool symmetrize = false;     // user matrix: symmetrize small asymmetries instead of rejecting

  static KernelSpec zero() { return {Type::zero, 0.0, 0.25, {}, false}; }
  static KernelSpec constant(double var) { return {Type::constant, var, 0.25, {}, false}; }
  static KernelSpec gaussian(double length, double amplitude = 1.0) {
    return {Type::gaussian_periodic, amplitude, length, {}, false};
  }
  static KernelSpec user(std::vector<double> m, bool symmetrize = false) {
    return {Type::matrix, 1.0, 0.25, std::move(m), symmetrize};
  }
  std::string describe() const;
};

/// Grid-evaluated spatial covariance with a factor L (N x rank, row-major)
/// such that L L^T = kappa + jitter * I up to dropped modes of negligible weight.
class CorrelationKernel {
 public:
  const GridDescriptor& grid() const { return grid_; }
  double kappa(std::size_t i, std::size_t j) const { return kappa_[i * grid_.size() + j]; }
  const std::vector<double>& kappa_matrix() const { return kappa_; }
  const Field& trace() const { return trace_; }
  double sup_norm() const { return sup_norm_; }
  std::size_t rank() const { return rank_; }
  double factor(std::size_t i, std::size_t c) const { return factor_[i * rank_ + c]; }
  const std::vector<double>& factor_matrix() const { return factor_; }
  double jitter() const { return jitter_; }
  double max_eigenvalue() const { return max_eig_; }
  double min_eigenvalue() const { return min_eig_; }
  bool is_zero() const { return rank_ == 0; }
  const KernelSpec& spec() const { return spec_; }

  /// (kappa * p)(x) = cell_volume * sum_y kappa(x,y) p(y), dense evaluation.
  Field convolve(const Field& p) const;
  /// cell_volume^2 * sum_{x,y} p(x) p(y) kappa(x,y), dense evaluation.
  double quadratic_form(std::span<const double> p) const;
  /// Same quadratic form through the factor: cell_volume^2 * |L^T p|^2.
  /// Matches the covariance of the sampled noise exactly.
  double quadratic_form_factor(std::span<const double> p) const;

  /// out = sqrt(dt) * L xi; xi must have rank() entries.
  void apply_factor(std::span<const double> xi, double sqrt_dt, std::span<double> out) const;

 private:
  friend CorrelationKernel build_kernel(const KernelSpec&, const GridDescriptor&);
  GridDescriptor grid_;
  KernelSpec spec_;
  std::vector<double> kappa_;
  std::vector<double> factor_;
  std::size_t rank_ = 0;
  Field trace_;
  double sup_norm_ = 0.0;
  double jitter_ = 0.0;
  double max_eig_ = 0.0;
  double min_eig_ = 0.0;
};

CorrelationKernel build_kernel(const KernelSpec& spec, const GridDescriptor& grid);

/// Kernel with every entry multiplied by s >= 0 (used to absorb a noise amplitude).
KernelSpec scaled(const KernelSpec& spec, double s);

struct NoiseIncrement {
  Field values;
  double dt = 0.0;
  std::uint32_t stream = 0;
  std::uint32_t step = 0;
};

NoiseIncrement sample_increment(const CorrelationKernel& kernel, double dt, const StreamKey& key, std::uint32_t step);

/// Deterministic source of noise increments along one path.
class NoiseSource {
 public:
  NoiseSource(const CorrelationKernel& kernel, double dt, StreamKey key);
  /// Write the increment for global step index `step` into out.
  void increment(std::uint32_t step, std::span<double> out);
  const CorrelationKernel& kernel() const { return *kernel_; }
  double dt() const { return dt_; }
  const StreamKey& key() const { return key_; }

 private:
  const CorrelationKernel* kernel_;
  double dt_;
  double sqrt_dt_;
  StreamKey key_;
  std::vector<double> xi_;
};

}  // namespace rdlab
