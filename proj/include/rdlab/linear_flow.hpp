#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "rdlab/grid.hpp"
#include "rdlab/noise.hpp"

namespace rdlab {

/// Stored solution of dY = (Delta Y + gamma) dt + dW, Y(s) = 0.
struct OUPath {
  std::vector<double> times;
  std::vector<Field> fields;
  std::vector<std::vector<Field>> grad_fields;  // [time][axis]
  double gamma = 0.0;
  double dt = 0.0;
  StreamKey key;
  std::uint32_t start_step = 0;  // global noise step index used for the first increment
};

/// Streaming exponential-Euler integrator for Y.
class OUStepper {
 public:
  OUStepper(const GridDescriptor& g, double gamma, double dt);
  /// Y <- P_dt(Y + gamma dt + dW); refreshes the gradient.
  void advance(std::span<const double> dW);
  void reset();

  const std::vector<double>& Y() const { return y_; }
  const std::vector<std::vector<double>>& grad() const { return grad_; }
  double sup_norm() const;
  /// max_x |grad Y(x)| (Euclidean norm for d = 2).
  double grad_sup_norm() const;
  const GridDescriptor& grid() const { return grid_; }

 private:
  GridDescriptor grid_;
  double gamma_, dt_;
  std::vector<double> y_;
  std::vector<std::vector<double>> grad_;
  std::vector<std::span<double>> grad_spans_;
};

/// Transformed linear flow: Phi = exp(Y + log_scale - damping * t) * Phibar, with
///   d/dt Phibar = Delta Phibar + 2 grad Y . grad Phibar + (|grad Y|^2 - kappa_tr / 2) Phibar,
/// integrated by Strang splitting (exact half heat steps around a pointwise step).
/// Phibar is renormalized every step; the scale is tracked in log form.
class LinearFlowStepper {
 public:
  /// Start at time `t0` from Phi = w0 given the current Y (Y need not vanish).
  LinearFlowStepper(const CorrelationKernel& kernel, std::span<const double> w0, std::span<const double> y_now,
                    double damping, double t0 = 0.0);

  /// Advance by dt given grad Y at the start and end of the step.
  void advance(double dt, const std::vector<std::vector<double>>& grad_start,
               const std::vector<std::vector<double>>& grad_end);

  /// Phi at the current time given current Y.
  void phi(std::span<const double> y_now, std::span<double> out) const;
  /// log of the L1 mass of Phi (Phi is nonnegative).
  double log_mass(std::span<const double> y_now) const;
  /// Phi / |Phi|_L1.
  void projective(std::span<const double> y_now, std::span<double> out) const;
  /// Scaled Phibar and its log scale; Phi = exp(Y + log_scale - damping t) * phibar.
  const std::vector<double>& phibar() const { return phibar_; }
  double log_scale() const { return log_scale_; }
  double time() const { return t_; }

 private:
  const CorrelationKernel* kernel_;
  GridDescriptor grid_;
  double damping_;
  double t_;
  double damping_t0_ = 0.0;
  double log_scale_ = 0.0;
  std::vector<double> phibar_;
  std::vector<std::vector<double>> gphi_;
  std::vector<std::span<double>> gphi_spans_;
};

/// One noise path driving Y and any number of linear flows (common random numbers).
class LinearPathSimulator {
 public:
  LinearPathSimulator(const CorrelationKernel& kernel, double gamma, double dt, StreamKey key,
                      std::uint32_t start_step = 0);
  /// Add a flow started at the current time from w0 >= 0; returns its index.
  std::size_t add_flow(std::span<const double> w0, double damping = 0.0);
  void step();
  double time() const { return static_cast<double>(steps_) * dt_; }
  std::size_t steps() const { return steps_; }
  double dt() const { return dt_; }
  const OUStepper& ou() const { return ou_; }
  LinearFlowStepper& flow(std::size_t i) { return flows_[i]; }
  const LinearFlowStepper& flow(std::size_t i) const { return flows_[i]; }
  std::size_t flow_count() const { return flows_.size(); }
  /// Noise increment consumed by the most recent step.
  const std::vector<double>& last_increment() const { return dW_; }
  const CorrelationKernel& kernel() const { return *kernel_; }

 private:
  const CorrelationKernel* kernel_;
  double dt_;
  std::uint32_t start_step_;
  std::size_t steps_ = 0;
  NoiseSource noise_;
  OUStepper ou_;
  std::vector<LinearFlowStepper> flows_;
  std::vector<double> dW_;
  std::vector<std::vector<double>> grad_prev_;
};

OUPath solve_Y(const CorrelationKernel& kernel, double gamma, double horizon, double dt, const StreamKey& key,
               std::uint32_t start_step = 0);

/// Phi_{t_start, t}[w0] (or the dampened flow when damping > 0) at every stored time of `ou`
/// from index `start_index` on. Entry 0 of the result is w0.
std::vector<Field> evolve_linear(const Field& w0, const OUPath& ou, const CorrelationKernel& kernel, double damping,
                                 std::size_t start_index = 0);

struct FlowKernel {
  GridDescriptor grid;
  std::vector<double> matrix;  // row-major: K(x_i, y_j) at [i*n + j]
  double s = 0.0, t = 0.0;
  double operator()(std::size_t i, std::size_t j) const { return matrix[i * grid.size() + j]; }
};

struct KernelStats {
  double c_K = 0.0;
  double min_entry = 0.0;
  double max_entry = 0.0;
  double birkhoff_diameter = 0.0;
  /// tanh(diameter / 4).
  double contraction() const;
};

FlowKernel compute_kernel_K(const OUPath& ou, const CorrelationKernel& kernel, double s, double t, double damping);
KernelStats kernel_stats(const FlowKernel& K);

/// Periodic heat kernel p_t(x) on the unit torus (image sum, d = 1 or product form for d = 2).
double periodic_heat_kernel(double t, double dx, double dy, int dim, int images = 20);

/// Right-hand side of the pathwise sup-norm bound exp(|Y|_inf + T |grad Y|_inf^2) |w0|_inf.
double pathwise_sup_bound(double y_sup, double grad_sup, double horizon, double w0_sup);

}  // namespace rdlab
