#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rdlab/grid.hpp"
#include "rdlab/noise.hpp"

namespace rdlab {

/// Reaction term f and noise coefficient sigma with f(0) = sigma(0) = 0 and
/// sigma'(0) = 1. The rate functions f(u)/u and sigma(u)/u carry their limits at 0.
struct Nonlinearity {
  std::string name;
  std::function<double(double)> f;
  std::function<double(double)> sigma;
  std::function<double(double)> f_over_u;
  std::function<double(double)> sigma_over_u;
  double f_prime_0 = 0.0;
  bool sigma_is_identity = false;  // sigma(u) = u exactly (partially linear case)

  static Nonlinearity linear(double gamma);
  /// f(u) = gamma u - u^2, sigma(u) = u.
  static Nonlinearity logistic(double gamma);
  /// f(u) = u^2, sigma(u) = u (finite-time blow-up).
  static Nonlinearity quadratic();
  /// Partially linear: user f with f(0) = 0, sigma(u) = u.
  static Nonlinearity partially_linear(std::string name, std::function<double(double)> f, double f_prime_0);
  /// Allen-Cahn shifted to v = 1 - u: f(v) = -(alpha/2)((1-v)^3 - (1-v)), sigma(v) = v - v^2/2.
  /// The noise amplitude is absorbed into the correlation kernel.
  static Nonlinearity shifted_allen_cahn(double alpha);

  /// Throws if f(0) != 0, sigma(0) != 0, or sigma(u)/u does not approach 1.
  void validate() const;
};

/// Largest eps0 with f(u) >= (f'(0) - lambda/2) u on (0, eps0], scanned on a log grid
/// up to `cap`.
double compute_eps0(const Nonlinearity& nl, double lambda, double cap = 10.0);

/// One step u <- P_dt( u exp((f(u)/u - (sigma(u)/u)^2 kappa_tr / 2) dt + (sigma(u)/u) dW) ),
/// negative round-off floored at 0 (counted), blow-up when |u|_inf > kBlowUpLevel or non-finite.
class NonlinearStepper {
 public:
  static constexpr double kBlowUpLevel = 1e12;
  NonlinearStepper(const CorrelationKernel& kernel, const Nonlinearity& nl, double dt);
  /// Returns false if the step produced blow-up.
  bool advance(std::vector<double>& u, std::span<const double> dW);
  std::uint64_t floor_count() const { return floors_; }

 private:
  const CorrelationKernel* kernel_;
  const Nonlinearity* nl_;
  double dt_;
  std::uint64_t floors_ = 0;
};

struct NonlinearTrajectory {
  std::vector<double> times;
  std::vector<Field> fields;
  BlowUpFlag blowup;
  std::uint64_t floor_count = 0;
  std::uint64_t grid_steps = 0;
};

/// Solve from u0 on the noise path `key`, storing every `store_every` steps.
NonlinearTrajectory evolve_nonlinear(const Field& u0, const Nonlinearity& nl, const CorrelationKernel& kernel,
                                     double horizon, double dt, const StreamKey& key, std::uint32_t start_step = 0,
                                     std::size_t store_every = 1);

/// dX = Delta X dt + f(Psi)/Psi dt + sigma(Psi)/Psi dW, X_s = 0, on the same noise as the
/// trajectory (which must be stored at every step, with u_traj.fields[n] at step start_step + n).
std::vector<Field> solve_X(const NonlinearTrajectory& u_traj, const Nonlinearity& nl, const CorrelationKernel& kernel,
                           double dt, const StreamKey& key, std::uint32_t start_step = 0);

enum class StopReason { none, cap, sup_exit, x_drift, y_norm };
std::string to_string(StopReason r);

enum class PiecewiseMode { partially_linear, fully_nonlinear };

struct StoppingParams {
  double frak_t = 1.5;
  double eps0 = 0.1;
  double eps = 0.05;
  double eps1 = 0.1;
  double delta = 1e-6;
  double M = 3.0;
  double rho = 0.2;
  double C = 1.0;

  void validate(PiecewiseMode mode) const;
};

/// Quantities watched on one segment at one grid time.
struct MonitorSample {
  double elapsed = 0.0;
  double sup_psi = 0.0;       // |Psi|_inf (or |Xi|_inf in the partially linear case)
  double xy_sup = 0.0;        // |X - Y|_inf
  double xy_grad_sup = 0.0;   // |grad(X - Y)|_inf
  double y_c1 = 0.0;          // |Y|_inf + |grad Y|_inf
};

/// First stopping condition met by a sample, or none.
StopReason check_stop(const StoppingParams& p, PiecewiseMode mode, const MonitorSample& s);

/// Scan a recorded segment; returns (index of the stopping time, reason). When nothing
/// triggers, the last index and StopReason::none are returned.
std::pair<std::size_t, StopReason> stopping_monitor(const std::vector<MonitorSample>& segment,
                                                    const StoppingParams& p, PiecewiseMode mode);

struct SegmentStats {
  double start = 0.0;
  double end = 0.0;
  StopReason reason = StopReason::none;
  double min_at_start = 0.0;   // min of the restarted field
  double sup_neg_moment = 0.0; // sup over the segment of (min w_t)^{-eta}
};

struct PiecewiseRecord {
  std::vector<double> jump_times;       // tau_0 = 0, tau_1, ...
  std::vector<StopReason> which_stop;   // reason for each completed segment
  std::vector<SegmentStats> segments;
  // Invariant diagnostics over all stored times:
  std::size_t domination_violations = 0;  // points with w > u
  double max_sup_w = 0.0;                 // max |w_t|_inf
  std::size_t comparison_violations = 0;     // points with Psi < Phi / 2 (fully nonlinear only)
  double min_comparison_ratio = INFINITY;    // min over stored points of Psi / Phi
  std::size_t checked_points = 0;
  double max_y_c1 = 0.0;                  // max |Y|_C1 over all segments (fully nonlinear only)
  BlowUpFlag blowup;
  // Stored snapshots (every `store_every` steps) for export.
  std::vector<double> times;
  std::vector<Field> w_fields;
  std::vector<Field> u_fields;
};

struct PiecewiseOptions {
  double horizon = 5.0;
  double dt = 1e-3;
  double lambda = 0.0;       // Lyapunov exponent estimate for the damping (partially linear)
  double eta = 0.05;         // exponent for segment statistics
  std::size_t store_every = 0;  // 0: do not keep snapshots
};

PiecewiseRecord piecewise_process(const Field& u0, const Nonlinearity& nl, const CorrelationKernel& kernel,
                                  const StoppingParams& params, const PiecewiseOptions& opt, PiecewiseMode mode,
                                  const StreamKey& key);

// --- negative moments --------------------------------------------------------

struct MomentConfig {
  double eta = 0.05;
  std::vector<double> scales{1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<double> checkpoints{1.0, 2.0, 5.0, 10.0};
  std::size_t n_paths = 500;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  int threads = 1;
  std::uint32_t stream_tag = 0;
};

struct MomentFit {
  double C1 = 0.0, zeta = 0.0, C2 = 0.0;
  double rms_residual = 0.0;
  std::vector<double> residuals;  // [scale * n_checkpoints + checkpoint]
};

struct MomentTable {
  std::vector<double> scales, checkpoints;
  std::vector<std::vector<double>> mean, se;  // [scale][checkpoint]
  std::vector<std::size_t> blowups;           // per scale
  MomentFit fit;
};

/// Initial datum with minimum exactly `scale`: scale * (1 + 0.5 sin 2 pi x) / 0.5.
Field moment_initial_condition(const GridDescriptor& g, double scale);

/// E[(min_x u_t)^{-eta}] over checkpoints and initial scales (common noise across scales);
/// blown-up paths contribute 0 from the blow-up time on.
MomentTable negative_moment_experiment(const Nonlinearity& nl, const CorrelationKernel& kernel,
                                       const MomentConfig& cfg);

/// Least squares fit of C1 exp(-zeta t) m^{-eta} + C2 (1-D search in zeta, linear in C1, C2).
MomentFit fit_moment_model(const MomentTable& table, double eta);

// --- exit times of the linear flow ---------------------------------------------

/// First time |Phi_t|_inf >= beta starting from alpha * (1 + 0.5 sin)/1.5 (sup = alpha),
/// capped at `horizon` (returned as horizon when no exit happens).
double linear_exit_time(const CorrelationKernel& kernel, double gamma, double alpha, double beta, double horizon,
                        double dt, const StreamKey& key);

}  // namespace rdlab
