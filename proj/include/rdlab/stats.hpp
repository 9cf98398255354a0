#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace rdlab {

/// Pairwise (tree) summation in fixed index order; result depends only on the data.
double pairwise_sum(std::span<const double> x);

struct MeanSE {
  double mean = 0.0;
  double sd = 0.0;
  double se = 0.0;
  std::size_t n = 0;
};

/// Sample mean, sample SD (n-1) and SE = SD / sqrt(n).
MeanSE mean_se(std::span<const double> x);

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  double residual_sd = 0.0;
};

/// Ordinary least squares y = intercept + slope * x.
LinearFit linear_fit(std::span<const double> x, std::span<const double> y);

/// Streaming OLS accumulator (used along long trajectories).
class StreamingFit {
 public:
  void add(double x, double y);
  double slope() const;
  std::size_t count() const { return n_; }

 private:
  std::size_t n_ = 0;
  double sx_ = 0, sy_ = 0, sxx_ = 0, sxy_ = 0;
};

/// Run fn(i) for i in [0, n) on `threads` workers. Work is distributed dynamically but
/// each index is handled by exactly one call; callers store results by index so the
/// outcome is independent of the worker count. The first exception is rethrown.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

template <class T, class F>
std::vector<T> parallel_map(std::size_t n, int threads, F&& fn) {
  std::vector<T> out(n);
  parallel_for(n, threads, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace rdlab
