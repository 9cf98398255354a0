#include "rdlab/stats.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace rdlab {

double pairwise_sum(std::span<const double> x) {
  if (x.size() <= 8) {
    double s = 0.0;
    for (double v : x) s += v;
    return s;
  }
  const std::size_t half = x.size() / 2;
  return pairwise_sum(x.subspan(0, half)) + pairwise_sum(x.subspan(half));
}

MeanSE mean_se(std::span<const double> x) {
  MeanSE r;
  r.n = x.size();
  if (x.empty()) return r;
  r.mean = pairwise_sum(x) / static_cast<double>(x.size());
  if (x.size() < 2) return r;
  std::vector<double> dev(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) dev[i] = (x[i] - r.mean) * (x[i] - r.mean);
  r.sd = std::sqrt(pairwise_sum(dev) / static_cast<double>(x.size() - 1));
  r.se = r.sd / std::sqrt(static_cast<double>(x.size()));
  return r;
}

LinearFit linear_fit(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("linear_fit needs >= 2 matched points");
  const double n = static_cast<double>(x.size());
  const double mx = pairwise_sum(x) / n, my = pairwise_sum(y) / n;
  std::vector<double> sxx(x.size()), sxy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx[i] = (x[i] - mx) * (x[i] - mx);
    sxy[i] = (x[i] - mx) * (y[i] - my);
  }
  const double Sxx = pairwise_sum(sxx), Sxy = pairwise_sum(sxy);
  if (!(Sxx > 0.0)) throw std::invalid_argument("linear_fit needs distinct abscissae");
  LinearFit f;
  f.slope = Sxy / Sxx;
  f.intercept = my - f.slope * mx;
  if (x.size() > 2) {
    std::vector<double> r2(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double r = y[i] - f.intercept - f.slope * x[i];
      r2[i] = r * r;
    }
    const double s2 = pairwise_sum(r2) / (n - 2.0);
    f.residual_sd = std::sqrt(s2);
    f.slope_se = std::sqrt(s2 / Sxx);
    f.intercept_se = std::sqrt(s2 * (1.0 / n + mx * mx / Sxx));
  }
  return f;
}

void StreamingFit::add(double x, double y) {
  ++n_;
  sx_ += x;
  sy_ += y;
  sxx_ += x * x;
  sxy_ += x * y;
}

double StreamingFit::slope() const {
  const double n = static_cast<double>(n_);
  const double den = n * sxx_ - sx_ * sx_;
  if (n_ < 2 || !(den > 0.0)) return std::nan("");
  return (n * sxy_ - sx_ * sy_) / den;
}

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  const std::size_t count = std::min<std::size_t>(static_cast<std::size_t>(threads), n);
  std::vector<std::thread> pool;
  pool.reserve(count);
  for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace rdlab
