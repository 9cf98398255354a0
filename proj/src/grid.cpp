#include "rdlab/grid.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>
#include <numbers>

namespace rdlab {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
constexpr double kTwoPi = 2.0 * std::numbers::pi;
}  // namespace

GridDescriptor::GridDescriptor(int dim, int points_per_axis) : dim_(dim), n_(points_per_axis) {
  if (dim != 1 && dim != 2) throw std::invalid_argument("grid dim must be 1 or 2");
  if (points_per_axis < 8 || (points_per_axis & (points_per_axis - 1)) != 0)
    throw std::invalid_argument("points_per_axis must be a power of two >= 8");
  total_ = dim == 1 ? static_cast<std::size_t>(n_) : static_cast<std::size_t>(n_) * n_;
  cell_volume_ = 1.0 / static_cast<double>(total_);
}

Field::Field(const GridDescriptor& g, std::vector<double> v) : grid(g), values(std::move(v)) {
  if (values.size() != grid.size()) throw std::invalid_argument("field length does not match grid");
}

bool Field::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double x) { return std::isfinite(x); });
}

double grid_reduce(const Field& field, Reduction kind) {
  if (field.values.size() != field.grid.size()) throw std::invalid_argument("field length does not match grid");
  if (!field.all_finite()) throw std::runtime_error("non-finite field");
  const auto& v = field.values;
  switch (kind) {
    case Reduction::l1: {
      double s = 0.0;
      for (double x : v) s += std::abs(x);
      return s * field.grid.cell_volume();
    }
    case Reduction::linf: {
      double m = 0.0;
      for (double x : v) m = std::max(m, std::abs(x));
      return m;
    }
    case Reduction::min:
      return *std::min_element(v.begin(), v.end());
    case Reduction::max:
      return *std::max_element(v.begin(), v.end());
    case Reduction::mean: {
      double s = 0.0;
      for (double x : v) s += x;
      return s * field.grid.cell_volume();
    }
  }
  return 0.0;
}

Field heat_semigroup_apply(const Field& field, double t) {
  if (!(t >= 0.0)) throw std::invalid_argument("heat semigroup time must be nonnegative");
  if (!field.all_finite()) throw std::runtime_error("non-finite field");
  Field out = field;
  if (t == 0.0) return out;
  SpectralWorkspace::local(field.grid).heat(out.values, t);
  return out;
}

// ---------------------------------------------------------------------------

struct SpectralWorkspace::Plans {
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_complex* scratch = nullptr;
  fftw_plan r2c = nullptr;
  fftw_plan c2r = nullptr;

  ~Plans() {
    std::lock_guard lock(planner_mutex());
    if (r2c) fftw_destroy_plan(r2c);
    if (c2r) fftw_destroy_plan(c2r);
    fftw_free(real);
    fftw_free(spec);
    fftw_free(scratch);
  }
};

SpectralWorkspace::SpectralWorkspace(const GridDescriptor& g) : grid_(g), plans_(std::make_unique<Plans>()) {
  const int n = g.points_per_axis();
  const int half = n / 2 + 1;
  nmodes_ = g.dim() == 1 ? static_cast<std::size_t>(half) : static_cast<std::size_t>(n) * half;
  {
    std::lock_guard lock(planner_mutex());
    plans_->real = fftw_alloc_real(g.size());
    plans_->spec = fftw_alloc_complex(nmodes_);
    plans_->scratch = fftw_alloc_complex(nmodes_);
    if (g.dim() == 1) {
      plans_->r2c = fftw_plan_dft_r2c_1d(n, plans_->real, plans_->spec, FFTW_ESTIMATE);
      plans_->c2r = fftw_plan_dft_c2r_1d(n, plans_->scratch, plans_->real, FFTW_ESTIMATE);
    } else {
      plans_->r2c = fftw_plan_dft_r2c_2d(n, n, plans_->real, plans_->spec, FFTW_ESTIMATE);
      plans_->c2r = fftw_plan_dft_c2r_2d(n, n, plans_->scratch, plans_->real, FFTW_ESTIMATE);
    }
  }
  if (!plans_->r2c || !plans_->c2r) throw std::runtime_error("FFTW planning failed");

  k2_.resize(nmodes_);
  kx_.resize(nmodes_);
  ky_.resize(nmodes_, 0);
  if (g.dim() == 1) {
    for (int j = 0; j < half; ++j) {
      k2_[j] = static_cast<double>(j) * j;
      kx_[j] = (j == n / 2) ? 0 : j;
    }
  } else {
    for (int i = 0; i < n; ++i) {
      const int kx = i <= n / 2 ? i : i - n;
      for (int j = 0; j < half; ++j) {
        const std::size_t m = static_cast<std::size_t>(i) * half + j;
        k2_[m] = static_cast<double>(kx) * kx + static_cast<double>(j) * j;
        kx_[m] = (i == n / 2) ? 0 : kx;
        ky_[m] = (j == n / 2) ? 0 : j;
      }
    }
  }
}

SpectralWorkspace::~SpectralWorkspace() = default;

SpectralWorkspace& SpectralWorkspace::local(const GridDescriptor& g) {
  thread_local std::vector<std::unique_ptr<SpectralWorkspace>> cache;
  for (auto& ws : cache)
    if (ws->grid() == g) return *ws;
  cache.push_back(std::make_unique<SpectralWorkspace>(g));
  return *cache.back();
}

const std::vector<double>& SpectralWorkspace::multipliers(double t) {
  for (int c = 0; c < 2; ++c)
    if (cached_t_[c] == t) return cached_mult_[c];
  const int c = cache_next_;
  cache_next_ ^= 1;
  cached_t_[c] = t;
  auto& m = cached_mult_[c];
  m.resize(nmodes_);
  const double a = kTwoPi * kTwoPi * t;
  for (std::size_t i = 0; i < nmodes_; ++i) m[i] = std::exp(-a * k2_[i]);
  return m;
}

void SpectralWorkspace::forward(std::span<const double> values) {
  std::memcpy(plans_->real, values.data(), grid_.size() * sizeof(double));
  fftw_execute(plans_->r2c);
}

void SpectralWorkspace::scale_modes(double t) {
  const double inv = 1.0 / static_cast<double>(grid_.size());
  if (t == 0.0) {
    for (std::size_t i = 0; i < nmodes_; ++i) {
      plans_->spec[i][0] *= inv;
      plans_->spec[i][1] *= inv;
    }
    return;
  }
  const auto& m = multipliers(t);
  for (std::size_t i = 0; i < nmodes_; ++i) {
    const double s = m[i] * inv;
    plans_->spec[i][0] *= s;
    plans_->spec[i][1] *= s;
  }
}

void SpectralWorkspace::backward_into(std::span<double> out) {
  std::memcpy(plans_->scratch, plans_->spec, nmodes_ * sizeof(fftw_complex));
  fftw_execute(plans_->c2r);
  std::memcpy(out.data(), plans_->real, grid_.size() * sizeof(double));
}

void SpectralWorkspace::backward_derivative(int axis, std::span<double> out) {
  const auto& k = axis == 0 ? kx_ : ky_;
  for (std::size_t i = 0; i < nmodes_; ++i) {
    const double c = kTwoPi * k[i];
    const double re = plans_->spec[i][0];
    const double im = plans_->spec[i][1];
    plans_->scratch[i][0] = -im * c;
    plans_->scratch[i][1] = re * c;
  }
  fftw_execute(plans_->c2r);
  std::memcpy(out.data(), plans_->real, grid_.size() * sizeof(double));
}

void SpectralWorkspace::heat(std::span<double> values, double t) {
  if (values.size() != grid_.size()) throw std::invalid_argument("field length does not match grid");
  forward(values);
  scale_modes(t);
  backward_into(values);
}

void SpectralWorkspace::heat_with_gradient(std::span<double> values, double t,
                                           std::span<std::span<double>> grad) {
  if (values.size() != grid_.size()) throw std::invalid_argument("field length does not match grid");
  if (grad.size() != static_cast<std::size_t>(grid_.dim())) throw std::invalid_argument("gradient arity");
  forward(values);
  scale_modes(t);
  backward_into(values);
  for (int a = 0; a < grid_.dim(); ++a) backward_derivative(a, grad[a]);
}

void SpectralWorkspace::gradient(std::span<const double> values, std::span<std::span<double>> grad) {
  if (values.size() != grid_.size()) throw std::invalid_argument("field length does not match grid");
  if (grad.size() != static_cast<std::size_t>(grid_.dim())) throw std::invalid_argument("gradient arity");
  forward(values);
  scale_modes(0.0);
  for (int a = 0; a < grid_.dim(); ++a) backward_derivative(a, grad[a]);
}

}  // namespace rdlab
