#include "rdlab/noise.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

namespace rdlab {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
// Eigenmodes below this fraction of the top eigenvalue are dropped from the factor.
constexpr double kRankTolerance = 1e-13;

double periodic_gaussian(double dx, double dy, int dim, double length) {
  // Image sum over enough periods that omitted terms are below 1e-17.
  const int images = static_cast<int>(std::ceil(9.0 * length)) + 1;
  const double inv = 1.0 / (2.0 * length * length);
  auto axis_sum = [&](double d) {
    double s = 0.0;
    for (int m = -images; m <= images; ++m) {
      const double z = d + m;
      s += std::exp(-z * z * inv);
    }
    return s;
  };
  return dim == 1 ? axis_sum(dx) : axis_sum(dx) * axis_sum(dy);
}

struct Coord {
  double x, y;
};

std::vector<Coord> coords(const GridDescriptor& g) {
  std::vector<Coord> c(g.size());
  const int n = g.points_per_axis();
  if (g.dim() == 1) {
    for (int i = 0; i < n; ++i) c[i] = {g.coord(i), 0.0};
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) c[static_cast<std::size_t>(i) * n + j] = {g.coord(i), g.coord(j)};
  }
  return c;
}

double pick_jitter(double min_eig, double max_eig) {
  for (double c : {0.0, 1e-14, 1e-12, 1e-10})
    if (min_eig + c * max_eig >= 0.0) return c * max_eig;
  return 1e-10 * max_eig;
}

}  // namespace

std::string KernelSpec::describe() const {
  std::ostringstream os;
  switch (type) {
    case Type::zero: os << "zero"; break;
    case Type::constant: os << "constant(variance=" << variance << ")"; break;
    case Type::gaussian_periodic: os << "gaussian-periodic(length=" << length << ", amplitude=" << variance << ")"; break;
    case Type::matrix: os << "matrix(" << matrix.size() << " entries)"; break;
  }
  return os.str();
}

KernelSpec scaled(const KernelSpec& spec, double s) {
  if (s < 0.0) throw std::invalid_argument("kernel scale must be nonnegative");
  KernelSpec out = spec;
  out.variance *= s;
  for (double& v : out.matrix) v *= s;
  return out;
}

CorrelationKernel build_kernel(const KernelSpec& spec, const GridDescriptor& grid) {
  CorrelationKernel k;
  k.grid_ = grid;
  k.spec_ = spec;
  const std::size_t n = grid.size();
  const auto xs = coords(grid);
  k.kappa_.assign(n * n, 0.0);

  bool translation_invariant = true;
  switch (spec.type) {
    case KernelSpec::Type::zero:
      break;
    case KernelSpec::Type::constant:
      if (spec.variance < 0.0) throw std::invalid_argument("kernel not PSD");
      std::fill(k.kappa_.begin(), k.kappa_.end(), spec.variance);
      break;
    case KernelSpec::Type::gaussian_periodic:
      if (!(spec.length > 0.0)) throw std::invalid_argument("gaussian kernel length must be positive");
      if (spec.variance < 0.0) throw std::invalid_argument("kernel not PSD");
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          k.kappa_[i * n + j] =
              spec.variance * periodic_gaussian(xs[i].x - xs[j].x, xs[i].y - xs[j].y, grid.dim(), spec.length);
      break;
    case KernelSpec::Type::matrix: {
      translation_invariant = false;
      if (spec.matrix.size() != n * n) throw std::invalid_argument("kernel matrix size does not match grid");
      k.kappa_ = spec.matrix;
      double amax = 0.0, asym = 0.0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          amax = std::max(amax, std::abs(k.kappa_[i * n + j]));
          asym = std::max(asym, std::abs(k.kappa_[i * n + j] - k.kappa_[j * n + i]));
        }
      if (asym > 1e-12 * amax) {
        if (!spec.symmetrize) throw std::invalid_argument("kernel not symmetric");
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (k.kappa_[i * n + j] + k.kappa_[j * n + i]);
            k.kappa_[i * n + j] = k.kappa_[j * n + i] = m;
          }
      }
      break;
    }
  }

  k.trace_ = Field(grid);
  for (std::size_t i = 0; i < n; ++i) k.trace_.values[i] = k.kappa_[i * n + i];
  for (double v : k.kappa_) k.sup_norm_ = std::max(k.sup_norm_, std::abs(v));

  // Eigen-decomposition: circulant (exact Fourier modes) for translation-invariant
  // presets, dense symmetric solver for user matrices.
  std::vector<double> eigvals;
  std::vector<std::vector<double>> eigvecs;  // unit-norm eigenvectors, same order
  if (spec.type == KernelSpec::Type::zero) {
    // nothing
  } else if (translation_invariant) {
    const int m = grid.points_per_axis();
    auto add_mode = [&](int kx, int ky, bool self_conjugate) {
      double lam = 0.0;
      for (std::size_t j = 0; j < n; ++j)
        lam += k.kappa_[j] * std::cos(kTwoPi * (kx * xs[j].x + ky * xs[j].y));
      const double w = self_conjugate ? 1.0 : 2.0;
      std::vector<double> c(n), s(n);
      for (std::size_t j = 0; j < n; ++j) {
        const double ph = kTwoPi * (kx * xs[j].x + ky * xs[j].y);
        c[j] = std::sqrt(w / n) * std::cos(ph);
        s[j] = std::sqrt(w / n) * std::sin(ph);
      }
      eigvals.push_back(lam);
      eigvecs.push_back(std::move(c));
      if (!self_conjugate) {
        eigvals.push_back(lam);
        eigvecs.push_back(std::move(s));
      }
    };
    if (grid.dim() == 1) {
      for (int kx = 0; kx <= m / 2; ++kx) add_mode(kx, 0, kx == 0 || kx == m / 2);
    } else {
      for (int ky = 0; ky <= m / 2; ++ky) {
        const bool edge = (ky == 0 || ky == m / 2);
        if (edge) {
          for (int kx = 0; kx <= m / 2; ++kx) add_mode(kx, ky, kx == 0 || kx == m / 2);
        } else {
          for (int kx = -m / 2 + 1; kx <= m / 2; ++kx) add_mode(kx, ky, false);
        }
      }
    }
  } else {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> km(
        k.kappa_.data(), static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    const Eigen::MatrixXd dense = km;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
    if (es.info() != Eigen::Success) throw std::runtime_error("kernel eigen-decomposition failed");
    for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(n); ++c) {
      eigvals.push_back(es.eigenvalues()(c));
      std::vector<double> v(n);
      for (std::size_t i = 0; i < n; ++i) v[i] = es.eigenvectors()(static_cast<Eigen::Index>(i), c);
      eigvecs.push_back(std::move(v));
    }
  }

  if (!eigvals.empty()) {
    k.max_eig_ = *std::max_element(eigvals.begin(), eigvals.end());
    k.min_eig_ = *std::min_element(eigvals.begin(), eigvals.end());
  }
  if (k.max_eig_ > 0.0) {
    if (k.min_eig_ < -1e-6 * k.max_eig_) throw std::invalid_argument("kernel not PSD");
    k.jitter_ = pick_jitter(k.min_eig_, k.max_eig_);
    std::vector<std::size_t> keep;
    for (std::size_t c = 0; c < eigvals.size(); ++c)
      if (eigvals[c] + k.jitter_ > kRankTolerance * k.max_eig_) keep.push_back(c);
    k.rank_ = keep.size();
    k.factor_.assign(n * k.rank_, 0.0);
    for (std::size_t r = 0; r < keep.size(); ++r) {
      const double s = std::sqrt(eigvals[keep[r]] + k.jitter_);
      const auto& v = eigvecs[keep[r]];
      for (std::size_t i = 0; i < n; ++i) k.factor_[i * k.rank_ + r] = s * v[i];
    }
  } else if (k.min_eig_ < 0.0) {
    throw std::invalid_argument("kernel not PSD");
  }
  return k;
}

Field CorrelationKernel::convolve(const Field& p) const {
  if (p.grid != grid_) throw std::invalid_argument("grid mismatch");
  const std::size_t n = grid_.size();
  Field out(grid_);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* row = &kappa_[i * n];
    for (std::size_t j = 0; j < n; ++j) s += row[j] * p.values[j];
    out.values[i] = s * grid_.cell_volume();
  }
  return out;
}

double CorrelationKernel::quadratic_form(std::span<const double> p) const {
  const std::size_t n = grid_.size();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    const double* row = &kappa_[i * n];
    for (std::size_t j = 0; j < n; ++j) s += row[j] * p[j];
    total += p[i] * s;
  }
  const double h = grid_.cell_volume();
  return total * h * h;
}

double CorrelationKernel::quadratic_form_factor(std::span<const double> p) const {
  const std::size_t n = grid_.size();
  double total = 0.0;
  for (std::size_t c = 0; c < rank_; ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += factor_[i * rank_ + c] * p[i];
    total += s * s;
  }
  const double h = grid_.cell_volume();
  return total * h * h;
}

void CorrelationKernel::apply_factor(std::span<const double> xi, double sqrt_dt, std::span<double> out) const {
  const std::size_t n = grid_.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = &factor_[i * rank_];
    double s = 0.0;
    for (std::size_t c = 0; c < rank_; ++c) s += row[c] * xi[c];
    out[i] = s * sqrt_dt;
  }
}

NoiseIncrement sample_increment(const CorrelationKernel& kernel, double dt, const StreamKey& key, std::uint32_t step) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  NoiseIncrement inc{Field(kernel.grid()), dt, key.path, step};
  NoiseSource src(kernel, dt, key);
  src.increment(step, inc.values.values);
  return inc;
}

NoiseSource::NoiseSource(const CorrelationKernel& kernel, double dt, StreamKey key)
    : kernel_(&kernel), dt_(dt), sqrt_dt_(std::sqrt(dt)), key_(key), xi_(kernel.rank()) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
}

void NoiseSource::increment(std::uint32_t step, std::span<double> out) {
  if (kernel_->rank() == 0) {
    std::fill(out.begin(), out.end(), 0.0);
    return;
  }
  standard_normals(key_, step, xi_);
  kernel_->apply_factor(xi_, sqrt_dt_, out);
}

}  // namespace rdlab
