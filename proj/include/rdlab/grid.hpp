#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rdlab {

/// Uniform grid on the unit torus T^d, d in {1,2}.
class GridDescriptor {
 public:
  GridDescriptor() = default;
  GridDescriptor(int dim, int points_per_axis);

  int dim() const { return dim_; }
  int points_per_axis() const { return n_; }
  std::size_t size() const { return total_; }
  double cell_volume() const { return cell_volume_; }
  /// Grid spacing along one axis (1/N).
  double spacing() const { return 1.0 / n_; }

  /// Coordinate of grid index along one axis.
  double coord(int i) const { return static_cast<double>(i) / n_; }

  bool operator==(const GridDescriptor& o) const { return dim_ == o.dim_ && n_ == o.n_; }
  bool operator!=(const GridDescriptor& o) const { return !(*this == o); }

 private:
  int dim_ = 1;
  int n_ = 8;
  std::size_t total_ = 8;
  double cell_volume_ = 1.0 / 8;
};

/// Real-valued grid function. Row-major storage for d = 2 (index = i*N + j).
struct Field {
  GridDescriptor grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(const GridDescriptor& g, double fill = 0.0) : grid(g), values(g.size(), fill) {}
  Field(const GridDescriptor& g, std::vector<double> v);

  std::size_t size() const { return values.size(); }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  bool all_finite() const;
};

/// Remark on explosion: once blown up, the solution is treated as +infinity.
struct BlowUpFlag {
  bool blown_up = false;
  std::optional<double> blow_up_time;
};

enum class Reduction { l1, linf, min, max, mean };

double grid_reduce(const Field& field, Reduction kind);

/// e^{t Delta} applied exactly in Fourier space.
Field heat_semigroup_apply(const Field& field, double t);

/// Build a field from a function of the coordinates (y ignored when d = 1).
template <class F>
Field make_field(const GridDescriptor& g, F&& fn) {
  Field out(g);
  const int n = g.points_per_axis();
  if (g.dim() == 1) {
    for (int i = 0; i < n; ++i) out.values[i] = fn(g.coord(i), 0.0);
  } else {
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) out.values[static_cast<std::size_t>(i) * n + j] = fn(g.coord(i), g.coord(j));
  }
  return out;
}

/// FFT workspace bound to one grid. Not thread safe; use SpectralWorkspace::local()
/// to get the calling thread's instance.
class SpectralWorkspace {
 public:
  explicit SpectralWorkspace(const GridDescriptor& g);
  ~SpectralWorkspace();
  SpectralWorkspace(const SpectralWorkspace&) = delete;
  SpectralWorkspace& operator=(const SpectralWorkspace&) = delete;

  static SpectralWorkspace& local(const GridDescriptor& g);

  const GridDescriptor& grid() const { return grid_; }

  /// In-place e^{t Delta}.
  void heat(std::span<double> values, double t);

  /// In-place e^{t Delta}; also writes the spectral gradient of the result.
  /// grad must hold dim() spans of grid size.
  void heat_with_gradient(std::span<double> values, double t, std::span<std::span<double>> grad);

  /// Spectral gradient without smoothing.
  void gradient(std::span<const double> values, std::span<std::span<double>> grad);

 private:
  struct Plans;
  void forward(std::span<const double> values);
  void scale_modes(double t);
  void backward_into(std::span<double> out);
  void backward_derivative(int axis, std::span<double> out);
  const std::vector<double>& multipliers(double t);

  GridDescriptor grid_;
  std::size_t nmodes_ = 0;
  std::unique_ptr<Plans> plans_;
  std::vector<double> k2_;        // |k|^2 per mode
  std::vector<int> kx_, ky_;      // signed wavenumbers per mode (derivative symbols, Nyquist zeroed)
  double cached_t_[2] = {-1.0, -1.0};
  std::vector<double> cached_mult_[2];
  int cache_next_ = 0;
};

}  // namespace rdlab
