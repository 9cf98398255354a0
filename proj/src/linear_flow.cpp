#include "rdlab/linear_flow.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace rdlab {

namespace {

std::vector<std::span<double>> spans_of(std::vector<std::vector<double>>& v) {
  std::vector<std::span<double>> out;
  for (auto& x : v) out.emplace_back(x);
  return out;
}

std::size_t steps_for(double horizon, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  if (!(horizon >= 0.0)) throw std::invalid_argument("horizon must be nonnegative");
  const double r = horizon / dt;
  const double n = std::round(r);
  if (std::abs(n * dt - horizon) > 1e-12 * std::max(1.0, horizon)) throw std::invalid_argument("dt must divide horizon");
  return static_cast<std::size_t>(n);
}

std::size_t time_index(const OUPath& ou, double t) {
  const double r = (t - ou.times.front()) / ou.dt;
  const double n = std::round(r);
  if (std::abs(r - n) > 1e-6 || n < 0 || n >= static_cast<double>(ou.times.size()))
    throw std::invalid_argument("time not on the stored path");
  return static_cast<std::size_t>(n);
}

}  // namespace

// --- OUStepper -------------------------------------------------------------

OUStepper::OUStepper(const GridDescriptor& g, double gamma, double dt)
    : grid_(g), gamma_(gamma), dt_(dt), y_(g.size(), 0.0),
      grad_(static_cast<std::size_t>(g.dim()), std::vector<double>(g.size(), 0.0)) {
  grad_spans_ = spans_of(grad_);
}

void OUStepper::reset() {
  std::fill(y_.begin(), y_.end(), 0.0);
  for (auto& g : grad_) std::fill(g.begin(), g.end(), 0.0);
}

void OUStepper::advance(std::span<const double> dW) {
  const double drift = gamma_ * dt_;
  for (std::size_t i = 0; i < y_.size(); ++i) y_[i] += drift + dW[i];
  SpectralWorkspace::local(grid_).heat_with_gradient(y_, dt_, grad_spans_);
}

double OUStepper::sup_norm() const {
  double m = 0.0;
  for (double v : y_) m = std::max(m, std::abs(v));
  return m;
}

double OUStepper::grad_sup_norm() const {
  double m = 0.0;
  for (std::size_t i = 0; i < y_.size(); ++i) {
    double s = 0.0;
    for (const auto& g : grad_) s += g[i] * g[i];
    m = std::max(m, s);
  }
  return std::sqrt(m);
}

// --- LinearFlowStepper -----------------------------------------------------

LinearFlowStepper::LinearFlowStepper(const CorrelationKernel& kernel, std::span<const double> w0,
                                     std::span<const double> y_now, double damping, double t0)
    : kernel_(&kernel), grid_(kernel.grid()), damping_(damping), t_(t0), phibar_(kernel.grid().size()),
      gphi_(static_cast<std::size_t>(kernel.grid().dim()), std::vector<double>(kernel.grid().size())) {
  if (w0.size() != grid_.size() || y_now.size() != grid_.size()) throw std::invalid_argument("grid mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < phibar_.size(); ++i) {
    if (w0[i] < 0.0) throw std::invalid_argument("initial condition not nonnegative");
    phibar_[i] = std::exp(-y_now[i]) * w0[i];
    m = std::max(m, phibar_[i]);
  }
  if (m > 0.0) {
    for (double& v : phibar_) v /= m;
    log_scale_ = std::log(m);
  }
  gphi_spans_ = spans_of(gphi_);
  // Damping is measured from the start time.
  damping_t0_ = t0;
}

void LinearFlowStepper::advance(double dt, const std::vector<std::vector<double>>& gs,
                                const std::vector<std::vector<double>>& ge) {
  auto& ws = SpectralWorkspace::local(grid_);
  ws.heat_with_gradient(phibar_, 0.5 * dt, gphi_spans_);
  const auto& tr = kernel_->trace().values;
  const std::size_t n = phibar_.size();
  const int dim = grid_.dim();
  for (std::size_t i = 0; i < n; ++i) {
    double q = 0.0, transport = 0.0;
    for (int a = 0; a < dim; ++a) {
      const double s = gs[a][i], e = ge[a][i];
      q += 0.5 * (s * s + e * e);
      transport += (s + e) * gphi_[a][i];  // 2 * mean(grad Y) . grad Phibar
    }
    phibar_[i] = std::exp((q - 0.5 * tr[i]) * dt) * (phibar_[i] + dt * transport);
  }
  ws.heat(phibar_, 0.5 * dt);
  double m = 0.0;
  for (double v : phibar_) m = std::max(m, std::abs(v));
  if (m > 0.0 && std::isfinite(m)) {
    const double inv = 1.0 / m;
    for (double& v : phibar_) v *= inv;
    log_scale_ += std::log(m);
  }
  t_ += dt;
}

void LinearFlowStepper::phi(std::span<const double> y, std::span<double> out) const {
  const double shift = log_scale_ - damping_ * (t_ - damping_t0_);
  for (std::size_t i = 0; i < phibar_.size(); ++i) out[i] = std::exp(y[i] + shift) * phibar_[i];
}

double LinearFlowStepper::log_mass(std::span<const double> y) const {
  const double ymax = *std::max_element(y.begin(), y.end());
  double s = 0.0;
  for (std::size_t i = 0; i < phibar_.size(); ++i) s += std::exp(y[i] - ymax) * phibar_[i];
  s *= grid_.cell_volume();
  return std::log(s) + ymax + log_scale_ - damping_ * (t_ - damping_t0_);
}

void LinearFlowStepper::projective(std::span<const double> y, std::span<double> out) const {
  const double ymax = *std::max_element(y.begin(), y.end());
  double s = 0.0;
  for (std::size_t i = 0; i < phibar_.size(); ++i) {
    out[i] = std::exp(y[i] - ymax) * phibar_[i];
    s += out[i];
  }
  const double inv = 1.0 / (s * grid_.cell_volume());
  for (double& v : out) v *= inv;
}

// --- LinearPathSimulator ----------------------------------------------------

LinearPathSimulator::LinearPathSimulator(const CorrelationKernel& kernel, double gamma, double dt, StreamKey key,
                                         std::uint32_t start_step)
    : kernel_(&kernel), dt_(dt), start_step_(start_step), noise_(kernel, dt, key), ou_(kernel.grid(), gamma, dt),
      dW_(kernel.grid().size(), 0.0) {}

std::size_t LinearPathSimulator::add_flow(std::span<const double> w0, double damping) {
  flows_.emplace_back(*kernel_, w0, ou_.Y(), damping, time());
  return flows_.size() - 1;
}

void LinearPathSimulator::step() {
  noise_.increment(start_step_ + static_cast<std::uint32_t>(steps_), dW_);
  grad_prev_ = ou_.grad();
  ou_.advance(dW_);
  for (auto& f : flows_) f.advance(dt_, grad_prev_, ou_.grad());
  ++steps_;
}

// --- path-level operations ---------------------------------------------------

OUPath solve_Y(const CorrelationKernel& kernel, double gamma, double horizon, double dt, const StreamKey& key,
               std::uint32_t start_step) {
  const std::size_t steps = steps_for(horizon, dt);
  const auto& g = kernel.grid();
  OUPath path;
  path.gamma = gamma;
  path.dt = dt;
  path.key = key;
  path.start_step = start_step;
  path.times.reserve(steps + 1);
  path.fields.reserve(steps + 1);
  path.grad_fields.reserve(steps + 1);

  OUStepper ou(g, gamma, dt);
  NoiseSource noise(kernel, dt, key);
  std::vector<double> dW(g.size());
  auto store = [&](std::size_t n) {
    path.times.push_back(static_cast<double>(n) * dt);
    path.fields.emplace_back(g, ou.Y());
    std::vector<Field> grads;
    for (const auto& gr : ou.grad()) grads.emplace_back(g, gr);
    path.grad_fields.push_back(std::move(grads));
  };
  store(0);
  for (std::size_t n = 0; n < steps; ++n) {
    noise.increment(start_step + static_cast<std::uint32_t>(n), dW);
    ou.advance(dW);
    store(n + 1);
  }
  return path;
}

namespace {
std::vector<std::vector<double>> grads_at(const OUPath& ou, std::size_t n) {
  std::vector<std::vector<double>> g;
  for (const auto& f : ou.grad_fields[n]) g.push_back(f.values);
  return g;
}
}  // namespace

std::vector<Field> evolve_linear(const Field& w0, const OUPath& ou, const CorrelationKernel& kernel, double damping,
                                 std::size_t start_index) {
  if (w0.grid != kernel.grid() || ou.fields.empty() || ou.fields.front().grid != w0.grid)
    throw std::invalid_argument("grid mismatch");
  if (start_index >= ou.fields.size()) throw std::invalid_argument("start index outside path");
  LinearFlowStepper flow(kernel, w0.values, ou.fields[start_index].values, damping, ou.times[start_index]);
  std::vector<Field> out;
  out.reserve(ou.fields.size() - start_index);
  out.push_back(w0);
  auto g_prev = grads_at(ou, start_index);
  for (std::size_t n = start_index; n + 1 < ou.fields.size(); ++n) {
    auto g_next = grads_at(ou, n + 1);
    flow.advance(ou.dt, g_prev, g_next);
    Field phi(w0.grid);
    flow.phi(ou.fields[n + 1].values, phi.values);
    out.push_back(std::move(phi));
    g_prev = std::move(g_next);
  }
  return out;
}

FlowKernel compute_kernel_K(const OUPath& ou, const CorrelationKernel& kernel, double s, double t, double damping) {
  if (!(s < t)) throw std::invalid_argument("kernel requires s < t");
  const std::size_t is = time_index(ou, s), it = time_index(ou, t);
  const auto& g = kernel.grid();
  const std::size_t n = g.size();
  FlowKernel K{g, std::vector<double>(n * n), s, t};
  std::vector<std::vector<std::vector<double>>> grads;
  grads.reserve(it - is + 1);
  for (std::size_t m = is; m <= it; ++m) grads.push_back(grads_at(ou, m));

  std::vector<double> w0(n, 0.0), col(n);
  for (std::size_t j = 0; j < n; ++j) {
    std::fill(w0.begin(), w0.end(), 0.0);
    w0[j] = 1.0 / g.cell_volume();
    LinearFlowStepper flow(kernel, w0, ou.fields[is].values, damping, ou.times[is]);
    for (std::size_t m = is; m < it; ++m) flow.advance(ou.dt, grads[m - is], grads[m + 1 - is]);
    flow.phi(ou.fields[it].values, col);
    for (std::size_t i = 0; i < n; ++i) {
      if (!(col[i] > 0.0) || !std::isfinite(col[i]))
        throw std::runtime_error("kernel positivity violated (refine dt)");
      K.matrix[i * n + j] = col[i];
    }
  }
  return K;
}

double KernelStats::contraction() const { return std::tanh(birkhoff_diameter / 4.0); }

KernelStats kernel_stats(const FlowKernel& K) {
  const std::size_t n = K.grid.size();
  const double h = K.grid.cell_volume();
  KernelStats st;
  st.min_entry = std::numeric_limits<double>::infinity();
  st.max_entry = 0.0;
  st.c_K = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double v = K.matrix[i * n + j];
      if (!(v > 0.0)) throw std::runtime_error("kernel positivity violated (refine dt)");
      st.min_entry = std::min(st.min_entry, v);
      st.max_entry = std::max(st.max_entry, v);
      row += v;
    }
    st.c_K = std::min(st.c_K, row * h);
  }
  // diameter = max_{y,y'} [ max_x log(K(x,y)/K(x,y')) + max_x log(K(x,y')/K(x,y)) ]
  std::vector<double> logt(n * n);  // [y][x]
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) logt[j * n + i] = std::log(K.matrix[i * n + j]);
  double diam = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) {
      const double* la = &logt[a * n];
      const double* lb = &logt[b * n];
      double up = -std::numeric_limits<double>::infinity(), down = up;
      for (std::size_t x = 0; x < n; ++x) {
        const double d = la[x] - lb[x];
        up = std::max(up, d);
        down = std::max(down, -d);
      }
      diam = std::max(diam, up + down);
    }
  st.birkhoff_diameter = diam;
  return st;
}

double periodic_heat_kernel(double t, double dx, double dy, int dim, int images) {
  auto axis = [&](double d) {
    double s = 0.0;
    for (int m = -images; m <= images; ++m) {
      const double z = d + m;
      s += std::exp(-z * z / (4.0 * t));
    }
    return s / std::sqrt(4.0 * std::numbers::pi * t);
  };
  return dim == 1 ? axis(dx) : axis(dx) * axis(dy);
}

double pathwise_sup_bound(double y_sup, double grad_sup, double horizon, double w0_sup) {
  return std::exp(y_sup + horizon * grad_sup * grad_sup) * w0_sup;
}

}  // namespace rdlab
