#include "rdlab/experiments.hpp"

#include <openssl/evp.h>

#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#define TOML_ENABLE_FORMATTERS 0
#include <toml.hpp>

#include "experiment_runs.hpp"
#include "rdlab/csv.hpp"

namespace rdlab {

namespace {

// --- TOML readers ----------------------------------------------------------------

std::string where(const std::string& section, const std::string& key) {
  return section.empty() ? key : section + "." + key;
}

double read_double(const toml::node& n, const std::string& name) {
  if (auto v = n.value<double>()) return *v;
  throw ConfigError(name + ": expected a number");
}

std::int64_t read_int(const toml::node& n, const std::string& name) {
  if (!n.is_integer()) throw ConfigError(name + ": expected an integer");
  return *n.value<std::int64_t>();
}

std::size_t read_count(const toml::node& n, const std::string& name) {
  const auto v = read_int(n, name);
  if (v < 0) throw ConfigError(name + ": must be nonnegative");
  return static_cast<std::size_t>(v);
}

std::string read_string(const toml::node& n, const std::string& name) {
  if (auto v = n.value<std::string>()) return *v;
  throw ConfigError(name + ": expected a string");
}

std::vector<double> read_list(const toml::node& n, const std::string& name) {
  const auto* arr = n.as_array();
  if (!arr) throw ConfigError(name + ": expected an array of numbers");
  std::vector<double> out;
  for (std::size_t i = 0; i < arr->size(); ++i) out.push_back(read_double(*arr->get(i), name + "[" + std::to_string(i) + "]"));
  return out;
}

using Setter = std::function<void(ExperimentConfig&, const toml::node&, const std::string&)>;

template <class T>
Setter set_double(T ExperimentConfig::*m) {
  return [m](ExperimentConfig& c, const toml::node& n, const std::string& name) { c.*m = read_double(n, name); };
}
Setter set_count(std::size_t ExperimentConfig::*m) {
  return [m](ExperimentConfig& c, const toml::node& n, const std::string& name) { c.*m = read_count(n, name); };
}
Setter set_string(std::string ExperimentConfig::*m) {
  return [m](ExperimentConfig& c, const toml::node& n, const std::string& name) { c.*m = read_string(n, name); };
}
Setter set_list(std::vector<double> ExperimentConfig::*m) {
  return [m](ExperimentConfig& c, const toml::node& n, const std::string& name) { c.*m = read_list(n, name); };
}
Setter set_stop(double StoppingParams::*m) {
  return [m](ExperimentConfig& c, const toml::node& n, const std::string& name) {
    c.stopping.*m = read_double(n, name);
  };
}
Setter set_int(int ExperimentConfig::*m) {
  return [m](ExperimentConfig& c, const toml::node& n, const std::string& name) {
    const auto v = read_int(n, name);
    if (v < -1000000 || v > 1000000) throw ConfigError(name + ": out of range");
    c.*m = static_cast<int>(v);
  };
}

using Section = std::map<std::string, Setter>;

const std::map<std::string, Section>& schema() {
  using C = ExperimentConfig;
  static const std::map<std::string, Section> s = {
      {"",
       {{"experiment", set_string(&C::experiment)},
        {"seed",
         [](C& c, const toml::node& n, const std::string& name) {
           const auto v = read_int(n, name);
           if (v < 0) throw ConfigError(name + ": must be nonnegative");
           c.seed = static_cast<std::uint64_t>(v);
         }},
        {"threads", set_int(&C::threads)}}},
      {"grid", {{"dim", set_int(&C::dim)}, {"points", set_int(&C::points)}}},
      {"kernel",
       {{"type", set_string(&C::kernel)}, {"variance", set_double(&C::variance)}, {"length", set_double(&C::length)}}},
      {"model",
       {{"nonlinearity", set_string(&C::nonlinearity)},
        {"gamma", set_double(&C::gamma)},
        {"alpha", set_double(&C::alpha)}}},
      {"run",
       {{"dt", set_double(&C::dt)},
        {"horizon", set_double(&C::horizon)},
        {"burn_in", set_double(&C::burn_in)},
        {"n_paths", set_count(&C::n_paths)},
        {"eta", set_double(&C::eta)},
        {"lyapunov_paths", set_count(&C::lyapunov_paths)},
        {"lyapunov_horizon", set_double(&C::lyapunov_horizon)}}},
      {"stopping",
       {{"frak_t", set_stop(&StoppingParams::frak_t)},
        {"eps0", set_stop(&StoppingParams::eps0)},
        {"eps", set_stop(&StoppingParams::eps)},
        {"eps1", set_stop(&StoppingParams::eps1)},
        {"delta", set_stop(&StoppingParams::delta)},
        {"M", set_stop(&StoppingParams::M)},
        {"rho", set_stop(&StoppingParams::rho)},
        {"C", set_stop(&StoppingParams::C)},
        {"eps1_level", set_double(&C::stopping_eps1_level)}}},
      {"corrector",
       {{"T", set_double(&C::corrector_T)},
        {"h", set_double(&C::h)},
        {"n_points", set_count(&C::n_points)},
        {"pool_size", set_count(&C::pool_size)},
        {"pool_burn_in", set_double(&C::pool_burn_in)},
        {"spike_fraction", set_double(&C::spike_fraction)},
        {"inner_paths", set_count(&C::inner_paths)},
        {"inner_T", set_double(&C::inner_T)}}},
      {"moments", {{"scales", set_list(&C::scales)}, {"checkpoints", set_list(&C::checkpoints)}}},
      {"allen_cahn", {{"alphas", set_list(&C::alphas)}}},
      {"kernel_bounds", {{"lags", set_list(&C::lags)}}},
      {"contraction", {{"n_pairs", set_count(&C::n_pairs)}}},
      {"output", {{"dir", set_string(&C::output_dir)}}},
  };
  return s;
}

// --- TOML writers ----------------------------------------------------------------

std::string quote(const std::string& s) {
  std::string out = "\"";
  for (char ch : s) {
    switch (ch) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\n': out += "\\n"; break;
      case '\t': out += "\\t"; break;
      default:
        if (static_cast<unsigned char>(ch) < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", static_cast<unsigned>(ch));
          out += buf;
        } else {
          out += ch;
        }
    }
  }
  return out + "\"";
}

std::string toml_float(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::string s = format_double(v);
  if (s.find_first_of(".eE") == std::string::npos) s += ".0";
  return s;
}

std::string toml_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + toml_float(v[i]);
  return s + "]";
}

bool in(const std::string& s, std::initializer_list<const char*> options) {
  for (const char* o : options)
    if (s == o) return true;
  return false;
}

std::string hex(const unsigned char* d, unsigned n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < n; ++i) {
    out += digits[d[i] >> 4];
    out += digits[d[i] & 15];
  }
  return out;
}

}  // namespace

// --- config ------------------------------------------------------------------

KernelSpec ExperimentConfig::kernel_spec() const {
  if (kernel == "zero") return KernelSpec::zero();
  if (kernel == "constant") return KernelSpec::constant(variance);
  if (kernel == "gaussian") return KernelSpec::gaussian(length, variance);
  throw ConfigError("kernel.type: unknown kernel '" + kernel + "' (zero, constant, gaussian)");
}

Nonlinearity ExperimentConfig::make_nonlinearity() const {
  if (nonlinearity == "linear") return Nonlinearity::linear(gamma);
  if (nonlinearity == "logistic") return Nonlinearity::logistic(gamma);
  if (nonlinearity == "quadratic") return Nonlinearity::quadratic();
  if (nonlinearity == "allen_cahn") return Nonlinearity::shifted_allen_cahn(alpha);
  throw ConfigError("model.nonlinearity: unknown preset '" + nonlinearity +
                    "' (linear, logistic, quadratic, allen_cahn)");
}

void ExperimentConfig::validate() const {
  bool known = false;
  for (const auto& e : experiment_catalog()) known = known || e.name == experiment;
  if (!known) throw ConfigError("experiment: unknown experiment '" + experiment + "'");
  if (threads < 1) throw ConfigError("threads: must be >= 1");
  try {
    GridDescriptor g(dim, points);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("grid: ") + e.what());
  }
  kernel_spec();
  make_nonlinearity();
  if (!(variance >= 0.0)) throw ConfigError("kernel.variance: must be nonnegative");
  if (!(length > 0.0)) throw ConfigError("kernel.length: must be positive");
  if (!std::isfinite(gamma)) throw ConfigError("model.gamma: must be finite");
  if (!(alpha > 0.0)) throw ConfigError("model.alpha: must be positive");
  if (!(dt > 0.0 && dt <= 0.1)) throw ConfigError("run.dt: must lie in (0, 0.1]");
  if (!(horizon > 0.0)) throw ConfigError("run.horizon: must be positive");
  if (!(burn_in >= 2.0)) throw ConfigError("run.burn_in: must be >= 2");
  if (n_paths < 2) throw ConfigError("run.n_paths: must be >= 2");
  if (lyapunov_paths < 2) throw ConfigError("run.lyapunov_paths: must be >= 2");
  if (!(lyapunov_horizon >= 20.0)) throw ConfigError("run.lyapunov_horizon: must be >= 20");
  if (!(burn_in < lyapunov_horizon)) throw ConfigError("run.burn_in: must be below run.lyapunov_horizon");
  if (in(experiment, {"lyapunov", "fk-consistency", "allen-cahn-threshold"}) && horizon < 20.0)
    throw ConfigError("run.horizon: Lyapunov estimates need horizon >= 20");
  if (in(experiment, {"lyapunov", "fk-consistency", "allen-cahn-threshold"}) && !(burn_in < horizon))
    throw ConfigError("run.burn_in: must be below run.horizon");
  if (!(eta >= 0.0 && eta < 1.0)) throw ConfigError("run.eta: must lie in [0, 1)");
  if (!(stopping_eps1_level > 0.0)) throw ConfigError("stopping.eps1_level: must be positive");
  if (!(corrector_T > 0.0)) throw ConfigError("corrector.T: must be positive");
  if (!(h >= 1e-3 && h <= 5e-2)) throw ConfigError("corrector.h: must lie in [1e-3, 5e-2] (2h is also evaluated)");
  if (n_points < 2) throw ConfigError("corrector.n_points: must be >= 2");
  if (pool_size < 1) throw ConfigError("corrector.pool_size: must be >= 1");
  if (!(pool_burn_in >= 0.0)) throw ConfigError("corrector.pool_burn_in: must be nonnegative");
  if (!(spike_fraction >= 0.0 && spike_fraction <= 1.0)) throw ConfigError("corrector.spike_fraction: must lie in [0, 1]");
  if (inner_paths < 1) throw ConfigError("corrector.inner_paths: must be >= 1");
  if (!(inner_T > 0.0)) throw ConfigError("corrector.inner_T: must be positive");
  if (scales.empty()) throw ConfigError("moments.scales: must not be empty");
  for (double s : scales)
    if (!(s > 0.0)) throw ConfigError("moments.scales: entries must be positive");
  if (checkpoints.empty()) throw ConfigError("moments.checkpoints: must not be empty");
  for (std::size_t i = 0; i < checkpoints.size(); ++i)
    if (!(checkpoints[i] > 0.0) || (i && !(checkpoints[i] > checkpoints[i - 1])))
      throw ConfigError("moments.checkpoints: must be positive and increasing");
  if (alphas.size() < 2) throw ConfigError("allen_cahn.alphas: need at least two values");
  for (double a : alphas)
    if (!std::isfinite(a)) throw ConfigError("allen_cahn.alphas: entries must be finite");
  if (lags.empty()) throw ConfigError("kernel_bounds.lags: must not be empty");
  for (double l : lags)
    if (!(l >= dt)) throw ConfigError("kernel_bounds.lags: entries must be >= run.dt");
  if (n_pairs < 1) throw ConfigError("contraction.n_pairs: must be >= 1");
  if (output_dir.empty()) throw ConfigError("output.dir: must not be empty");
  if (experiment == "sync" && horizon < 10.0) throw ConfigError("run.horizon: sync needs horizon >= 10");
  if (in(experiment, {"moments", "supermartingale"})) {
    const double last = checkpoints.back();
    if (std::abs(last / dt - std::round(last / dt)) > 1e-9 * last / dt)
      throw ConfigError("moments.checkpoints: must be multiples of run.dt");
  }
}

ExperimentConfig parse_config(const std::string& toml_text) {
  toml::table tbl;
  try {
    tbl = toml::parse(toml_text);
  } catch (const toml::parse_error& e) {
    throw ConfigError("config: parse error at line " + std::to_string(e.source().begin.line) + ": " +
                      std::string(e.description()));
  }
  ExperimentConfig cfg;
  const auto& sch = schema();
  const auto& top = sch.at("");
  for (const auto& [k, node] : tbl) {
    const std::string key(k.str());
    if (auto it = top.find(key); it != top.end()) {
      it->second(cfg, node, key);
      continue;
    }
    auto sec = sch.find(key);
    if (sec == sch.end() || key.empty()) throw ConfigError(key + ": unknown key");
    const auto* sub = node.as_table();
    if (!sub) throw ConfigError(key + ": expected a table");
    for (const auto& [k2, n2] : *sub) {
      const std::string key2(k2.str());
      auto it = sec->second.find(key2);
      if (it == sec->second.end()) throw ConfigError(where(key, key2) + ": unknown key");
      it->second(cfg, n2, where(key, key2));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  ExperimentConfig cfg = parse_config(ss.str());
  if (const char* env = std::getenv("LAB_SEED"); env && *env) {
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || errno == ERANGE || env[0] == '-') throw ConfigError("LAB_SEED: not an unsigned integer");
    cfg.seed = v;
  }
  return cfg;
}

std::string render_config(const ExperimentConfig& c, bool include_execution) {
  std::ostringstream o;
  o << "experiment = " << quote(c.experiment) << "\n";
  o << "seed = " << c.seed << "\n";
  if (include_execution) o << "threads = " << c.threads << "\n";
  o << "\n[grid]\ndim = " << c.dim << "\npoints = " << c.points << "\n";
  o << "\n[kernel]\ntype = " << quote(c.kernel) << "\nvariance = " << toml_float(c.variance)
    << "\nlength = " << toml_float(c.length) << "\n";
  o << "\n[model]\nnonlinearity = " << quote(c.nonlinearity) << "\ngamma = " << toml_float(c.gamma)
    << "\nalpha = " << toml_float(c.alpha) << "\n";
  o << "\n[run]\ndt = " << toml_float(c.dt) << "\nhorizon = " << toml_float(c.horizon)
    << "\nburn_in = " << toml_float(c.burn_in) << "\nn_paths = " << c.n_paths << "\neta = " << toml_float(c.eta)
    << "\nlyapunov_paths = " << c.lyapunov_paths << "\nlyapunov_horizon = " << toml_float(c.lyapunov_horizon)
    << "\n";
  const auto& s = c.stopping;
  o << "\n[stopping]\nfrak_t = " << toml_float(s.frak_t) << "\neps0 = " << toml_float(s.eps0)
    << "\neps = " << toml_float(s.eps) << "\neps1 = " << toml_float(s.eps1) << "\ndelta = " << toml_float(s.delta)
    << "\nM = " << toml_float(s.M) << "\nrho = " << toml_float(s.rho) << "\nC = " << toml_float(s.C)
    << "\neps1_level = " << toml_float(c.stopping_eps1_level) << "\n";
  o << "\n[corrector]\nT = " << toml_float(c.corrector_T) << "\nh = " << toml_float(c.h)
    << "\nn_points = " << c.n_points << "\npool_size = " << c.pool_size
    << "\npool_burn_in = " << toml_float(c.pool_burn_in) << "\nspike_fraction = " << toml_float(c.spike_fraction)
    << "\ninner_paths = " << c.inner_paths << "\ninner_T = " << toml_float(c.inner_T) << "\n";
  o << "\n[moments]\nscales = " << toml_list(c.scales) << "\ncheckpoints = " << toml_list(c.checkpoints) << "\n";
  o << "\n[allen_cahn]\nalphas = " << toml_list(c.alphas) << "\n";
  o << "\n[kernel_bounds]\nlags = " << toml_list(c.lags) << "\n";
  o << "\n[contraction]\nn_pairs = " << c.n_pairs << "\n";
  if (include_execution) o << "\n[output]\ndir = " << quote(c.output_dir) << "\n";
  return o.str();
}

// --- catalog -----------------------------------------------------------------

const std::vector<ExperimentInfo>& experiment_catalog() {
  static const std::vector<ExperimentInfo> cat = {
      {"lyapunov", "Lyapunov exponent of the linearized flow; analytic checks for zero and constant kernels"},
      {"fk-consistency", "agreement of the sample exponent with the Feynman-Kac functional average"},
      {"sync", "synchronization of two projective trajectories on common noise, with a noiseless control"},
      {"contraction", "deterministic inequalities: L1 vs Hilbert, velocity bound, pathwise sup bound, Birkhoff factor"},
      {"corrector", "corrector G: null case, stationary mean, truncation doubling, Lipschitz scan, eta0"},
      {"generator", "generator residual (E G(pi_h) - G(p))/h - F(p) at h and 2h"},
      {"supermartingale", "decay of the corrected functional V and negative moments at checkpoints"},
      {"moments", "negative moments of min u_t over initial scales and checkpoints, with model fit"},
      {"kernel-bounds", "flow kernel positivity, entry moments and the noiseless heat kernel oracle"},
      {"stopping-stats", "piecewise linearised processes, comparison checks, exit statistics"},
      {"allen-cahn-threshold", "zero crossing of lambda(alpha) for the shifted Allen-Cahn linearization"},
  };
  return cat;
}

const std::vector<CsvSchema>& csv_schema(const std::string& experiment) {
  static const std::vector<CsvSchema> lyap = {
      {"lyapunov_paths.csv", {"path[index]", "slope[1/time]", "mean_Q[1/time]", "excluded[bool]"}},
      {"lyapunov_summary.csv",
       {"gamma[1/time]", "lambda_sample[1/time]", "se_sample[1/time]", "lambda_fk[1/time]", "se_fk[1/time]",
        "analytic[1/time]", "excluded[count]"}},
  };
  static const std::map<std::string, std::vector<CsvSchema>> all = {
      {"lyapunov", lyap},
      {"fk-consistency", lyap},
      {"sync",
       {{"sync_paths.csv",
         {"path[index]", "fitted_rate[1/time]", "resolved_until[time]", "max_window_ratio[1]",
          "birkhoff_tau_window1[1]"}},
        {"sync_windows.csv", {"path[index]", "window[index]", "ratio[1]"}},
        {"sync_trajectory.csv", {"t[time]", "d_P[1]", "log_d_P[1]"}},
        {"sync_summary.csv",
         {"mean_window_ratio[1]", "max_window_ratio[1]", "mean_fitted_rate[1/time]", "max_fitted_rate[1/time]",
          "control_rate[1/time]", "spectral_gap_rate[1/time]", "max_birkhoff_tau[1]"}}}},
      {"contraction",
       {{"contraction_pairs.csv", {"pair[index]", "l1[1]", "d_P[1]", "bound[1]"}},
        {"contraction_velocity.csv", {"point[index]", "ratio_sup[1/time]", "bound[1/time]"}},
        {"contraction_paths.csv", {"path[index]", "sup_phi[1]", "sup_Y[1]", "sup_grad_Y[1/length]", "bound[1]"}},
        {"contraction_kernels.csv", {"path[index]", "birkhoff_diameter[1]", "tau[1]"}}}},
      {"corrector",
       {{"corrector_points.csv", {"point[index]", "G[1]", "se[1]", "d_P_uniform[1]"}},
        {"corrector_decay.csv", {"t[time]", "mean_d_P[1]"}},
        {"corrector_summary.csv",
         {"lambda[1/time]", "R[1]", "sup_G[1]", "lipschitz_dP[1]", "lipschitz_dR[1]", "eta0[1]",
          "zeta_prime[1/time]", "stationary_mean[1]", "stationary_se[1]", "truncation_diff[1]",
          "truncation_se[1]", "tail_bound[1]", "frechet_lhs[1/time]", "frechet_lhs_se[1/time]",
          "frechet_rhs[1/time]"}}}},
      {"generator", {{"generator.csv", {"h[time]", "residual[1/time]", "se[1/time]", "F[1/time]", "lambda[1/time]"}}}},
      {"supermartingale",
       {{"supermartingale.csv",
         {"t[time]", "lhs[1]", "lhs_se[1]", "rhs[1]", "moment[1]", "moment_se[1]", "v0_bound[1]", "v_holds[bool]",
          "v0_holds[bool]"}},
        {"supermartingale_summary.csv",
         {"lambda[1/time]", "lambda_se[1/time]", "eta[1]", "eta0[1]", "sup_G[1]", "lipschitz_dR[1]", "R[1]"}}}},
      {"moments",
       {{"moments.csv", {"scale[u]", "t[time]", "mean[u^-eta]", "se[u^-eta]", "closed_form[u^-eta]", "blowups[count]"}},
        {"moments_fit.csv",
         {"lambda[1/time]", "lambda_se[1/time]", "contrast[bool]", "C1[u^-eta]", "zeta[1/time]", "C2[u^-eta]",
          "rms_residual[u^-eta]", "zeta_oracle[1/time]"}}}},
      {"kernel-bounds",
       {{"kernel_bounds_paths.csv",
         {"lag[time]", "path[index]", "min_entry[1]", "max_entry[1]", "c_K[1]", "birkhoff_diameter[1]"}},
        {"kernel_bounds_summary.csv",
         {"lag[time]", "min_moment_a[1]", "min_moment_a_se[1]", "min_moment_b[1]", "min_moment_b_se[1]",
          "max_moment_a[1]", "max_moment_a_se[1]", "max_moment_b[1]", "max_moment_b_se[1]", "max_entry_ratio[1]",
          "heat_rel_error[1]"}}}},
      {"stopping-stats",
       {{"stopping_paths.csv",
         {"mode[code]", "path[index]", "segments[count]", "domination_violations[count]",
          "comparison_violations[count]", "min_psi_phi_ratio[1]", "max_sup_w[u]", "max_y_c1[1]",
          "checked_points[count]"}},
        {"stopping_histogram.csv", {"mode[code]", "reason[code]", "count[count]"}},
        {"stopping_levels.csv", {"eps[u]", "p_exit[1]", "se[1]"}},
        {"exit_times.csv", {"path[index]", "tau[time]"}},
        {"stopping_summary.csv",
         {"lambda[1/time]", "eps0[u]", "eps[u]", "eps1[u]", "c_first[1/time]", "c_first_se[1/time]",
          "c_second[1/time]", "c_second_se[1/time]", "exit_moment_first[time^-1/2]",
          "exit_moment_first_se[time^-1/2]", "exit_moment_second[time^-1/2]", "exit_moment_second_se[time^-1/2]"}}}},
      {"allen-cahn-threshold",
       {{"threshold_scan.csv",
         {"alpha[1/time]", "lambda_sample[1/time]", "se_sample[1/time]", "lambda_fk[1/time]", "se_fk[1/time]"}},
        {"threshold_summary.csv",
         {"crossing[1/time]", "crossing_se[1/time]", "slope[1]", "intercept[1/time]", "target[1/time]"}}}},
  };
  auto it = all.find(experiment);
  if (it == all.end()) throw ConfigError("experiment: unknown experiment '" + experiment + "'");
  return it->second;
}

// --- hashing and manifest ----------------------------------------------------

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256 failed");
  return hex(md, len);
}

std::string sha256_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for hashing: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return sha256_hex(ss.str());
}

namespace {
std::string manifest_body(const RunManifest& m) {
  std::ostringstream o;
  o << "experiment = " << quote(m.experiment) << "\n";
  o << "config_hash = " << quote(m.config_hash) << "\n";
  o << "all_pass = " << (m.all_pass() ? "true" : "false") << "\n";
  for (const auto& a : m.artifacts)
    o << "\n[[artifacts]]\nfile = " << quote(a.file) << "\nsha256 = " << quote(a.sha256) << "\n";
  for (const auto& v : m.verdicts)
    o << "\n[[verdicts]]\nname = " << quote(v.name) << "\npass = " << (v.pass ? "true" : "false")
      << "\ndetail = " << quote(v.detail) << "\n";
  return o.str();
}
}  // namespace

std::string RunManifest::identity_hash() const { return sha256_hex(manifest_body(*this)); }

bool RunManifest::all_pass() const {
  for (const auto& v : verdicts)
    if (!v.pass) return false;
  return true;
}

std::string RunManifest::render() const {
  std::string body = manifest_body(*this);
  std::ostringstream head;
  head << "identity_hash = " << quote(identity_hash()) << "\n";
  head << "wall_clock_seconds = " << toml_float(wall_clock_seconds) << "\n";
  return head.str() + body;
}

// --- run ---------------------------------------------------------------------

RunManifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + out_dir.string() + ": " + ec.message());
  {
    std::ofstream echo(out_dir / "config.toml", std::ios::binary | std::ios::trunc);
    if (!echo) throw std::runtime_error("cannot write " + (out_dir / "config.toml").string());
    echo << render_config(cfg, true);
  }
  const auto t0 = std::chrono::steady_clock::now();
  detail::RunContext ctx(cfg, out_dir, cfg.threads);
  detail::execute(ctx);
  const auto t1 = std::chrono::steady_clock::now();

  RunManifest m;
  m.experiment = cfg.experiment;
  m.config_hash = sha256_hex(render_config(cfg, false));
  for (const auto& s : csv_schema(cfg.experiment)) {
    const auto p = out_dir / s.file;
    if (!std::filesystem::exists(p)) throw std::logic_error("experiment did not write " + s.file);
    m.artifacts.push_back({s.file, sha256_file(p)});
  }
  m.verdicts = std::move(ctx.verdicts);
  m.wall_clock_seconds = std::chrono::duration<double>(t1 - t0).count();
  std::ofstream mf(out_dir / "manifest.toml", std::ios::binary | std::ios::trunc);
  if (!mf) throw std::runtime_error("cannot write " + (out_dir / "manifest.toml").string());
  mf << m.render();
  return m;
}

RunManifest run(ExperimentConfig cfg, const RunOptions& opt) {
  if (opt.threads > 0) cfg.threads = opt.threads;
  if (!opt.out_dir.empty()) cfg.output_dir = opt.out_dir;
  cfg.validate();
  const std::filesystem::path out = cfg.output_dir;
  RunManifest m = run_experiment(cfg, out);
  if (opt.verify) {
    const auto scratch = out / "verify";
    std::filesystem::remove_all(scratch);
    const RunManifest again = run_experiment(cfg, scratch);
    std::filesystem::remove_all(scratch);
    if (again.identity_hash() != m.identity_hash()) {
      std::string what = "nondeterminism detected on rerun";
      for (std::size_t i = 0; i < m.artifacts.size() && i < again.artifacts.size(); ++i)
        if (m.artifacts[i].sha256 != again.artifacts[i].sha256) {
          what += ": " + m.artifacts[i].file + " differs";
          break;
        }
      throw std::runtime_error(what);
    }
  }
  return m;
}

RunManifest run(const std::filesystem::path& config_path, const RunOptions& opt) {
  return run(load_config(config_path), opt);
}

}  // namespace rdlab
