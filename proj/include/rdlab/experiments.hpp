#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "rdlab/noise.hpp"
#include "rdlab/nonlinear_flow.hpp"

namespace rdlab {

/// Invalid configuration; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  std::string experiment = "lyapunov";
  std::uint64_t seed = 1;
  int threads = 1;  // execution detail, excluded from the config hash

  // [grid]
  int dim = 1;
  int points = 128;

  // [kernel]
  std::string kernel = "gaussian";  // zero | constant | gaussian
  double variance = 1.0;
  double length = 0.25;

  // [model]
  std::string nonlinearity = "linear";  // linear | logistic | quadratic | allen_cahn
  double gamma = 1.0;
  double alpha = 1.5;

  // [run]
  double dt = 1e-3;
  double horizon = 50.0;
  double burn_in = 2.0;
  std::size_t n_paths = 200;
  double eta = 0.05;
  std::size_t lyapunov_paths = 100;  // ensemble used when an experiment needs lambda first
  double lyapunov_horizon = 20.0;     // horizon of that ensemble

  // [stopping]  eps0 = 0 derives it from lambda; eps = 0 uses eps0 / 2
  StoppingParams stopping{1.5, 0.0, 0.0, 1e-7, 1e-6, 3.0, 0.2, 1.0};
  double stopping_eps1_level = 5e-8;  // initial amplitude scale for the fully nonlinear runs

  // [corrector]
  double corrector_T = 2.0;
  double h = 0.02;
  std::size_t n_points = 20;
  std::size_t pool_size = 200;
  double pool_burn_in = 10.0;
  double spike_fraction = 0.2;
  std::size_t inner_paths = 4;
  double inner_T = 1.0;

  // [moments]
  std::vector<double> scales{1e-1, 1e-2, 1e-3, 1e-4};
  std::vector<double> checkpoints{1.0, 2.0, 5.0, 10.0};

  // [allen_cahn]
  std::vector<double> alphas{0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8};

  // [kernel_bounds] and [contraction]
  std::vector<double> lags{0.1, 1.0};
  std::size_t n_pairs = 1000;

  // [output]
  std::string output_dir = "out";

  KernelSpec kernel_spec() const;
  Nonlinearity make_nonlinearity() const;
  /// Cross-field checks (grid, positivity, experiment name, divisibility).
  void validate() const;
};

/// Parse and validate TOML text; unknown sections or keys are rejected. LAB_SEED is not applied here.
ExperimentConfig parse_config(const std::string& toml_text);
/// Read a config file and apply the LAB_SEED environment override.
ExperimentConfig load_config(const std::filesystem::path& path);
/// Fully resolved config as TOML (every field present).
std::string render_config(const ExperimentConfig& cfg, bool include_execution = true);

struct Verdict {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct Artifact {
  std::string file;
  std::string sha256;
};

struct RunManifest {
  std::string experiment;
  std::string config_hash;
  std::vector<Artifact> artifacts;
  std::vector<Verdict> verdicts;
  double wall_clock_seconds = 0.0;

  /// Hash of everything except the wall-clock time.
  std::string identity_hash() const;
  std::string render() const;
  bool all_pass() const;
};

struct RunOptions {
  int threads = 0;  // 0: use the config value
  bool verify = false;
  std::string out_dir;  // empty: use the config value
};

struct ExperimentInfo {
  std::string name;
  std::string description;
};

const std::vector<ExperimentInfo>& experiment_catalog();

/// CSV files written by an experiment with their header rows.
struct CsvSchema {
  std::string file;
  std::vector<std::string> columns;
};
const std::vector<CsvSchema>& csv_schema(const std::string& experiment);

/// Execute one experiment into `out_dir` (created if missing) and write manifest.toml.
RunManifest run_experiment(const ExperimentConfig& cfg, const std::filesystem::path& out_dir);

/// Load, run, and optionally rerun into a scratch directory to detect nondeterminism.
RunManifest run(const std::filesystem::path& config_path, const RunOptions& opt = {});
RunManifest run(ExperimentConfig cfg, const RunOptions& opt);

std::string sha256_hex(const std::string& data);
std::string sha256_file(const std::filesystem::path& path);

}  // namespace rdlab
