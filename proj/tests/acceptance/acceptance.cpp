// Acceptance suite. Runs the configs under configs/ and prints one line per criterion.
//
//   acceptance [--configs DIR] [--out DIR] [criterion ...]
//
// With no criterion arguments all nine are evaluated. Criterion 9 reruns every
// config used by the selected criteria 1-8 with --verify at 1 and 8 workers.

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rdlab/experiments.hpp"

namespace fs = std::filesystem;

namespace {

struct Criterion {
  int id;
  std::string title;
  std::vector<std::string> configs;
  double budget_seconds;  // single-worker wall clock for the configs together; 0 = none
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> c{
      {1, "GBM reduction", {"c1_gbm_lyapunov"}, 120.0},
      {2, "FK consistency", {"c2_fk_consistency"}, 180.0},
      {3, "synchronization", {"c3_sync"}, 0.0},
      {4, "deterministic inequalities", {"c4_contraction", "c4_stopping"}, 0.0},
      {5, "corrector suite", {"c5_corrector_null", "c5_corrector", "c5_generator"}, 600.0},
      {6, "negative-moment instability",
       {"c6_moments_gbm", "c6_moments_contrast", "c6_moments_allen_cahn"},
       900.0},
      {7, "Allen-Cahn threshold", {"c7_threshold"}, 600.0},
      {8, "kernel bounds", {"c8_kernel_bounds"}, 0.0},
  };
  return c;
}

struct Outcome {
  bool ok = false;
  std::string identity;
  double seconds = 0.0;
};

Outcome run_config(const fs::path& config, const fs::path& out, int threads) {
  Outcome o;
  try {
    rdlab::RunOptions opt{threads, true, out.string()};
    const auto m = rdlab::run(config, opt);
    o.identity = m.identity_hash();
    o.seconds = m.wall_clock_seconds;
    o.ok = true;
    for (const auto& v : m.verdicts) {
      if (!v.pass) o.ok = false;
      std::printf("    %s  %s  %s\n", v.pass ? "ok  " : "FAIL", v.name.c_str(), v.detail.c_str());
    }
  } catch (const std::exception& e) {
    std::printf("    error: %s\n", e.what());
  }
  std::fflush(stdout);
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  fs::path config_dir = RDLAB_CONFIG_DIR;
  fs::path out_dir = "acceptance_out";
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--configs" && i + 1 < argc) {
      config_dir = argv[++i];
    } else if (a == "--out" && i + 1 < argc) {
      out_dir = argv[++i];
    } else {
      try {
        selected.insert(std::stoi(a));
      } catch (const std::exception&) {
        std::fprintf(stderr, "usage: acceptance [--configs DIR] [--out DIR] [criterion ...]\n");
        return 1;
      }
    }
  }
  if (selected.empty())
    for (int i = 1; i <= 9; ++i) selected.insert(i);

  std::map<std::string, std::string> single_worker_identity;
  std::map<int, bool> results;

  for (const auto& c : criteria()) {
    if (!selected.count(c.id)) continue;
    std::printf("criterion %d (%s)\n", c.id, c.title.c_str());
    bool ok = true;
    double seconds = 0.0;
    for (const auto& name : c.configs) {
      std::printf("  %s\n", name.c_str());
      const auto o = run_config(config_dir / (name + ".toml"), out_dir / name, 1);
      ok = ok && o.ok;
      seconds += o.seconds;
      if (!o.identity.empty()) single_worker_identity[name] = o.identity;
    }
    if (c.budget_seconds > 0.0) {
      const bool in_budget = seconds <= c.budget_seconds;
      std::printf("    %s  runtime %.1f s (budget %.0f s)\n", in_budget ? "ok  " : "FAIL", seconds,
                  c.budget_seconds);
      ok = ok && in_budget;
    }
    results[c.id] = ok;
    std::printf("criterion %d: %s  (%.1f s)\n\n", c.id, ok ? "PASS" : "FAIL", seconds);
    std::fflush(stdout);
  }

  if (selected.count(9)) {
    std::printf("criterion 9 (determinism)\n");
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = true;
    for (const auto& c : criteria()) {
      if (!selected.count(c.id)) continue;
      for (const auto& name : c.configs) {
        const auto config = config_dir / (name + ".toml");
        auto one = single_worker_identity.count(name) ? single_worker_identity[name] : std::string();
        if (one.empty()) {
          std::printf("  %s, 1 worker\n", name.c_str());
          one = run_config(config, out_dir / name, 1).identity;
        }
        std::printf("  %s, 8 workers\n", name.c_str());
        const auto eight = run_config(config, out_dir / (name + "_w8"), 8).identity;
        const bool same = !one.empty() && one == eight;
        std::printf("    %s  identity 1 worker %.16s, 8 workers %.16s\n", same ? "ok  " : "FAIL", one.c_str(),
                    eight.c_str());
        ok = ok && same;
      }
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    results[9] = ok;
    std::printf("criterion 9: %s  (%.1f s)\n\n", ok ? "PASS" : "FAIL", seconds);
  }

  std::printf("summary\n");
  bool all = true;
  for (const auto& [id, ok] : results) {
    std::printf("criterion %d: %s\n", id, ok ? "PASS" : "FAIL");
    all = all && ok;
  }
  return all ? 0 : 1;
}
