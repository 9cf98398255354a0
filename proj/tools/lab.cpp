#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "rdlab/experiments.hpp"

int main(int argc, char** argv) {
  CLI::App app{"rdlab experiment runner"};
  app.require_subcommand(1);

  std::string config;
  rdlab::RunOptions opt;
  auto* run = app.add_subcommand("run", "run the experiment described by a TOML config");
  run->add_option("config", config, "config file")->required()->check(CLI::ExistingFile);
  run->add_option("--threads", opt.threads, "worker count (overrides the config)")->check(CLI::PositiveNumber);
  run->add_flag("--verify", opt.verify, "rerun into a scratch directory and fail on any difference");
  run->add_option("--out", opt.out_dir, "output directory (overrides the config)");

  app.add_subcommand("list", "print the experiment catalog");

  std::string experiment;
  auto* schema = app.add_subcommand("schema", "print the CSV schema of an experiment");
  schema->add_option("experiment", experiment, "experiment name")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand("list")) {
      for (const auto& e : rdlab::experiment_catalog()) std::printf("%-22s %s\n", e.name.c_str(), e.description.c_str());
      return 0;
    }
    if (app.got_subcommand("schema")) {
      for (const auto& s : rdlab::csv_schema(experiment)) {
        std::printf("%s\n", s.file.c_str());
        for (const auto& c : s.columns) std::printf("  %s\n", c.c_str());
      }
      return 0;
    }
    const auto m = rdlab::run(config, opt);
    for (const auto& v : m.verdicts)
      std::printf("%s  %s%s%s\n", v.pass ? "PASS" : "FAIL", v.name.c_str(), v.detail.empty() ? "" : "  ",
                  v.detail.c_str());
    std::printf("identity %s  (%.1f s)\n", m.identity_hash().c_str(), m.wall_clock_seconds);
    return m.all_pass() ? 0 : 2;
  } catch (const rdlab::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
