#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rdlab/csv.hpp"
#include "rdlab/experiments.hpp"

namespace rdlab::detail {

/// State shared by one experiment execution: resolved config, output directory,
/// worker count and the verdicts collected so far.
class RunContext {
 public:
  RunContext(const ExperimentConfig& cfg, std::filesystem::path dir, int threads)
      : cfg(cfg), threads(threads), dir_(std::move(dir)) {}

  const ExperimentConfig& cfg;
  const int threads;
  std::vector<Verdict> verdicts;

  /// Empty table with the catalogued header of `file`.
  CsvTable table(const std::string& file) const;
  void write(const std::string& file, const CsvTable& t) const;
  void verdict(std::string name, bool pass, std::string detail = {});

 private:
  std::filesystem::path dir_;
};

/// Compact decimal rendering for verdict details.
std::string num(double v);

void execute(RunContext& ctx);

}  // namespace rdlab::detail
