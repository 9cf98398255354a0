#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "rdlab/lyapunov.hpp"

namespace rdlab {

/// Numeric table. Column names carry their unit in brackets, e.g. "t[time]".
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  void add_row(std::vector<double> row);
};

/// Shortest round-trip decimal text for a double (17 significant digits).
std::string format_double(double v);

/// Header row then one line per row, newline-terminated. Errors name the path.
void emit_csv(const CsvTable& table, const std::filesystem::path& path);
CsvTable read_csv(const std::filesystem::path& path);

CsvTable to_table(const TrajectoryRecord& rec);

}  // namespace rdlab
