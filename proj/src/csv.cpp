#include "rdlab/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace rdlab {

void CsvTable::add_row(std::vector<double> row) {
  if (row.size() != columns.size()) throw std::invalid_argument("row width does not match header");
  rows.push_back(std::move(row));
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void emit_csv(const CsvTable& table, const std::filesystem::path& path) {
  for (const auto& c : table.columns)
    if (c.find_first_of(",\n\"") != std::string::npos) throw std::invalid_argument("invalid column name: " + c);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
  out << '\n';
  for (const auto& row : table.rows) {
    if (row.size() != table.columns.size()) throw std::invalid_argument("row width does not match header");
    for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_double(row[i]);
    out << '\n';
  }
  out.flush();
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

CsvTable read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("missing header: " + path.string());
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.columns.push_back(cell);
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      errno = 0;
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0')
        throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": not a number: " + cell);
      row.push_back(v);
    }
    if (row.size() != t.columns.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": row width does not match header");
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable to_table(const TrajectoryRecord& rec) {
  CsvTable t;
  t.columns = {"t[time]", "log_r[1]", "Q[1]", "F[1]", "martingale_residual[1]"};
  for (std::size_t n = 0; n < rec.times.size(); ++n)
    t.add_row({rec.times[n], rec.log_r[n], rec.Q_vals[n], rec.F_vals[n], rec.martingale_residual[n]});
  return t;
}

}  // namespace rdlab
