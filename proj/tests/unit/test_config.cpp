#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rdlab/csv.hpp"
#include "rdlab/experiments.hpp"

using namespace rdlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("rdlab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t line_count(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

const char* kTiny = R"(
experiment = "lyapunov"
seed = 5

[grid]
points = 16

[kernel]
type = "gaussian"
length = 0.25

[model]
gamma = 0.6

[run]
horizon = 20.0
burn_in = 2.0
n_paths = 2
)";

}  // namespace

TEST_CASE("sha256 matches the published test vectors") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("csv round trip is exact and header-only tables are valid") {
  auto dir = scratch("csv");
  CsvTable t;
  t.columns = {"t[time]", "v[1]"};
  t.add_row({0.1, 1.0 / 3.0});
  t.add_row({1e-300, -2.5e17});
  emit_csv(t, dir / "a.csv");
  auto back = read_csv(dir / "a.csv");
  CHECK(back.columns == t.columns);
  REQUIRE(back.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    for (std::size_t j = 0; j < 2; ++j) CHECK(back.rows[i][j] == t.rows[i][j]);

  CsvTable empty;
  empty.columns = {"x[1]"};
  emit_csv(empty, dir / "empty.csv");
  CHECK(slurp(dir / "empty.csv") == "x[1]\n");
  CHECK(read_csv(dir / "empty.csv").rows.empty());

  CHECK_THROWS_AS(t.add_row({1.0}), std::invalid_argument);
  CHECK_THROWS(read_csv(dir / "missing.csv"));
}

TEST_CASE("a three-step trajectory record becomes a four-line file") {
  TrajectoryRecord rec;
  rec.times = {0.0, 1.0, 2.0};
  rec.log_r = {0.0, 0.1, 0.2};
  rec.Q_vals = {1.0, 1.0, 1.0};
  rec.F_vals = {0.0, 0.0, 0.0};
  rec.martingale_residual = {0.0, 0.01, -0.01};
  auto dir = scratch("traj");
  emit_csv(to_table(rec), dir / "traj.csv");
  CHECK(line_count(dir / "traj.csv") == 4);
}

TEST_CASE("config parsing rejects unknown keys and bad values by field") {
  CHECK_NOTHROW(parse_config(kTiny));
  CHECK_THROWS_WITH_AS(parse_config("[run]\nhorizn = 3.0\n"), doctest::Contains("run.horizn"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[bogus]\nx = 1\n"), doctest::Contains("bogus"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[grid]\npoints = 12\n"), doctest::Contains("points_per_axis"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_config("[run]\ndt = -1.0\n"), doctest::Contains("run.dt"), ConfigError);
  CHECK_THROWS_AS(parse_config("experiment = \"nope\"\n"), ConfigError);
}

TEST_CASE("rendered config parses back to the same hash input") {
  auto cfg = parse_config(kTiny);
  auto text = render_config(cfg, false);
  auto again = parse_config(text);
  CHECK(render_config(again, false) == text);
  CHECK(again.points == 16);
  CHECK(again.gamma == 0.6);
  CHECK(again.seed == 5);
}

TEST_CASE("LAB_SEED overrides the file seed") {
  auto dir = scratch("seed");
  {
    std::ofstream out(dir / "c.toml");
    out << kTiny;
  }
  ::setenv("LAB_SEED", "77", 1);
  auto cfg = load_config(dir / "c.toml");
  ::unsetenv("LAB_SEED");
  CHECK(cfg.seed == 77);
  CHECK(load_config(dir / "c.toml").seed == 5);
}

TEST_CASE("a tiny run emits catalogued headers and is worker-count independent") {
  auto dir = scratch("run");
  auto cfg = parse_config(kTiny);
  RunOptions one{1, false, (dir / "one").string()};
  RunOptions two{2, true, (dir / "two").string()};
  auto m1 = run(cfg, one);
  auto m2 = run(cfg, two);
  CHECK(m1.identity_hash() == m2.identity_hash());
  CHECK(fs::exists(dir / "one" / "manifest.toml"));
  CHECK(fs::exists(dir / "one" / "config.toml"));
  CHECK(!fs::exists(dir / "two" / "verify"));
  for (const auto& s : csv_schema("lyapunov")) {
    auto t = read_csv(dir / "one" / s.file);
    CHECK(t.columns == s.columns);
  }
  REQUIRE(m1.artifacts.size() == csv_schema("lyapunov").size());
  for (const auto& a : m1.artifacts) CHECK(a.sha256 == sha256_file(dir / "one" / a.file));
}
