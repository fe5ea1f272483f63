#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "config.hpp"
#include "doctest.h"
#include "ebt/errors.hpp"
#include "ebt/io.hpp"

namespace fs = std::filesystem;
using namespace ebt;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() /
           ("ebt_cli_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string read(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "ebt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

const char* kDecay = R"({
  "model": "pure_decay",
  "params": {"mu0": 0.5},
  "x_b": 0.0,
  "T": 2.0,
  "N": 4,
  "n": 4,
  "step_size": 0.01,
  "initial": {"density": "uniform", "lo": 0.0, "hi": 1.0, "mass": 1.0}
})";

const char* kConstant = R"({
  "model": "constant_rates",
  "params": {"g0": 1.0, "mu0": 0.2, "beta0": 0.5},
  "x_b": 0.0,
  "T": 1.0,
  "N": 1,
  "n": 10,
  "step_size": 0.002,
  "initial": {"atoms": [[0.5, 1.0]]},
  "converge": {
    "N_grid": [1],
    "n_grid": [10, 20, 40],
    "assert": {"residual_slope_n": [-1.3, -0.7]}
  }
})";

}  // namespace

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 2.0, -1e-300, 6.02214076e23, 0.0}) {
    const std::string s = io::format_double(v);
    CHECK(std::stod(s) == v);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(2.0) == "2");
}

TEST_CASE("measure CSV round-trips") {
  const DiscreteMeasure m({{0.1, 1.0 / 3.0}, {2.5, 0.0}, {1e-7, 7.25}});
  const DiscreteMeasure back = io::parse_measure_csv(io::measure_csv(m));
  REQUIRE(back.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(back.atoms()[i].location == m.atoms()[i].location);
    CHECK(back.atoms()[i].mass == m.atoms()[i].mass);
  }
  CHECK_THROWS_AS(io::parse_measure_csv("x,y\n1,2\n"), ConfigError);
  CHECK_THROWS_AS(io::parse_measure_csv("location,mass\n1,abc\n"), ConfigError);
  CHECK_THROWS_AS(io::parse_measure_csv("location,mass\n1,-2\n"), ConfigError);
}

TEST_CASE("config parsing and overrides") {
  const cli::Config c = cli::parse_config(kDecay, cli::parse_overrides({"N=7", "h=0.005"}));
  CHECK(c.problem.initial_cohorts == 7);
  CHECK(c.run.step_size == 0.005);
  CHECK(c.effective["N"] == 7);
  CHECK_FALSE(c.has_study);

  CHECK_THROWS_AS(cli::parse_overrides({"T=3"}), ConfigError);
  CHECK_THROWS_AS(cli::parse_overrides({"N"}), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(kDecay, cli::parse_overrides({"N=abc"})), ConfigError);
  CHECK_THROWS_AS(cli::parse_config(kDecay, cli::parse_overrides({"boundary_formulation=x"})),
                  ConfigError);

  std::string unknown = kDecay;
  unknown.insert(unknown.find("\"model\""), "\"colour\": 1, ");
  CHECK_THROWS_AS(cli::parse_config(unknown), ConfigError);
  std::string nested = kDecay;
  nested.replace(nested.find("\"mass\": 1.0}"), 12, "\"mass\": 1.0, \"skew\": 2}");
  CHECK_THROWS_AS(cli::parse_config(nested), ConfigError);
  std::string negative = kDecay;
  negative.replace(negative.find("\"T\": 2.0"), 8, "\"T\": -2.0");
  try {
    cli::parse_config(negative);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("config.T") != std::string::npos);
  }
  CHECK_THROWS_AS(cli::parse_config("{not json"), ConfigError);
}

TEST_CASE("run writes artifacts and is byte-identical across invocations") {
  TempDir dir;
  write(dir.path / "decay.json", kDecay);
  const Result a = invoke({"run", "--config", (dir.path / "decay.json").string(), "--output-dir",
                        (dir.path / "a").string()});
  CHECK(a.code == 0);
  const Result b = invoke({"run", "--config", (dir.path / "decay.json").string(), "--output-dir",
                        (dir.path / "b").string()});
  CHECK(b.code == 0);
  for (const char* name : {"trajectory.csv", "trajectory.json", "final_measure.csv"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(dir.path / "a" / name));
    CHECK(read(dir.path / "a" / name) == read(dir.path / "b" / name));
  }
  CHECK(read(dir.path / "a" / "trajectory.csv").rfind("t,cohort_index,N,X\n", 0) == 0);
  for (const auto& entry : fs::directory_iterator(dir.path / "a")) {
    CHECK(entry.path().filename().string().find(".tmp") == std::string::npos);
  }
}

TEST_CASE("output directory falls back to EBT_OUTPUT_DIR") {
  TempDir dir;
  write(dir.path / "decay.json", kDecay);
  const fs::path env_dir = dir.path / "from_env";
  ::setenv("EBT_OUTPUT_DIR", env_dir.c_str(), 1);
  const Result r = invoke({"run", "--config", (dir.path / "decay.json").string()});
  ::unsetenv("EBT_OUTPUT_DIR");
  CHECK(r.code == 0);
  CHECK(fs::exists(env_dir / "trajectory.csv"));
}

TEST_CASE("exit codes") {
  TempDir dir;
  const std::string out = (dir.path / "out").string();
  write(dir.path / "constant.json", kConstant);
  std::string bad = kDecay;
  bad.replace(bad.find("\"T\": 2.0"), 8, "\"T\": -2.0");
  write(dir.path / "bad.json", bad);
  std::string stiff = kDecay;
  stiff.replace(stiff.find("\"mu0\": 0.5"), 10, "\"mu0\": 5000");
  write(dir.path / "stiff.json", stiff);
  std::string strict = kConstant;
  strict.replace(strict.find("[-1.3, -0.7]"), 12, "[0.5, 1.0]");
  write(dir.path / "strict.json", strict);
  const std::string constant = (dir.path / "constant.json").string();

  SUBCASE("config errors") {
    const Result r = invoke({"run", "--config", (dir.path / "bad.json").string(), "-o", out});
    CHECK(r.code == 1);
    CHECK(r.err.find("config.T") != std::string::npos);
    CHECK(invoke({"run", "--config", (dir.path / "missing.json").string(), "-o", out}).code == 1);
    CHECK(invoke({"run", "--config", constant, "--set", "colour=red", "-o", out}).code == 1);
    CHECK(invoke({"frobnicate"}).code == 1);
    CHECK(invoke({"run"}).code == 1);
    CHECK(invoke({"run", "--config", (dir.path / "decay.json").string(), "-o", out}).code == 1);
  }
  SUBCASE("numerical failure") {
    const Result r = invoke({"run", "--config", (dir.path / "stiff.json").string(), "-o", out});
    CHECK(r.code == 2);
    CHECK(r.err.find("numerical failure") != std::string::npos);
  }
  SUBCASE("converge assertions") {
    const Result ok = invoke({"converge", "--config", constant, "-o", out, "--assert", "--jobs", "2"});
    CHECK(ok.code == 0);
    CHECK(ok.out.find("PASS residual slope in n") != std::string::npos);
    const std::string csv = read(fs::path(out) / "report.csv");
    CHECK(csv.rfind("N,n,h_eff,flat_error,functional_error,residual_norm,mass_bound_ok\n", 0) == 0);
    const Result fail = invoke({"converge", "--config", (dir.path / "strict.json").string(), "-o",
                             out, "--assert"});
    CHECK(fail.code == 3);
    CHECK(fail.out.find("FAIL residual slope in n") != std::string::npos);
  }
  SUBCASE("converge needs a study section") {
    write(dir.path / "decay.json", kDecay);
    CHECK(invoke({"converge", "--config", (dir.path / "decay.json").string(), "-o", out}).code == 1);
  }
  SUBCASE("timing column only on request") {
    CHECK(invoke({"converge", "--config", constant, "-o", out, "--timing"}).code == 0);
    CHECK(read(fs::path(out) / "report.csv").find(",runtime_s\n") != std::string::npos);
    CHECK(fs::exists(fs::path(out) / "timing.json"));
  }
  SUBCASE("residual and validate") {
    const Result r = invoke({"residual", "--config", constant, "-o", out});
    CHECK(r.code == 0);
    const std::string csv = read(fs::path(out) / "residual.csv");
    CHECK(csv.rfind("phi_id,t1,t2,quadrature,closed_form,abs_diff\n", 0) == 0);
    const Result v = invoke({"validate", "--config", constant, "-o", out});
    CHECK(v.code == 0);
    CHECK(read(fs::path(out) / "validation.json").find("\"ok\": true") != std::string::npos);
  }
}
