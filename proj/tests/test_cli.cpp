#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <unistd.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"({
  "seed": 7,
  "simulator": {"name": "toy", "time_steps": 4},
  "prior": {"kind": "uniform-box", "lower": [0, 0], "upper": [15, 15]},
  "truth": [10, 10],
  "noise_frac": 0.05,
  "scheme": "mixed",
  "n_train": 60,
  "k_folds": 4,
  "train": {"epochs": 4, "minibatch": 10, "complexity_eta": 2},
  "ns_phase1": {"n_live": 40},
  "ns_phase3": {"n_live": 40}
})";

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() /
           ("emucal_cli_test_" + std::to_string(::getpid()) + "_" +
            std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path, ec);
  }
};

int run_cli(const std::string& args) {
  const std::string cmd = std::string(EMUCAL_BIN) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_config(const fs::path& p, const std::string& body) {
  std::ofstream out(p);
  out << body;
}

}  // namespace

TEST_CASE("validate passes on a fresh build and fails the negative control") {
  CHECK(run_cli("validate") == 0);
  CHECK(run_cli("validate --corrupt-gradient") == 1);
}

TEST_CASE("run produces the full artifact set and exit 0") {
  TempDir dir;
  write_config(dir.path / "cfg.json", kTinyConfig);
  const std::string out = (dir.path / "out").string();
  REQUIRE(run_cli("run --config " + (dir.path / "cfg.json").string() + " --out " + out) == 0);

  for (const char* f : {"manifest.json", "report.json", "metrics.csv", "samples_phase1.csv",
                        "samples_phase3.csv", "triangle.csv", "model.json"})
    CHECK(fs::exists(fs::path(out) / f));

  // manifest carries the resolved config and both timestamps
  const nlohmann::json manifest = nlohmann::json::parse(slurp(fs::path(out) / "manifest.json"));
  CHECK(manifest.at("tool_version").is_string());
  CHECK_FALSE(manifest.at("started_at").get<std::string>().empty());
  CHECK_FALSE(manifest.at("finished_at").get<std::string>().empty());
  CHECK(manifest.at("resolved_config").at("n_train") == 60);

  // CSVs carry header rows
  const std::string metrics = slurp(fs::path(out) / "metrics.csv");
  CHECK(metrics.rfind("fold,rmse,pearson\n", 0) == 0);

  // report is not flagged incomplete
  const nlohmann::json report = nlohmann::json::parse(slurp(fs::path(out) / "report.json"));
  CHECK(report.at("incomplete") == false);
}

TEST_CASE("malformed config exits nonzero without partial artifacts") {
  TempDir dir;
  write_config(dir.path / "bad.json", "{ this is not json");
  const std::string out = (dir.path / "out").string();
  CHECK(run_cli("run --config " + (dir.path / "bad.json").string() + " --out " + out) == 2);
  CHECK_FALSE(fs::exists(fs::path(out) / "report.json"));
  CHECK_FALSE(fs::exists(fs::path(out) / "metrics.csv"));
}

TEST_CASE("repeated seeded runs give byte-identical metrics") {
  TempDir dir;
  write_config(dir.path / "cfg.json", kTinyConfig);
  const std::string out1 = (dir.path / "out1").string();
  const std::string out2 = (dir.path / "out2").string();
  const std::string base = "run --config " + (dir.path / "cfg.json").string() + " --seed 7 --out ";
  REQUIRE(run_cli(base + out1) == 0);
  REQUIRE(run_cli(base + out2) == 0);
  CHECK(slurp(fs::path(out1) / "metrics.csv") == slurp(fs::path(out2) / "metrics.csv"));
  CHECK(slurp(fs::path(out1) / "samples_phase3.csv") ==
        slurp(fs::path(out2) / "samples_phase3.csv"));
}

TEST_CASE("sweep and curve write their tables; empty grids are usage errors") {
  TempDir dir;
  write_config(dir.path / "cfg.json", kTinyConfig);
  const std::string cfg = (dir.path / "cfg.json").string();

  const std::string out = (dir.path / "sweep").string();
  REQUIRE(run_cli("sweep --config " + cfg + " --etas 2,3 --schemes lhc --out " + out) == 0);
  const std::string sweep_csv = slurp(fs::path(out) / "sweep.csv");
  CHECK(sweep_csv.rfind("scheme,eta,", 0) == 0);
  CHECK(std::count(sweep_csv.begin(), sweep_csv.end(), '\n') == 3);  // header + 2 rows

  const std::string out2 = (dir.path / "curve").string();
  REQUIRE(run_cli("curve --config " + cfg + " --sizes 24,48 --out " + out2) == 0);
  const std::string curve_csv = slurp(fs::path(out2) / "learning_curve.csv");
  CHECK(std::count(curve_csv.begin(), curve_csv.end(), '\n') == 3);

  CHECK(run_cli("sweep --config " + cfg + " --etas '' --schemes lhc --out " + out) == 2);
  CHECK(run_cli("sweep --config " + cfg + " --schemes lhc --out " + out) == 2);
}

TEST_CASE("unknown simulator in config is a config error") {
  TempDir dir;
  write_config(dir.path / "cfg.json", R"({"simulator": {"name": "blackoil"}})");
  CHECK(run_cli("run --config " + (dir.path / "cfg.json").string() + " --out " +
                (dir.path / "out").string()) == 2);
}
