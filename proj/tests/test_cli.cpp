#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tfm/screening.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string stderr_text;
};

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "tfm_cli_tests";
  fs::create_directories(dir);
  return dir;
}

RunResult run_cli(const std::string& args) {
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd =
      std::string(TFM_CLI_PATH) + " " + args + " 2>" + err.string() + " >/dev/null";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(err);
  std::stringstream buf;
  buf << in.rdbuf();
  result.stderr_text = buf.str();
  return result;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::trunc);
  out << content;
}

const std::string kSpecJson = R"({
  "p": 12, "n": 400, "k0": 1,
  "factor_ar": [{"coef": 0.9, "sd": 2.0}],
  "strengths": [0.0, 0.0],
  "loading": {"scheme": "independent_uniform"},
  "noise_variance": 1.0,
  "threshold": {"process": "ar1", "coef": 0.3, "sd": 1.0},
  "r0": 0.0, "seed": 99
})";

fs::path make_dataset(const std::string& name) {
  const fs::path dir = work_dir() / name;
  fs::create_directories(dir);
  write_file(dir / "spec.json", kSpecJson);
  const RunResult res =
      run_cli("simulate --spec " + (dir / "spec.json").string() + " --out " + dir.string());
  REQUIRE(res.exit_code == 0);
  return dir;
}

} // namespace

TEST_CASE("fit writes a complete report and profile") {
  const fs::path dir = make_dataset("fit");
  const RunResult res = run_cli("fit " + (dir / "panel.csv").string() + " --z " +
                                (dir / "z.csv").string() + " --k 1 --out " + dir.string());
  CHECK(res.exit_code == 0);

  const json report = json::parse(slurp(dir / "fit_report.json"));
  CHECK(report.at("k_hat").get<int>() == 1);
  CHECK(report.contains("r_hat"));
  CHECK(report.contains("config_digest"));
  const double r_hat = report.at("r_hat").get<double>();
  const double eta1 = report.at("eta_values").at(0).get<double>();
  const double eta2 = report.at("eta_values").at(1).get<double>();
  CHECK(eta1 < r_hat);
  CHECK(r_hat < eta2);

  const std::string profile = slurp(dir / "g_profile.tsv");
  const auto lines = std::count(profile.begin(), profile.end(), '\n');
  CHECK(lines == report.at("grid_size").get<long>() + 1);
}

TEST_CASE("fit estimates k and writes ratio profiles when not forced") {
  const fs::path dir = make_dataset("fitk");
  const RunResult res = run_cli("fit " + (dir / "panel.csv").string() + " --z " +
                                (dir / "z.csv").string() + " --out " + dir.string());
  CHECK(res.exit_code == 0);
  const json report = json::parse(slurp(dir / "fit_report.json"));
  CHECK(report.at("k_hat").get<int>() == 1);
  CHECK(fs::exists(dir / "eigen_ratios_regime1.tsv"));
  CHECK(fs::exists(dir / "eigen_ratios_regime2.tsv"));
}

TEST_CASE("fit derives the threshold series from the panel with csd:<lag>") {
  const fs::path dir = make_dataset("fitcsd");
  const RunResult res = run_cli("fit " + (dir / "panel.csv").string() +
                                " --z csd:1 --k 1 --out " + dir.string());
  CHECK(res.exit_code == 0);
  const json report = json::parse(slurp(dir / "fit_report.json"));
  CHECK(report.at("n_regime1").get<int>() + report.at("n_regime2").get<int>() ==
        399);  // first entry of the derived series is unusable
}

TEST_CASE("config file supplies defaults and flags override it") {
  const fs::path dir = make_dataset("fitcfg");
  write_file(dir / "run.ini", "[fit]\nk=1\nout=" + (dir / "from_config").string() + "\n");
  const RunResult res = run_cli("fit " + (dir / "panel.csv").string() + " --z " +
                                (dir / "z.csv").string() + " --config " +
                                (dir / "run.ini").string());
  CHECK(res.exit_code == 0);
  const json report = json::parse(slurp(dir / "from_config" / "fit_report.json"));
  CHECK(report.at("k_hat").get<int>() == 1);
  CHECK(!report.contains("k_per_regime"));  // k came from config, not estimation

  const RunResult overridden = run_cli(
      "fit " + (dir / "panel.csv").string() + " --z " + (dir / "z.csv").string() +
      " --config " + (dir / "run.ini").string() + " --out " + (dir / "from_flag").string());
  CHECK(overridden.exit_code == 0);
  CHECK(fs::exists(dir / "from_flag" / "fit_report.json"));
}

TEST_CASE("fit accepts the wide-tail quantile configuration") {
  const fs::path dir = make_dataset("fiteta");
  const RunResult res =
      run_cli("fit " + (dir / "panel.csv").string() + " --z " + (dir / "z.csv").string() +
              " --k 1 --eta 0.10 0.90 --signals --out " + dir.string());
  CHECK(res.exit_code == 0);
  CHECK(fs::exists(dir / "signal.tsv"));
  CHECK(fs::exists(dir / "factors.tsv"));
  CHECK(fs::exists(dir / "regimes.tsv"));
}

TEST_CASE("fit exit codes distinguish failure classes") {
  const fs::path dir = make_dataset("fiterr");

  SUBCASE("missing z column: input error naming the column") {
    const RunResult res = run_cli("fit " + (dir / "panel.csv").string() +
                                  " --z volatility --out " + dir.string());
    CHECK(res.exit_code == 2);
    CHECK(res.stderr_text.find("volatility") != std::string::npos);
  }
  SUBCASE("missing required flag: input error") {
    const RunResult res = run_cli("fit " + (dir / "panel.csv").string());
    CHECK(res.exit_code == 2);
  }
  SUBCASE("degenerate threshold series: config error") {
    // constant z column collapses the eta quantiles
    std::string csv = "y1,y2,zc\n";
    for (int t = 0; t < 40; ++t) {
      csv += std::to_string(0.1 * t) + "," + std::to_string(0.2 * t) + ",5\n";
    }
    write_file(dir / "flat.csv", csv);
    const RunResult res =
        run_cli("fit " + (dir / "flat.csv").string() + " --z zc --k 1 --out " + dir.string());
    CHECK(res.exit_code == 4);
  }
  SUBCASE("all-zero panel: numerical failure") {
    std::string csv = "y1,y2,zc\n";
    for (int t = 0; t < 40; ++t) {
      csv += "0,0," + std::to_string(t * 0.25 - 5.0) + "\n";
    }
    write_file(dir / "zeros.csv", csv);
    const RunResult res =
        run_cli("fit " + (dir / "zeros.csv").string() + " --z zc --out " + dir.string());
    CHECK(res.exit_code == 3);
  }
}

TEST_CASE("simulate is byte-identical for a fixed seed") {
  const fs::path dir = work_dir() / "sim";
  fs::create_directories(dir / "a");
  fs::create_directories(dir / "b");
  write_file(dir / "spec.json", kSpecJson);
  const std::string spec = (dir / "spec.json").string();
  REQUIRE(run_cli("simulate --spec " + spec + " --seed 7 --out " + (dir / "a").string())
              .exit_code == 0);
  REQUIRE(run_cli("simulate --spec " + spec + " --seed 7 --out " + (dir / "b").string())
              .exit_code == 0);
  CHECK(slurp(dir / "a" / "panel.csv") == slurp(dir / "b" / "panel.csv"));
  CHECK(slurp(dir / "a" / "z.csv") == slurp(dir / "b" / "z.csv"));
  CHECK(slurp(dir / "a" / "truth.json") == slurp(dir / "b" / "truth.json"));

  REQUIRE(run_cli("simulate --spec " + spec + " --seed 8 --out " + (dir / "b").string())
              .exit_code == 0);
  CHECK(slurp(dir / "a" / "panel.csv") != slurp(dir / "b" / "panel.csv"));
}

TEST_CASE("screen ranks candidates and compares models") {
  const fs::path dir = make_dataset("screen");
  const RunResult res = run_cli(
      "screen " + (dir / "panel.csv").string() + " --z " + (dir / "z.csv").string() +
      " --candidates z:0..2,csd:1..2,sq:0..0 --k 1 --compare --out " + dir.string());
  CHECK(res.exit_code == 0);

  const json report = json::parse(slurp(dir / "screening_report.json"));
  REQUIRE(report.at("entries").size() == 6);
  CHECK(report.at("entries").at(0).at("candidate").get<std::string>() == "z_ar1");
  CHECK(report.contains("selected"));
  const std::string tsv = slurp(dir / "screening.tsv");
  CHECK(tsv.rfind("rank\tcandidate\tq\targmax_r\te\n", 0) == 0);

  // the reported E for the top candidate matches a direct library call
  {
    tfm::LoadOptions opt;
    const tfm::PanelSeries panel = tfm::load_panel(dir / "panel.csv", opt).panel;
    const auto zfile = tfm::load_panel(dir / "z.csv", opt).panel;
    const tfm::ThresholdSeries z =
        tfm::make_threshold_series(zfile.values.row(0).transpose(), "z_ar1");
    tfm::FitConfig fc;
    fc.k = report.at("config").at("k").get<int>();
    const double expect =
        tfm::model_compare_e(panel, z, static_cast<int>(panel.n() / 2), fc);
    const double got = report.at("entries").at(0).at("e").get<double>();
    CHECK(got == doctest::Approx(expect).epsilon(1e-12));
  }

  SUBCASE("unknown candidate kind is an input error") {
    const RunResult bad = run_cli("screen " + (dir / "panel.csv").string() +
                                  " --candidates foo:1..2 --out " + dir.string());
    CHECK(bad.exit_code == 2);
  }
}

TEST_CASE("replicate emits study tables") {
  const fs::path dir = work_dir() / "rep";
  fs::create_directories(dir);
  const RunResult res = run_cli("replicate 1 --quick --seed 5 --out " + dir.string());
  CHECK(res.exit_code == 0);
  for (const char* name :
       {"example1_freq_r_below.tsv", "example1_r_err.tsv", "example1_d_err_r_below.tsv",
        "example1_d_err_r_above.tsv"}) {
    CHECK(fs::exists(dir / name));
    const std::string text = slurp(dir / name);
    CHECK(text.rfind("# tool", 0) == 0);
    CHECK(text.find("setting2") != std::string::npos);
  }
  CHECK(run_cli("replicate 9 --quick --out " + dir.string()).exit_code == 2);
}
