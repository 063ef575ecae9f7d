#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "posthoc/bounds.hpp"
#include "posthoc/csv_io.hpp"
#include "posthoc/experiments.hpp"
#include "posthoc/pipeline.hpp"

using namespace posthoc;
using nlohmann::json;

namespace {

const std::string kBin = POSTHOC_BIN;
const std::string kData = POSTHOC_DATA_DIR;

struct Run {
  int code = -1;
  std::string out;
};

Run run(const std::string& args) {
  const std::string cmd = kBin + " " + args + " 2>/dev/null";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, got);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string tmp(const std::string& name) {
  return (std::filesystem::temp_directory_path() / ("posthoc_cli_" + name)).string();
}

}  // namespace

TEST_CASE("calibrate with Simes") {
  const Run r = run("calibrate --pvalues " + kData + "/demo_pvalues.csv --alpha 0.25");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  const std::size_t m = j["m"];
  CHECK(m == 100);
  for (std::size_t k = 1; k <= m; ++k) {
    CHECK(j["thresholds"][k - 1].get<double>() == doctest::Approx(0.25 * k / m));
  }
}

TEST_CASE("sign-flip calibration on the demo data matches the golden file") {
  const json golden = json::parse(slurp(kData + "/golden/signflip_demo.json"));
  const Run r = run("calibrate --data " + kData + "/demo_data.csv --method sign-flip --B " +
                    std::to_string(golden["B"].get<std::size_t>()) + " --seed " +
                    std::to_string(golden["seed"].get<std::uint64_t>()) + " --step-down");
  REQUIRE(r.code == 0);
  CHECK(json::parse(r.out) == golden);
  CHECK(golden["psi_sample"].size() == golden["B"].get<std::size_t>());
  // byte-identical on repeat
  CHECK(run("calibrate --data " + kData + "/demo_data.csv --method sign-flip --B " +
            std::to_string(golden["B"].get<std::size_t>()) + " --seed " +
            std::to_string(golden["seed"].get<std::uint64_t>()) + " --step-down")
            .out == r.out);
}

TEST_CASE("input errors exit with code 2") {
  CHECK(run("calibrate --pvalues /nonexistent.csv").code == 2);
  CHECK(run("calibrate --pvalues " + kData + "/demo_pvalues.csv --alpha 1.5").code == 2);
  CHECK(run("calibrate --pvalues " + kData + "/demo_pvalues.csv --K 1000").code == 2);
  CHECK(run("calibrate --pvalues " + kData + "/demo_pvalues.csv --data " + kData +
            "/demo_data.csv")
            .code == 2);
  CHECK(run("calibrate --pvalues " + kData + "/demo_pvalues.csv --method sign-flip").code == 2);
  const std::string bad = tmp("bad.csv");
  std::ofstream(bad) << "0.1\nabc\n";
  CHECK(run("calibrate --pvalues " + bad).code == 2);
  CHECK(run("frobnicate").code == 2);
  CHECK(run("reproduce fig9").code == 2);
}

TEST_CASE("bound a set and sweep the top-k curve") {
  const std::string cal = tmp("cal.json");
  const std::string pv = kData + "/demo_pvalues.csv";
  REQUIRE(run("calibrate --pvalues " + pv + " --method mc-known --B 500 --seed 3 --out " + cal)
              .code == 0);
  const Run empty = run("bound --calibration " + cal + " --pvalues " + pv + " --set ''");
  REQUIRE(empty.code == 0);
  CHECK(json::parse(empty.out)["vbar"] == 0);
  CHECK(json::parse(empty.out)["sbar"] == 0);

  const PValueVector p = read_pvalues_csv(pv);
  const ThresholdFamily family = threshold_family_from_json(json::parse(slurp(cal)));
  const Run set = run("bound --calibration " + cal + " --pvalues " + pv + " --set 3,17,42,1,2");
  REQUIRE(set.code == 0);
  const Bound b = bound(IndexSet{0, 1, 2, 16, 41}, family, p);
  CHECK(json::parse(set.out) == to_json(b));

  const Run curve = run("bound --calibration " + cal + " --pvalues " + pv + " --top-k 100");
  REQUIRE(curve.code == 0);
  const auto lines = split(curve.out, '\n');
  CHECK(lines[0] == "k,vbar,sbar,k_argmin");
  const auto last = split(lines[100], ',');
  CHECK(last[0] == "100");
  CHECK(parse_integer(last[2]) == static_cast<long long>(sbar(full_index_set(100), family, p)));

  CHECK(run("bound --calibration " + cal + " --pvalues " + pv + " --set 0").code == 2);
  CHECK(run("bound --calibration " + cal + " --pvalues " + pv + " --set 101").code == 2);
  CHECK(run("bound --calibration " + cal + " --pvalues " + pv + " --set 1,2 --vstar").code == 1);
}

TEST_CASE("vstar on a small problem") {
  const std::string pv = tmp("small_p.csv");
  std::ofstream(pv) << "0.001\n0.002\n0.3\n0.04\n0.9\n0.0005\n";
  const std::string cal = tmp("small_cal.json");
  REQUIRE(run("calibrate --pvalues " + pv + " --alpha 0.5 --out " + cal).code == 0);
  const Run r = run("bound --calibration " + cal + " --pvalues " + pv + " --set 1,2,3,4 --vstar");
  REQUIRE(r.code == 0);
  const json j = json::parse(r.out);
  CHECK(j["vstar"] == j["vbar"]);  // threshold families are nested
}

TEST_CASE("reproduce table2 matches the golden file") {
  const Run r = run("reproduce table2");
  REQUIRE(r.code == 0);
  CHECK(r.out == slurp(kData + "/golden/table2.csv"));
}

TEST_CASE("reproduce is deterministic and thread-count invariant") {
  const std::string args = "reproduce fig3 --runs 3 --m 30 --n 10 --B 40 --seed 5";
  const Run a = run(args + " --threads 1");
  const Run b = run(args + " --threads 3");
  REQUIRE(a.code == 0);
  CHECK(a.out == b.out);
  CHECK(a.out.rfind("setting_id,m,n,", 0) == 0);
  const std::string env = "POSTHOC_THREADS=2 " + kBin + " " + args + " 2>/dev/null";
  FILE* pipe = popen(env.c_str(), "r");
  std::string out;
  char buf[4096];
  std::size_t got;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  pclose(pipe);
  CHECK(out == a.out);
}

TEST_CASE("simulate writes the data model") {
  const std::string data = tmp("sim.csv");
  const std::string pv = tmp("sim_p.csv");
  REQUIRE(run("simulate --m 12 --n 5 --pi0 0.5 --mubar 2 --seed 4 --out " + data +
              " --pvalues-out " + pv)
              .code == 0);
  DataModel model{12, 5, Covariance::independent(), 0.5, 2.0, 4};
  const Eigen::MatrixXd X = read_matrix_csv(data);
  CHECK(X == sample_dataset(model));
  const PValueVector p = read_pvalues_csv(pv);
  const PValueVector expect = pvalues(test_statistics(X), Sidedness::two);
  for (std::size_t i = 0; i < 12; ++i) CHECK(p[i] == expect[i]);
}
