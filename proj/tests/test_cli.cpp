#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "marktau/cli.hpp"

using namespace marktau;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run run(std::vector<std::string> args) {
  std::ostringstream out, err;
  Run r;
  r.code = run_cli(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "marktau_cli_tests";
  fs::create_directories(dir);
  return dir / name;
}

const std::string kData = MARKTAU_TEST_DATA_DIR;
const std::string kSmall = kData + "/small.csv";
const std::string kTrial = kData + "/trial_like.csv";
const std::string kTrialMeta = kData + "/trial_like.meta.json";

std::size_t data_lines(const std::string& csv) {
  std::size_t count = 0;
  std::istringstream in(csv);
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    ++count;
  }
  return count;
}

}  // namespace

TEST_CASE("estimate on the small fixture") {
  const auto r = run({"estimate", "--input", kSmall, "--grid", "5", "--threads", "1"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("# marktau estimate format 1", 0) == 0);
  CHECK(r.out.find("v,tau1,tau0,tau,sigma2,ci_lower,ci_upper,events1,events0") != std::string::npos);
  CHECK(data_lines(r.out) == 5);
  CHECK(r.err.find("m < 20") != std::string::npos);
}

TEST_CASE("estimate writes a summary sidecar") {
  const auto out = scratch("est.csv"), summary = scratch("est.json");
  const auto r = run({"estimate", "--input", kTrial, "--meta", kTrialMeta, "--out", out.string(), "--summary",
                      summary.string()});
  REQUIRE(r.code == 0);
  const auto j = nlohmann::json::parse(slurp(summary));
  CHECK(j["n"] == 1200);
  CHECK(j["events"] == 145);
  CHECK(j["follow_up"] == 80.0);
  CHECK(j["mark_scaling"]["min"] == 0.074);
  CHECK(j["mark_scaling"]["max"] == 77.56);
  CHECK(j["h"].get<double>() > 0.0);
  CHECK(data_lines(slurp(out)) == 20);
}

TEST_CASE("raw marks outside [0,1] are rejected without scaling") {
  const auto r = run({"estimate", "--input", kTrial});
  CHECK(r.code != 0);
  CHECK(r.err.find("mark ∈ [0,1]") != std::string::npos);
  CHECK(run({"estimate", "--input", kTrial, "--scale-marks"}).code == 0);
}

TEST_CASE("input and option errors") {
  const auto missing = run({"estimate", "--input", "/nonexistent/path.csv"});
  CHECK(missing.code != 0);
  CHECK(missing.err.find("/nonexistent/path.csv") != std::string::npos);

  const auto zero_h = run({"estimate", "--input", kSmall, "--bandwidth", "0"});
  CHECK(zero_h.code != 0);
  CHECK(zero_h.err.find("bandwidth must be positive") != std::string::npos);

  CHECK(run({"estimate", "--input", kSmall, "--grid", "5", "--grid-points", "0.2,0.3"}).code != 0);
  CHECK(run({"estimate", "--input", kSmall, "--interval", "0.6,0.4"}).code != 0);
  CHECK(run({"estimate", "--input", kSmall, "--interval", "0.6"}).code != 0);
  CHECK(run({"estimate", "--input", kSmall, "--interval", "0.2,0.45"}).code == 0);
  CHECK(run({"estimate"}).code != 0);
  CHECK(run({"frobnicate"}).code != 0);
  CHECK(run({"test", "--input", kSmall, "--kind", "other"}).code != 0);
}

TEST_CASE("test command is deterministic and reports JSON") {
  const std::vector<std::string> args{"test", "--input", kTrial, "--scale-marks", "--resamples", "200", "--seed", "7"};
  auto a1 = args;
  a1.insert(a1.end(), {"--threads", "1"});
  auto a2 = args;
  a2.insert(a2.end(), {"--threads", "3"});
  const auto r1 = run(a1), r2 = run(a2);
  REQUIRE(r1.code == 0);
  CHECK(r1.out == r2.out);
  const auto j = nlohmann::json::parse(r1.out);
  CHECK(j["kind"] == "global");
  CHECK(j["B"] == 200);
  CHECK(j["seed"] == 7);
  CHECK(j["format"] == "marktau test");
  CHECK(j["p_value"].get<double>() >= 0.0);

  auto constancy = args;
  constancy.insert(constancy.end(), {"--kind", "constancy"});
  const auto c = run(constancy);
  REQUIRE(c.code == 0);
  CHECK(nlohmann::json::parse(c.out)["kind"] == "constancy");
}

TEST_CASE("constancy test needs two usable grid points") {
  const auto r = run({"test", "--input", kSmall, "--kind", "constancy", "--grid-points", "0.5", "--resamples", "20"});
  CHECK(r.code != 0);
  CHECK(r.err.find("at least 2") != std::string::npos);
}

TEST_CASE("simulate emits one row per grid point and sample size") {
  const auto r = run({"simulate", "--c3", "-1", "--n", "200,300", "--reps", "4", "--censor-mean0", "6",
                      "--censor-mean1", "6", "--threads", "2"});
  REQUIRE(r.code == 0);
  CHECK(data_lines(r.out) == 8);
  CHECK(r.out.find("c1,c2,c3,n,v,true_tau,bias,bias_se,ratio") != std::string::npos);
  CHECK(run({"simulate", "--reps", "0"}).code != 0);
}

TEST_CASE("power parses negative ranges") {
  const auto r = run({"power", "--c3-range", "-2:-1:0.5", "--n", "200", "--reps", "3", "--resamples", "20",
                      "--grid", "5", "--censor-mean0", "6", "--censor-mean1", "6"});
  REQUIRE(r.code == 0);
  CHECK(data_lines(r.out) == 3);
  CHECK(r.out.find("kind,c1,c2,c3,n,rejection_rate,se,reps,failed_reps") != std::string::npos);
  CHECK(run({"power", "--c3-range", "1:0:0.5"}).code != 0);
}

TEST_CASE("km dump") {
  const auto r = run({"km", "--input", kSmall});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("arm,t,value\n0,0,1\n") != std::string::npos);
  CHECK(r.out.find("\n1,0,1\n") != std::string::npos);
}

TEST_CASE("replay reproduces artifacts byte for byte") {
  const auto est = scratch("replay_est.csv"), est2 = scratch("replay_est2.csv");
  REQUIRE(run({"estimate", "--input", kSmall, "--grid", "4", "--out", est.string()}).code == 0);
  REQUIRE(run({"replay", "--from", est.string(), "--out", est2.string()}).code == 0);
  CHECK(slurp(est) == slurp(est2));

  const auto tst = scratch("replay_test.json"), tst2 = scratch("replay_test2.json");
  REQUIRE(run({"test", "--input", kSmall, "--resamples", "30", "--seed", "3", "--out", tst.string()}).code == 0);
  REQUIRE(run({"replay", "--from", tst.string(), "--out", tst2.string(), "--threads", "2"}).code == 0);
  CHECK(slurp(tst) == slurp(tst2));

  const auto cfg = config_from_artifact(slurp(tst));
  CHECK(cfg.command == "test");
  CHECK(cfg.seed == 3);
  CHECK(cfg.resamples == 30);
  CHECK(to_json(run_config_from_json(to_json(cfg))) == to_json(cfg));
}
