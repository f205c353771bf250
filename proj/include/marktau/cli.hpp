#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace marktau {

inline constexpr int kFormatVersion = 1;

// Everything that determines the content of an artifact. Output paths and the
// worker count are deliberately excluded: they never change the bytes written.
struct RunConfig {
  std::string command;  // estimate | test | simulate | power | km

  // data input (estimate, test, km)
  std::string input;
  std::string metadata;
  bool scale_marks = false;
  bool drop_missing_marks = false;

  double interval_lower = 0.1;
  double interval_upper = 0.9;
  std::size_t grid_count = 20;
  std::vector<double> grid_points;  // non-empty overrides grid_count
  double alpha = 0.05;
  double bandwidth_scale = 1.0;
  std::optional<double> bandwidth;

  // test / power
  std::string kind = "global";
  std::size_t resamples = 500;
  std::uint64_t seed = 1;
  bool p_plus_one = false;
  std::optional<double> design_pi;

  // simulate / power
  double c1 = 3.0;
  double c2 = 0.0;
  std::vector<double> c3 = {0.0};
  std::vector<std::size_t> n = {1000};
  std::size_t reps = 500;
  std::optional<double> censor_mean0;
  std::optional<double> censor_mean1;
};

nlohmann::ordered_json to_json(const RunConfig& config);
RunConfig run_config_from_json(const nlohmann::json& j);

struct OutputPaths {
  std::string out;      // primary artifact; empty means stdout
  std::string summary;  // estimate: JSON summary sidecar
};

// Executes a resolved config. Returns the process exit code; diagnostics go
// to `err`, artifacts to the configured paths (or `out` when unset).
int execute(const RunConfig& config, const OutputPaths& paths, unsigned threads,
            std::ostream& out, std::ostream& err);

// Full command-line entry point; args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

// Extracts the embedded RunConfig from a CSV or JSON artifact.
RunConfig config_from_artifact(const std::string& artifact_text);

}  // namespace marktau
