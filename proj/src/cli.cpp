#include "marktau/cli.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "marktau/data_model.hpp"
#include "marktau/estimator.hpp"
#include "marktau/inference.hpp"
#include "marktau/km.hpp"
#include "marktau/parallel.hpp"
#include "marktau/simulation.hpp"

namespace marktau {

namespace {

// Raised for user-facing failures; the message is printed as-is.
class CliError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError("cannot read input file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_artifact(const std::string& path, const std::string& content, std::ostream& out) {
  if (path.empty()) {
    out << content;
    return;
  }
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw CliError("cannot write output file '" + path + "'");
  f << content;
  if (!f) throw CliError("failed writing output file '" + path + "'");
}

std::string csv_preamble(const RunConfig& config) {
  return "# marktau " + config.command + " format " + std::to_string(kFormatVersion) +
         "\n# config: " + to_json(config).dump() + "\n";
}

nlohmann::ordered_json json_envelope(const RunConfig& config) {
  nlohmann::ordered_json j;
  j["format"] = "marktau " + config.command;
  j["format_version"] = kFormatVersion;
  j["config"] = to_json(config);
  return j;
}

template <class T>
nlohmann::json optional_json(const std::optional<T>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

template <class T>
std::optional<T> optional_from(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<T>();
}

EvaluationGrid make_grid(const RunConfig& c) {
  const MarkInterval interval(c.interval_lower, c.interval_upper);
  if (!c.grid_points.empty()) return EvaluationGrid::explicit_points(interval, c.grid_points);
  return EvaluationGrid::evenly_spaced(interval, c.grid_count);
}

BandwidthConfig make_bandwidth(const RunConfig& c) {
  BandwidthConfig bw;
  bw.scale = c.bandwidth_scale;
  if (c.bandwidth) {
    if (!(*c.bandwidth > 0.0)) throw CliError("bandwidth must be positive");
    bw.h = *c.bandwidth;
  }
  if (!(bw.scale > 0.0)) throw CliError("bandwidth scale must be positive");
  return bw;
}

struct LoadedData {
  Dataset data;
  std::size_t dropped = 0;
  std::optional<ScalingRecord> scaling;
};

LoadedData load_data(const RunConfig& c, std::ostream& err) {
  if (c.input.empty()) throw CliError("--input is required");
  const auto text = read_file(c.input);
  LoadedData loaded;
  ParseResult parsed;
  try {
    parsed = parse_dataset(text, {.drop_missing_marks = c.drop_missing_marks});
  } catch (const DataError& e) {
    throw CliError(c.input + ": " + e.what());
  }
  loaded.dropped = parsed.dropped_rows;
  if (loaded.dropped > 0) {
    err << "note: dropped " << loaded.dropped << " uncensored rows with missing marks\n";
  }

  DatasetMetadata meta;
  if (!c.metadata.empty()) {
    try {
      meta = parse_metadata(read_file(c.metadata));
    } catch (const DataError& e) {
      throw CliError(c.metadata + ": " + e.what());
    }
  }
  MarkScaling scaling = meta.mark_scaling.value_or(MarkScaling{});
  if (c.scale_marks) scaling.mode = ScalingMode::automatic;

  Dataset data = std::move(parsed.dataset);
  if (scaling.mode == ScalingMode::automatic) {
    const auto marks = data.observed_marks();
    if (marks.empty()) throw CliError("mark scaling requested but no marks were observed");
    auto scaled = scale_marks(marks);
    if (scaled.scaling.degenerate) {
      err << "warning: all observed marks are equal; scaled marks set to 0.5\n";
    }
    loaded.scaling = scaled.scaling;
  } else if (scaling.mode == ScalingMode::fixed) {
    loaded.scaling = scaling.fixed;
  }
  if (loaded.scaling) data = rescale_dataset(data, *loaded.scaling);
  if (meta.follow_up) data.follow_up = *meta.follow_up;

  const auto report = validate(data);
  if (!report.empty()) {
    for (const auto& v : report) {
      err << "error: ";
      if (v.row == kDatasetLevel) {
        err << "dataset";
      } else {
        err << "row " << (v.row + 1);
      }
      err << ": violates " << v.rule << "\n";
    }
    throw CliError(c.input + ": validation failed with " + std::to_string(report.size()) +
                   " violation(s)");
  }
  loaded.data = std::move(data);
  return loaded;
}

void warn_small_sample(const Dataset& data, std::ostream& err) {
  const auto m = data.event_count();
  if (m < 20) {
    err << "warning: only " << m << " observed failures; the rule-of-thumb bandwidth is unreliable for m < 20\n";
  }
}

int cmd_estimate(const RunConfig& c, const OutputPaths& paths, unsigned threads, std::ostream& out,
                 std::ostream& err) {
  const auto loaded = load_data(c, err);
  const auto& data = loaded.data;
  warn_small_sample(data, err);
  const auto grid = make_grid(c);
  const auto est = estimate_on_grid(data, grid, c.alpha, make_bandwidth(c), threads);

  std::string csv = csv_preamble(c);
  csv += "v,tau1,tau0,tau,sigma2,ci_lower,ci_upper,events1,events0\n";
  for (const auto& p : est.points) {
    csv += num(p.v) + "," + num(p.tau1) + "," + num(p.tau0) + "," + num(p.tau) + "," +
           num(p.sigma2) + "," + num(p.ci_lower) + "," + num(p.ci_upper) + "," +
           std::to_string(p.events1) + "," + std::to_string(p.events0) + "\n";
  }
  const auto flagged = est.flagged_indices();
  for (auto j : flagged) {
    err << "warning: no observed marks within the kernel window at v=" << num(est.points[j].v) << "\n";
  }

  auto summary = json_envelope(c);
  summary["h"] = est.h();
  summary["bandwidth_scale"] = est.bandwidth.shared.explicit_value ? nlohmann::json(nullptr)
                                                                    : nlohmann::json(est.bandwidth.shared.scale_constant);
  summary["sigma_v"] = est.bandwidth.shared.sigma_v;
  summary["alpha"] = est.alpha;
  summary["n"] = est.n;
  summary["n0"] = est.n0;
  summary["n1"] = est.n1;
  summary["pi_hat"] = data.pi_hat;
  summary["events"] = data.event_count();
  summary["follow_up"] = data.follow_up;
  summary["dropped_rows"] = loaded.dropped;
  if (loaded.scaling) {
    summary["mark_scaling"] = {{"min", loaded.scaling->min}, {"max", loaded.scaling->max},
                               {"degenerate", loaded.scaling->degenerate}};
  } else {
    summary["mark_scaling"] = nullptr;
  }
  summary["flagged_points"] = flagged;

  write_artifact(paths.out, csv, out);
  if (!paths.summary.empty()) write_artifact(paths.summary, summary.dump(2) + "\n", out);
  return 0;
}

int cmd_test(const RunConfig& c, const OutputPaths& paths, unsigned threads, std::ostream& out,
             std::ostream& err) {
  const auto loaded = load_data(c, err);
  warn_small_sample(loaded.data, err);
  TestConfig cfg;
  cfg.grid = make_grid(c);
  if (c.resamples == 0) throw CliError("--resamples must be at least 1");
  cfg.resamples = c.resamples;
  cfg.alpha = c.alpha;
  cfg.seed = c.seed;
  cfg.bandwidth = make_bandwidth(c);
  cfg.pi_override = c.design_pi;
  cfg.plus_one = c.p_plus_one;
  cfg.threads = threads;
  const auto result = run_test(parse_test_kind(c.kind), loaded.data, cfg);

  auto report = json_envelope(c);
  const auto body = test_report_json(result);
  for (const auto& [key, value] : body.items()) report[key] = value;
  write_artifact(paths.out, report.dump(2) + "\n", out);
  if (!paths.out.empty()) {
    out << c.kind << " test: statistic=" << num(result.statistic)
        << " critical_value=" << num(result.critical_value) << " p_value=" << num(result.p_value)
        << (result.reject ? " (reject)" : " (do not reject)") << "\n";
  }
  return 0;
}

Scenario base_scenario(const RunConfig& c) {
  Scenario s;
  s.c1 = c.c1;
  s.c2 = c.c2;
  s.reps = c.reps;
  s.seed = c.seed;
  s.alpha = c.alpha;
  s.grid = make_grid(c);
  s.bandwidth = make_bandwidth(c);
  s.censor_mean0 = c.censor_mean0;
  s.censor_mean1 = c.censor_mean1;
  return s;
}

int cmd_simulate(const RunConfig& c, const OutputPaths& paths, unsigned threads, std::ostream& out,
                 std::ostream& err) {
  if (c.reps == 0) throw CliError("--reps must be at least 1");
  std::string csv = csv_preamble(c);
  csv += "c1,c2,c3,n,v,true_tau,bias,bias_se,ratio,sd_hat_mean,sd_emp,cp,cp_se,reps,censor_mean0,censor_mean1\n";
  for (double c3 : c.c3) {
    for (auto n : c.n) {
      Scenario s = base_scenario(c);
      s.c3 = c3;
      s.n = n;
      const auto table = run_replications(s, threads);
      for (const auto& d : table.diagnostics) err << "warning: c3=" << num(c3) << " n=" << n << " " << d << "\n";
      for (const auto& r : table.rows) {
        csv += num(s.c1) + "," + num(s.c2) + "," + num(c3) + "," + std::to_string(n) + "," +
               num(r.v) + "," + num(r.true_tau) + "," + num(r.bias) + "," + num(r.bias_se) + "," +
               (r.ratio ? num(*r.ratio) : "") + "," + num(r.mean_sd_hat) + "," +
               (r.sd_emp ? num(*r.sd_emp) : "") + "," + num(r.cp) + "," + num(r.cp_se) + "," +
               std::to_string(r.reps) + "," + num(table.censoring.mean0) + "," +
               num(table.censoring.mean1) + "\n";
      }
    }
  }
  write_artifact(paths.out, csv, out);
  return 0;
}

int cmd_power(const RunConfig& c, const OutputPaths& paths, unsigned threads, std::ostream& out,
              std::ostream& err) {
  if (c.reps == 0) throw CliError("--reps must be at least 1");
  if (c.resamples == 0) throw CliError("--resamples must be at least 1");
  const auto kind = parse_test_kind(c.kind);
  std::string csv = csv_preamble(c);
  csv += "kind,c1,c2,c3,n,rejection_rate,se,reps,failed_reps\n";
  for (auto n : c.n) {
    Scenario s = base_scenario(c);
    s.n = n;
    const auto rows = size_power_curve(s, c.c3, kind, c.resamples, threads);
    for (const auto& r : rows) {
      if (r.failed_reps > 0) {
        err << "warning: c3=" << num(r.c3) << " n=" << n << ": " << r.failed_reps
            << " replications could not compute the statistic\n";
      }
      csv += c.kind + "," + num(s.c1) + "," + num(s.c2) + "," + num(r.c3) + "," +
             std::to_string(n) + "," + num(r.rejection_rate) + "," + num(r.se) + "," +
             std::to_string(r.reps) + "," + std::to_string(r.failed_reps) + "\n";
    }
  }
  write_artifact(paths.out, csv, out);
  return 0;
}

int cmd_km(const RunConfig& c, const OutputPaths& paths, std::ostream& out, std::ostream& err) {
  const auto loaded = load_data(c, err);
  std::string csv = csv_preamble(c);
  csv += "arm,t,value\n";
  for (int arm = 0; arm < 2; ++arm) {
    const auto s = fit_censoring_km(loaded.data, arm);
    csv += std::to_string(arm) + ",0,1\n";
    for (std::size_t k = 0; k < s.jump_times().size(); ++k) {
      csv += std::to_string(arm) + "," + num(s.jump_times()[k]) + "," + num(s.values()[k]) + "\n";
    }
  }
  write_artifact(paths.out, csv, out);
  return 0;
}

std::vector<double> parse_range(const std::string& spec) {
  double lo = 0.0, hi = 0.0, step = 0.0;
  char tail = 0;
  if (std::sscanf(spec.c_str(), "%lf:%lf:%lf%c", &lo, &hi, &step, &tail) != 3 || !(step > 0.0) ||
      hi < lo) {
    throw CliError("invalid range '" + spec + "' (expected lo:hi:step with step > 0)");
  }
  const auto count = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9)) + 1;
  std::vector<double> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

}  // namespace

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["command"] = c.command;
  if (c.command == "estimate" || c.command == "test" || c.command == "km") {
    j["input"] = c.input;
    j["metadata"] = c.metadata;
    j["scale_marks"] = c.scale_marks;
    j["drop_missing_marks"] = c.drop_missing_marks;
  }
  if (c.command != "km") {
    j["interval"] = {c.interval_lower, c.interval_upper};
    j["grid_count"] = c.grid_count;
    j["grid_points"] = c.grid_points;
    j["alpha"] = c.alpha;
    j["bandwidth_scale"] = c.bandwidth_scale;
    j["bandwidth"] = optional_json(c.bandwidth);
  }
  if (c.command == "test" || c.command == "power") {
    j["kind"] = c.kind;
    j["resamples"] = c.resamples;
  }
  if (c.command == "test") {
    j["p_plus_one"] = c.p_plus_one;
    j["design_pi"] = optional_json(c.design_pi);
  }
  if (c.command == "test" || c.command == "simulate" || c.command == "power") j["seed"] = c.seed;
  if (c.command == "simulate" || c.command == "power") {
    j["c1"] = c.c1;
    j["c2"] = c.c2;
    j["c3"] = c.c3;
    j["n"] = c.n;
    j["reps"] = c.reps;
    j["censor_mean0"] = optional_json(c.censor_mean0);
    j["censor_mean1"] = optional_json(c.censor_mean1);
  }
  return j;
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig c;
  c.command = j.at("command").get<std::string>();
  c.input = j.value("input", c.input);
  c.metadata = j.value("metadata", c.metadata);
  c.scale_marks = j.value("scale_marks", c.scale_marks);
  c.drop_missing_marks = j.value("drop_missing_marks", c.drop_missing_marks);
  if (j.contains("interval")) {
    c.interval_lower = j["interval"].at(0).get<double>();
    c.interval_upper = j["interval"].at(1).get<double>();
  }
  c.grid_count = j.value("grid_count", c.grid_count);
  c.grid_points = j.value("grid_points", c.grid_points);
  c.alpha = j.value("alpha", c.alpha);
  c.bandwidth_scale = j.value("bandwidth_scale", c.bandwidth_scale);
  c.bandwidth = optional_from<double>(j, "bandwidth");
  c.kind = j.value("kind", c.kind);
  c.resamples = j.value("resamples", c.resamples);
  c.seed = j.value("seed", c.seed);
  c.p_plus_one = j.value("p_plus_one", c.p_plus_one);
  c.design_pi = optional_from<double>(j, "design_pi");
  c.c1 = j.value("c1", c.c1);
  c.c2 = j.value("c2", c.c2);
  c.c3 = j.value("c3", c.c3);
  c.n = j.value("n", c.n);
  c.reps = j.value("reps", c.reps);
  c.censor_mean0 = optional_from<double>(j, "censor_mean0");
  c.censor_mean1 = optional_from<double>(j, "censor_mean1");
  return c;
}

RunConfig config_from_artifact(const std::string& text) {
  const std::string marker = "# config: ";
  std::size_t start = text.find_first_not_of(" \t\r\n");
  if (start != std::string::npos && text[start] == '{') {
    const auto j = nlohmann::json::parse(text);
    if (!j.contains("config")) throw CliError("artifact has no embedded config");
    return run_config_from_json(j["config"]);
  }
  const auto pos = text.find(marker);
  if (pos == std::string::npos) throw CliError("artifact has no embedded config");
  const auto end = text.find('\n', pos);
  return run_config_from_json(nlohmann::json::parse(text.substr(pos + marker.size(), end - pos - marker.size())));
}

int execute(const RunConfig& config, const OutputPaths& paths, unsigned threads, std::ostream& out,
            std::ostream& err) {
  try {
    if (config.command == "estimate") return cmd_estimate(config, paths, threads, out, err);
    if (config.command == "test") return cmd_test(config, paths, threads, out, err);
    if (config.command == "simulate") return cmd_simulate(config, paths, threads, out, err);
    if (config.command == "power") return cmd_power(config, paths, threads, out, err);
    if (config.command == "km") return cmd_km(config, paths, out, err);
    err << "error: unknown command '" << config.command << "'\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mark-specific causal treatment effects for censored data", "marktau"};
  app.require_subcommand(1);

  RunConfig c;
  OutputPaths paths;
  unsigned threads = default_thread_count();
  std::string c3_range;
  std::string replay_from;
  bool full_scale = false;
  std::optional<std::size_t> grid_count_flag;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option_function<std::string>(
        "--interval",
        [&](const std::string& text) {
          double lo = 0.0, hi = 0.0;
          char tail = 0;
          if (std::sscanf(text.c_str(), "%lf,%lf%c", &lo, &hi, &tail) != 2) {
            throw CLI::ValidationError("--interval", "expects lower,upper");
          }
          c.interval_lower = lo;
          c.interval_upper = hi;
        },
        "Mark interval lower,upper (default 0.1,0.9)");
    sub->add_option("--grid", grid_count_flag, "Number of evenly spaced grid points (default 20)");
    sub->add_option("--grid-points", c.grid_points, "Explicit grid points, comma separated")
        ->delimiter(',');
    sub->add_option("--alpha", c.alpha, "Significance level (default 0.05)");
    sub->add_option("--bandwidth-scale", c.bandwidth_scale, "Rule-of-thumb constant varpi (default 1)");
    sub->add_option("--bandwidth", c.bandwidth, "Explicit bandwidth h (overrides the rule of thumb)");
    sub->add_option("--threads", threads, "Worker threads (default: MARKTAU_THREADS or all cores)");
    sub->add_option("--out", paths.out, "Output file (default stdout)");
  };
  auto add_input = [&](CLI::App* sub) {
    sub->add_option("--input", c.input, "Input CSV with columns y,delta,mark,a")->required();
    sub->add_option("--meta", c.metadata, "JSON metadata sidecar (follow_up, mark_scaling)");
    sub->add_flag("--scale-marks", c.scale_marks, "Min-max scale observed marks to [0,1]");
    sub->add_flag("--drop-missing-marks", c.drop_missing_marks,
                  "Drop uncensored rows without a mark (complete-case analysis)");
  };
  auto add_sim = [&](CLI::App* sub) {
    sub->add_option("--c1", c.c1, "Treated-arm intercept (default 3)");
    sub->add_option("--c2", c.c2, "Treated-arm coefficient on (1 - v) (default 0)");
    sub->add_option("--n", c.n, "Sample sizes, comma separated (default 1000)")->delimiter(',');
    sub->add_option("--reps", c.reps, "Monte Carlo replications (default 500)");
    sub->add_option("--seed", c.seed, "Master RNG seed (default 1)");
    sub->add_option("--censor-mean0", c.censor_mean0, "Control-arm censoring mean (default: calibrated to 40%)");
    sub->add_option("--censor-mean1", c.censor_mean1, "Treated-arm censoring mean (default: calibrated to 40%)");
    sub->add_flag("--full-scale", full_scale, "Use 5000 replications and 5000 resamples");
  };

  auto* estimate = app.add_subcommand("estimate", "Estimate tau(v) with pointwise confidence intervals");
  add_input(estimate);
  add_common(estimate);
  estimate->add_option("--summary", paths.summary, "JSON summary output file");

  auto* test = app.add_subcommand("test", "Global or constancy test with multiplier resampling");
  add_input(test);
  add_common(test);
  test->add_option("--kind", c.kind, "global | constancy")->check(CLI::IsMember({"global", "constancy"}));
  test->add_option("--resamples", c.resamples, "Multiplier resamples B (default 500)");
  test->add_option("--seed", c.seed, "RNG seed (default 1)");
  test->add_flag("--p-plus-one", c.p_plus_one, "Report (1 + #exceed)/(1 + B) as the p-value");
  test->add_option("--design-pi", c.design_pi, "Known assignment probability used in resampling");

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo bias / ratio / coverage table");
  add_common(simulate);
  add_sim(simulate);
  simulate->add_option("--c3", c.c3, "Sine amplitude(s), comma separated (default 0)")->delimiter(',');

  auto* power = app.add_subcommand("power", "Monte Carlo size / power curve");
  add_common(power);
  add_sim(power);
  power->add_option("--kind", c.kind, "global | constancy")->check(CLI::IsMember({"global", "constancy"}));
  power->add_option("--c3-range", c3_range, "c3 values as lo:hi:step (default -2:2:0.25)");
  power->add_option("--c3", c.c3, "Explicit c3 values, comma separated")->delimiter(',');
  power->add_option("--resamples", c.resamples, "Multiplier resamples B (default 500)");

  auto* km = app.add_subcommand("km", "Dump the censoring Kaplan-Meier curves as CSV");
  add_input(km);
  km->add_option("--out", paths.out, "Output file (default stdout)");

  auto* replay = app.add_subcommand("replay", "Re-run the config embedded in an artifact");
  replay->add_option("--from", replay_from, "Artifact produced by an earlier run")->required();
  replay->add_option("--out", paths.out, "Output file (default stdout)");
  replay->add_option("--summary", paths.summary, "JSON summary output file (estimate only)");
  replay->add_option("--threads", threads, "Worker threads");

  std::vector<std::string> argv_store;
  argv_store.push_back("marktau");
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (replay->parsed()) {
      c = config_from_artifact(read_file(replay_from));
    } else {
      c.command = app.get_subcommands().front()->get_name();
      if (grid_count_flag && !c.grid_points.empty()) {
        throw CliError("--grid and --grid-points are mutually exclusive");
      }
      if (grid_count_flag) {
        c.grid_count = *grid_count_flag;
        c.grid_points.clear();
      } else if (c.command == "simulate" && c.grid_points.empty()) {
        c.grid_points = {0.2, 0.4, 0.6, 0.8};
      }
      if (c.grid_count == 0) throw CliError("--grid must be at least 1");
      if (c.command == "power" && power->count("--c3") == 0) {
        c.c3 = parse_range(c3_range.empty() ? "-2:2:0.25" : c3_range);
      }
      if (full_scale) {
        c.reps = 5000;
        c.resamples = 5000;
      }
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  if (threads == 0) threads = 1;
  return execute(c, paths, threads, out, err);
}

}  // namespace marktau
