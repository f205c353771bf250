#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "marktau/estimator.hpp"

namespace marktau {

enum class TestKind { global, constancy };

std::string to_string(TestKind kind);
TestKind parse_test_kind(const std::string& text);

struct MultiplierDraw {
  std::vector<double> w;
};

// Draw `index` of the multiplier stream rooted at `seed`: n iid N(0,1).
MultiplierDraw draw_multipliers(std::size_t n, std::uint64_t seed, std::size_t index);

// Symmetric g x g table of zeta(v_j, v_k); the diagonal is zero.
struct ZetaTable {
  std::size_t grid_size = 0;
  std::vector<double> values;

  double operator()(std::size_t j, std::size_t k) const { return values[j * grid_size + k]; }
};

ZetaTable zeta_table(const GridFit& fit);

// max over unflagged points of nh tau^2 / sigma2.
double global_statistic(const EstimateGrid& est);

// max over unflagged pairs j < k of nh (tau_j - tau_k)^2 / zeta_jk. Pairs with
// zeta = 0 are skipped; `skipped_pairs` receives their count when given.
double constancy_statistic(const EstimateGrid& est, const ZetaTable& zeta,
                           std::size_t* skipped_pairs = nullptr);

// xi_i(v) = (A_i/pi) theta_1i(v) - ((1-A_i)/(1-pi)) theta_0i(v), rows as in
// fit.theta. Subjects outside the table (censored) have xi = 0.
std::vector<double> xi_matrix(const GridFit& fit, double pi_hat);

// Resampled statistics for explicit multiplier draws (each of length n).
std::vector<double> global_resample(const GridFit& fit, std::span<const MultiplierDraw> draws,
                                    double pi_hat);
std::vector<double> constancy_resample(const GridFit& fit, const ZetaTable& zeta,
                                       std::span<const MultiplierDraw> draws, double pi_hat);

// B resampled statistics with draw b taken from draw_multipliers(n, seed, b).
// Identical for any thread count.
std::vector<double> resample_statistics(TestKind kind, const GridFit& fit, const ZetaTable& zeta,
                                        std::size_t resamples, std::uint64_t seed, double pi_hat,
                                        unsigned threads = 1);

// The ceil((1 - alpha) B)-th order statistic (1-based) of sorted resamples.
double critical_value(std::span<const double> sorted_resamples, double alpha);

// #{b : resampled_b >= statistic} / B, or (1 + #)/(1 + B) with plus_one.
double p_value(std::span<const double> resamples, double statistic, bool plus_one = false);

struct TestConfig {
  EvaluationGrid grid;
  std::size_t resamples = 500;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  BandwidthConfig bandwidth;
  std::optional<double> pi_override;  // design probability; defaults to pi_hat
  bool plus_one = false;
  unsigned threads = 1;
};

struct TestResult {
  TestKind kind = TestKind::global;
  double statistic = 0.0;
  std::vector<double> resampled;  // sorted ascending
  double critical_value = 0.0;
  double p_value = 1.0;
  bool reject = false;
  double alpha = 0.05;
  std::size_t resamples = 0;
  std::uint64_t seed = 0;
  bool plus_one = false;
  std::vector<double> grid;
  std::vector<std::size_t> excluded_points;
  std::size_t skipped_pairs = 0;
  double h = 0.0;
};

TestResult run_test(TestKind kind, const GridFit& fit, double pi_hat, const TestConfig& config);
TestResult run_test(TestKind kind, const Dataset& data, const TestConfig& config);

nlohmann::ordered_json test_report_json(const TestResult& result);

}  // namespace marktau
