#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marktau/data_model.hpp"
#include "marktau/estimator.hpp"
#include "marktau/inference.hpp"
#include "marktau/rng.hpp"

namespace marktau {

// Data-generating process:
//   A ~ Bernoulli(p_treat), V ~ U[0,1], eps ~ N(0,1) truncated to [-1,1],
//   tau0(v) = 3 - 2 sin(2 pi v), tau1(v) = c1 + c2 (1 - v) + c3 sin(2 pi v),
//   T = A tau1(V) + (1-A) tau0(V) + eps, C ~ Exp(mean mu_A).
struct Scenario {
  double c1 = 3.0;
  double c2 = 0.0;
  double c3 = 0.0;
  std::size_t n = 1000;
  double p_treat = 2.0 / 3.0;
  std::optional<double> censor_mean0;  // nullopt: calibrate to target_censoring
  std::optional<double> censor_mean1;
  double target_censoring = 0.40;
  EvaluationGrid grid = EvaluationGrid::explicit_points(MarkInterval(0.1, 0.9), {0.2, 0.4, 0.6, 0.8});
  std::size_t reps = 500;
  std::uint64_t seed = 1;
  double alpha = 0.05;
  BandwidthConfig bandwidth;
};

double tau0_curve(double v);
double tau1_curve(const Scenario& s, double v);
// (c1 - 3) + c2 (1 - v) + (c3 + 2) sin(2 pi v)
double true_tau(const Scenario& s, double v);

// Standard normal restricted to [-1, 1], by rejection.
double sample_truncated_normal(Rng& rng);

struct CensoringMeans {
  double mean0 = 0.0;
  double mean1 = 0.0;
};

Dataset generate_dataset(const Scenario& s, const CensoringMeans& censoring, Rng& rng);

// Exponential mean mu with mean_k(1 - exp(-T_k / mu)) = target, i.e. the
// censoring probability P(C < T) averaged over the given failure times.
double calibrate_exponential_mean(std::span<const double> failure_times, double target);

// Per-arm means hitting target_rate, from `draws` Monte Carlo failure times
// per arm. Deterministic given s.seed.
CensoringMeans calibrate_censoring(const Scenario& s, double target_rate,
                                   std::size_t draws = 200000);

// Scenario's explicit means where set, calibrated otherwise.
CensoringMeans resolve_censoring(const Scenario& s);

struct MetricsRow {
  double v = 0.0;
  std::size_t n = 0;
  double true_tau = 0.0;
  double bias = 0.0;
  double bias_se = 0.0;
  double mean_sd_hat = 0.0;         // mean over reps of sigma_hat / sqrt(nh)
  std::optional<double> sd_emp;     // across-rep SD of tau_hat
  std::optional<double> ratio;      // mean_sd_hat / sd_emp
  double cp = 0.0;
  double cp_se = 0.0;
  double mean_tau_hat = 0.0;
  std::size_t reps = 0;
  std::size_t flagged_reps = 0;
};

struct MetricsTable {
  std::vector<MetricsRow> rows;
  CensoringMeans censoring;
  double mean_censored_fraction = 0.0;
  std::size_t reps = 0;
  std::vector<std::string> diagnostics;
};

// Per-replication estimates, exposed for Monte Carlo checks.
struct ReplicationDraw {
  std::vector<double> tau_hat;
  std::vector<double> sd_hat;  // sigma_hat / sqrt(nh)
  std::vector<bool> covered;
  std::vector<bool> flagged;
  double censored_fraction = 0.0;
};

ReplicationDraw run_single_replication(const Scenario& s, const CensoringMeans& censoring,
                                       std::size_t rep);

MetricsTable run_replications(const Scenario& s, unsigned threads = 1);

struct PowerRow {
  double c3 = 0.0;
  std::size_t n = 0;
  double rejection_rate = 0.0;
  double se = 0.0;
  std::size_t reps = 0;
  std::size_t failed_reps = 0;  // replications where the test could not be computed
};

// Rejection rate of the chosen test per c3 value, holding the rest of `base`.
std::vector<PowerRow> size_power_curve(const Scenario& base, std::span<const double> c3_values,
                                       TestKind kind, std::size_t resamples, unsigned threads = 1);

}  // namespace marktau
