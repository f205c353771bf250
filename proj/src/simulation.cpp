#include "marktau/simulation.hpp"

#include <bit>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "marktau/parallel.hpp"

namespace marktau {

namespace {

constexpr std::uint64_t kCalibrationStream = 0xCA11B8A7E0000001ULL;
constexpr std::uint64_t kReplicationStream = 0x5E91CA7E00000002ULL;
constexpr std::uint64_t kPowerDataStream = 0x90AE7DA7A0000003ULL;
constexpr std::uint64_t kPowerTestStream = 0x90AE77E570000004ULL;

double failure_time(const Scenario& s, int arm, double v, double eps) {
  const double t = (arm == 1 ? tau1_curve(s, v) : tau0_curve(v)) + eps;
  if (t < 0.0) throw std::logic_error("generated a negative failure time; scenario is outside the supported range");
  return t;
}

double censoring_probability(std::span<const double> times, double mu) {
  double sum = 0.0;
  for (double t : times) sum += -std::expm1(-t / mu);
  return sum / static_cast<double>(times.size());
}

}  // namespace

double tau0_curve(double v) { return 3.0 - 2.0 * std::sin(2.0 * std::numbers::pi * v); }

double tau1_curve(const Scenario& s, double v) {
  return s.c1 + s.c2 * (1.0 - v) + s.c3 * std::sin(2.0 * std::numbers::pi * v);
}

double true_tau(const Scenario& s, double v) {
  return (s.c1 - 3.0) + s.c2 * (1.0 - v) + (s.c3 + 2.0) * std::sin(2.0 * std::numbers::pi * v);
}

double sample_truncated_normal(Rng& rng) {
  std::normal_distribution<double> normal;
  while (true) {
    const double x = normal(rng);
    if (x >= -1.0 && x <= 1.0) return x;
  }
}

Dataset generate_dataset(const Scenario& s, const CensoringMeans& censoring, Rng& rng) {
  if (!(s.p_treat > 0.0 && s.p_treat < 1.0)) throw std::invalid_argument("p_treat must be in (0,1)");
  if (!(censoring.mean0 > 0.0 && censoring.mean1 > 0.0)) {
    throw std::invalid_argument("censoring means must be positive");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> exp0(1.0 / censoring.mean0);
  std::exponential_distribution<double> exp1(1.0 / censoring.mean1);

  std::vector<SubjectRecord> records;
  records.reserve(s.n);
  for (std::size_t i = 0; i < s.n; ++i) {
    const int arm = unif(rng) < s.p_treat ? 1 : 0;
    const double v = unif(rng);
    const double eps = sample_truncated_normal(rng);
    const double t = failure_time(s, arm, v, eps);
    const double c = arm == 1 ? exp1(rng) : exp0(rng);
    SubjectRecord r;
    r.arm = arm;
    if (t <= c) {
      r.y = t;
      r.delta = 1;
      r.mark = v;
    } else {
      r.y = c;
      r.delta = 0;
    }
    records.push_back(r);
  }
  return make_dataset(std::move(records));
}

double calibrate_exponential_mean(std::span<const double> failure_times, double target) {
  if (!(target > 0.0 && target < 1.0)) {
    throw std::invalid_argument("target censoring rate must be in (0,1)");
  }
  if (failure_times.empty()) throw std::invalid_argument("calibration needs failure times");

  // The rate is decreasing in mu; widen until the bracket straddles the target.
  constexpr double kCap = 1e12;
  double lo = 1.0, hi = 1.0;
  while (censoring_probability(failure_times, lo) < target) {
    lo *= 0.5;
    if (lo < 1.0 / kCap) throw std::runtime_error("calibration: cannot bracket target censoring rate");
  }
  while (censoring_probability(failure_times, hi) > target) {
    hi *= 2.0;
    if (hi > kCap) throw std::runtime_error("calibration: cannot bracket target censoring rate");
  }
  for (int it = 0; it < 200 && hi - lo > 1e-12 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (censoring_probability(failure_times, mid) > target) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double mu = 0.5 * (lo + hi);
  if (std::abs(censoring_probability(failure_times, mu) - target) > 0.005) {
    throw std::runtime_error("calibration did not converge");
  }
  return mu;
}

CensoringMeans calibrate_censoring(const Scenario& s, double target_rate, std::size_t draws) {
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    throw std::invalid_argument("target censoring rate must be in (0,1)");
  }
  CensoringMeans out;
  for (int arm = 0; arm < 2; ++arm) {
    auto rng = make_rng(s.seed, {kCalibrationStream, static_cast<std::uint64_t>(arm)});
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> times(draws);
    for (auto& t : times) {
      const double v = unif(rng);
      t = failure_time(s, arm, v, sample_truncated_normal(rng));
    }
    (arm == 0 ? out.mean0 : out.mean1) = calibrate_exponential_mean(times, target_rate);
  }
  return out;
}

CensoringMeans resolve_censoring(const Scenario& s) {
  if (s.censor_mean0 && s.censor_mean1) return {*s.censor_mean0, *s.censor_mean1};
  auto out = calibrate_censoring(s, s.target_censoring);
  if (s.censor_mean0) out.mean0 = *s.censor_mean0;
  if (s.censor_mean1) out.mean1 = *s.censor_mean1;
  return out;
}

ReplicationDraw run_single_replication(const Scenario& s, const CensoringMeans& censoring,
                                       std::size_t rep) {
  auto rng = make_rng(s.seed, {kReplicationStream, s.n, rep});
  const auto data = generate_dataset(s, censoring, rng);
  const auto est = estimate_on_grid(data, s.grid, s.alpha, s.bandwidth, 1);
  ReplicationDraw d;
  d.censored_fraction = 1.0 - static_cast<double>(data.event_count()) / static_cast<double>(data.size());
  for (const auto& p : est.points) {
    d.tau_hat.push_back(p.tau);
    d.sd_hat.push_back(std::sqrt(p.sigma2 / est.nh()));
    const double truth = true_tau(s, p.v);
    d.covered.push_back(!p.flagged && p.ci_lower <= truth && truth <= p.ci_upper);
    d.flagged.push_back(p.flagged);
  }
  return d;
}

MetricsTable run_replications(const Scenario& s, unsigned threads) {
  if (s.reps == 0) throw std::invalid_argument("reps must be positive");
  const auto censoring = resolve_censoring(s);
  std::vector<ReplicationDraw> draws(s.reps);
  parallel_for(s.reps, threads, [&](std::size_t r) { draws[r] = run_single_replication(s, censoring, r); });

  MetricsTable table;
  table.censoring = censoring;
  table.reps = s.reps;
  const double R = static_cast<double>(s.reps);
  for (const auto& d : draws) table.mean_censored_fraction += d.censored_fraction;
  table.mean_censored_fraction /= R;

  const auto& points = s.grid.points();
  for (std::size_t j = 0; j < points.size(); ++j) {
    MetricsRow row;
    row.v = points[j];
    row.n = s.n;
    row.reps = s.reps;
    row.true_tau = true_tau(s, row.v);
    double sum_tau = 0.0, sum_sd = 0.0, covered = 0.0;
    for (const auto& d : draws) {
      sum_tau += d.tau_hat[j];
      sum_sd += d.sd_hat[j];
      covered += d.covered[j] ? 1.0 : 0.0;
      if (d.flagged[j]) ++row.flagged_reps;
    }
    row.mean_tau_hat = sum_tau / R;
    row.bias = row.mean_tau_hat - row.true_tau;
    row.mean_sd_hat = sum_sd / R;
    row.cp = covered / R;
    row.cp_se = std::sqrt(row.cp * (1.0 - row.cp) / R);
    if (s.reps >= 2) {
      double ss = 0.0;
      for (const auto& d : draws) ss += (d.tau_hat[j] - row.mean_tau_hat) * (d.tau_hat[j] - row.mean_tau_hat);
      const double sd = std::sqrt(ss / (R - 1.0));
      row.sd_emp = sd;
      row.bias_se = sd / std::sqrt(R);
      if (sd > 0.0) row.ratio = row.mean_sd_hat / sd;
    }
    if (!row.ratio) {
      table.diagnostics.push_back("v=" + std::to_string(row.v) +
                                  ": ratio undefined (needs at least 2 replications with spread)");
    }
    if (row.flagged_reps > 0) {
      table.diagnostics.push_back("v=" + std::to_string(row.v) + ": " +
                                  std::to_string(row.flagged_reps) +
                                  " replications had no events in the kernel window");
    }
    table.rows.push_back(row);
  }
  return table;
}

std::vector<PowerRow> size_power_curve(const Scenario& base, std::span<const double> c3_values,
                                       TestKind kind, std::size_t resamples, unsigned threads) {
  if (base.reps == 0) throw std::invalid_argument("reps must be positive");
  if (resamples == 0) throw std::invalid_argument("resampling needs B >= 1");
  std::vector<PowerRow> out;
  for (double c3 : c3_values) {
    Scenario s = base;
    s.c3 = c3;
    const auto censoring = resolve_censoring(s);
    const auto c3_key = std::bit_cast<std::uint64_t>(c3);

    // 1 reject, 0 accept, -1 not computable
    std::vector<int> outcome(s.reps, 0);
    parallel_for(s.reps, threads, [&](std::size_t r) {
      auto rng = make_rng(s.seed, {kPowerDataStream, c3_key, s.n, r});
      const auto data = generate_dataset(s, censoring, rng);
      TestConfig cfg;
      cfg.grid = s.grid;
      cfg.resamples = resamples;
      cfg.alpha = s.alpha;
      cfg.seed = derive_seed(s.seed, {kPowerTestStream, c3_key, s.n, r});
      cfg.bandwidth = s.bandwidth;
      cfg.threads = 1;
      try {
        outcome[r] = run_test(kind, data, cfg).reject ? 1 : 0;
      } catch (const std::invalid_argument&) {
        outcome[r] = -1;
      }
    });

    PowerRow row;
    row.c3 = c3;
    row.n = s.n;
    row.reps = s.reps;
    double rejections = 0.0;
    for (int o : outcome) {
      if (o == 1) rejections += 1.0;
      if (o < 0) ++row.failed_reps;
    }
    const double R = static_cast<double>(s.reps);
    row.rejection_rate = rejections / R;
    row.se = std::sqrt(row.rejection_rate * (1.0 - row.rejection_rate) / R);
    out.push_back(row);
  }
  return out;
}

}  // namespace marktau
