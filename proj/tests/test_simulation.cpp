#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "marktau/normal.hpp"
#include "marktau/simulation.hpp"

using namespace marktau;

namespace {

Scenario scenario(double c1, double c2, double c3) {
  Scenario s;
  s.c1 = c1;
  s.c2 = c2;
  s.c3 = c3;
  return s;
}

// CDF of N(0,1) truncated to [-1, 1]
double truncated_cdf(double x) {
  const double lo = normal_cdf(-1.0), hi = normal_cdf(1.0);
  return (normal_cdf(std::clamp(x, -1.0, 1.0)) - lo) / (hi - lo);
}

}  // namespace

TEST_CASE("true_tau examples") {
  CHECK(std::abs(true_tau(scenario(3, 0, -2), 0.3)) < 1e-15);
  CHECK(std::abs(true_tau(scenario(3, 0, -2), 0.77)) < 1e-15);
  CHECK(true_tau(scenario(3, 0, 1), 0.25) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(std::abs(true_tau(scenario(3, 2, -2), 1.0)) < 1e-12);
  CHECK(true_tau(scenario(3, 2, -2), 0.0) == doctest::Approx(2.0));
  for (double v : {0.1, 0.4, 0.9}) {
    const auto s = scenario(2.5, 1.5, 0.7);
    CHECK(true_tau(s, v) == doctest::Approx(tau1_curve(s, v) - tau0_curve(v)).epsilon(1e-13));
  }
}

TEST_CASE("truncated normal sampler") {
  auto rng = make_rng(1, {0});
  const std::size_t m = 1000000;
  std::vector<double> x(m);
  double sum = 0.0;
  for (auto& e : x) {
    e = sample_truncated_normal(rng);
    REQUIRE(e >= -1.0);
    REQUIRE(e <= 1.0);
    sum += e;
  }
  CHECK(std::abs(sum / static_cast<double>(m)) < 0.005);
  std::sort(x.begin(), x.end());
  double ks = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double f = truncated_cdf(x[i]);
    ks = std::max({ks, std::abs(f - static_cast<double>(i) / m), std::abs(f - static_cast<double>(i + 1) / m)});
  }
  CHECK(ks < 0.005);
}

TEST_CASE("generated datasets follow the design") {
  auto s = scenario(3, 0, 1);
  s.n = 100000;
  auto rng = make_rng(2, {0});
  const auto d = generate_dataset(s, CensoringMeans{6.0, 6.0}, rng);
  CHECK(d.size() == s.n);
  CHECK(std::abs(d.pi_hat - 2.0 / 3.0) < 0.005);
  CHECK(validate(d).empty());
  for (const auto& r : d.records) {
    CHECK(r.y >= 0.0);
    CHECK(r.mark.has_value() == (r.delta == 1));
  }
}

TEST_CASE("exponential censoring calibration") {
  // all failure times equal to 3: 1 - exp(-3/mu) = 0.4
  const std::vector<double> threes(10, 3.0);
  CHECK(calibrate_exponential_mean(threes, 0.4) == doctest::Approx(-3.0 / std::log(0.6)).epsilon(1e-9));
  CHECK(calibrate_exponential_mean(threes, 0.4) == doctest::Approx(5.8728).epsilon(1e-4));
  CHECK_THROWS_AS(calibrate_exponential_mean(threes, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(calibrate_exponential_mean(threes, 1.0), std::invalid_argument);

  auto s = scenario(3, 0, -1);
  const auto means = calibrate_censoring(s, 0.4);
  CHECK(means.mean0 > 0.0);
  CHECK(means.mean1 > 0.0);

  // realized censoring rate in a large sample
  s.n = 200000;
  auto rng = make_rng(3, {0});
  const auto d = generate_dataset(s, means, rng);
  for (int arm : {0, 1}) {
    std::size_t censored = 0, total = 0;
    for (const auto& r : d.records) {
      if (r.arm != arm) continue;
      ++total;
      censored += r.delta == 0;
    }
    CHECK(std::abs(static_cast<double>(censored) / total - 0.4) < 0.01);
  }

  // larger mean censors less
  auto rng2 = make_rng(3, {0});
  const auto lighter = generate_dataset(s, CensoringMeans{2 * means.mean0, 2 * means.mean1}, rng2);
  CHECK(lighter.event_count() > d.event_count());

  // effectively no censoring
  s.n = 500;
  auto rng3 = make_rng(4, {0});
  const auto none = generate_dataset(s, CensoringMeans{1e300, 1e300}, rng3);
  CHECK(none.event_count() == none.size());
}

TEST_CASE("replication metrics edge cases") {
  auto s = scenario(3, 0, -1);
  s.n = 300;
  s.reps = 1;
  s.censor_mean0 = 6.0;
  s.censor_mean1 = 6.0;
  const auto one = run_replications(s);
  REQUIRE(one.rows.size() == 4);
  for (const auto& row : one.rows) {
    CHECK_FALSE(row.ratio.has_value());
    CHECK_FALSE(row.sd_emp.has_value());
  }
  s.reps = 0;
  CHECK_THROWS_AS(run_replications(s), std::invalid_argument);
}

TEST_CASE("replications are reproducible and thread-count independent") {
  auto s = scenario(3, 0, -1);
  s.n = 400;
  s.reps = 20;
  const auto a = run_replications(s, 1);
  const auto b = run_replications(s, 3);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t j = 0; j < a.rows.size(); ++j) {
    CHECK(a.rows[j].bias == b.rows[j].bias);
    CHECK(a.rows[j].cp == b.rows[j].cp);
    CHECK(a.rows[j].mean_sd_hat == b.rows[j].mean_sd_hat);
    CHECK(*a.rows[j].ratio == *b.rows[j].ratio);
  }
  CHECK(a.censoring.mean0 == b.censoring.mean0);

  const auto r1 = run_single_replication(s, a.censoring, 5);
  const auto r2 = run_single_replication(s, a.censoring, 5);
  CHECK(r1.tau_hat == r2.tau_hat);
  CHECK(run_single_replication(s, a.censoring, 6).tau_hat != r1.tau_hat);
}

TEST_CASE("Monte Carlo consistency at n = 4000") {
  auto s = scenario(3, 0, -1);
  s.n = 4000;
  s.reps = 200;
  const auto table = run_replications(s, 2);
  for (const auto& row : table.rows) {
    MESSAGE("v=" << row.v << " bias=" << row.bias << " se=" << row.bias_se << " ratio=" << *row.ratio
                 << " cp=" << row.cp);
    CHECK(std::abs(row.bias) <= 3.0 * row.bias_se + 0.02);
    CHECK(*row.ratio >= 0.85);
    CHECK(*row.ratio <= 1.3);
    CHECK(row.flagged_reps == 0);
  }
  CHECK(std::abs(table.mean_censored_fraction - 0.4) < 0.02);
}

TEST_CASE("power curve bookkeeping") {
  auto s = scenario(3, 0, 0);
  s.n = 300;
  s.reps = 10;
  s.grid = EvaluationGrid::evenly_spaced(MarkInterval(0.1, 0.9), 10);
  const std::vector<double> c3{-2.0, 2.0};
  const auto rows = size_power_curve(s, c3, TestKind::global, 100, 2);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.reps == 10);
    CHECK(row.rejection_rate >= 0.0);
    CHECK(row.rejection_rate <= 1.0);
    CHECK(row.se == doctest::Approx(std::sqrt(row.rejection_rate * (1 - row.rejection_rate) / 10)));
  }
  CHECK(rows[1].rejection_rate >= rows[0].rejection_rate);
  const auto again = size_power_curve(s, c3, TestKind::global, 100, 1);
  CHECK(again[0].rejection_rate == rows[0].rejection_rate);
  CHECK(again[1].rejection_rate == rows[1].rejection_rate);
}
