#include <doctest.h>

#include <random>
#include <set>

#include "marktau/km.hpp"
#include "oracles.hpp"

using namespace marktau;

namespace {

std::vector<SubjectRecord> group(std::vector<std::pair<double, int>> obs) {
  std::vector<SubjectRecord> out;
  for (auto [y, d] : obs) {
    SubjectRecord r;
    r.y = y;
    r.delta = d;
    if (d == 1) r.mark = 0.5;
    out.push_back(r);
  }
  return out;
}

}  // namespace

TEST_CASE("censoring KM: single censoring between two failures") {
  auto s = fit_censoring_km(group({{1, 1}, {2, 0}, {3, 1}}));
  REQUIRE(s.jump_times() == std::vector<double>{2.0});
  CHECK(s.values()[0] == 0.5);
  CHECK(s.eval(0.0) == 1.0);
  CHECK(s.eval(2.0) == 1.0);
  CHECK(s.eval(2.5) == 0.5);
  CHECK(s.eval(3.0) == 0.5);
}

TEST_CASE("censoring KM: no censoring gives the identity weight") {
  auto s = fit_censoring_km(group({{1, 1}, {2, 1}}));
  CHECK(s.jump_times().empty());
  for (double t : {0.0, 1.0, 1.5, 2.0, 100.0}) CHECK(s.eval(t) == 1.0);
}

TEST_CASE("censoring KM: failure tied with censoring stays in the risk set") {
  auto s = fit_censoring_km(group({{1, 0}, {1, 1}}));
  CHECK(s.eval(1.0) == 1.0);
  CHECK(s.eval(0.5) == 1.0);
  CHECK(s.eval(1.5) == 0.5);
  // weight 1/eval(1) of the tied failure
  CHECK(1.0 / s.eval(1.0) == 1.0);
}

TEST_CASE("eval on a hand-built step function") {
  StepSurvival s({2.0}, {0.5}, 0);
  CHECK(s.eval(2.0) == 1.0);
  CHECK(s.eval(2.5) == 0.5);
  StepSurvival empty;
  CHECK(empty.eval(0.0) == 1.0);
  CHECK(empty.eval(42.0) == 1.0);
}

TEST_CASE("censoring KM rejects an empty group") {
  CHECK_THROWS_AS(fit_censoring_km(std::span<const SubjectRecord>{}), std::invalid_argument);
}

TEST_CASE("censoring KM matches the product-limit oracle over all delta patterns, n <= 8") {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> tgrid(1, 4);
  std::vector<double> queries;
  for (int k = 0; k <= 10; ++k) queries.push_back(0.5 * k);

  std::size_t checked = 0;
  for (int n = 1; n <= 8; ++n) {
    for (int layout = 0; layout < 4; ++layout) {
      std::vector<double> times(n);
      for (auto& t : times) t = tgrid(rng);
      for (unsigned mask = 0; mask < (1u << n); ++mask) {
        std::vector<std::pair<double, int>> obs;
        for (int i = 0; i < n; ++i) obs.emplace_back(times[i], (mask >> i) & 1u);
        const auto recs = group(obs);
        const auto s = fit_censoring_km(recs);
        for (double t : queries) {
          REQUIRE(std::abs(s.eval(t) - oracle::censoring_survival(recs, t)) <= 1e-12);
        }
        // Positivity at uncensored times: eval(y_i) >= 1/n.
        for (const auto& r : recs) {
          if (r.delta == 1) CHECK(s.eval(r.y) >= 1.0 / n - 1e-15);
        }
        // Monotone, bounded, starts at one.
        double prev = 1.0;
        CHECK(s.eval(0.0) == 1.0);
        for (double t : queries) {
          const double v = s.eval(t);
          CHECK(v <= prev);
          CHECK(v >= 0.0);
          prev = v;
        }
        ++checked;
      }
    }
  }
  CHECK(checked == 4 * ((1u << 9) - 2));
}

TEST_CASE("flipping delta gives the ordinary failure-time Kaplan-Meier") {
  // Failure data: times 1..5, failures at 1, 3, 4; censored at 2 and 5.
  // Hand KM: S(1)=4/5, S(3)=4/5*2/3, S(4)=4/5*2/3*1/2.
  std::vector<std::pair<double, int>> failure{{1, 1}, {2, 0}, {3, 1}, {4, 1}, {5, 0}};
  std::vector<std::pair<double, int>> flipped;
  for (auto [y, d] : failure) flipped.emplace_back(y, 1 - d);
  auto s = fit_censoring_km(group(flipped));
  REQUIRE(s.jump_times() == std::vector<double>{1.0, 3.0, 4.0});
  CHECK(s.values()[0] == doctest::Approx(0.8));
  CHECK(s.values()[1] == doctest::Approx(0.8 * 2.0 / 3.0));
  CHECK(s.values()[2] == doctest::Approx(0.8 * 2.0 / 3.0 * 0.5));
  CHECK(s.eval(1.0) == 1.0);
  CHECK(s.eval(3.5) == doctest::Approx(0.8 * 2.0 / 3.0));
}
