#include <doctest.h>

#include <cmath>
#include <random>

#include "marktau/kernel.hpp"
#include "oracles.hpp"

using namespace marktau;

TEST_CASE("Epanechnikov values") {
  CHECK(epanechnikov(0.0) == 0.75);
  CHECK(epanechnikov(1.0) == 0.0);
  CHECK(epanechnikov(-1.0) == 0.0);
  CHECK(epanechnikov(-0.5) == 0.5625);
  CHECK(epanechnikov(3.0) == 0.0);
}

TEST_CASE("kernel_h examples") {
  CHECK(kernel_h(0.3, 0.3, 0.1) == doctest::Approx(7.5).epsilon(1e-15));
  CHECK(kernel_h(0.4, 0.3, 0.1) == 0.0);
  CHECK(kernel_h(0.35, 0.3, 0.1) == doctest::Approx(5.625).epsilon(1e-12));
  CHECK(kernel_h(0.5, 0.25, 0.25) == 0.0);
  CHECK_THROWS_AS(kernel_h(0.3, 0.3, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(kernel_h(0.3, 0.3, -0.1), std::invalid_argument);
}

TEST_CASE("nu0 against adaptive quadrature") {
  const double quad = oracle::adaptive_simpson([](double x) { return epanechnikov(x) * epanechnikov(x); },
                                               -1.0, 1.0, 1e-12);
  CHECK(std::abs(quad - 0.6) < 1e-10);
  CHECK(std::abs(nu0(KernelSpec{}) - quad) < 1e-9);
  // nu0 <= sup K for a density
  CHECK(nu0(KernelSpec{}) <= 0.75);

  // Test-only uniform family K = 0.5 on [-1, 1].
  const double uniform = oracle::adaptive_simpson([](double) { return 0.25; }, -1.0, 1.0, 1e-12);
  CHECK(uniform == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("kernel integrates to one and is a symmetric density") {
  CHECK(oracle::adaptive_simpson(epanechnikov, -1.0, 1.0, 1e-12) == doctest::Approx(1.0).epsilon(1e-10));
  for (double h : {0.01, 0.05, 0.1, 0.2, 0.37, 0.5}) {
    for (double v : {0.0, 0.3, 0.8}) {
      const double integral =
          oracle::adaptive_simpson([&](double u) { return kernel_h(u, v, h); }, v - h, v + h, 1e-12);
      CHECK(std::abs(integral - 1.0) < 1e-8);
    }
  }
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double u = unif(rng), v = unif(rng), h = 0.01 + 0.49 * unif(rng);
    CHECK(kernel_h(u, v, h) == kernel_h(v, u, h));
    CHECK(epanechnikov(u) == epanechnikov(-u));
  }
}

TEST_CASE("affine scaling of marks and bandwidth scales kernel values by 1/c") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const double u = unif(rng), v = unif(rng), h = 0.05 + 0.45 * unif(rng);
    // powers of two keep every intermediate exact
    for (double c : {0.5, 2.0, 8.0}) {
      CHECK(kernel_h(c * u, c * v, c * h) == kernel_h(u, v, h) / c);
    }
    const double c = 0.1 + 3.0 * unif(rng);
    CHECK(kernel_h(c * u, c * v, c * h) == doctest::Approx(kernel_h(u, v, h) / c).epsilon(1e-12));
  }
}

TEST_CASE("rule-of-thumb bandwidth") {
  // 16 marks with sample SD exactly 0.25: 8 at 0.5 -/+ a with 16 a^2 / 15 = 0.0625.
  const double a = 0.25 * std::sqrt(15.0 / 16.0);
  std::vector<double> marks;
  for (int i = 0; i < 8; ++i) {
    marks.push_back(0.5 - a);
    marks.push_back(0.5 + a);
  }
  auto bw = rule_of_thumb_bandwidth(marks, 1.0);
  CHECK(bw.m == 16);
  CHECK(bw.sigma_v == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(bw.h == doctest::Approx(0.125).epsilon(1e-14));
  CHECK(bw.h > 0.0);

  auto doubled = rule_of_thumb_bandwidth(marks, 2.0);
  CHECK(doubled.h == doctest::Approx(2.0 * bw.h).epsilon(1e-15));

  CHECK_THROWS_AS(rule_of_thumb_bandwidth(std::vector<double>{0.3}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rule_of_thumb_bandwidth(std::vector<double>{0.3, 0.3, 0.3}, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(rule_of_thumb_bandwidth(marks, 0.0), std::invalid_argument);
}

TEST_CASE("explicit bandwidth must be positive") {
  CHECK(explicit_bandwidth(0.2).h == 0.2);
  CHECK_THROWS_WITH(explicit_bandwidth(0.0), "bandwidth must be positive");
}
