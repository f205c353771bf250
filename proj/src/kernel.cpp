#include "marktau/kernel.hpp"

#include <cmath>
#include <stdexcept>

namespace marktau {

double epanechnikov(double x) {
  return std::abs(x) < 1.0 ? 0.75 * (1.0 - x * x) : 0.0;
}

double KernelSpec::operator()(double x) const {
  switch (family) {
    case KernelFamily::epanechnikov:
      return epanechnikov(x);
  }
  return 0.0;
}

double KernelSpec::nu0() const {
  switch (family) {
    case KernelFamily::epanechnikov:
      // 0.5625 * integral of (1 - x^2)^2 = 0.5625 * 16/15
      return 0.6;
  }
  return 0.0;
}

double nu0(const KernelSpec& kernel) { return kernel.nu0(); }

double kernel_h(double u, double v, double h, const KernelSpec& kernel) {
  if (!(h > 0.0)) throw std::invalid_argument("bandwidth must be positive");
  return kernel((u - v) / h) / h;
}

Bandwidth rule_of_thumb_bandwidth(std::span<const double> marks, double varpi) {
  if (!(varpi > 0.0)) throw std::invalid_argument("bandwidth scale must be positive");
  const std::size_t m = marks.size();
  if (m < 2) throw std::invalid_argument("rule-of-thumb bandwidth needs at least 2 observed marks");
  double mean = 0.0;
  for (double v : marks) mean += v;
  mean /= static_cast<double>(m);
  double ss = 0.0;
  for (double v : marks) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(m - 1));
  if (!(sd > 0.0)) throw std::invalid_argument("rule-of-thumb bandwidth: observed marks have zero spread");

  Bandwidth bw;
  bw.scale_constant = varpi;
  bw.sigma_v = sd;
  bw.m = m;
  bw.h = varpi * sd * std::pow(static_cast<double>(m), -0.25);
  return bw;
}

Bandwidth explicit_bandwidth(double h) {
  if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("bandwidth must be positive");
  Bandwidth bw;
  bw.h = h;
  bw.explicit_value = true;
  return bw;
}

}  // namespace marktau
