#pragma once

#include <span>

namespace marktau {

enum class KernelFamily { epanechnikov };

// A symmetric density kernel supported on [-1, 1].
struct KernelSpec {
  KernelFamily family = KernelFamily::epanechnikov;

  double operator()(double x) const;
  // Integral of K(u)^2 over [-1, 1].
  double nu0() const;
};

double epanechnikov(double x);

// K((u - v)/h)/h. Throws std::invalid_argument unless h > 0.
double kernel_h(double u, double v, double h, const KernelSpec& kernel = {});

double nu0(const KernelSpec& kernel);

struct Bandwidth {
  double h = 0.0;
  double scale_constant = 0.0;  // varpi; 0 when h was given explicitly
  double sigma_v = 0.0;
  std::size_t m = 0;
  bool explicit_value = false;
};

// h = varpi * SD(marks) * m^(-1/4), with the m-1 denominator for the SD.
Bandwidth rule_of_thumb_bandwidth(std::span<const double> marks, double varpi = 1.0);

Bandwidth explicit_bandwidth(double h);

}  // namespace marktau
