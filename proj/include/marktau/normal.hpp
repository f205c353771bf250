#pragma once

namespace marktau {

double normal_cdf(double x);

// Inverse of the standard normal CDF for p in (0, 1). Accurate to ~1e-15
// (Acklam's rational approximation refined by one Halley step).
double normal_quantile(double p);

}  // namespace marktau
