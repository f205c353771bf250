#include "marktau/inference.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "marktau/parallel.hpp"
#include "marktau/rng.hpp"

namespace marktau {

namespace {

constexpr std::uint64_t kMultiplierStream = 0x6D756C7469706C79ULL;

std::vector<std::size_t> unflagged(const EstimateGrid& est) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < est.points.size(); ++j) {
    if (!est.points[j].flagged) out.push_back(j);
  }
  return out;
}

struct PairIndex {
  std::size_t j;
  std::size_t k;
};

std::vector<PairIndex> usable_pairs(const EstimateGrid& est, const ZetaTable& zeta,
                                    std::size_t* skipped) {
  const auto idx = unflagged(est);
  if (idx.size() < 2) throw std::invalid_argument("constancy test needs at least 2 usable grid points");
  std::vector<PairIndex> pairs;
  std::size_t skip = 0;
  for (std::size_t a = 0; a < idx.size(); ++a) {
    for (std::size_t b = a + 1; b < idx.size(); ++b) {
      if (zeta(idx[a], idx[b]) > 0.0) {
        pairs.push_back({idx[a], idx[b]});
      } else {
        ++skip;
      }
    }
  }
  if (skipped) *skipped = skip;
  if (pairs.empty()) throw std::invalid_argument("constancy test: every grid pair has zero variance");
  return pairs;
}

double check_pi(double pi_hat) {
  if (!(pi_hat > 0.0 && pi_hat < 1.0)) throw std::invalid_argument("pi must be in (0,1)");
  return pi_hat;
}

// Per-draw linear combinations S_j = sum_i w_i xi_ij over the stored rows.
void project(const GridFit& fit, const std::vector<double>& xi, std::span<const double> w,
             std::vector<double>& out) {
  const std::size_t g = fit.theta.grid_size;
  out.assign(g, 0.0);
  for (std::size_t row = 0; row < fit.theta.rows(); ++row) {
    const double wi = w[fit.theta.record_index[row]];
    const double* x = &xi[row * g];
    for (std::size_t j = 0; j < g; ++j) out[j] += wi * x[j];
  }
}

double global_from_sums(const EstimateGrid& est, std::span<const std::size_t> idx,
                        const std::vector<double>& sums) {
  const double scale = est.h() / static_cast<double>(est.n);
  double best = 0.0;
  for (auto j : idx) best = std::max(best, scale * sums[j] * sums[j] / est.points[j].sigma2);
  return best;
}

double constancy_from_sums(const EstimateGrid& est, const ZetaTable& zeta,
                           std::span<const PairIndex> pairs, const std::vector<double>& sums) {
  const double scale = est.h() / static_cast<double>(est.n);
  double best = 0.0;
  for (const auto& p : pairs) {
    const double d = sums[p.j] - sums[p.k];
    best = std::max(best, scale * d * d / zeta(p.j, p.k));
  }
  return best;
}

}  // namespace

std::string to_string(TestKind kind) {
  return kind == TestKind::global ? "global" : "constancy";
}

TestKind parse_test_kind(const std::string& text) {
  if (text == "global") return TestKind::global;
  if (text == "constancy") return TestKind::constancy;
  throw std::invalid_argument("unknown test kind '" + text + "' (expected global|constancy)");
}

MultiplierDraw draw_multipliers(std::size_t n, std::uint64_t seed, std::size_t index) {
  auto rng = make_rng(seed, {kMultiplierStream, index});
  std::normal_distribution<double> normal;
  MultiplierDraw d;
  d.w.resize(n);
  for (auto& x : d.w) x = normal(rng);
  return d;
}

ZetaTable zeta_table(const GridFit& fit) {
  const auto& est = fit.estimate;
  const auto& theta = fit.theta;
  const std::size_t g = theta.grid_size;
  ZetaTable z;
  z.grid_size = g;
  z.values.assign(g * g, 0.0);
  const double inv_n0_sq = 1.0 / (static_cast<double>(est.n0) * static_cast<double>(est.n0));
  const double inv_n1_sq = 1.0 / (static_cast<double>(est.n1) * static_cast<double>(est.n1));
  for (std::size_t j = 0; j < g; ++j) {
    for (std::size_t k = j + 1; k < g; ++k) {
      std::array<double, 2> ss{0.0, 0.0};
      for (std::size_t row = 0; row < theta.rows(); ++row) {
        const double d = theta(row, j) - theta(row, k);
        ss[theta.arm[row]] += d * d;
      }
      const double value = est.nh() * (ss[0] * inv_n0_sq + ss[1] * inv_n1_sq);
      z.values[j * g + k] = value;
      z.values[k * g + j] = value;
    }
  }
  return z;
}

double global_statistic(const EstimateGrid& est) {
  const auto idx = unflagged(est);
  if (idx.empty()) throw std::invalid_argument("global test: every grid point has zero events");
  double best = 0.0;
  for (auto j : idx) {
    const auto& p = est.points[j];
    best = std::max(best, est.nh() * p.tau * p.tau / p.sigma2);
  }
  return best;
}

double constancy_statistic(const EstimateGrid& est, const ZetaTable& zeta,
                           std::size_t* skipped_pairs) {
  const auto pairs = usable_pairs(est, zeta, skipped_pairs);
  double best = 0.0;
  for (const auto& p : pairs) {
    const double d = est.points[p.j].tau - est.points[p.k].tau;
    best = std::max(best, est.nh() * d * d / zeta(p.j, p.k));
  }
  return best;
}

std::vector<double> xi_matrix(const GridFit& fit, double pi_hat) {
  check_pi(pi_hat);
  const auto& theta = fit.theta;
  std::vector<double> xi(theta.values.size());
  for (std::size_t row = 0; row < theta.rows(); ++row) {
    const double factor = theta.arm[row] == 1 ? 1.0 / pi_hat : -1.0 / (1.0 - pi_hat);
    for (std::size_t j = 0; j < theta.grid_size; ++j) {
      xi[row * theta.grid_size + j] = factor * theta(row, j);
    }
  }
  return xi;
}

std::vector<double> global_resample(const GridFit& fit, std::span<const MultiplierDraw> draws,
                                    double pi_hat) {
  if (draws.empty()) throw std::invalid_argument("resampling needs B >= 1");
  const auto idx = unflagged(fit.estimate);
  if (idx.empty()) throw std::invalid_argument("global test: every grid point has zero events");
  const auto xi = xi_matrix(fit, pi_hat);
  std::vector<double> out, sums;
  out.reserve(draws.size());
  for (const auto& d : draws) {
    if (d.w.size() != fit.estimate.n) throw std::invalid_argument("multiplier draw has wrong length");
    project(fit, xi, d.w, sums);
    out.push_back(global_from_sums(fit.estimate, idx, sums));
  }
  return out;
}

std::vector<double> constancy_resample(const GridFit& fit, const ZetaTable& zeta,
                                       std::span<const MultiplierDraw> draws, double pi_hat) {
  if (draws.empty()) throw std::invalid_argument("resampling needs B >= 1");
  const auto pairs = usable_pairs(fit.estimate, zeta, nullptr);
  const auto xi = xi_matrix(fit, pi_hat);
  std::vector<double> out, sums;
  out.reserve(draws.size());
  for (const auto& d : draws) {
    if (d.w.size() != fit.estimate.n) throw std::invalid_argument("multiplier draw has wrong length");
    project(fit, xi, d.w, sums);
    out.push_back(constancy_from_sums(fit.estimate, zeta, pairs, sums));
  }
  return out;
}

std::vector<double> resample_statistics(TestKind kind, const GridFit& fit, const ZetaTable& zeta,
                                        std::size_t resamples, std::uint64_t seed, double pi_hat,
                                        unsigned threads) {
  if (resamples == 0) throw std::invalid_argument("resampling needs B >= 1");
  const auto& est = fit.estimate;
  const auto xi = xi_matrix(fit, pi_hat);
  std::vector<std::size_t> idx;
  std::vector<PairIndex> pairs;
  if (kind == TestKind::global) {
    idx = unflagged(est);
    if (idx.empty()) throw std::invalid_argument("global test: every grid point has zero events");
  } else {
    pairs = usable_pairs(est, zeta, nullptr);
  }

  std::vector<double> out(resamples);
  parallel_for(resamples, threads, [&](std::size_t b) {
    const auto draw = draw_multipliers(est.n, seed, b);
    std::vector<double> sums;
    project(fit, xi, draw.w, sums);
    out[b] = kind == TestKind::global ? global_from_sums(est, idx, sums)
                                      : constancy_from_sums(est, zeta, pairs, sums);
  });
  return out;
}

double critical_value(std::span<const double> sorted_resamples, double alpha) {
  if (sorted_resamples.empty()) throw std::invalid_argument("critical_value: no resamples");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  const double B = static_cast<double>(sorted_resamples.size());
  // Guard against (1 - alpha) * B landing a hair above an integer.
  auto k = static_cast<std::size_t>(std::ceil((1.0 - alpha) * B - 1e-9));
  k = std::clamp<std::size_t>(k, 1, sorted_resamples.size());
  return sorted_resamples[k - 1];
}

double p_value(std::span<const double> resamples, double statistic, bool plus_one) {
  if (resamples.empty()) throw std::invalid_argument("p_value: no resamples");
  const auto exceed = static_cast<double>(
      std::count_if(resamples.begin(), resamples.end(), [&](double r) { return r >= statistic; }));
  const double B = static_cast<double>(resamples.size());
  return plus_one ? (1.0 + exceed) / (1.0 + B) : exceed / B;
}

TestResult run_test(TestKind kind, const GridFit& fit, double pi_hat, const TestConfig& config) {
  if (config.resamples == 0) throw std::invalid_argument("resampling needs B >= 1");
  const double pi = check_pi(config.pi_override.value_or(pi_hat));
  TestResult result;
  result.kind = kind;
  result.alpha = config.alpha;
  result.resamples = config.resamples;
  result.seed = config.seed;
  result.plus_one = config.plus_one;
  result.h = fit.estimate.h();
  for (const auto& p : fit.estimate.points) result.grid.push_back(p.v);
  result.excluded_points = fit.estimate.flagged_indices();

  ZetaTable zeta;
  if (kind == TestKind::global) {
    result.statistic = global_statistic(fit.estimate);
  } else {
    zeta = zeta_table(fit);
    result.statistic = constancy_statistic(fit.estimate, zeta, &result.skipped_pairs);
  }
  result.resampled =
      resample_statistics(kind, fit, zeta, config.resamples, config.seed, pi, config.threads);
  result.p_value = p_value(result.resampled, result.statistic, config.plus_one);
  std::sort(result.resampled.begin(), result.resampled.end());
  result.critical_value = critical_value(result.resampled, config.alpha);
  result.reject = result.statistic > result.critical_value;
  return result;
}

TestResult run_test(TestKind kind, const Dataset& data, const TestConfig& config) {
  const auto fit = fit_grid(data, config.grid, config.alpha, config.bandwidth, config.threads);
  return run_test(kind, fit, data.pi_hat, config);
}

nlohmann::ordered_json test_report_json(const TestResult& r) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(r.kind);
  j["statistic"] = r.statistic;
  j["critical_value"] = r.critical_value;
  j["p_value"] = r.p_value;
  j["reject"] = r.reject;
  j["alpha"] = r.alpha;
  j["B"] = r.resamples;
  j["seed"] = r.seed;
  j["p_value_plus_one"] = r.plus_one;
  j["h"] = r.h;
  j["grid"] = r.grid;
  j["excluded_points"] = r.excluded_points;
  if (r.kind == TestKind::constancy) j["skipped_pairs"] = r.skipped_pairs;
  return j;
}

}  // namespace marktau
