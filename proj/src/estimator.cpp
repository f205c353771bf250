#include "marktau/estimator.hpp"

#include <cmath>
#include <stdexcept>

#include "marktau/normal.hpp"
#include "marktau/parallel.hpp"

namespace marktau {

EvaluationGrid EvaluationGrid::evenly_spaced(const MarkInterval& interval, std::size_t k) {
  if (k == 0) throw std::invalid_argument("evaluation grid is empty");
  EvaluationGrid grid;
  grid.interval_ = interval;
  grid.construction_ = Construction::evenly_spaced;
  if (k == 1) {
    grid.points_.push_back(0.5 * (interval.lower + interval.upper));
    return grid;
  }
  const double step = (interval.upper - interval.lower) / static_cast<double>(k - 1);
  for (std::size_t i = 0; i + 1 < k; ++i) {
    grid.points_.push_back(interval.lower + static_cast<double>(i) * step);
  }
  grid.points_.push_back(interval.upper);
  return grid;
}

EvaluationGrid EvaluationGrid::explicit_points(const MarkInterval& interval,
                                               std::vector<double> points) {
  if (points.empty()) throw std::invalid_argument("evaluation grid is empty");
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (!interval.contains(points[i])) {
      throw std::invalid_argument("grid point outside the mark interval");
    }
    if (i > 0 && !(points[i] > points[i - 1])) {
      throw std::invalid_argument("grid points must be strictly increasing");
    }
  }
  EvaluationGrid grid;
  grid.points_ = std::move(points);
  grid.interval_ = interval;
  grid.construction_ = Construction::explicit_points;
  return grid;
}

std::vector<std::size_t> EstimateGrid::flagged_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < points.size(); ++j) {
    if (points[j].flagged) out.push_back(j);
  }
  return out;
}

ResolvedBandwidth resolve_bandwidth(const Dataset& data, const BandwidthConfig& config) {
  ResolvedBandwidth out;
  if (config.per_arm) {
    const auto [h0, h1] = *config.per_arm;
    out.by_arm = {explicit_bandwidth(h0).h, explicit_bandwidth(h1).h};
    out.shared = explicit_bandwidth(0.5 * (h0 + h1));
  } else if (config.h) {
    out.shared = explicit_bandwidth(*config.h);
    out.by_arm = {out.shared.h, out.shared.h};
  } else {
    auto marks = data.observed_marks();
    out.shared = rule_of_thumb_bandwidth(marks, config.scale);
    out.by_arm = {out.shared.h, out.shared.h};
  }
  return out;
}

double theta_hat(const SubjectRecord& record, const StepSurvival& s, double v, double h,
                 const KernelSpec& kernel) {
  if (record.delta != 1) return 0.0;
  const double k = kernel_h(*record.mark, v, h, kernel);
  if (k == 0.0) return 0.0;
  const double surv = s.eval(record.y);
  if (!(surv > 0.0)) {
    throw std::domain_error("censoring survival is zero at an uncensored time");
  }
  return (record.y / surv) * k;
}

double tau_hat_group(const Dataset& data, int arm, double v, double h, const StepSurvival& s,
                     const KernelSpec& kernel) {
  const std::size_t n_a = data.group_size(arm);
  if (n_a == 0) throw std::invalid_argument("tau_hat_group: empty group");
  double sum = 0.0;
  for (const auto& r : data.records) {
    if (r.arm == arm) sum += theta_hat(r, s, v, h, kernel);
  }
  return sum / static_cast<double>(n_a);
}

TauEstimate tau_hat(const Dataset& data, double v, double h, const KernelSpec& kernel) {
  const auto s1 = fit_censoring_km(data, 1);
  const auto s0 = fit_censoring_km(data, 0);
  TauEstimate est;
  est.tau1 = tau_hat_group(data, 1, v, h, s1, kernel);
  est.tau0 = tau_hat_group(data, 0, v, h, s0, kernel);
  est.tau = est.tau1 - est.tau0;
  return est;
}

double sigma2_hat(const Dataset& data, double v, double h, const KernelSpec& kernel) {
  if (data.n0 == 0 || data.n1 == 0) throw std::invalid_argument("sigma2_hat: empty group");
  const std::array<StepSurvival, 2> s{fit_censoring_km(data, 0), fit_censoring_km(data, 1)};
  std::array<double, 2> ss{0.0, 0.0};
  for (const auto& r : data.records) {
    const double t = theta_hat(r, s[r.arm], v, h, kernel);
    ss[r.arm] += t * t;
  }
  const double n0 = static_cast<double>(data.n0);
  const double n1 = static_cast<double>(data.n1);
  return static_cast<double>(data.size()) * h * (ss[0] / (n0 * n0) + ss[1] / (n1 * n1));
}

std::pair<double, double> confidence_interval(double tau, double sigma2, std::size_t n, double h,
                                              double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");
  if (!(sigma2 >= 0.0)) throw std::invalid_argument("sigma2 must be nonnegative");
  if (!(h > 0.0) || n == 0) throw std::invalid_argument("n h must be positive");
  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double half = z * std::sqrt(sigma2 / (static_cast<double>(n) * h));
  return {tau - half, tau + half};
}

GridFit fit_grid(const Dataset& data, const EvaluationGrid& grid, double alpha,
                 const BandwidthConfig& bandwidth, unsigned threads, const KernelSpec& kernel) {
  if (grid.size() == 0) throw std::invalid_argument("evaluation grid is empty");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("alpha must be in (0,1)");

  GridFit fit;
  fit.censoring = {fit_censoring_km(data, 0), fit_censoring_km(data, 1)};
  auto& est = fit.estimate;
  est.bandwidth = resolve_bandwidth(data, bandwidth);
  est.n = data.size();
  est.n0 = data.n0;
  est.n1 = data.n1;
  est.alpha = alpha;

  const std::size_t g = grid.size();
  auto& theta = fit.theta;
  theta.grid_size = g;
  // IPC weight Y_i / S_a(Y_i) is shared by every grid point.
  std::vector<double> weight;
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    if (r.delta != 1) continue;
    const double surv = fit.censoring[r.arm].eval(r.y);
    if (!(surv > 0.0)) throw std::domain_error("censoring survival is zero at an uncensored time");
    theta.record_index.push_back(i);
    theta.arm.push_back(r.arm);
    weight.push_back(r.y / surv);
  }
  const std::size_t rows = theta.rows();
  theta.values.assign(rows * g, 0.0);

  const double z = normal_quantile(1.0 - alpha / 2.0);
  const double n0 = static_cast<double>(data.n0);
  const double n1 = static_cast<double>(data.n1);
  est.points.resize(g);

  parallel_for(g, threads, [&](std::size_t j) {
    const double v = grid.points()[j];
    EstimatePoint p;
    p.v = v;
    std::array<double, 2> sum{0.0, 0.0};
    std::array<double, 2> ss{0.0, 0.0};
    std::array<std::size_t, 2> events{0, 0};
    for (std::size_t row = 0; row < rows; ++row) {
      const auto& r = data.records[theta.record_index[row]];
      const int a = r.arm;
      const double k = kernel_h(*r.mark, v, est.bandwidth.by_arm[a], kernel);
      if (k == 0.0) continue;
      const double t = weight[row] * k;
      theta.values[row * g + j] = t;
      sum[a] += t;
      ss[a] += t * t;
      ++events[a];
    }
    p.tau1 = sum[1] / n1;
    p.tau0 = sum[0] / n0;
    p.tau = p.tau1 - p.tau0;
    p.sigma2 = est.nh() * (ss[0] / (n0 * n0) + ss[1] / (n1 * n1));
    p.events1 = events[1];
    p.events0 = events[0];
    p.flagged = !(p.sigma2 > 0.0);
    const double half = z * std::sqrt(p.sigma2 / est.nh());
    p.ci_lower = p.tau - half;
    p.ci_upper = p.tau + half;
    est.points[j] = p;
  });
  return fit;
}

EstimateGrid estimate_on_grid(const Dataset& data, const EvaluationGrid& grid, double alpha,
                              const BandwidthConfig& bandwidth, unsigned threads) {
  return fit_grid(data, grid, alpha, bandwidth, threads).estimate;
}

}  // namespace marktau
