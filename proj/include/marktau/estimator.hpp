#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "marktau/data_model.hpp"
#include "marktau/kernel.hpp"
#include "marktau/km.hpp"

namespace marktau {

class EvaluationGrid {
public:
  enum class Construction { evenly_spaced, explicit_points };

  EvaluationGrid() = default;

  // k points from interval.lower to interval.upper inclusive.
  static EvaluationGrid evenly_spaced(const MarkInterval& interval, std::size_t k);
  // Points must be strictly increasing and lie inside the interval.
  static EvaluationGrid explicit_points(const MarkInterval& interval, std::vector<double> points);

  const std::vector<double>& points() const { return points_; }
  const MarkInterval& interval() const { return interval_; }
  Construction construction() const { return construction_; }
  std::size_t size() const { return points_.size(); }

private:
  std::vector<double> points_;
  MarkInterval interval_;
  Construction construction_ = Construction::explicit_points;
};

struct BandwidthConfig {
  double scale = 1.0;                          // varpi for the rule of thumb
  std::optional<double> h;                     // explicit shared bandwidth; wins over scale
  std::optional<std::array<double, 2>> per_arm;  // {h0, h1}; wins over both
};

// Resolved bandwidths. `shared` is the bandwidth entering the nh scaling of
// the variance; with per-arm bandwidths it is their mean. Every statistic
// built from sigma2/(nh) is unaffected by that choice.
struct ResolvedBandwidth {
  Bandwidth shared;
  std::array<double, 2> by_arm{};  // {h0, h1}
};

ResolvedBandwidth resolve_bandwidth(const Dataset& data, const BandwidthConfig& config);

struct EstimatePoint {
  double v = 0.0;
  double tau1 = 0.0;
  double tau0 = 0.0;
  double tau = 0.0;
  double sigma2 = 0.0;
  double ci_lower = 0.0;
  double ci_upper = 0.0;
  std::size_t events1 = 0;  // uncensored records of each arm inside the kernel window
  std::size_t events0 = 0;
  bool flagged = false;     // no events in either window: tau and sigma2 are 0
};

struct EstimateGrid {
  std::vector<EstimatePoint> points;
  ResolvedBandwidth bandwidth;
  std::size_t n = 0;
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  double alpha = 0.05;

  double h() const { return bandwidth.shared.h; }
  double nh() const { return static_cast<double>(n) * h(); }
  std::vector<std::size_t> flagged_indices() const;
};

// Per-subject integrals theta_ai(v) for every uncensored record (censored
// records contribute zero everywhere and are not stored). Rows follow record
// order; columns follow grid order.
struct ThetaTable {
  std::vector<std::size_t> record_index;
  std::vector<int> arm;
  std::size_t grid_size = 0;
  std::vector<double> values;

  std::size_t rows() const { return record_index.size(); }
  double operator()(std::size_t row, std::size_t j) const { return values[row * grid_size + j]; }
};

struct GridFit {
  EstimateGrid estimate;
  ThetaTable theta;
  std::array<StepSurvival, 2> censoring;  // indexed by arm
};

// Delta_i * (Y_i / S(Y_i)) * K_h(V_i - v); zero for censored records.
// Throws std::domain_error if S(Y_i) = 0 at an uncensored record.
double theta_hat(const SubjectRecord& record, const StepSurvival& s, double v, double h,
                 const KernelSpec& kernel = {});

double tau_hat_group(const Dataset& data, int arm, double v, double h, const StepSurvival& s,
                     const KernelSpec& kernel = {});

struct TauEstimate {
  double tau1 = 0.0;
  double tau0 = 0.0;
  double tau = 0.0;
};

TauEstimate tau_hat(const Dataset& data, double v, double h, const KernelSpec& kernel = {});

double sigma2_hat(const Dataset& data, double v, double h, const KernelSpec& kernel = {});

// tau -/+ z_{alpha/2} sqrt(sigma2 / (n h)).
std::pair<double, double> confidence_interval(double tau, double sigma2, std::size_t n, double h,
                                              double alpha);

GridFit fit_grid(const Dataset& data, const EvaluationGrid& grid, double alpha,
                 const BandwidthConfig& bandwidth, unsigned threads = 1,
                 const KernelSpec& kernel = {});

EstimateGrid estimate_on_grid(const Dataset& data, const EvaluationGrid& grid, double alpha,
                              const BandwidthConfig& bandwidth, unsigned threads = 1);

}  // namespace marktau
