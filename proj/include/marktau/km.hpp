#pragma once

#include <span>
#include <vector>

#include "marktau/data_model.hpp"

namespace marktau {

// Kaplan-Meier estimate of the censoring survival function S_a(t) = P(C >= t | A = a).
// Stored as jump times with the value just after each jump; evaluation is
// left-continuous, so eval(t) is the product over jumps strictly before t.
class StepSurvival {
public:
  StepSurvival() = default;
  StepSurvival(std::vector<double> jump_times, std::vector<double> values, int group);

  double eval(double t) const;

  const std::vector<double>& jump_times() const { return jump_times_; }
  const std::vector<double>& values() const { return values_; }
  int group() const { return group_; }

private:
  std::vector<double> jump_times_;
  std::vector<double> values_;
  int group_ = 0;
};

// Product-limit estimator with censoring (delta = 0) as the event. The risk
// set at t is {i : y_i >= t}; failures tied with censorings stay in the risk
// set. Records are expected to come from a single arm; the arm of the first
// record labels the curve.
StepSurvival fit_censoring_km(std::span<const SubjectRecord> records);

// Fits the curve for one arm of a dataset.
StepSurvival fit_censoring_km(const Dataset& data, int arm);

}  // namespace marktau
