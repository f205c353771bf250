#include "marktau/km.hpp"

#include <algorithm>
#include <stdexcept>

namespace marktau {

StepSurvival::StepSurvival(std::vector<double> jump_times, std::vector<double> values, int group)
    : jump_times_(std::move(jump_times)), values_(std::move(values)), group_(group) {
  if (jump_times_.size() != values_.size()) {
    throw std::invalid_argument("StepSurvival: jump_times and values differ in length");
  }
}

double StepSurvival::eval(double t) const {
  auto k = std::lower_bound(jump_times_.begin(), jump_times_.end(), t) - jump_times_.begin();
  return k == 0 ? 1.0 : values_[static_cast<std::size_t>(k - 1)];
}

StepSurvival fit_censoring_km(std::span<const SubjectRecord> records) {
  if (records.empty()) throw std::invalid_argument("fit_censoring_km: empty group");

  std::vector<std::pair<double, int>> obs;
  obs.reserve(records.size());
  for (const auto& r : records) obs.emplace_back(r.y, r.delta);
  std::sort(obs.begin(), obs.end());

  std::vector<double> times, values;
  double surv = 1.0;
  std::size_t i = 0;
  const std::size_t n = obs.size();
  while (i < n) {
    const double t = obs[i].first;
    const std::size_t at_risk = n - i;
    std::size_t censored = 0;
    std::size_t j = i;
    for (; j < n && obs[j].first == t; ++j) {
      if (obs[j].second == 0) ++censored;
    }
    if (censored > 0) {
      surv *= 1.0 - static_cast<double>(censored) / static_cast<double>(at_risk);
      times.push_back(t);
      values.push_back(surv);
    }
    i = j;
  }
  return StepSurvival(std::move(times), std::move(values), records.front().arm);
}

StepSurvival fit_censoring_km(const Dataset& data, int arm) {
  std::vector<SubjectRecord> group;
  group.reserve(data.group_size(arm));
  for (const auto& r : data.records) {
    if (r.arm == arm) group.push_back(r);
  }
  if (group.empty()) throw std::invalid_argument("fit_censoring_km: empty group");
  return fit_censoring_km(group);
}

}  // namespace marktau
