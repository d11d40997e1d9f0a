#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fbgrpo/metrics.hpp"
#include "fbgrpo/policy.hpp"
#include "fbgrpo/rewards.hpp"
#include "fbgrpo/scene.hpp"

namespace fbgrpo::curation {

struct CurationConfig {
  int N = 8;
  double discard_mean_min = 0.9;
  double discard_std_max = 0.05;
  double temperature = 1.2;
  double s = 0.8;
  metrics::MetricConfig metrics;

  void validate() const;
};

struct RolloutStats {
  std::string scenario_id;
  int N = 0;
  double mean_reward = 0.0;  // total reward
  double std_reward = 0.0;   // population std of the total reward
  bool all_fail_pdms = false;
  bool all_fail_nc = false;
  bool all_fail_dac = false;
  std::vector<rewards::RewardBreakdown> rollouts;
};

// Builds stats from already scored rollouts.
RolloutStats summarize(const std::string& scenario_id, std::vector<rewards::RewardBreakdown> rollouts, double s);

std::vector<RolloutStats> estimate_stats(const policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                                         const CurationConfig& cfg, std::uint64_t seed);

bool discarded(const RolloutStats& st, const CurationConfig& cfg);

// Ids of kept scenarios, in input order.
std::vector<std::string> filter(const std::vector<RolloutStats>& stats, const CurationConfig& cfg);

}  // namespace fbgrpo::curation
