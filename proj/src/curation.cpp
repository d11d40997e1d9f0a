#include "fbgrpo/curation.hpp"

#include <cmath>
#include <stdexcept>

#include "fbgrpo/features.hpp"
#include "fbgrpo/parallel.hpp"
#include "fbgrpo/response.hpp"

namespace fbgrpo::curation {

void CurationConfig::validate() const {
  if (N < 2) throw std::invalid_argument("curation needs N >= 2 rollouts per scenario");
  if (!(temperature > 0.0)) throw std::invalid_argument("curation temperature must be positive");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("threshold s must lie in (0, 1)");
  if (!(discard_std_max >= 0.0)) throw std::invalid_argument("discard_std_max must be non-negative");
  metrics.validate();
}

RolloutStats summarize(const std::string& scenario_id, std::vector<rewards::RewardBreakdown> rollouts, double s) {
  RolloutStats st;
  st.scenario_id = scenario_id;
  st.N = static_cast<int>(rollouts.size());
  if (rollouts.empty()) {
    st.rollouts = std::move(rollouts);
    return st;
  }
  double sum = 0.0;
  for (const auto& r : rollouts) sum += r.total;
  st.mean_reward = sum / st.N;
  double var = 0.0;
  for (const auto& r : rollouts) var += (r.total - st.mean_reward) * (r.total - st.mean_reward);
  st.std_reward = std::sqrt(var / st.N);
  st.all_fail_pdms = st.all_fail_nc = st.all_fail_dac = true;
  for (const auto& r : rollouts) {
    st.all_fail_pdms = st.all_fail_pdms && r.r_traj < s;
    // An unscored (malformed) rollout has no collision verdict, so it does not count as an NC or DAC failure.
    st.all_fail_nc = st.all_fail_nc && r.scored && r.scores.nc == 0.0;
    st.all_fail_dac = st.all_fail_dac && r.scored && r.scores.dac == 0.0;
  }
  st.rollouts = std::move(rollouts);
  return st;
}

std::vector<RolloutStats> estimate_stats(const policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                                         const CurationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (params.theta.size() != static_cast<Eigen::Index>(policy::param_count())) {
    throw std::invalid_argument("curation needs initialized policy parameters");
  }
  std::vector<RolloutStats> out(corpus.size());
  parallel_for(corpus.size(), [&](std::size_t i) {
    const ScenarioRecord& rec = corpus[i];
    const features::FeatureVector feat = features::base_features(rec.scene);
    const std::uint64_t stream = derive_seed(seed, {0xC0A7, hash_string(rec.scenario_id)});
    std::vector<rewards::RewardBreakdown> rs;
    rs.reserve(static_cast<std::size_t>(cfg.N));
    for (int j = 0; j < cfg.N; ++j) {
      Rng rng(derive_seed(stream, {static_cast<std::uint64_t>(j)}));
      const policy::SampleOutput smp = policy::sample(params.theta, feat, cfg.temperature, rng);
      rs.push_back(rewards::total_reward(rec.scene, response::parse(smp.tokens), rec.gt_trajectory, cfg.metrics));
    }
    out[i] = summarize(rec.scenario_id, std::move(rs), cfg.s);
  });
  return out;
}

bool discarded(const RolloutStats& st, const CurationConfig& cfg) {
  return st.mean_reward >= cfg.discard_mean_min && st.std_reward <= cfg.discard_std_max;
}

std::vector<std::string> filter(const std::vector<RolloutStats>& stats, const CurationConfig& cfg) {
  std::vector<std::string> kept;
  for (const auto& st : stats) {
    if (!discarded(st, cfg)) kept.push_back(st.scenario_id);
  }
  return kept;
}

}  // namespace fbgrpo::curation
