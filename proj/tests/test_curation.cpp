#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "helpers.hpp"

#include "fbgrpo/curation.hpp"

using namespace fbgrpo;
using namespace fbgrpo::testing;
using namespace fbgrpo::curation;

namespace {

RolloutStats stats(double mean, double sd, const std::string& id = "x") {
  RolloutStats s;
  s.scenario_id = id;
  s.N = 8;
  s.mean_reward = mean;
  s.std_reward = sd;
  return s;
}

rewards::RewardBreakdown breakdown(double r_traj, double nc, double dac, bool scored = true) {
  rewards::RewardBreakdown b;
  b.r_traj = r_traj;
  b.r_fmt = 1.0;
  b.total = r_traj + 1.0;
  b.scored = scored;
  b.scores.nc = nc;
  b.scores.dac = dac;
  return b;
}

void check_consistent(const RolloutStats& st, double s) {
  CHECK(st.std_reward >= 0.0);
  CHECK(static_cast<int>(st.rollouts.size()) == st.N);
  bool pd = true, nc = true, dac = true;
  double mean = 0.0;
  for (const auto& r : st.rollouts) {
    pd = pd && r.r_traj < s;
    nc = nc && r.scored && r.scores.nc == 0.0;
    dac = dac && r.scored && r.scores.dac == 0.0;
    mean += r.total / st.N;
  }
  CHECK(st.all_fail_pdms == pd);
  CHECK(st.all_fail_nc == nc);
  CHECK(st.all_fail_dac == dac);
  CHECK(st.mean_reward == doctest::Approx(mean).epsilon(1e-12));
}

}  // namespace

TEST_CASE("discard rule examples") {
  const CurationConfig cfg;
  CHECK(discarded(stats(0.95, 0.02), cfg));
  CHECK_FALSE(discarded(stats(0.10, 0.01), cfg));
  CHECK_FALSE(discarded(stats(0.95, 0.30), cfg));
  CHECK(discarded(stats(0.9, 0.05), cfg));
}

TEST_CASE("filter partitions the input and is monotone in the mean threshold") {
  Rng rng(4);
  std::vector<RolloutStats> all;
  for (int i = 0; i < 300; ++i) all.push_back(stats(rng.uniform(0.0, 3.0), rng.uniform(0.0, 0.2), std::to_string(i)));
  CurationConfig cfg;
  const auto kept = filter(all, cfg);
  std::size_t discards = 0;
  for (const auto& s : all) discards += discarded(s, cfg);
  CHECK(kept.size() + discards == all.size());
  CHECK(std::is_sorted(kept.begin(), kept.end(), [](const std::string& a, const std::string& b) {
    return std::stoi(a) < std::stoi(b);
  }));

  CurationConfig lower = cfg;
  lower.discard_mean_min = 0.5;
  const auto kept_lower = filter(all, lower);
  for (const auto& id : kept_lower) CHECK(std::find(kept.begin(), kept.end(), id) != kept.end());
}

TEST_CASE("summaries use the population std of the total reward") {
  const auto st = summarize("a", {breakdown(0.2, 1, 1), breakdown(0.6, 1, 1)}, 0.8);
  CHECK(st.N == 2);
  CHECK(st.mean_reward == doctest::Approx(1.4));
  CHECK(st.std_reward == doctest::Approx(0.2));
  CHECK(st.all_fail_pdms);
  CHECK_FALSE(st.all_fail_nc);

  const auto crash = summarize("b", {breakdown(0.0, 0, 1), breakdown(0.0, 0, 0)}, 0.8);
  CHECK(crash.all_fail_nc);
  CHECK_FALSE(crash.all_fail_dac);

  // Unscored rollouts never count as a specific sub-metric failure.
  const auto malformed = summarize("c", {breakdown(0.0, 0, 0, false), breakdown(0.0, 0, 0)}, 0.8);
  CHECK(malformed.all_fail_pdms);
  CHECK_FALSE(malformed.all_fail_nc);
  CHECK_FALSE(malformed.all_fail_dac);
}

TEST_CASE("curation config validation") {
  CurationConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.N = 1;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = {};
  cfg.temperature = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("rollout statistics under a fitted policy") {
  const Fitted& fit = fitted_policy();
  CurationConfig cfg;
  const auto a = estimate_stats(fit.params, fit.corpus, cfg, 3);
  REQUIRE(a.size() == fit.corpus.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].scenario_id == fit.corpus[i].scenario_id);
    check_consistent(a[i], cfg.s);
  }
  const auto b = estimate_stats(fit.params, fit.corpus, cfg, 3);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].mean_reward == b[i].mean_reward);
    CHECK(a[i].std_reward == b[i].std_reward);
  }
  CHECK(filter(a, cfg) == filter(b, cfg));

  SUBCASE("the straight-road record is solved") {
    const auto it = std::find_if(fit.corpus.begin(), fit.corpus.end(),
                                 [](const ScenarioRecord& r) { return r.family == Family::straight; });
    REQUIRE(it != fit.corpus.end());
    const auto& st = a[static_cast<std::size_t>(it - fit.corpus.begin())];
    CHECK(st.mean_reward > 2.0);
    CHECK_FALSE(st.all_fail_pdms);
    CHECK_FALSE(st.all_fail_nc);
    CHECK_FALSE(st.all_fail_dac);
  }
  SUBCASE("two rollouts are enough") {
    cfg.N = 2;
    for (const auto& st : estimate_stats(fit.params, fit.corpus, cfg, 3)) {
      CHECK(st.N == 2);
      check_consistent(st, cfg.s);
    }
  }
  SUBCASE("an untrained policy fails everywhere") {
    policy::PolicyParams raw{policy::init_params(9), {}};
    raw.freeze_reference();
    for (const auto& st : estimate_stats(raw, fit.corpus, cfg, 3)) {
      CHECK(st.all_fail_pdms);
      CHECK_FALSE(discarded(st, cfg));
    }
  }
}
