#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "helpers.hpp"

#include "fbgrpo/grpo.hpp"

using namespace fbgrpo;
using namespace fbgrpo::testing;
using namespace fbgrpo::grpo;

namespace {

Rollout scored_rollout(double r_traj) {
  Rollout r;
  r.reward.r_traj = r_traj;
  r.reward.total = r_traj;
  return r;
}

RolloutGroup group_of(std::initializer_list<double> rewards) {
  RolloutGroup g;
  for (double r : rewards) g.samples.push_back(scored_rollout(r));
  return g;
}

std::vector<FeedbackRollout> feedback_of(std::initializer_list<double> rewards) {
  std::vector<FeedbackRollout> out;
  for (double r : rewards) out.push_back({scored_rollout(r), {}, std::nullopt});
  return out;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double pop_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / v.size());
}

TrainConfig config_for(Mode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.seed = 5;
  return cfg;
}

void check_batch_invariants(const GroupResult& g, const TrainConfig& cfg) {
  const FinalBatch& b = g.batch;
  const std::size_t expected = cfg.mode == Mode::grpo ? cfg.n : cfg.n + cfg.k;
  REQUIRE(b.entries.size() == expected);
  REQUIRE(b.advantages.size() == expected);
  double r_max = -1.0;
  for (int i = 0; i < cfg.n; ++i) {
    CHECK(b.entries[i].origin == Origin::onpolicy);
    r_max = std::max(r_max, b.entries[i].reward.r_traj);
  }
  CHECK(b.entries[b.argmax_index].reward.r_traj == r_max);
  for (std::size_t e = cfg.n; e < b.entries.size(); ++e) {
    const BatchEntry& entry = b.entries[e];
    if (entry.origin == Origin::feedback) CHECK(entry.reward.r_traj > r_max);
    if (entry.origin == Origin::duplicate) CHECK(entry.tokens == b.entries[b.argmax_index].tokens);
    if (cfg.mode == Mode::gt_grpo) CHECK(entry.origin == Origin::gt);
  }
  if (cfg.mode == Mode::rule_grpo || cfg.mode == Mode::elf) {
    REQUIRE(g.feedback.size() == static_cast<std::size_t>(cfg.n));
    for (std::size_t i = 0; i < g.feedback.size(); ++i) {
      const bool wrong = g.group.samples[i].verdict == teacher::Verdict::wrong;
      CHECK(g.feedback[i].report.has_value() == (cfg.mode == Mode::elf && wrong));
      CHECK(g.feedback[i].rollout.sample.conditioning == policy::Conditioning::feedback);
    }
  }
  std::vector<double> totals;
  for (const auto& e : b.entries) totals.push_back(e.reward.total);
  if (pop_std(totals) >= 1e-8) {
    CHECK(std::abs(mean_of(b.advantages)) <= 1e-9);
    CHECK(std::abs(pop_std(b.advantages) - 1.0) <= 1e-9);
  } else {
    for (double a : b.advantages) CHECK(a == 0.0);
  }
}

}  // namespace

TEST_CASE("train config validation") {
  TrainConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  };
  bad([](TrainConfig& c) { c.n = 1; });
  bad([](TrainConfig& c) { c.k = 0; });
  bad([](TrainConfig& c) { c.k = c.n; });
  bad([](TrainConfig& c) { c.s = 1.0; });
  bad([](TrainConfig& c) { c.gamma = 0.0; });
  bad([](TrainConfig& c) { c.gamma = 1.0; });
  bad([](TrainConfig& c) { c.beta = -0.1; });
  bad([](TrainConfig& c) { c.epsilon = 0.0; });
  bad([](TrainConfig& c) { c.temperature = 0.0; });
  bad([](TrainConfig& c) { c.iterations = 0; });
  bad([](TrainConfig& c) { c.scenarios_per_step = 0; });
}

TEST_CASE("mode names") {
  for (Mode m : {Mode::grpo, Mode::gt_grpo, Mode::rule_grpo, Mode::elf}) CHECK(mode_from_string(to_string(m)) == m);
  CHECK(mode_from_string("gt-grpo") == Mode::gt_grpo);
  CHECK(mode_from_string("rule-grpo") == Mode::rule_grpo);
  CHECK_THROWS(mode_from_string("ppo"));
}

TEST_CASE("advantage worked example") {
  const auto a = compute_advantages({0.2, 0.2, 0.2, 0.8});
  CHECK(a[3] == doctest::Approx(1.7320).epsilon(1e-4));
  CHECK(a[0] == doctest::Approx(-0.57735).epsilon(1e-4));
  CHECK(std::abs(mean_of(a)) <= 1e-12);
  CHECK(std::abs(pop_std(a) - 1.0) <= 1e-12);
}

TEST_CASE("equal rewards give zero advantages") {
  for (double a : compute_advantages({0.5, 0.5, 0.5})) CHECK(a == 0.0);
  CHECK(compute_advantages({}).empty());
}

TEST_CASE("random reward sets normalize to zero mean and unit population std") {
  Rng rng(3);
  for (int i = 0; i < 500; ++i) {
    std::vector<double> r(static_cast<std::size_t>(rng.uniform_int(2, 12)));
    for (double& x : r) x = rng.uniform(0.0, 3.0);
    const auto a = compute_advantages(r);
    CHECK(std::abs(mean_of(a)) <= 1e-9);
    CHECK(std::abs(pop_std(a) - 1.0) <= 1e-9);
  }
}

TEST_CASE("selection keeps only strictly dominating refinements") {
  Rng rng(1);
  SUBCASE("two better candidates, one slot") {
    const auto g = group_of({0.3, 0.7, 0.5, 0.7});
    const auto fb = feedback_of({0.7, 0.9, 0.2, 0.95});
    const Selection s = select_refinements(g, fb, 1, rng);
    CHECK(s.argmax_index == 1);
    CHECK(s.r_max == 0.7);
    REQUIRE(s.chosen.size() == 1);
    CHECK((s.chosen[0] == 1 || s.chosen[0] == 3));
    CHECK(s.duplicates == 0);
  }
  SUBCASE("a tie is not an improvement") {
    const Selection s = select_refinements(group_of({0.6, 0.6}), feedback_of({0.6, 0.6}), 1, rng);
    CHECK(s.chosen.empty());
    CHECK(s.duplicates == 1);
    CHECK(s.argmax_index == 0);
  }
  SUBCASE("fewer candidates than slots are padded") {
    const Selection s = select_refinements(group_of({0.1, 0.2, 0.3}), feedback_of({0.4, 0.0, 0.0}), 2, rng);
    CHECK(s.chosen == std::vector<int>{0});
    CHECK(s.duplicates == 1);
  }
  CHECK_THROWS_AS(select_refinements(RolloutGroup{}, {}, 1, rng), std::invalid_argument);
}

TEST_CASE("selection is uniform over eligible candidates") {
  const auto g = group_of({0.1, 0.2, 0.3, 0.4, 0.5, 0.1, 0.2, 0.3});
  const auto fb = feedback_of({0.9, 0.1, 0.8, 0.6, 0.2, 0.55, 0.3, 0.7});
  const std::vector<int> eligible{0, 2, 3, 5, 7};
  const int trials = 3000;
  for (int k : {1, 2}) {
    std::vector<int> counts(fb.size(), 0);
    for (int t = 0; t < trials; ++t) {
      Rng rng(derive_seed(77, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t)}));
      const Selection s = select_refinements(g, fb, k, rng);
      REQUIRE(s.chosen.size() == static_cast<std::size_t>(k));
      std::vector<int> sorted = s.chosen;
      std::sort(sorted.begin(), sorted.end());
      CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
      for (int c : s.chosen) ++counts[c];
    }
    const double p = static_cast<double>(k) / eligible.size();
    const double sigma = std::sqrt(trials * p * (1.0 - p));
    for (std::size_t j = 0; j < fb.size(); ++j) {
      if (std::find(eligible.begin(), eligible.end(), static_cast<int>(j)) == eligible.end()) {
        CHECK(counts[j] == 0);
      } else {
        CHECK(std::abs(counts[j] - trials * p) <= 3.0 * sigma);
      }
    }
  }
}

TEST_CASE("shaping function") {
  CHECK(shaping(0.0, 0.1) == 0.0);
  CHECK(shaping(0.1, 0.1) == 0.5);
  CHECK(shaping(1.0, 0.1) == doctest::Approx(1.0 / 1.1));
}

TEST_CASE("final batches satisfy the structural invariants in every mode") {
  const Fitted& fit = fitted_policy();
  for (Mode mode : {Mode::grpo, Mode::gt_grpo, Mode::rule_grpo, Mode::elf}) {
    const TrainConfig cfg = config_for(mode);
    for (const auto& r : fit.corpus) {
      const auto g = build_batch(fit.params.theta, r, cfg, group_stream(cfg.seed, r.scenario_id, 0));
      check_batch_invariants(g, cfg);
    }
  }
}

TEST_CASE("group construction is deterministic per stream") {
  const Fitted& fit = fitted_policy();
  const TrainConfig cfg = config_for(Mode::elf);
  const auto& r = fit.corpus[3];
  const auto a = build_batch(fit.params.theta, r, cfg, group_stream(1, r.scenario_id, 2));
  const auto b = build_batch(fit.params.theta, r, cfg, group_stream(1, r.scenario_id, 2));
  CHECK(group_log(a, 0, 0).dump() == group_log(b, 0, 0).dump());
  CHECK(group_stream(1, r.scenario_id, 2) != group_stream(1, r.scenario_id, 3));
  CHECK(group_stream(1, r.scenario_id, 2) != group_stream(2, r.scenario_id, 2));
}

TEST_CASE("objective gradient matches central finite differences") {
  const Fitted& fit = fitted_policy();
  Rng rng(19);
  for (Mode mode : {Mode::grpo, Mode::gt_grpo, Mode::elf}) {
    for (bool frozen : {false, true}) {
      TrainConfig cfg = config_for(mode);
      cfg.freeze_shaping_denominator = frozen;
      const auto& rec = fit.corpus[static_cast<std::size_t>(rng.uniform_int(0, 11))];
      const auto g = build_batch(fit.params.theta, rec, cfg, group_stream(9, rec.scenario_id, 0));
      policy::PolicyParams p = fit.params;
      const Eigen::VectorXd old = p.theta;
      p.theta += policy::init_params(rng.next_u64()) * 0.05;

      const ObjectiveResult res = objective_and_grad(p, old, g.batch, cfg);
      const double h = 1e-5;
      Eigen::VectorXd fd(40), an(40);
      for (int i = 0; i < 40; ++i) {
        const auto idx = static_cast<Eigen::Index>(rng.uniform_int(0, static_cast<std::int64_t>(p.theta.size()) - 1));
        const double saved = p.theta[idx];
        p.theta[idx] = saved + h;
        const double up = objective_and_grad(p, old, g.batch, cfg).value;
        p.theta[idx] = saved - h;
        const double down = objective_and_grad(p, old, g.batch, cfg).value;
        p.theta[idx] = saved;
        fd[i] = (up - down) / (2 * h);
        an[i] = res.grad[idx];
      }
      if (an.norm() < 1e-10) continue;
      CHECK((fd - an).norm() / an.norm() < 1e-3);
      CHECK(res.stats.clipped_tokens[static_cast<std::size_t>(Origin::feedback)] == 0);
      CHECK(res.stats.clip_evaluations[static_cast<std::size_t>(Origin::feedback)] == 0);
    }
  }
}

TEST_CASE("objective at the rollout parameters") {
  const Fitted& fit = fitted_policy();
  const TrainConfig cfg = config_for(Mode::grpo);
  const auto& rec = fit.corpus[0];
  const auto g = build_batch(fit.params.theta, rec, cfg, group_stream(2, rec.scenario_id, 0));
  const auto res = objective_and_grad(fit.params, fit.params.theta, g.batch, cfg);
  // With theta == old every ratio is one, so the on-policy term is the mean advantage: zero.
  CHECK(std::abs(res.stats.onpolicy_term) <= 1e-9);
  CHECK(res.stats.kl == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(res.stats.clip_fraction() == 0.0);
  policy::PolicyParams no_ref{fit.params.theta, {}};
  CHECK_THROWS_AS(objective_and_grad(no_ref, fit.params.theta, g.batch, cfg), std::invalid_argument);
}

TEST_CASE("short training run is reproducible and well reported") {
  const Fitted& fit = fitted_policy();
  TrainConfig cfg = config_for(Mode::elf);
  cfg.scenarios_per_step = 4;
  cfg.learning_rate = 2e-2;
  CHECK(steps_per_epoch(fit.corpus.size(), cfg) == 3);
  CHECK(steps_per_epoch(13, cfg) == 4);

  auto run = [&](std::vector<nlohmann::json>* logs) {
    policy::PolicyParams p = fit.params;
    TrainHooks hooks;
    hooks.on_step = [&](const StepReport& rep) {
      REQUIRE(rep.groups != nullptr);
      REQUIRE(rep.pass_stats != nullptr);
      CHECK(rep.pass_stats->size() == static_cast<std::size_t>(cfg.iterations));
      for (const auto& g : *rep.groups) {
        check_batch_invariants(g, cfg);
        if (logs) logs->push_back(group_log(g, rep.metrics.step, rep.metrics.epoch));
      }
    };
    auto metrics = train(p, fit.corpus, cfg, 1, hooks);
    CHECK(p.reference == fit.params.reference);
    return std::make_pair(metrics, p.theta);
  };
  std::vector<nlohmann::json> logs;
  const auto [m1, t1] = run(&logs);
  const auto [m2, t2] = run(nullptr);
  REQUIRE(m1.size() == 3);
  CHECK(t1 == t2);
  CHECK(t1 != fit.params.theta);
  for (std::size_t i = 0; i < m1.size(); ++i) {
    CHECK(m1[i].step == static_cast<long>(i));
    CHECK(m1[i].mean_pdms == m2[i].mean_pdms);
    CHECK(m1[i].kl == m2[i].kl);
    CHECK(m1[i].pdms_fail >= 0.0);
    CHECK(m1[i].pdms_fail <= 1.0);
    CHECK(m1[i].clip_fraction >= 0.0);
    CHECK(m1[i].clip_fraction <= 1.0);
  }
  REQUIRE(logs.size() == fit.corpus.size());
  for (const auto& j : logs) {
    CHECK(j.at("rewards").size() == static_cast<std::size_t>(cfg.n + cfg.k));
    CHECK(j.at("origins").size() == static_cast<std::size_t>(cfg.n + cfg.k));
    CHECK(j.contains("scenario_id"));
  }

}

TEST_CASE("training rejects unusable inputs") {
  const Fitted& fit = fitted_policy();
  TrainConfig cfg;
  policy::PolicyParams no_ref{fit.params.theta, {}};
  CHECK_THROWS_AS(train(no_ref, fit.corpus, cfg, 1), std::invalid_argument);
  policy::PolicyParams p = fit.params;
  CHECK_THROWS_AS(train(p, {}, cfg, 1), std::invalid_argument);
}
