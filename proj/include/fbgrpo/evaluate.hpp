#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "fbgrpo/metrics.hpp"
#include "fbgrpo/policy.hpp"
#include "fbgrpo/scene.hpp"

namespace fbgrpo::evaluate {

struct EvalConfig {
  double s = 0.8;
  metrics::MetricConfig metrics;
};

struct ScenarioRow {
  std::string scenario_id;
  Family family = Family::straight;
  bool well_formed = false;  // scored plan; malformed or unscorable plans get all-zero sub-scores
  metrics::SubScores scores;
  double pdms = 0.0;
  metrics::ExtendedSubScores extended;
  double epdms = 0.0;
  MetaAction predicted_meta;
  MetaAction gt_meta;
};

// Column means over the per-scenario table.
struct Means {
  double nc = 0.0, dac = 0.0, ttc = 0.0, comfort = 0.0, ep = 0.0, pdms = 0.0;
  double ddc = 0.0, tlc = 0.0, lk = 0.0, hc = 0.0, ec = 0.0, epdms = 0.0;
};

// Fractions of scenarios whose evaluated plan fails each criterion.
struct FailureRatios {
  double pdms = 0.0;
  double nc = 0.0;
  double dac = 0.0;
};

struct EvalReport {
  std::string corpus_hash;
  std::vector<ScenarioRow> rows;
  Means means;
  metrics::PlanningAccuracy accuracy;
  FailureRatios failures;
};

// Scores one plan per record. Plans may be malformed; their meta action still counts toward accuracy.
EvalReport score_plans(const std::vector<ScenarioRecord>& corpus, const std::vector<std::vector<int>>& plans,
                       const EvalConfig& cfg);

// Greedy decoding under the base conditioning, scored in parallel. Throws on an empty corpus.
EvalReport evaluate(const policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                    const EvalConfig& cfg);

// Scores trajectories given directly, such as the expert plans.
EvalReport evaluate_trajectories(const std::vector<ScenarioRecord>& corpus, const std::vector<Trajectory>& trajs,
                                 const std::vector<MetaAction>& metas, const EvalConfig& cfg);

nlohmann::json to_json(const EvalReport& r);
EvalReport report_from_json(const nlohmann::json& j);
std::string table_csv(const EvalReport& r);

}  // namespace fbgrpo::evaluate
