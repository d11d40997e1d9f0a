#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fbgrpo/evaluate.hpp"

namespace fbgrpo::report {

// On-policy outcome of one training group, as recorded in the rollout log.
struct GroupOutcome {
  int epoch = 0;
  std::string scenario_id;
  std::vector<double> r_traj;
  std::vector<double> nc;
  std::vector<double> dac;
};

GroupOutcome outcome_from_log(const nlohmann::json& group_log);

struct EpochFailures {
  int epoch = 0;
  std::size_t scenarios = 0;
  double pdms = 0.0;  // every rollout has r_traj < s
  double nc = 0.0;    // every rollout has nc = 0
  double dac = 0.0;   // every rollout has dac = 0
  bool warning = false;  // no scenarios were logged; ratios are reported as 0
};

bool total_failure_pdms(const GroupOutcome& g, double s);
bool total_failure_nc(const GroupOutcome& g);
bool total_failure_dac(const GroupOutcome& g);

// Per-epoch fractions of scenarios whose whole on-policy group fails each criterion.
// A scenario visited several times in one epoch counts once per visit. An empty log
// yields a single epoch-0 entry with the warning flag set.
std::vector<EpochFailures> failure_ratios(const std::vector<GroupOutcome>& logs, double s);

struct AblationRow {
  std::string mode;
  evaluate::Means means;
  metrics::PlanningAccuracy accuracy;
};

struct AblationTable {
  std::string corpus_hash;
  std::vector<AblationRow> rows;

  std::string csv() const;
  std::string text() const;
};

// One row per (mode, report), in input order. Throws std::invalid_argument when
// the reports come from different evaluation corpora or the input is empty.
AblationTable ablation_report(const std::vector<std::pair<std::string, evaluate::EvalReport>>& reports);

}  // namespace fbgrpo::report
