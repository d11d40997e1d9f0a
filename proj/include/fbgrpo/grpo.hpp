#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbgrpo/policy.hpp"
#include "fbgrpo/rewards.hpp"
#include "fbgrpo/scenario.hpp"
#include "fbgrpo/teacher.hpp"

namespace fbgrpo::grpo {

enum class Mode { grpo, gt_grpo, rule_grpo, elf };

std::string_view to_string(Mode m);
// Accepts both "gt_grpo" and the CLI spelling "gt-grpo".
Mode mode_from_string(std::string_view s);

struct TrainConfig {
  int n = 8;
  int k = 1;
  double s = 0.8;
  double gamma = 0.1;
  double beta = 0.01;
  double epsilon = 0.2;
  double temperature = 1.2;
  int iterations = 2;
  double learning_rate = 2e-2;
  Mode mode = Mode::elf;
  std::uint64_t seed = 0;
  std::size_t scenarios_per_step = 4;
  bool freeze_shaping_denominator = false;
  metrics::MetricConfig metrics;

  void validate() const;
};

class NumericalFailure : public std::runtime_error {
 public:
  NumericalFailure(const std::string& what, int entry) : std::runtime_error(what), entry_(entry) {}
  int entry() const { return entry_; }

 private:
  int entry_;
};

struct Rollout {
  policy::SampleOutput sample;
  response::ParsedResponse parsed;
  rewards::RewardBreakdown reward;
  teacher::Verdict verdict = teacher::Verdict::wrong;
};

struct RolloutGroup {
  std::string scenario_id;
  std::vector<Rollout> samples;
};

struct FeedbackRollout {
  Rollout rollout;
  features::FeatureVector query;
  std::optional<teacher::DiagnosticReport> report;  // present for wrong originals in elf mode
};

enum class Origin { onpolicy, feedback, gt, duplicate };
std::string_view to_string(Origin o);

struct BatchEntry {
  response::TokenSeq tokens;
  rewards::RewardBreakdown reward;
  Origin origin = Origin::onpolicy;
  std::vector<double> old_logprob;  // under the rollout-time parameters and base conditioning
  int source = -1;                  // sample index in the group or feedback list
};

struct FinalBatch {
  std::string scenario_id;
  features::FeatureVector features;  // base conditioning used for optimization
  std::vector<BatchEntry> entries;
  std::vector<double> advantages;
  int argmax_index = 0;  // on-policy sample with the highest r_traj
};

// Stream seed for a (run seed, scenario, epoch) triple.
std::uint64_t group_stream(std::uint64_t seed, const std::string& scenario_id, std::uint64_t epoch);

RolloutGroup rollout_group(const Eigen::VectorXd& theta, const ScenarioRecord& record, const TrainConfig& cfg,
                           std::uint64_t stream);

// One feedback-conditioned sample per original. Rule mode uses the binary flag only.
std::vector<FeedbackRollout> feedback_rollout(const Eigen::VectorXd& theta, const ScenarioRecord& record,
                                              const RolloutGroup& group, const TrainConfig& cfg,
                                              std::uint64_t stream, bool rule_only = false);

struct Selection {
  std::vector<int> chosen;  // indices into the feedback samples
  int duplicates = 0;
  int argmax_index = 0;
  double r_max = 0.0;
};

Selection select_refinements(const RolloutGroup& group, const std::vector<FeedbackRollout>& fb, int k, Rng& rng);

// Union normalization with population std; all zeros when std < 1e-8.
std::vector<double> compute_advantages(const std::vector<double>& rewards);
void compute_advantages(FinalBatch& batch);

// Assembles the batch for the configured mode.
struct GroupResult {
  RolloutGroup group;
  std::vector<FeedbackRollout> feedback;
  FinalBatch batch;
};
GroupResult build_batch(const Eigen::VectorXd& theta, const ScenarioRecord& record, const TrainConfig& cfg,
                        std::uint64_t stream);

struct ObjectiveStats {
  double objective = 0.0;
  double onpolicy_term = 0.0;
  double feedback_term = 0.0;
  double kl = 0.0;
  // Tokens whose clipped branch was active, by origin; feedback entries never reach the clip.
  std::array<std::size_t, 4> clipped_tokens{};
  std::array<std::size_t, 4> clip_evaluations{};
  double clip_fraction() const;
};

struct ObjectiveResult {
  double value = 0.0;
  Eigen::VectorXd grad;
  ObjectiveStats stats;
};

// The scalar objective and its exact gradient for one final batch.
ObjectiveResult objective_and_grad(const policy::PolicyParams& params, const Eigen::VectorXd& old_theta,
                                   const FinalBatch& batch, const TrainConfig& cfg);

// Shaping function f(p) = p / (p + gamma).
inline double shaping(double p, double gamma) { return p / (p + gamma); }

struct StepMetrics {
  long step = 0;
  int epoch = 0;
  double mean_pdms = 0.0;          // on-policy r_traj
  double mean_total_reward = 0.0;  // on-policy total
  double pdms_fail = 0.0;
  double nc_fail = 0.0;
  double dac_fail = 0.0;
  double kl = 0.0;
  double clip_fraction = 0.0;
  double injected = 0.0;  // feedback entries per batch
};

struct StepReport {
  StepMetrics metrics;
  const std::vector<GroupResult>* groups = nullptr;
  // [pass][group] statistics of every optimization pass of the step.
  const std::vector<std::vector<ObjectiveStats>>* pass_stats = nullptr;
};

struct TrainHooks {
  std::function<void(const StepReport&)> on_step;
  long start_step = 0;  // resume point
};

long steps_per_epoch(std::size_t corpus_size, const TrainConfig& cfg);

// Runs epochs * steps_per_epoch optimization steps from hooks.start_step.
std::vector<StepMetrics> train(policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                               const TrainConfig& cfg, int epochs, const TrainHooks& hooks = {});

nlohmann::json group_log(const GroupResult& g, long step, int epoch, const ObjectiveStats* stats = nullptr);

}  // namespace fbgrpo::grpo
