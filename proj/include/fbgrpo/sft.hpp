#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "fbgrpo/metrics.hpp"
#include "fbgrpo/policy.hpp"
#include "fbgrpo/scenario.hpp"

namespace fbgrpo::sft {

struct SftConfig {
  int epochs = 350;
  double learning_rate = 2e-3;
  // Cosine annealing of the learning rate across epochs.
  bool cosine_decay = true;
  std::size_t batch_size = 16;
  // Synthetic (q_fb, o_gt) pairs generated per record next to its (q_base, o_gt) pair.
  int feedback_pairs_per_record = 2;
  double s = 0.8;
  metrics::MetricConfig metrics;

  void validate() const;
};

// A perturbed version of the ground-truth response, used as the prior response
// inside synthetic feedback queries.
response::TokenSeq perturbed_response(const ScenarioRecord& record, Rng& rng);

// Base pairs followed by feedback pairs; each feedback pair carries the positive
// flag or the teacher's report for a perturbed response, always targeting o_gt.
std::vector<policy::SftExample> build_dataset(const std::vector<ScenarioRecord>& corpus, const SftConfig& cfg,
                                              std::uint64_t seed);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
};

// Minibatch training with Adam on the mean sequence negative log-likelihood.
// Freezes the reference snapshot at the end.
std::vector<EpochLog> train_sft(policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                                const SftConfig& cfg, std::uint64_t seed,
                                const std::function<void(const EpochLog&)>& on_epoch = {});

}  // namespace fbgrpo::sft
