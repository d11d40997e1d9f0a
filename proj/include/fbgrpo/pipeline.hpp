#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fbgrpo/checkpoint.hpp"
#include "fbgrpo/config.hpp"
#include "fbgrpo/curation.hpp"
#include "fbgrpo/grpo.hpp"
#include "fbgrpo/sft.hpp"

namespace fbgrpo::pipeline {

// Records whose ids appear in `ids`, in corpus order. Throws when an id is missing.
std::vector<ScenarioRecord> select_subset(const std::vector<ScenarioRecord>& corpus, const std::vector<std::string>& ids);

struct SftRun {
  checkpoint::Checkpoint checkpoint;
  std::vector<sft::EpochLog> epochs;
};

// SFT from a fresh initialization. Writes the checkpoint and its run manifest when out is non-empty.
SftRun run_sft(const std::vector<ScenarioRecord>& corpus, const config::RunConfig& cfg, std::uint64_t seed,
               const std::filesystem::path& out = {});

struct CurationRun {
  std::vector<curation::RolloutStats> stats;
  std::vector<std::string> kept;
};

// Writes kept.json (kept ids plus the corpus hash) and stats.csv into out_dir when it is non-empty.
CurationRun run_curation(const checkpoint::Checkpoint& ck, const std::vector<ScenarioRecord>& corpus,
                         const curation::CurationConfig& cfg, std::uint64_t seed,
                         const std::filesystem::path& out_dir = {});
std::string stats_csv(const std::vector<curation::RolloutStats>& stats, const curation::CurationConfig& cfg);
std::vector<std::string> read_kept(const std::filesystem::path& kept_json);

struct TrainOptions {
  std::filesystem::path out_dir;
  bool resume = false;
  bool write_rollouts = true;
  // Stop once this many steps have completed in total (negative: run to the end). The
  // stopped run keeps its latest checkpoint and logs so a later resume can finish it.
  long stop_at_step = -1;
};

struct TrainRun {
  std::string run_id;
  std::vector<grpo::StepMetrics> metrics;  // steps run in this invocation
  checkpoint::Checkpoint checkpoint;
  bool finished = false;
};

// RL from an SFT checkpoint. Writes manifest.json, vocabulary.json, metrics.csv,
// rollouts.jsonl, a resumable latest.ckpt.json after every epoch and final.ckpt.json.
// With resume set, training continues from latest.ckpt.json of the same run.
TrainRun run_training(const std::vector<ScenarioRecord>& corpus, const checkpoint::Checkpoint& init,
                      const config::RunConfig& cfg, const TrainOptions& opt);

}  // namespace fbgrpo::pipeline
