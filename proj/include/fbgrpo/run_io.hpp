#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbgrpo/grpo.hpp"

namespace fbgrpo::run_io {

inline constexpr const char* kManifestVersion = "fbgrpo-run/1";

struct RunManifest {
  std::string run_id;
  nlohmann::json config;
  std::string corpus_hash;
  std::vector<std::string> lineage;
  std::uint64_t seed = 0;
  std::string mode;
  std::string started_at;
  std::string finished_at;
  std::string format_version = kManifestVersion;
};

// Deterministic id from the inputs that define a run, so repeated runs share it.
std::string make_run_id(const std::string& stage, const nlohmann::json& config, const std::string& corpus_hash,
                        std::uint64_t seed);

std::string utc_timestamp();

nlohmann::json to_json(const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
// Refuses to overwrite a manifest that belongs to a different run.
void write_manifest(const std::filesystem::path& path, const RunManifest& m);
RunManifest read_manifest(const std::filesystem::path& path);

// Appends lines to one file from any thread; each line is written whole.
class LineAppender {
 public:
  LineAppender(const std::filesystem::path& path, bool truncate);
  void append(const std::string& line);

 private:
  std::mutex mu_;
  std::ofstream out_;
};

// Step-level training metrics. The first line names the run id.
class MetricsCsv {
 public:
  static constexpr const char* kHeader =
      "step,epoch,mean_pdms,mean_total_reward,pdms_fail,nc_fail,dac_fail,kl,clip_fraction,injected";

  // A resumed log keeps its rows up to start_step and continues from there.
  MetricsCsv(const std::filesystem::path& path, const std::string& run_id, long start_step);
  void write(const grpo::StepMetrics& m);

  static std::string format(const grpo::StepMetrics& m);
  static std::vector<grpo::StepMetrics> read(const std::filesystem::path& path);

 private:
  std::unique_ptr<LineAppender> out_;
};

// Rewrites a JSON-lines log keeping only the records with step < start_step.
void truncate_jsonl(const std::filesystem::path& path, long start_step);
std::vector<nlohmann::json> read_jsonl(const std::filesystem::path& path);

}  // namespace fbgrpo::run_io
