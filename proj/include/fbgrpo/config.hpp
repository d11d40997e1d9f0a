#pragma once

#include <cstdint>
#include <filesystem>

#include "json.hpp"

#include "fbgrpo/curation.hpp"
#include "fbgrpo/grpo.hpp"
#include "fbgrpo/metrics.hpp"
#include "fbgrpo/scenario.hpp"
#include "fbgrpo/sft.hpp"

namespace fbgrpo::config {

struct ScenarioSection {
  std::size_t count = 200;
  std::uint64_t seed = 11;
  scenario::FamilyMix mix = scenario::FamilyMix::uniform();
  scenario::ScenarioConfig generation;
};

struct PolicySection {
  std::uint64_t init_seed = 1;
  sft::SftConfig sft;
};

// Run configuration. The JSON form has the sections scenario, metrics, policy,
// train and curation; omitted keys keep their defaults and unknown keys are errors.
struct RunConfig {
  ScenarioSection scenario;
  metrics::MetricConfig metrics;
  PolicySection policy;
  grpo::TrainConfig train;
  int train_epochs = 72;
  curation::CurationConfig curation;

  // Propagates the shared metric configuration into the sections that score plans.
  void sync_metrics();
  void validate() const;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig from_json(const nlohmann::json& j);
RunConfig load(const std::filesystem::path& path);

}  // namespace fbgrpo::config
