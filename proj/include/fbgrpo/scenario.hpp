#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fbgrpo/metrics.hpp"
#include "fbgrpo/rng.hpp"
#include "fbgrpo/scene.hpp"

namespace fbgrpo::scenario {

inline constexpr const char* kCorpusFormatVersion = "fbgrpo-corpus/1";

// Meta-action labelling thresholds.
inline constexpr double kAccelThreshold = 0.5;         // m/s^2, windowed mean
inline constexpr double kStopSpeed = 0.3;              // m/s, final implied speed
inline constexpr double kTurnHeadingDeg = 20.0;        // final heading change
inline constexpr double kLaneChangeOffset = 2.5;       // m, lateral offset change
inline constexpr int kAccelWindow = 3;

// Expert acceptance bar for generated records.
inline constexpr double kExpertMinPdms = 0.9;

class CorpusGenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FamilyMix {
  std::array<double, kFamilyCount> weights{};

  static FamilyMix uniform();
  static FamilyMix only(Family f);
  // Throws std::invalid_argument unless weights are non-negative and sum to 1 within 1e-9.
  void validate() const;
  // Largest-remainder apportionment of `count` records, ties to the earlier family.
  std::array<std::size_t, kFamilyCount> apportion(std::size_t count) const;
};

struct ScenarioConfig {
  std::size_t max_attempts = 50;
  // Hard families must defeat the naive keep-speed, keep-lane plan below this PDMS.
  double hardness_pdms = 0.8;
  metrics::MetricConfig metrics;
};

struct ExpertPlan {
  Trajectory trajectory;
  bool degenerate = false;
  double progress = 0.0;
  // Scores under this plan's own progress as the reference.
  metrics::SubScores scores;
  double pdms = 0.0;
};

// Lattice planner over (target speed x lateral offset). Each candidate is tracked
// by a comfort-limited path on the 0.5 m displacement grid, scored with the
// metrics module, and the best PDMS wins (ties: more progress, smaller offset).
ExpertPlan expert_plan(const Scene& scene, const metrics::MetricConfig& cfg = {});

// Naive plan used by the hardness filter: hold current speed on the lane center.
Trajectory keep_speed_plan(const Scene& scene);

MetaAction label_meta_action(const Trajectory& traj, const Scene& scene);

// Scene sampling for one family. The result has no reference progress yet.
Scene sample_scene(Family family, Rng& rng, std::uint64_t seed);

// Straight lane along +x from x = -20 to x = 100.
Corridor straight_corridor(double half_width, double speed_limit, std::optional<StopLine> stop_line = std::nullopt);
// Straight for `straight_length` meters, then a 90 degree arc of `radius`, then straight.
Corridor turn_corridor(bool left, double straight_length, double radius, double half_width, double speed_limit);
// History positions for an ego that has held `speed` along +x.
std::array<Vec2, kHistorySteps> constant_speed_history(double speed);

// Runs the expert, stores its progress as the scene's reference, and labels the result.
// Throws CorpusGenerationError when the expert plan is degenerate.
ScenarioRecord make_record(Scene scene, Family family, std::string scenario_id, const metrics::MetricConfig& cfg = {});

std::vector<ScenarioRecord> generate_corpus(std::size_t count, const FamilyMix& mix, std::uint64_t seed,
                                            const ScenarioConfig& cfg = {});

// One JSON document per record plus manifest.json.
void write_corpus(const std::filesystem::path& dir, const std::vector<ScenarioRecord>& records, std::uint64_t seed);
std::vector<ScenarioRecord> read_corpus(const std::filesystem::path& dir);
// Stable content hash over the serialized records.
std::string corpus_hash(const std::vector<ScenarioRecord>& records);

}  // namespace fbgrpo::scenario
