#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbgrpo/scene.hpp"

namespace fbgrpo::response {

using Token = int;
using TokenSeq = std::vector<Token>;

// Token layout. Ids are dense and stable; they are written into checkpoints.
inline constexpr Token kThinkOpen = 0;
inline constexpr Token kThinkClose = 1;
inline constexpr Token kAnsOpen = 2;
inline constexpr Token kAnsClose = 3;
inline constexpr Token kEnd = 4;
inline constexpr Token kLongBase = 5;       // 4 longitudinal meta tokens
inline constexpr Token kLatBase = 9;        // 5 lateral meta tokens
inline constexpr Token kObstacleBase = 14;  // 25 obstacle cells
inline constexpr Token kNoObstacle = 39;
inline constexpr Token kWaypointBase = 40;  // 25 x 13 displacement tokens

inline constexpr int kObstacleBands = 5;
inline constexpr int kObstacleCells = kObstacleBands * kObstacleBands;
inline constexpr double kObstacleBandLength = 8.0;  // forward, meters
inline constexpr double kObstacleBandWidth = 4.0;   // lateral, meters
inline constexpr int kNoCell = kObstacleCells;      // cell index for NO_OBSTACLE

inline constexpr double kGridStep = 0.5;  // meters
inline constexpr int kDxCount = 25;       // dx in {0, 0.5, ..., 12}
inline constexpr int kDyCount = 13;       // dy in {-3, -2.5, ..., 3}
inline constexpr double kDyMin = -3.0;

inline constexpr int kVocabSize = kWaypointBase + kDxCount * kDyCount;
static_assert(kVocabSize == 365);

inline constexpr int kMaxLength = 24;
inline constexpr int kCanonicalLength = 15;  // without the trailing END

bool is_longitudinal(Token t);
bool is_lateral(Token t);
bool is_obstacle(Token t);  // a grid cell or NO_OBSTACLE
bool is_waypoint(Token t);

Token longitudinal_token(Longitudinal l);
Token lateral_token(Lateral l);
Token obstacle_token(int cell);  // kNoCell maps to kNoObstacle
Token waypoint_token(int ix, int iy);
Vec2 waypoint_displacement(Token t);
// Nearest grid token for a displacement; `clamped` reports an out-of-range input.
Token quantize_displacement(Vec2 d, bool* clamped = nullptr);

std::string token_name(Token t);
nlohmann::json vocabulary_json();

// Grid cell of an ego-frame position (forward bands of 8 m from 0 to 40 m; lateral
// bands of 4 m, band 2 spans [-2, 2]). Positions off the grid map to kNoCell.
int obstacle_cell(Vec2 local);
inline int forward_band(int cell) { return cell / kObstacleBands; }
inline int lateral_band(int cell) { return cell % kObstacleBands; }

// Index of the nearest obstacle that is on the grid now and whose predicted
// positions enter the corridor ahead of the ego within the horizon.
std::optional<std::size_t> interacting_obstacle(const Scene& scene);
// Cell of that obstacle, or kNoCell.
int interacting_cell(const Scene& scene);

struct ParsedResponse {
  MetaAction meta;
  int obstacle_cell = kNoCell;
  Trajectory trajectory;  // ego frame, cumulative sum of the displacements
  bool well_formed_structure = false;
  bool well_formed_trajectory = false;
};

// Total over any token sequence. Missing fields fall back to MaintainSpeed,
// KeepLane, NO_OBSTACLE and zero displacement.
ParsedResponse parse(std::span<const Token> tokens);

struct GtEncoding {
  TokenSeq tokens;
  bool clamped = false;
};

// Canonical response for a record, terminated by END. Waypoints are quantized
// with error feedback, so each reconstructed waypoint stays within a quarter
// meter of the ground truth on both axes when every step is in range.
GtEncoding encode_gt_checked(const ScenarioRecord& record);
TokenSeq encode_gt(const ScenarioRecord& record);

// Canonical token sequence for arbitrary content (used for synthetic responses).
TokenSeq encode_response(const MetaAction& meta, int cell, const Trajectory& local_traj, bool* clamped = nullptr);

}  // namespace fbgrpo::response
