#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "json.hpp"

#include "fbgrpo/scene.hpp"

namespace fbgrpo::features {

inline constexpr int kBaseDim = 64;
inline constexpr int kFeedbackDim = 32;
inline constexpr int kFeatureDim = kBaseDim + kFeedbackDim;
inline constexpr int kObstacleSlots = 3;
inline constexpr int kObstacleSlotDim = 10;

using FeatureVector = Eigen::VectorXd;

// Scene features in the ego frame. The feedback block (last 32 entries) is zero.
FeatureVector base_features(const Scene& scene);

struct FeatureScale {
  std::string name;
  double scale;  // raw quantity divided by this value
};

// Documented normalization per base-feature entry, stored in checkpoints.
const std::vector<FeatureScale>& scale_table();
nlohmann::json scale_table_json();

}  // namespace fbgrpo::features
