#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fbgrpo/policy.hpp"

namespace fbgrpo::checkpoint {

inline constexpr const char* kFormatVersion = "fbgrpo-checkpoint/1";

class VersionMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  policy::PolicyParams params;
  std::string stage;  // "sft" or a trainer mode
  std::uint64_t seed = 0;
  long step = 0;  // completed optimization steps; training resumes here
  std::string corpus_hash;
  std::vector<std::string> lineage;  // run ids that produced this checkpoint, oldest first
  nlohmann::json config;
};

// JSON container with the vocabulary and feature-scale tables embedded for auditing.
// Parameters are stored as hex-encoded little-endian IEEE doubles so reloads are bit exact.
nlohmann::json to_json(const Checkpoint& ck);
Checkpoint from_json(const nlohmann::json& j);

void save(const std::filesystem::path& path, const Checkpoint& ck);
// Throws VersionMismatch for a foreign format version and std::runtime_error for unreadable files.
Checkpoint load(const std::filesystem::path& path);

std::string encode_vector(const Eigen::VectorXd& v);
Eigen::VectorXd decode_vector(const std::string& hex);

}  // namespace fbgrpo::checkpoint
