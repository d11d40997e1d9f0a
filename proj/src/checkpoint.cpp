#include "fbgrpo/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "fbgrpo/features.hpp"
#include "fbgrpo/response.hpp"

namespace fbgrpo::checkpoint {

using nlohmann::json;

namespace {

constexpr char kHex[] = "0123456789abcdef";

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  throw std::runtime_error("checkpoint vector contains a non-hex character");
}

}  // namespace

std::string encode_vector(const Eigen::VectorXd& v) {
  std::string out;
  out.reserve(static_cast<std::size_t>(v.size()) * 16);
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(v[i]);
    for (int b = 0; b < 8; ++b) {
      const auto byte = static_cast<unsigned>((bits >> (8 * b)) & 0xffu);
      out.push_back(kHex[byte >> 4]);
      out.push_back(kHex[byte & 0xfu]);
    }
  }
  return out;
}

Eigen::VectorXd decode_vector(const std::string& hex) {
  if (hex.size() % 16 != 0) throw std::runtime_error("checkpoint vector has a truncated entry");
  Eigen::VectorXd v(static_cast<Eigen::Index>(hex.size() / 16));
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) {
      const std::size_t at = static_cast<std::size_t>(i) * 16 + static_cast<std::size_t>(b) * 2;
      const auto byte = static_cast<std::uint64_t>(hex_value(hex[at]) * 16 + hex_value(hex[at + 1]));
      bits |= byte << (8 * b);
    }
    v[i] = std::bit_cast<double>(bits);
  }
  return v;
}

json to_json(const Checkpoint& ck) {
  json j;
  j["format_version"] = kFormatVersion;
  j["stage"] = ck.stage;
  j["seed"] = ck.seed;
  j["step"] = ck.step;
  j["corpus_hash"] = ck.corpus_hash;
  j["lineage"] = ck.lineage;
  j["config"] = ck.config;
  j["param_count"] = ck.params.theta.size();
  j["theta"] = encode_vector(ck.params.theta);
  j["reference"] = ck.params.has_reference() ? json(encode_vector(ck.params.reference)) : json(nullptr);
  j["vocabulary"] = response::vocabulary_json();
  j["feature_scales"] = features::scale_table_json();
  return j;
}

Checkpoint from_json(const json& j) {
  if (!j.is_object() || !j.contains("format_version")) throw VersionMismatch("checkpoint has no format version");
  const auto version = j.at("format_version").get<std::string>();
  if (version != kFormatVersion) {
    throw VersionMismatch("checkpoint format '" + version + "' is not supported (expected '" + kFormatVersion + "')");
  }
  if (j.at("vocabulary") != response::vocabulary_json()) {
    throw VersionMismatch("checkpoint vocabulary differs from this build");
  }
  if (j.at("feature_scales") != features::scale_table_json()) {
    throw VersionMismatch("checkpoint feature scales differ from this build");
  }
  Checkpoint ck;
  ck.stage = j.at("stage").get<std::string>();
  ck.seed = j.at("seed").get<std::uint64_t>();
  ck.step = j.at("step").get<long>();
  ck.corpus_hash = j.at("corpus_hash").get<std::string>();
  ck.lineage = j.at("lineage").get<std::vector<std::string>>();
  ck.config = j.at("config");
  ck.params.theta = decode_vector(j.at("theta").get<std::string>());
  if (!j.at("reference").is_null()) ck.params.reference = decode_vector(j.at("reference").get<std::string>());
  const auto expected = static_cast<Eigen::Index>(policy::param_count());
  if (ck.params.theta.size() != expected || j.at("param_count").get<Eigen::Index>() != expected) {
    throw VersionMismatch("checkpoint parameter count does not match this policy architecture");
  }
  if (ck.params.reference.size() != 0 && ck.params.reference.size() != expected) {
    throw VersionMismatch("checkpoint reference size does not match this policy architecture");
  }
  return ck;
}

void save(const std::filesystem::path& path, const Checkpoint& ck) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint " + tmp.string());
    out << to_json(ck).dump(1) << '\n';
    if (!out) throw std::runtime_error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::runtime_error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace fbgrpo::checkpoint
