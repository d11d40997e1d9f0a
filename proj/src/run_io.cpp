#include "fbgrpo/run_io.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>
#include <stdexcept>

#include "fbgrpo/rng.hpp"

namespace fbgrpo::run_io {

using nlohmann::json;

std::string make_run_id(const std::string& stage, const json& config, const std::string& corpus_hash,
                        std::uint64_t seed) {
  const std::uint64_t h = derive_seed(hash_string(config.dump()), {hash_string(stage), hash_string(corpus_hash), seed});
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%016llx", stage.c_str(), static_cast<unsigned long long>(h));
  return buf;
}

std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json to_json(const RunManifest& m) {
  return {{"format_version", m.format_version}, {"run_id", m.run_id},       {"config", m.config},
          {"corpus_hash", m.corpus_hash},       {"lineage", m.lineage},     {"seed", m.seed},
          {"mode", m.mode},                     {"started_at", m.started_at}, {"finished_at", m.finished_at}};
}

RunManifest manifest_from_json(const json& j) {
  RunManifest m;
  m.format_version = j.at("format_version").get<std::string>();
  if (m.format_version != kManifestVersion) throw std::runtime_error("unsupported run manifest format " + m.format_version);
  m.run_id = j.at("run_id").get<std::string>();
  m.config = j.at("config");
  m.corpus_hash = j.at("corpus_hash").get<std::string>();
  m.lineage = j.at("lineage").get<std::vector<std::string>>();
  m.seed = j.at("seed").get<std::uint64_t>();
  m.mode = j.at("mode").get<std::string>();
  m.started_at = j.at("started_at").get<std::string>();
  m.finished_at = j.at("finished_at").get<std::string>();
  return m;
}

void write_manifest(const std::filesystem::path& path, const RunManifest& m) {
  if (std::filesystem::exists(path)) {
    const RunManifest old = read_manifest(path);
    if (old.run_id != m.run_id) {
      throw std::runtime_error("manifest " + path.string() + " belongs to run " + old.run_id);
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write manifest " + path.string());
  out << to_json(m).dump(2) << '\n';
}

RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  return manifest_from_json(json::parse(in));
}

LineAppender::LineAppender(const std::filesystem::path& path, bool truncate) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  out_.open(path, truncate ? std::ios::trunc : std::ios::app);
  if (!out_) throw std::runtime_error("cannot open log file " + path.string());
}

void LineAppender::append(const std::string& line) {
  std::lock_guard<std::mutex> lock(mu_);
  out_ << line << '\n';
  out_.flush();
  if (!out_) throw std::runtime_error("failed writing log line");
}

std::string MetricsCsv::format(const grpo::StepMetrics& m) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%ld,%d,%.9f,%.9f,%.6f,%.6f,%.6f,%.9g,%.6f,%.4f", m.step, m.epoch, m.mean_pdms,
                m.mean_total_reward, m.pdms_fail, m.nc_fail, m.dac_fail, m.kl, m.clip_fraction, m.injected);
  return buf;
}

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

void write_lines(const std::filesystem::path& path, const std::vector<std::string>& lines) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot rewrite " + path.string());
  for (const std::string& l : lines) out << l << '\n';
}

}  // namespace

MetricsCsv::MetricsCsv(const std::filesystem::path& path, const std::string& run_id, long start_step) {
  const std::string id_line = "# run_id=" + run_id;
  if (start_step > 0 && std::filesystem::exists(path)) {
    std::vector<std::string> lines = read_lines(path);
    if (lines.size() < 2 || lines[0] != id_line || lines[1] != kHeader) {
      throw std::runtime_error("metrics log " + path.string() + " does not belong to run " + run_id);
    }
    std::vector<std::string> kept(lines.begin(), lines.begin() + 2);
    for (std::size_t i = 2; i < lines.size(); ++i) {
      if (std::stol(lines[i].substr(0, lines[i].find(','))) < start_step) kept.push_back(lines[i]);
    }
    if (static_cast<long>(kept.size()) - 2 != start_step) {
      throw std::runtime_error("metrics log " + path.string() + " has a gap before the resume step");
    }
    write_lines(path, kept);
    out_ = std::make_unique<LineAppender>(path, false);
    return;
  }
  out_ = std::make_unique<LineAppender>(path, true);
  out_->append(id_line);
  out_->append(kHeader);
}

void MetricsCsv::write(const grpo::StepMetrics& m) { out_->append(format(m)); }

std::vector<grpo::StepMetrics> MetricsCsv::read(const std::filesystem::path& path) {
  std::vector<grpo::StepMetrics> out;
  const std::vector<std::string> lines = read_lines(path);
  for (std::size_t i = 2; i < lines.size(); ++i) {
    grpo::StepMetrics m;
    if (std::sscanf(lines[i].c_str(), "%ld,%d,%lf,%lf,%lf,%lf,%lf,%lf,%lf,%lf", &m.step, &m.epoch, &m.mean_pdms,
                    &m.mean_total_reward, &m.pdms_fail, &m.nc_fail, &m.dac_fail, &m.kl, &m.clip_fraction,
                    &m.injected) != 10) {
      throw std::runtime_error("malformed metrics row in " + path.string());
    }
    out.push_back(m);
  }
  return out;
}

void truncate_jsonl(const std::filesystem::path& path, long start_step) {
  if (!std::filesystem::exists(path)) return;
  std::vector<std::string> kept;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    if (json::parse(line).at("step").get<long>() < start_step) kept.push_back(line);
  }
  write_lines(path, kept);
}

std::vector<json> read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(json::parse(line));
  }
  return out;
}

}  // namespace fbgrpo::run_io
