#include "fbgrpo/config.hpp"

#include <fstream>
#include <set>
#include <string>

namespace fbgrpo::config {

using nlohmann::json;

namespace {

// Reads the keys of one section, rejecting any key it does not know.
class SectionReader {
 public:
  SectionReader(const json& root, const std::string& name) : name_(name) {
    if (!root.contains(name)) return;
    section_ = &root.at(name);
    if (!section_->is_object()) throw ConfigError("config section '" + name + "' must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!section_ || !section_->contains(key)) return;
    try {
      out = section_->at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError("config key " + name_ + "." + key + ": " + e.what());
    }
  }

  const json* raw(const std::string& key) {
    seen_.insert(key);
    if (!section_ || !section_->contains(key)) return nullptr;
    return &section_->at(key);
  }

  void finish() const {
    if (!section_) return;
    for (const auto& [key, _] : section_->items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key " + name_ + "." + key);
    }
  }

 private:
  std::string name_;
  const json* section_ = nullptr;
  std::set<std::string> seen_;
};

json mix_to_json(const scenario::FamilyMix& mix) {
  json j = json::object();
  for (int f = 0; f < kFamilyCount; ++f) j[std::string(to_string(static_cast<Family>(f)))] = mix.weights[f];
  return j;
}

scenario::FamilyMix mix_from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("scenario.mix must be an object of family weights");
  scenario::FamilyMix mix;
  mix.weights.fill(0.0);
  for (const auto& [name, w] : j.items()) {
    Family f;
    try {
      f = family_from_string(name);
    } catch (const std::invalid_argument&) {
      throw ConfigError("scenario.mix: unknown family '" + name + "'");
    }
    mix.weights[static_cast<std::size_t>(f)] = w.get<double>();
  }
  return mix;
}

}  // namespace

void RunConfig::sync_metrics() {
  scenario.generation.metrics = metrics;
  policy.sft.metrics = metrics;
  train.metrics = metrics;
  curation.metrics = metrics;
  policy.sft.s = train.s;
  curation.s = train.s;
}

void RunConfig::validate() const {
  if (scenario.count == 0) throw ConfigError("scenario.count must be positive");
  if (train_epochs < 1) throw ConfigError("train.epochs must be at least 1");
  try {
    scenario.mix.validate();
    metrics.validate();
    policy.sft.validate();
    train.validate();
    curation.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

json to_json(const RunConfig& c) {
  json j;
  j["scenario"] = {{"count", c.scenario.count},
                   {"seed", c.scenario.seed},
                   {"mix", mix_to_json(c.scenario.mix)},
                   {"max_attempts", c.scenario.generation.max_attempts},
                   {"hardness_pdms", c.scenario.generation.hardness_pdms}};
  j["metrics"] = {{"ttc_threshold", c.metrics.ttc_threshold},
                  {"comfort_accel_max", c.metrics.comfort_accel_max},
                  {"comfort_jerk_max", c.metrics.comfort_jerk_max},
                  {"lk_max_offset", c.metrics.lk_max_offset},
                  {"ec_max_delta", c.metrics.ec_max_delta}};
  j["policy"] = {{"init_seed", c.policy.init_seed},
                 {"sft_epochs", c.policy.sft.epochs},
                 {"sft_learning_rate", c.policy.sft.learning_rate},
                 {"sft_cosine_decay", c.policy.sft.cosine_decay},
                 {"sft_batch_size", c.policy.sft.batch_size},
                 {"sft_feedback_pairs_per_record", c.policy.sft.feedback_pairs_per_record}};
  j["train"] = {{"n", c.train.n},
                {"k", c.train.k},
                {"s", c.train.s},
                {"gamma", c.train.gamma},
                {"beta", c.train.beta},
                {"epsilon", c.train.epsilon},
                {"temperature", c.train.temperature},
                {"iterations", c.train.iterations},
                {"learning_rate", c.train.learning_rate},
                {"mode", std::string(grpo::to_string(c.train.mode))},
                {"seed", c.train.seed},
                {"scenarios_per_step", c.train.scenarios_per_step},
                {"freeze_shaping_denominator", c.train.freeze_shaping_denominator},
                {"epochs", c.train_epochs}};
  j["curation"] = {{"N", c.curation.N},
                   {"discard_mean_min", c.curation.discard_mean_min},
                   {"discard_std_max", c.curation.discard_std_max},
                   {"temperature", c.curation.temperature}};
  return j;
}

RunConfig from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  static const std::set<std::string> sections = {"scenario", "metrics", "policy", "train", "curation"};
  for (const auto& [key, _] : j.items()) {
    if (!sections.count(key)) throw ConfigError("unknown config section '" + key + "'");
  }
  RunConfig c;

  SectionReader sc(j, "scenario");
  sc.read("count", c.scenario.count);
  sc.read("seed", c.scenario.seed);
  if (const json* mix = sc.raw("mix")) c.scenario.mix = mix_from_json(*mix);
  sc.read("max_attempts", c.scenario.generation.max_attempts);
  sc.read("hardness_pdms", c.scenario.generation.hardness_pdms);
  sc.finish();

  SectionReader mt(j, "metrics");
  mt.read("ttc_threshold", c.metrics.ttc_threshold);
  mt.read("comfort_accel_max", c.metrics.comfort_accel_max);
  mt.read("comfort_jerk_max", c.metrics.comfort_jerk_max);
  mt.read("lk_max_offset", c.metrics.lk_max_offset);
  mt.read("ec_max_delta", c.metrics.ec_max_delta);
  mt.finish();

  SectionReader po(j, "policy");
  po.read("init_seed", c.policy.init_seed);
  po.read("sft_epochs", c.policy.sft.epochs);
  po.read("sft_learning_rate", c.policy.sft.learning_rate);
  po.read("sft_cosine_decay", c.policy.sft.cosine_decay);
  po.read("sft_batch_size", c.policy.sft.batch_size);
  po.read("sft_feedback_pairs_per_record", c.policy.sft.feedback_pairs_per_record);
  po.finish();

  SectionReader tr(j, "train");
  tr.read("n", c.train.n);
  tr.read("k", c.train.k);
  tr.read("s", c.train.s);
  tr.read("gamma", c.train.gamma);
  tr.read("beta", c.train.beta);
  tr.read("epsilon", c.train.epsilon);
  tr.read("temperature", c.train.temperature);
  tr.read("iterations", c.train.iterations);
  tr.read("learning_rate", c.train.learning_rate);
  if (const json* mode = tr.raw("mode")) {
    try {
      c.train.mode = grpo::mode_from_string(mode->get<std::string>());
    } catch (const std::exception& e) {
      throw ConfigError(std::string("train.mode: ") + e.what());
    }
  }
  tr.read("seed", c.train.seed);
  tr.read("scenarios_per_step", c.train.scenarios_per_step);
  tr.read("freeze_shaping_denominator", c.train.freeze_shaping_denominator);
  tr.read("epochs", c.train_epochs);
  tr.finish();

  SectionReader cu(j, "curation");
  cu.read("N", c.curation.N);
  cu.read("discard_mean_min", c.curation.discard_mean_min);
  cu.read("discard_std_max", c.curation.discard_std_max);
  cu.read("temperature", c.curation.temperature);
  cu.finish();

  c.sync_metrics();
  c.validate();
  return c;
}

RunConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(j);
}

}  // namespace fbgrpo::config
