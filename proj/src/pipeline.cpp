#include "fbgrpo/pipeline.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "fbgrpo/response.hpp"
#include "fbgrpo/run_io.hpp"
#include "fbgrpo/scenario.hpp"

namespace fbgrpo::pipeline {

using nlohmann::json;

namespace {

struct StopRequested {};

}  // namespace

std::vector<ScenarioRecord> select_subset(const std::vector<ScenarioRecord>& corpus, const std::vector<std::string>& ids) {
  const std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<ScenarioRecord> out;
  for (const ScenarioRecord& r : corpus) {
    if (wanted.count(r.scenario_id)) out.push_back(r);
  }
  if (out.size() != wanted.size()) throw std::invalid_argument("subset names scenarios that are not in the corpus");
  return out;
}

SftRun run_sft(const std::vector<ScenarioRecord>& corpus, const config::RunConfig& cfg, std::uint64_t seed,
               const std::filesystem::path& out) {
  const std::string hash = scenario::corpus_hash(corpus);
  const json cfg_json = config::to_json(cfg);
  run_io::RunManifest manifest;
  manifest.run_id = run_io::make_run_id("sft", cfg_json, hash, seed);
  manifest.config = cfg_json;
  manifest.corpus_hash = hash;
  manifest.seed = seed;
  manifest.mode = "sft";
  manifest.started_at = run_io::utc_timestamp();

  SftRun run;
  policy::PolicyParams& params = run.checkpoint.params;
  params.theta = policy::init_params(cfg.policy.init_seed);
  run.epochs = sft::train_sft(params, corpus, cfg.policy.sft, seed);
  run.checkpoint.stage = "sft";
  run.checkpoint.seed = seed;
  run.checkpoint.corpus_hash = hash;
  run.checkpoint.lineage = {manifest.run_id};
  run.checkpoint.config = cfg_json;

  if (!out.empty()) {
    checkpoint::save(out, run.checkpoint);
    manifest.lineage = run.checkpoint.lineage;
    manifest.finished_at = run_io::utc_timestamp();
    run_io::write_manifest(out.string() + ".manifest.json", manifest);
    run_io::LineAppender log(out.string() + ".loss.csv", true);
    log.append("# run_id=" + manifest.run_id);
    log.append("epoch,mean_loss");
    for (const sft::EpochLog& e : run.epochs) {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%d,%.9f", e.epoch, e.mean_loss);
      log.append(buf);
    }
  }
  return run;
}

std::string stats_csv(const std::vector<curation::RolloutStats>& stats, const curation::CurationConfig& cfg) {
  std::ostringstream out;
  out << "scenario_id,N,mean_reward,std_reward,all_fail_pdms,all_fail_nc,all_fail_dac,kept\n";
  char buf[256];
  for (const auto& st : stats) {
    std::snprintf(buf, sizeof buf, "%s,%d,%.9f,%.9f,%d,%d,%d,%d\n", st.scenario_id.c_str(), st.N, st.mean_reward,
                  st.std_reward, st.all_fail_pdms ? 1 : 0, st.all_fail_nc ? 1 : 0, st.all_fail_dac ? 1 : 0,
                  curation::discarded(st, cfg) ? 0 : 1);
    out << buf;
  }
  return out.str();
}

CurationRun run_curation(const checkpoint::Checkpoint& ck, const std::vector<ScenarioRecord>& corpus,
                         const curation::CurationConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir) {
  CurationRun run;
  run.stats = curation::estimate_stats(ck.params, corpus, cfg, seed);
  run.kept = curation::filter(run.stats, cfg);
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    std::ofstream kept(out_dir / "kept.json");
    kept << json{{"corpus_hash", scenario::corpus_hash(corpus)},
                 {"checkpoint_lineage", ck.lineage},
                 {"seed", seed},
                 {"kept", run.kept}}
                .dump(1)
         << '\n';
    std::ofstream csv(out_dir / "stats.csv");
    csv << stats_csv(run.stats, cfg);
    if (!kept || !csv) throw std::runtime_error("failed writing curation outputs to " + out_dir.string());
  }
  return run;
}

std::vector<std::string> read_kept(const std::filesystem::path& kept_json) {
  std::ifstream in(kept_json);
  if (!in) throw std::runtime_error("cannot open kept-id manifest " + kept_json.string());
  return json::parse(in).at("kept").get<std::vector<std::string>>();
}

TrainRun run_training(const std::vector<ScenarioRecord>& corpus, const checkpoint::Checkpoint& init,
                      const config::RunConfig& cfg, const TrainOptions& opt) {
  if (opt.out_dir.empty()) throw std::invalid_argument("training needs an output directory");
  if (!init.params.has_reference()) throw std::invalid_argument("training needs an SFT checkpoint with a reference snapshot");
  cfg.validate();
  const std::string hash = scenario::corpus_hash(corpus);
  const json cfg_json = config::to_json(cfg);
  const std::string parent = init.lineage.empty() ? "" : init.lineage.back();
  const std::string mode = std::string(grpo::to_string(cfg.train.mode));

  TrainRun run;
  run.run_id = run_io::make_run_id(mode, cfg_json, hash + "/" + parent, cfg.train.seed);
  std::filesystem::create_directories(opt.out_dir);
  const auto latest_path = opt.out_dir / "latest.ckpt.json";

  checkpoint::Checkpoint state = init;
  state.stage = mode;
  state.seed = cfg.train.seed;
  state.corpus_hash = hash;
  state.config = cfg_json;
  state.step = 0;
  state.lineage = init.lineage;
  state.lineage.push_back(run.run_id);

  if (opt.resume && std::filesystem::exists(latest_path)) {
    checkpoint::Checkpoint saved = checkpoint::load(latest_path);
    if (saved.lineage.empty() || saved.lineage.back() != run.run_id) {
      throw std::runtime_error("cannot resume: " + latest_path.string() + " belongs to a different run");
    }
    state = std::move(saved);
  }
  const long start_step = state.step;

  run_io::RunManifest manifest;
  manifest.run_id = run.run_id;
  manifest.config = cfg_json;
  manifest.corpus_hash = hash;
  manifest.lineage = state.lineage;
  manifest.seed = cfg.train.seed;
  manifest.mode = mode;
  manifest.started_at = run_io::utc_timestamp();
  run_io::write_manifest(opt.out_dir / "manifest.json", manifest);
  {
    std::ofstream vocab(opt.out_dir / "vocabulary.json");
    vocab << response::vocabulary_json().dump(1) << '\n';
  }

  run_io::MetricsCsv metrics(opt.out_dir / "metrics.csv", run.run_id, start_step);
  const auto rollouts_path = opt.out_dir / "rollouts.jsonl";
  if (start_step > 0) run_io::truncate_jsonl(rollouts_path, start_step);
  std::unique_ptr<run_io::LineAppender> rollouts;
  if (opt.write_rollouts) rollouts = std::make_unique<run_io::LineAppender>(rollouts_path, start_step == 0);

  const long spe = grpo::steps_per_epoch(corpus.size(), cfg.train);
  grpo::TrainHooks hooks;
  hooks.start_step = start_step;
  hooks.on_step = [&](const grpo::StepReport& rep) {
    metrics.write(rep.metrics);
    if (rollouts) {
      for (std::size_t i = 0; i < rep.groups->size(); ++i) {
        json line = grpo::group_log((*rep.groups)[i], rep.metrics.step, rep.metrics.epoch, &rep.pass_stats->back()[i]);
        line["run_id"] = run.run_id;
        rollouts->append(line.dump());
      }
    }
    run.metrics.push_back(rep.metrics);
    if ((rep.metrics.step + 1) % spe == 0 || rep.metrics.step + 1 == opt.stop_at_step) {
      state.step = rep.metrics.step + 1;
      checkpoint::save(latest_path, state);
    }
    if (rep.metrics.step + 1 == opt.stop_at_step) throw StopRequested{};
  };
  try {
    grpo::train(state.params, corpus, cfg.train, cfg.train_epochs, hooks);
  } catch (const StopRequested&) {
    run.checkpoint = std::move(state);
    return run;
  }
  state.step = spe * cfg.train_epochs;
  checkpoint::save(opt.out_dir / "final.ckpt.json", state);
  manifest.finished_at = run_io::utc_timestamp();
  run_io::write_manifest(opt.out_dir / "manifest.json", manifest);
  run.checkpoint = std::move(state);
  run.finished = true;
  return run;
}

}  // namespace fbgrpo::pipeline
