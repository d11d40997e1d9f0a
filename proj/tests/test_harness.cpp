#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"

#include "fbgrpo/checkpoint.hpp"
#include "fbgrpo/config.hpp"
#include "fbgrpo/evaluate.hpp"
#include "fbgrpo/pipeline.hpp"
#include "fbgrpo/report.hpp"
#include "fbgrpo/run_io.hpp"

using namespace fbgrpo;
using namespace fbgrpo::testing;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("fbgrpo_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json group_json(int epoch, const std::string& id, std::vector<double> r_traj, std::vector<double> nc,
                          std::vector<double> dac) {
  nlohmann::json rewards = nlohmann::json::array();
  for (double r : r_traj) rewards.push_back({{"r_traj", r}, {"r_fmt", 1.0}, {"r_goal", 0.0}, {"total", r + 1.0}});
  return {{"epoch", epoch},
          {"step", 0},
          {"scenario_id", id},
          {"rewards", rewards},
          {"onpolicy", {{"r_traj", r_traj}, {"nc", nc}, {"dac", dac}}}};
}

}  // namespace

TEST_CASE("config round-trips through JSON and rejects unknown keys") {
  config::RunConfig cfg;
  cfg.train.mode = grpo::Mode::rule_grpo;
  cfg.train.learning_rate = 0.5;
  cfg.metrics.ttc_threshold = 1.5;
  cfg.curation.N = 4;
  cfg.scenario.mix = scenario::FamilyMix::only(Family::cut_in);
  const auto j = config::to_json(cfg);
  for (const char* section : {"scenario", "metrics", "policy", "train", "curation"}) CHECK(j.contains(section));
  const auto back = config::from_json(j);
  CHECK(config::to_json(back) == j);
  CHECK(back.train.metrics.ttc_threshold == 1.5);
  CHECK(back.curation.metrics.ttc_threshold == 1.5);

  auto bad = j;
  bad["train"]["learning_rat"] = 1.0;
  CHECK_THROWS_AS(config::from_json(bad), config::ConfigError);
  bad = j;
  bad["extra"] = {};
  CHECK_THROWS_AS(config::from_json(bad), config::ConfigError);
  bad = j;
  bad["train"]["k"] = 8;
  CHECK_THROWS_AS(config::from_json(bad), std::invalid_argument);

  const auto partial = config::from_json({{"train", {{"n", 6}}}});
  CHECK(partial.train.n == 6);
  CHECK(partial.train.k == config::RunConfig{}.train.k);
}

TEST_CASE("checkpoints reload bit for bit") {
  checkpoint::Checkpoint ck;
  ck.params.theta = policy::init_params(3);
  ck.params.freeze_reference();
  ck.params.theta[5] = -0.0;
  ck.params.theta[6] = 1e-310;
  ck.stage = "sft";
  ck.seed = 9;
  ck.step = 4;
  ck.corpus_hash = "abc";
  ck.lineage = {"sft-1"};
  ck.config = {{"x", 1}};
  const fs::path dir = scratch_dir("ckpt");
  checkpoint::save(dir / "a.json", ck);
  const auto back = checkpoint::load(dir / "a.json");
  CHECK(back.params.theta.size() == ck.params.theta.size());
  CHECK(std::memcmp(back.params.theta.data(), ck.params.theta.data(), sizeof(double) * ck.params.theta.size()) == 0);
  CHECK(back.params.reference == ck.params.reference);
  CHECK(back.lineage == ck.lineage);
  CHECK(back.step == 4);

  auto j = checkpoint::to_json(ck);
  j["format_version"] = "fbgrpo-checkpoint/0";
  CHECK_THROWS_AS(checkpoint::from_json(j), checkpoint::VersionMismatch);
  CHECK_THROWS(checkpoint::load(dir / "missing.json"));
  const Eigen::VectorXd v = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  CHECK(checkpoint::decode_vector(checkpoint::encode_vector(v)) == v);
  fs::remove_all(dir);
}

TEST_CASE("run manifests and metrics logs") {
  const fs::path dir = scratch_dir("runio");
  const auto id = run_io::make_run_id("elf", {{"a", 1}}, "hash", 3);
  CHECK(id == run_io::make_run_id("elf", {{"a", 1}}, "hash", 3));
  CHECK(id != run_io::make_run_id("elf", {{"a", 2}}, "hash", 3));
  CHECK(id.rfind("elf-", 0) == 0);

  run_io::RunManifest m;
  m.run_id = id;
  m.corpus_hash = "hash";
  m.seed = 3;
  m.mode = "elf";
  m.started_at = run_io::utc_timestamp();
  run_io::write_manifest(dir / "manifest.json", m);
  CHECK(run_io::read_manifest(dir / "manifest.json").run_id == id);
  run_io::RunManifest other = m;
  other.run_id = "elf-0000000000000000";
  CHECK_THROWS(run_io::write_manifest(dir / "manifest.json", other));

  {
    run_io::MetricsCsv csv(dir / "metrics.csv", id, 0);
    for (long s = 0; s < 4; ++s) {
      grpo::StepMetrics row;
      row.step = s;
      row.mean_pdms = 0.25 * s;
      csv.write(row);
    }
  }
  CHECK(slurp(dir / "metrics.csv").rfind("# run_id=" + id, 0) == 0);
  {
    run_io::MetricsCsv resumed(dir / "metrics.csv", id, 2);
    grpo::StepMetrics row;
    row.step = 2;
    resumed.write(row);
  }
  const auto rows = run_io::MetricsCsv::read(dir / "metrics.csv");
  REQUIRE(rows.size() == 3);
  for (long s = 0; s < 3; ++s) CHECK(rows[s].step == s);
  CHECK(rows[1].mean_pdms == 0.25);

  {
    run_io::LineAppender log(dir / "r.jsonl", true);
    for (int s = 0; s < 5; ++s) log.append(nlohmann::json{{"step", s}}.dump());
  }
  run_io::truncate_jsonl(dir / "r.jsonl", 3);
  CHECK(run_io::read_jsonl(dir / "r.jsonl").size() == 3);
  fs::remove_all(dir);
}

TEST_CASE("evaluating the expert plans") {
  const auto corpus = scenario::generate_corpus(30, scenario::FamilyMix::uniform(), 12);
  std::vector<Trajectory> trajs;
  std::vector<MetaAction> metas;
  for (const auto& r : corpus) {
    trajs.push_back(r.gt_trajectory);
    metas.push_back(r.gt_meta);
  }
  const auto rep = evaluate::evaluate_trajectories(corpus, trajs, metas, {});
  CHECK(rep.means.pdms >= 0.9);
  CHECK(rep.accuracy.overall == 1.0);
  CHECK(rep.corpus_hash == scenario::corpus_hash(corpus));

  double pdms = 0.0, ep = 0.0, epdms = 0.0;
  for (const auto& row : rep.rows) {
    pdms += row.pdms;
    ep += row.scores.ep;
    epdms += row.epdms;
  }
  const double n = static_cast<double>(rep.rows.size());
  CHECK(std::abs(rep.means.pdms - pdms / n) <= 1e-12);
  CHECK(std::abs(rep.means.ep - ep / n) <= 1e-12);
  CHECK(std::abs(rep.means.epdms - epdms / n) <= 1e-12);

  const auto back = evaluate::report_from_json(evaluate::to_json(rep));
  CHECK(evaluate::to_json(back) == evaluate::to_json(rep));
  const std::string csv = evaluate::table_csv(rep);
  CHECK(csv.rfind("scenario_id,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') >= static_cast<long>(corpus.size()) + 1);
}

TEST_CASE("an all-stop plan on open roads earns no progress") {
  const auto corpus = scenario::generate_corpus(8, scenario::FamilyMix::only(Family::straight), 6);
  std::vector<Trajectory> stops(corpus.size());
  std::vector<MetaAction> metas(corpus.size(), MetaAction{Longitudinal::Stop, Lateral::KeepLane});
  const auto rep = evaluate::evaluate_trajectories(corpus, stops, metas, {});
  for (const auto& row : rep.rows) {
    CHECK(row.scores.ep == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(row.pdms <= 7.0 / 12.0 + 1e-12);
  }
}

TEST_CASE("policy evaluation") {
  const Fitted& fit = fitted_policy();
  const auto a = evaluate::evaluate(fit.params, fit.corpus, {});
  const auto b = evaluate::evaluate(fit.params, fit.corpus, {});
  CHECK(evaluate::to_json(a) == evaluate::to_json(b));
  CHECK(a.rows.size() == fit.corpus.size());
  CHECK_THROWS_AS(evaluate::evaluate(fit.params, {}, {}), std::invalid_argument);
}

TEST_CASE("total-failure ratios") {
  std::vector<report::GroupOutcome> logs;
  logs.push_back(report::outcome_from_log(group_json(0, "a", {0.9, 0.1, 0.1}, {1, 1, 1}, {1, 1, 1})));
  logs.push_back(report::outcome_from_log(group_json(0, "b", {0.0, 0.0, 0.0}, {0, 0, 0}, {1, 0, 1})));
  logs.push_back(report::outcome_from_log(group_json(1, "a", {0.5, 0.5, 0.5}, {1, 1, 1}, {0, 0, 0})));
  CHECK_FALSE(report::total_failure_pdms(logs[0], 0.8));
  CHECK(report::total_failure_nc(logs[1]));
  CHECK_FALSE(report::total_failure_dac(logs[1]));
  const auto r = report::failure_ratios(logs, 0.8);
  REQUIRE(r.size() == 2);
  CHECK(r[0].scenarios == 2);
  CHECK(r[0].pdms == 0.5);
  CHECK(r[0].nc == 0.5);
  CHECK(r[0].dac == 0.0);
  CHECK(r[1].pdms == 1.0);
  CHECK(r[1].dac == 1.0);
  CHECK_FALSE(r[0].warning);

  const auto empty = report::failure_ratios({}, 0.8);
  REQUIRE(empty.size() == 1);
  CHECK(empty[0].warning);
  CHECK(empty[0].pdms == 0.0);
}

TEST_CASE("ablation tables") {
  const auto corpus = scenario::generate_corpus(6, scenario::FamilyMix::uniform(), 2);
  std::vector<Trajectory> trajs;
  std::vector<MetaAction> metas;
  for (const auto& r : corpus) {
    trajs.push_back(r.gt_trajectory);
    metas.push_back(r.gt_meta);
  }
  const auto rep = evaluate::evaluate_trajectories(corpus, trajs, metas, {});
  std::vector<std::pair<std::string, evaluate::EvalReport>> reports;
  for (const char* mode : {"sft", "grpo", "gt_grpo", "rule_grpo", "elf"}) reports.emplace_back(mode, rep);
  const auto table = report::ablation_report(reports);
  CHECK(table.rows.size() == 5);
  const std::string csv = table.csv();
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(table.text().find("rule_grpo") != std::string::npos);

  auto other = rep;
  other.corpus_hash = "different";
  reports.emplace_back("extra", other);
  CHECK_THROWS_AS(report::ablation_report(reports), std::invalid_argument);
  CHECK_THROWS_AS(report::ablation_report({}), std::invalid_argument);
}

TEST_CASE("pipeline: sft, curation, training and resume") {
  const auto corpus = scenario::generate_corpus(8, scenario::FamilyMix::uniform(), 44);
  config::RunConfig cfg;
  cfg.policy.sft.epochs = 10;
  cfg.policy.sft.feedback_pairs_per_record = 1;
  cfg.train.scenarios_per_step = 4;
  cfg.train.seed = 2;
  cfg.train_epochs = 2;
  cfg.curation.N = 3;
  const fs::path dir = scratch_dir("pipeline");

  const auto sft_run = pipeline::run_sft(corpus, cfg, 5, dir / "sft.ckpt.json");
  CHECK(sft_run.epochs.size() == 10);
  CHECK(fs::exists(dir / "sft.ckpt.json"));
  const auto ck = checkpoint::load(dir / "sft.ckpt.json");
  CHECK(ck.params.theta == sft_run.checkpoint.params.theta);
  REQUIRE(ck.lineage.size() == 1);

  const auto cur = pipeline::run_curation(ck, corpus, cfg.curation, 3, dir / "curate");
  CHECK(pipeline::read_kept(dir / "curate" / "kept.json") == cur.kept);
  CHECK(fs::exists(dir / "curate" / "stats.csv"));
  CHECK_THROWS(pipeline::select_subset(corpus, {"nope"}));
  CHECK(pipeline::select_subset(corpus, {corpus[2].scenario_id}).size() == 1);

  pipeline::TrainOptions full_opt{dir / "full", false, true};
  const auto full = pipeline::run_training(corpus, ck, cfg, full_opt);
  CHECK(full.metrics.size() == 4);
  for (const char* f : {"manifest.json", "vocabulary.json", "metrics.csv", "rollouts.jsonl", "final.ckpt.json"})
    CHECK(fs::exists(dir / "full" / f));
  CHECK(slurp(dir / "full" / "metrics.csv").find(full.run_id) != std::string::npos);
  CHECK(run_io::read_jsonl(dir / "full" / "rollouts.jsonl").size() == corpus.size() * 2);

  // Interrupt a run mid-epoch, then resume it: the logs must match the uninterrupted run.
  pipeline::TrainOptions part_opt{dir / "part", false, true, 3};
  const auto stopped = pipeline::run_training(corpus, ck, cfg, part_opt);
  CHECK_FALSE(stopped.finished);
  CHECK(stopped.metrics.size() == 3);
  CHECK(checkpoint::load(dir / "part" / "latest.ckpt.json").step == 3);
  CHECK_FALSE(fs::exists(dir / "part" / "final.ckpt.json"));

  pipeline::TrainOptions resume_opt{dir / "part", true, true};
  const auto resumed = pipeline::run_training(corpus, ck, cfg, resume_opt);
  CHECK(resumed.finished);
  REQUIRE(resumed.metrics.size() == 1);
  CHECK(resumed.metrics[0].step == 3);
  CHECK(slurp(dir / "full" / "metrics.csv") == slurp(dir / "part" / "metrics.csv"));
  CHECK(resumed.checkpoint.params.theta == full.checkpoint.params.theta);
  CHECK(run_io::read_jsonl(dir / "part" / "rollouts.jsonl").size() == corpus.size() * 2);

  // A different configuration cannot adopt this run's checkpoint.
  config::RunConfig other = cfg;
  other.train.seed = 3;
  CHECK_THROWS(pipeline::run_training(corpus, ck, other, resume_opt));
  fs::remove_all(dir);
}
