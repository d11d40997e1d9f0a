#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "fbgrpo/checkpoint.hpp"
#include "fbgrpo/config.hpp"
#include "fbgrpo/evaluate.hpp"
#include "fbgrpo/metrics.hpp"
#include "fbgrpo/pipeline.hpp"
#include "fbgrpo/report.hpp"
#include "fbgrpo/response.hpp"
#include "fbgrpo/rewards.hpp"
#include "fbgrpo/run_io.hpp"
#include "fbgrpo/scenario.hpp"
#include "fbgrpo/serialization.hpp"
#include "fbgrpo/teacher.hpp"

using namespace fbgrpo;
using nlohmann::json;

namespace {

config::RunConfig load_config(const std::string& path) {
  config::RunConfig cfg;
  if (!path.empty()) cfg = config::load(path);
  cfg.sync_metrics();
  return cfg;
}

std::vector<ScenarioRecord> load_corpus(const std::string& dir, const std::string& subset) {
  std::vector<ScenarioRecord> corpus = scenario::read_corpus(dir);
  if (!subset.empty()) corpus = pipeline::select_subset(corpus, pipeline::read_kept(subset));
  return corpus;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return json::parse(in);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

// A plan given either as response tokens or as 8 ego-frame waypoints.
response::ParsedResponse plan_from_json(const json& j, const ScenarioRecord& rec) {
  if (j.contains("tokens")) return response::parse(j.at("tokens").get<std::vector<int>>());
  response::ParsedResponse p;
  p.trajectory = j.get<Trajectory>();
  p.meta = j.contains("meta") ? j.at("meta").get<MetaAction>() : scenario::label_meta_action(p.trajectory, rec.scene);
  p.obstacle_cell = j.value("obstacle_cell", response::kNoCell);
  p.well_formed_structure = true;
  p.well_formed_trajectory = true;
  return p;
}

const ScenarioRecord& find_record(const std::vector<ScenarioRecord>& corpus, const std::string& id) {
  for (const ScenarioRecord& r : corpus) {
    if (r.scenario_id == id) return r;
  }
  throw std::invalid_argument("scenario " + id + " is not in the corpus");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Feedback-augmented GRPO for toy trajectory planning"};
  app.require_subcommand(1);

  // gen-scenarios
  auto* gen = app.add_subcommand("gen-scenarios", "Generate a seeded scenario corpus");
  std::size_t gen_count = 200;
  std::uint64_t gen_seed = 11;
  std::string gen_out, gen_family = "uniform", gen_config;
  gen->add_option("--count", gen_count, "Number of scenarios")->check(CLI::PositiveNumber);
  gen->add_option("--seed", gen_seed, "Corpus seed");
  gen->add_option("--family", gen_family, "uniform or a single family name");
  gen->add_option("--config", gen_config, "Run config file (scenario section)");
  gen->add_option("--out", gen_out, "Output directory")->required();

  // sft
  auto* sft_cmd = app.add_subcommand("sft", "Supervised fine-tuning from a fresh initialization");
  std::string sft_corpus, sft_out, sft_config;
  std::optional<int> sft_epochs;
  std::optional<double> sft_lr;
  std::uint64_t sft_seed = 5;
  sft_cmd->add_option("--corpus", sft_corpus, "Corpus directory")->required();
  sft_cmd->add_option("--epochs", sft_epochs, "Training epochs");
  sft_cmd->add_option("--lr", sft_lr, "Peak learning rate");
  sft_cmd->add_option("--seed", sft_seed, "Data seed");
  sft_cmd->add_option("--config", sft_config, "Run config file");
  sft_cmd->add_option("--out", sft_out, "Checkpoint path")->required();

  // curate
  auto* cur = app.add_subcommand("curate", "Estimate rollout statistics and keep difficult scenarios");
  std::string cur_ckpt, cur_corpus, cur_out, cur_config;
  std::optional<int> cur_n;
  std::uint64_t cur_seed = 3;
  cur->add_option("--checkpoint", cur_ckpt, "SFT checkpoint")->required();
  cur->add_option("--corpus", cur_corpus, "Corpus directory")->required();
  cur->add_option("--N", cur_n, "Rollouts per scenario");
  cur->add_option("--seed", cur_seed, "Sampling seed");
  cur->add_option("--config", cur_config, "Run config file");
  cur->add_option("--out", cur_out, "Output directory for kept.json and stats.csv")->required();

  // train
  auto* tr = app.add_subcommand("train", "RL fine-tuning from an SFT checkpoint");
  std::string tr_mode, tr_corpus, tr_subset, tr_ckpt, tr_config, tr_out;
  std::optional<std::uint64_t> tr_seed;
  std::optional<int> tr_epochs;
  bool tr_resume = false, tr_no_rollouts = false;
  tr->add_option("--mode", tr_mode, "grpo | gt-grpo | rule-grpo | elf");
  tr->add_option("--corpus", tr_corpus, "Corpus directory")->required();
  tr->add_option("--subset", tr_subset, "kept.json from curate");
  tr->add_option("--checkpoint-in", tr_ckpt, "SFT checkpoint")->required();
  tr->add_option("--config", tr_config, "Run config file");
  tr->add_option("--seed", tr_seed, "Run seed");
  tr->add_option("--epochs", tr_epochs, "Training epochs");
  tr->add_option("--out-dir", tr_out, "Run directory")->required();
  tr->add_flag("--resume", tr_resume, "Continue from latest.ckpt.json in the run directory");
  tr->add_flag("--no-rollout-log", tr_no_rollouts, "Skip the JSON-lines rollout log");

  // eval
  auto* ev = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  std::string ev_ckpt, ev_corpus, ev_subset, ev_out, ev_csv, ev_config;
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint")->required();
  ev->add_option("--corpus", ev_corpus, "Corpus directory")->required();
  ev->add_option("--subset", ev_subset, "kept.json from curate");
  ev->add_option("--config", ev_config, "Run config file");
  ev->add_option("--out", ev_out, "Report JSON path");
  ev->add_option("--csv", ev_csv, "Per-scenario CSV path");

  // diagnose
  auto* dg = app.add_subcommand("diagnose", "Print the teacher report for a plan");
  std::string dg_corpus, dg_id, dg_traj, dg_config;
  dg->add_option("--corpus", dg_corpus, "Corpus directory")->required();
  dg->add_option("--scenario-id", dg_id, "Scenario id")->required();
  dg->add_option("--trajectory", dg_traj, "JSON plan: {\"tokens\": [...]} or {\"waypoints\": [[x, y], ...]}")
      ->required();
  dg->add_option("--config", dg_config, "Run config file");

  // score
  auto* sc = app.add_subcommand("score", "Score plans against a corpus");
  std::string sc_corpus, sc_traj, sc_out, sc_config;
  bool sc_extended = false;
  sc->add_option("--corpus", sc_corpus, "Corpus directory")->required();
  sc->add_option("--trajectories", sc_traj, "JSON object from scenario_id to plan, or 'expert'")->required();
  sc->add_option("--config", sc_config, "Run config file");
  sc->add_option("--out", sc_out, "CSV path (stdout when omitted)");
  sc->add_flag("--extended", sc_extended, "Add the extended sub-scores and epdms");

  // report
  auto* rp = app.add_subcommand("report", "Ablation table and failure ratios");
  std::vector<std::string> rp_evals, rp_rollouts;
  std::string rp_csv, rp_text;
  double rp_s = 0.8;
  rp->add_option("--eval", rp_evals, "mode=path/to/eval.json (repeatable)");
  rp->add_option("--rollouts", rp_rollouts, "rollouts.jsonl files for failure ratios (repeatable)");
  rp->add_option("--s", rp_s, "Correctness threshold");
  rp->add_option("--csv", rp_csv, "Ablation CSV path");
  rp->add_option("--text", rp_text, "Ablation text path");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gen) {
      config::RunConfig cfg = load_config(gen_config);
      scenario::FamilyMix mix = cfg.scenario.mix;
      if (gen_family != "uniform") mix = scenario::FamilyMix::only(family_from_string(gen_family));
      const auto corpus = scenario::generate_corpus(gen_count, mix, gen_seed, cfg.scenario.generation);
      scenario::write_corpus(gen_out, corpus, gen_seed);
      std::printf("wrote %zu scenarios to %s (hash %s)\n", corpus.size(), gen_out.c_str(),
                  scenario::corpus_hash(corpus).c_str());
    } else if (*sft_cmd) {
      config::RunConfig cfg = load_config(sft_config);
      if (sft_epochs) cfg.policy.sft.epochs = *sft_epochs;
      if (sft_lr) cfg.policy.sft.learning_rate = *sft_lr;
      cfg.validate();
      const auto corpus = scenario::read_corpus(sft_corpus);
      const auto run = pipeline::run_sft(corpus, cfg, sft_seed, sft_out);
      std::printf("sft done: %zu epochs, final loss %.6f, checkpoint %s\n", run.epochs.size(),
                  run.epochs.empty() ? 0.0 : run.epochs.back().mean_loss, sft_out.c_str());
    } else if (*cur) {
      config::RunConfig cfg = load_config(cur_config);
      if (cur_n) cfg.curation.N = *cur_n;
      cfg.curation.validate();
      const auto ck = checkpoint::load(cur_ckpt);
      const auto corpus = scenario::read_corpus(cur_corpus);
      const auto run = pipeline::run_curation(ck, corpus, cfg.curation, cur_seed, cur_out);
      std::printf("kept %zu of %zu scenarios\n", run.kept.size(), corpus.size());
    } else if (*tr) {
      config::RunConfig cfg = load_config(tr_config);
      if (!tr_mode.empty()) cfg.train.mode = grpo::mode_from_string(tr_mode);
      if (tr_seed) cfg.train.seed = *tr_seed;
      if (tr_epochs) cfg.train_epochs = *tr_epochs;
      cfg.validate();
      const auto ck = checkpoint::load(tr_ckpt);
      const auto corpus = load_corpus(tr_corpus, tr_subset);
      pipeline::TrainOptions opt;
      opt.out_dir = tr_out;
      opt.resume = tr_resume;
      opt.write_rollouts = !tr_no_rollouts;
      const auto run = pipeline::run_training(corpus, ck, cfg, opt);
      std::printf("run %s: %zu steps, final step mean_pdms %.4f\n", run.run_id.c_str(), run.metrics.size(),
                  run.metrics.empty() ? 0.0 : run.metrics.back().mean_pdms);
    } else if (*ev) {
      config::RunConfig cfg = load_config(ev_config);
      const auto ck = checkpoint::load(ev_ckpt);
      const auto corpus = load_corpus(ev_corpus, ev_subset);
      const auto rep = evaluate::evaluate(ck.params, corpus, {cfg.train.s, cfg.metrics});
      if (!ev_out.empty()) write_text(ev_out, evaluate::to_json(rep).dump(1) + "\n");
      if (!ev_csv.empty()) write_text(ev_csv, evaluate::table_csv(rep));
      const auto& m = rep.means;
      std::printf("scenarios %zu  nc %.4f dac %.4f ttc %.4f comfort %.4f ep %.4f pdms %.4f epdms %.4f\n",
                  rep.rows.size(), m.nc, m.dac, m.ttc, m.comfort, m.ep, m.pdms, m.epdms);
      std::printf("accuracy speed %.4f path %.4f overall %.4f  failures pdms %.4f nc %.4f dac %.4f\n",
                  rep.accuracy.speed, rep.accuracy.path, rep.accuracy.overall, rep.failures.pdms, rep.failures.nc,
                  rep.failures.dac);
    } else if (*dg) {
      config::RunConfig cfg = load_config(dg_config);
      const auto corpus = scenario::read_corpus(dg_corpus);
      const ScenarioRecord& rec = find_record(corpus, dg_id);
      const response::ParsedResponse plan = plan_from_json(read_json_file(dg_traj), rec);
      const auto reward = rewards::total_reward(rec.scene, plan, rec.gt_trajectory, cfg.metrics);
      if (teacher::classify(reward, cfg.train.s) == teacher::Verdict::correct) {
        std::fprintf(stderr, "plan scores r_traj %.4f > s = %.2f; it is correct and has no diagnostic report\n",
                     reward.r_traj, cfg.train.s);
        return 3;
      }
      const auto report = teacher::diagnose(rec.scene, plan, rec.gt_trajectory, rec.gt_meta, reward.scores,
                                            cfg.train.s, cfg.metrics);
      std::cout << teacher::report_to_json(report).dump(2) << '\n';
    } else if (*sc) {
      config::RunConfig cfg = load_config(sc_config);
      const auto corpus = scenario::read_corpus(sc_corpus);
      evaluate::EvalReport rep;
      if (sc_traj == "expert") {
        std::vector<Trajectory> trajs;
        std::vector<MetaAction> metas;
        for (const auto& r : corpus) {
          trajs.push_back(r.gt_trajectory);
          metas.push_back(r.gt_meta);
        }
        rep = evaluate::evaluate_trajectories(corpus, trajs, metas, {cfg.train.s, cfg.metrics});
      } else {
        const json plans = read_json_file(sc_traj);
        std::vector<Trajectory> trajs;
        std::vector<MetaAction> metas;
        std::vector<ScenarioRecord> scored;
        for (const auto& r : corpus) {
          if (!plans.contains(r.scenario_id)) continue;
          const response::ParsedResponse p = plan_from_json(plans.at(r.scenario_id), r);
          if (!p.well_formed_trajectory) throw std::invalid_argument("plan for " + r.scenario_id + " is malformed");
          trajs.push_back(p.trajectory);
          metas.push_back(p.meta);
          scored.push_back(r);
        }
        rep = evaluate::evaluate_trajectories(scored, trajs, metas, {cfg.train.s, cfg.metrics});
      }
      std::string csv = sc_extended ? "scenario_id,nc,dac,ttc,comfort,ep,pdms,ddc,tlc,lk,hc,ec,epdms\n"
                                    : "scenario_id,nc,dac,ttc,comfort,ep,pdms\n";
      char buf[512];
      auto row = [&](const std::string& id, const metrics::SubScores& s, double pdms, const metrics::ExtendedSubScores& e,
                     double epdms) {
        std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", id.c_str(), s.nc, s.dac, s.ttc, s.comfort,
                      s.ep, pdms);
        csv += buf;
        if (sc_extended) {
          std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%.6f,%.6f,%.6f", e.ddc, e.tlc, e.lk, e.hc, e.ec, epdms);
          csv += buf;
        }
        csv += '\n';
      };
      for (const auto& r : rep.rows) row(r.scenario_id, r.scores, r.pdms, r.extended, r.epdms);
      const auto& m = rep.means;
      row("MEAN", {m.nc, m.dac, m.ttc, m.comfort, m.ep}, m.pdms,
          {m.nc, m.dac, m.ddc, m.tlc, m.ep, m.ttc, m.lk, m.hc, m.ec}, m.epdms);
      if (sc_out.empty()) {
        std::cout << csv;
      } else {
        write_text(sc_out, csv);
      }
    } else if (*rp) {
      if (rp_evals.empty() && rp_rollouts.empty()) throw std::invalid_argument("report needs --eval or --rollouts inputs");
      if (!rp_evals.empty()) {
        std::vector<std::pair<std::string, evaluate::EvalReport>> reports;
        for (const std::string& spec : rp_evals) {
          const auto eq = spec.find('=');
          if (eq == std::string::npos) throw std::invalid_argument("--eval expects mode=path, got " + spec);
          reports.emplace_back(spec.substr(0, eq), evaluate::report_from_json(read_json_file(spec.substr(eq + 1))));
        }
        const auto table = report::ablation_report(reports);
        if (!rp_csv.empty()) write_text(rp_csv, table.csv());
        if (!rp_text.empty()) write_text(rp_text, table.text());
        std::cout << table.text();
      }
      for (const std::string& path : rp_rollouts) {
        std::vector<report::GroupOutcome> logs;
        for (const json& line : run_io::read_jsonl(path)) logs.push_back(report::outcome_from_log(line));
        std::cout << "failure ratios for " << path << '\n' << "epoch,scenarios,pdms_fail,nc_fail,dac_fail,warning\n";
        for (const auto& e : report::failure_ratios(logs, rp_s)) {
          std::printf("%d,%zu,%.4f,%.4f,%.4f,%d\n", e.epoch, e.scenarios, e.pdms, e.nc, e.dac, e.warning ? 1 : 0);
        }
      }
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
