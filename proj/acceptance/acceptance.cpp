// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fbgrpo/config.hpp"
#include "fbgrpo/curation.hpp"
#include "fbgrpo/evaluate.hpp"
#include "fbgrpo/grpo.hpp"
#include "fbgrpo/metrics.hpp"
#include "fbgrpo/pipeline.hpp"
#include "fbgrpo/policy.hpp"
#include "fbgrpo/rewards.hpp"
#include "fbgrpo/scenario.hpp"
#include "fbgrpo/sft.hpp"

using namespace fbgrpo;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += what;
    }
  }
  void note(const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
  }
};

std::string fmt(double v, int prec = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return buf;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Settings shared by the end-to-end criteria.
constexpr std::uint64_t kCorpusSeed = 11;
constexpr std::size_t kCorpusSize = 200;
constexpr std::uint64_t kSftSeed = 5;
constexpr std::uint64_t kCurationSeed = 3;
constexpr std::uint64_t kPoolSeed = 12;
constexpr std::size_t kPoolSize = 200;

// ---------------------------------------------------------------------------

Outcome formula_exactness() {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(1);
  auto bit = [&] { return rng.bernoulli(0.7) ? 1.0 : 0.0; };
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const metrics::SubScores s{bit(), bit(), bit(), bit(), rng.uniform()};
    const double oracle = s.nc * s.dac * (5.0 * s.ep + 5.0 * s.ttc + 2.0 * s.comfort) / 12.0;
    worst = std::max(worst, std::abs(metrics::pdms(s) - oracle));
    const metrics::ExtendedSubScores e{bit(), bit(), bit(), bit(), rng.uniform(), bit(), bit(), bit(), bit()};
    const double eoracle =
        e.nc * e.dac * e.ddc * e.tlc * (5.0 * e.ep + 2.0 * e.lk + 2.0 * e.hc + 5.0 * e.ttc + 2.0 * e.ec) / 16.0;
    worst = std::max(worst, std::abs(metrics::epdms(e) - eoracle));
  }
  o.require(worst <= 1e-12, "oracle deviation " + std::to_string(worst));

  // Boundary grid: every binary combination with ep on a grid.
  const std::vector<double> eps{0.0, 0.25, 0.5, 0.75, 1.0};
  bool gating = true, monotone = true, range = true;
  for (int mask = 0; mask < 16; ++mask) {
    for (double ep : eps) {
      const metrics::SubScores s{double(mask & 1), double((mask >> 1) & 1), double((mask >> 2) & 1),
                                 double((mask >> 3) & 1), ep};
      const double p = metrics::pdms(s);
      range = range && p >= 0.0 && p <= 1.0;
      if (s.nc == 0.0 || s.dac == 0.0) gating = gating && p == 0.0;
      for (double ep2 : eps) {
        if (ep2 < ep) continue;
        auto up = s;
        up.ep = ep2;
        monotone = monotone && metrics::pdms(up) >= p;
      }
      auto t = s;
      t.ttc = 1.0;
      monotone = monotone && metrics::pdms(t) >= p;
      t = s;
      t.comfort = 1.0;
      monotone = monotone && metrics::pdms(t) >= p;
    }
  }
  for (int mask = 0; mask < 256; ++mask) {
    for (double ep : eps) {
      const auto b = [&](int i) { return double((mask >> i) & 1); };
      const metrics::ExtendedSubScores e{b(0), b(1), b(2), b(3), ep, b(4), b(5), b(6), b(7)};
      const double q = metrics::epdms(e);
      range = range && q >= 0.0 && q <= 1.0;
      if (e.nc == 0.0 || e.dac == 0.0 || e.ddc == 0.0 || e.tlc == 0.0) gating = gating && q == 0.0;
    }
  }
  o.require(gating, "gating violated");
  o.require(monotone, "monotonicity violated");
  o.require(range, "range violated");
  const double t = seconds_since(t0);
  o.require(t < 1.0, "runtime " + fmt(t, 3) + " s");
  o.note("max deviation " + std::to_string(worst) + ", " + fmt(t, 3) + " s");
  return o;
}

Outcome goal_table() {
  Outcome o;
  const std::vector<std::pair<double, double>> table{
      {0, 1.0},  {0.1, 1.0},  {1.99, 1.0}, {2, 0.8},     {3.99, 0.8}, {4, 0.6},     {5.99, 0.6},
      {6, 0.4},  {9.99, 0.4}, {10, 0.2},   {14.99, 0.2}, {15, 0.2},   {15.01, 0.0}, {100, 0.0}};
  for (const auto& [dis, want] : table) {
    const double got = rewards::goal_reward_for_distance(dis);
    o.require(got == want, "dis " + fmt(dis, 2) + " gave " + fmt(got, 2));
  }
  // The same table reached through whole responses.
  Trajectory gt;
  for (int k = 0; k < kHorizonSteps; ++k) gt.waypoints[k] = {2.0 * (k + 1), 0.0};
  for (const auto& [dis, want] : table) {
    response::ParsedResponse p;
    p.well_formed_structure = p.well_formed_trajectory = true;
    p.trajectory = gt;
    p.trajectory.waypoints.back().x += dis;
    o.require(rewards::goal_reward(p, gt) == want, "response at dis " + fmt(dis, 2));
  }
  o.note("14 boundary points");
  return o;
}

// Indices for finite-difference probes: half on embeddings of the tokens in use.
std::vector<Eigen::Index> probe_indices(Rng& rng, const std::vector<response::TokenSeq>& seqs, int count) {
  std::vector<Eigen::Index> out;
  const auto total = static_cast<std::int64_t>(policy::param_count());
  for (int i = 0; i < count; ++i) {
    if (i % 2 == 0) {
      const auto& seq = seqs[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(seqs.size()) - 1))];
      if (!seq.empty()) {
        const int tok = seq[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(seq.size()) - 1))];
        out.push_back(static_cast<Eigen::Index>(tok) * policy::kEmbedDim + rng.uniform_int(0, policy::kEmbedDim - 1));
        continue;
      }
    }
    out.push_back(static_cast<Eigen::Index>(rng.uniform_int(0, total - 1)));
  }
  return out;
}

double relative_error(const Eigen::VectorXd& fd, const Eigen::VectorXd& an) {
  return (fd - an).norm() / std::max(1e-12, an.norm());
}

// True when a token ratio sits close enough to a clip boundary for finite differences to straddle it.
bool near_clip_boundary(const policy::PolicyParams& p, const Eigen::VectorXd& old, const grpo::FinalBatch& b,
                        const grpo::TrainConfig& cfg) {
  for (const auto& e : b.entries) {
    if (e.origin == grpo::Origin::feedback) continue;
    const auto lp = policy::logprob(p.theta, b.features, e.tokens);
    const auto lo = e.old_logprob.size() == e.tokens.size() ? e.old_logprob : policy::logprob(old, b.features, e.tokens);
    for (std::size_t t = 0; t < lp.size(); ++t) {
      const double c = std::exp(lp[t] - lo[t]);
      if (std::abs(c - (1.0 + cfg.epsilon)) < 1e-3 || std::abs(c - (1.0 - cfg.epsilon)) < 1e-3) return true;
    }
  }
  return false;
}

Outcome gradient_correctness(const policy::PolicyParams& sft_params, const std::vector<ScenarioRecord>& corpus) {
  Outcome o;
  const auto t0 = Clock::now();
  Rng rng(3);

  double worst_lp = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    Eigen::VectorXd theta = policy::init_params(10 + trial) * 4.0;
    features::FeatureVector f(features::kFeatureDim);
    for (Eigen::Index i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1.0, 1.0);
    response::TokenSeq tokens(static_cast<std::size_t>(rng.uniform_int(4, 16)));
    for (auto& t : tokens) t = static_cast<int>(rng.uniform_int(0, response::kVocabSize - 1));
    const Eigen::VectorXd g = policy::grad_logprob(theta, f, tokens);
    const auto idx = probe_indices(rng, {tokens}, 50);
    Eigen::VectorXd fd(50), an(50);
    const double h = 1e-4;
    for (int i = 0; i < 50; ++i) {
      const double saved = theta[idx[i]];
      auto sum = [&] {
        const auto lp = policy::logprob(theta, f, tokens);
        return std::accumulate(lp.begin(), lp.end(), 0.0);
      };
      theta[idx[i]] = saved + h;
      const double up = sum();
      theta[idx[i]] = saved - h;
      const double down = sum();
      theta[idx[i]] = saved;
      fd[i] = (up - down) / (2 * h);
      an[i] = g[idx[i]];
    }
    worst_lp = std::max(worst_lp, relative_error(fd, an));
  }
  o.require(worst_lp < 1e-4, "grad_logprob relative error " + std::to_string(worst_lp));

  double worst_obj = 0.0;
  int instances = 0, skipped = 0;
  const std::vector<grpo::Mode> modes{grpo::Mode::grpo, grpo::Mode::gt_grpo, grpo::Mode::rule_grpo, grpo::Mode::elf};
  for (int trial = 0; trial < 8; ++trial) {
    grpo::TrainConfig cfg;
    cfg.mode = modes[static_cast<std::size_t>(trial) % modes.size()];
    cfg.freeze_shaping_denominator = trial >= 4;
    const auto& rec = corpus[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(corpus.size()) - 1))];
    const auto g = grpo::build_batch(sft_params.theta, rec, cfg, grpo::group_stream(17, rec.scenario_id, trial));
    policy::PolicyParams p = sft_params;
    const Eigen::VectorXd old = p.theta;
    p.theta += policy::init_params(rng.next_u64()) * 0.05;
    if (near_clip_boundary(p, old, g.batch, cfg)) {
      ++skipped;
      continue;
    }
    const auto res = grpo::objective_and_grad(p, old, g.batch, cfg);
    std::vector<response::TokenSeq> seqs;
    for (const auto& e : g.batch.entries) seqs.push_back(e.tokens);
    const auto idx = probe_indices(rng, seqs, 40);
    Eigen::VectorXd fd(40), an(40);
    const double h = 1e-5;
    for (int i = 0; i < 40; ++i) {
      const double saved = p.theta[idx[i]];
      p.theta[idx[i]] = saved + h;
      const double up = grpo::objective_and_grad(p, old, g.batch, cfg).value;
      p.theta[idx[i]] = saved - h;
      const double down = grpo::objective_and_grad(p, old, g.batch, cfg).value;
      p.theta[idx[i]] = saved;
      fd[i] = (up - down) / (2 * h);
      an[i] = res.grad[idx[i]];
    }
    if (an.norm() < 1e-10) continue;
    worst_obj = std::max(worst_obj, relative_error(fd, an));
    ++instances;
  }
  o.require(instances >= 4, "too few objective instances (" + std::to_string(instances) + ")");
  o.require(worst_obj < 1e-3, "objective relative error " + std::to_string(worst_obj));
  const double t = seconds_since(t0);
  o.require(t < 30.0, "runtime " + fmt(t, 1) + " s");
  o.note("logprob " + std::to_string(worst_lp) + ", objective " + std::to_string(worst_obj) + " over " +
         std::to_string(instances) + " batches (" + std::to_string(skipped) + " near clip), " + fmt(t, 1) + " s");
  return o;
}

struct StructuralRun {
  long steps = 0;
  long batches = 0;
  long guarded = 0;
  double worst_mean = 0.0;
  double worst_std = 0.0;
  std::vector<std::string> violations;
};

// A 200-step seeded elf run with every batch inspected.
StructuralRun structural_run(const policy::PolicyParams& sft_params, const std::vector<ScenarioRecord>& corpus) {
  StructuralRun out;
  grpo::TrainConfig cfg;
  cfg.mode = grpo::Mode::elf;
  cfg.seed = 21;
  const long spe = grpo::steps_per_epoch(corpus.size(), cfg);
  const int epochs = static_cast<int>((200 + spe - 1) / spe);
  grpo::TrainHooks hooks;
  auto fail = [&](const std::string& s) {
    if (out.violations.size() < 5) out.violations.push_back(s);
  };
  hooks.on_step = [&](const grpo::StepReport& rep) {
    if (out.steps >= 200) return;
    ++out.steps;
    for (std::size_t gi = 0; gi < rep.groups->size(); ++gi) {
      const auto& g = (*rep.groups)[gi];
      const auto& b = g.batch;
      ++out.batches;
      if (b.entries.size() != static_cast<std::size_t>(cfg.n + cfg.k)) fail("batch size");
      double r_max = -1.0;
      for (int i = 0; i < cfg.n; ++i) r_max = std::max(r_max, b.entries[static_cast<std::size_t>(i)].reward.r_traj);
      for (const auto& e : b.entries) {
        if (e.origin == grpo::Origin::feedback && !(e.reward.r_traj > r_max)) fail("feedback dominance");
        if (e.origin == grpo::Origin::duplicate && e.tokens != b.entries[static_cast<std::size_t>(b.argmax_index)].tokens)
          fail("duplicate tokens");
      }
      for (const auto& pass : *rep.pass_stats) {
        const auto o = static_cast<std::size_t>(grpo::Origin::feedback);
        if (pass[gi].clipped_tokens[o] != 0 || pass[gi].clip_evaluations[o] != 0) fail("feedback clipped");
      }
      std::vector<double> totals;
      for (const auto& e : b.entries) totals.push_back(e.reward.total);
      if (pop_std(totals) >= 1e-8) {
        out.worst_mean = std::max(out.worst_mean, std::abs(mean_of(b.advantages)));
        out.worst_std = std::max(out.worst_std, std::abs(pop_std(b.advantages) - 1.0));
      } else {
        ++out.guarded;
        for (double a : b.advantages)
          if (a != 0.0) fail("guarded advantages nonzero");
      }
    }
  };
  policy::PolicyParams p = sft_params;
  grpo::train(p, corpus, cfg, epochs, hooks);
  return out;
}

Outcome advantage_normalization(const StructuralRun& run) {
  Outcome o;
  const auto a = grpo::compute_advantages({0.2, 0.2, 0.2, 0.8});
  o.require(std::abs(a[3] - 1.7320) <= 1e-4, "worked example gave " + fmt(a[3], 6));
  o.require(run.worst_mean <= 1e-9, "mean deviation " + std::to_string(run.worst_mean));
  o.require(run.worst_std <= 1e-9, "std deviation " + std::to_string(run.worst_std));
  o.require(run.batches > 0, "no batches");
  o.note("A_fb " + fmt(a[3], 6) + ", " + std::to_string(run.batches) + " batches (" + std::to_string(run.guarded) +
         " guarded), worst mean " + std::to_string(run.worst_mean) + ", worst std " + std::to_string(run.worst_std));
  return o;
}

Outcome structural_invariants(const StructuralRun& run) {
  Outcome o;
  o.require(run.steps == 200, "ran " + std::to_string(run.steps) + " steps");
  for (const auto& v : run.violations) o.require(false, v);

  // Uniformity of refinement selection: 5 eligible candidates, k = 1 and k = 2.
  grpo::RolloutGroup group;
  for (double r : {0.1, 0.2, 0.3, 0.4, 0.5, 0.1, 0.2, 0.3}) {
    grpo::Rollout ro;
    ro.reward.r_traj = r;
    group.samples.push_back(ro);
  }
  std::vector<grpo::FeedbackRollout> fb;
  for (double r : {0.9, 0.1, 0.8, 0.6, 0.2, 0.55, 0.3, 0.7}) {
    grpo::FeedbackRollout f;
    f.rollout.reward.r_traj = r;
    fb.push_back(f);
  }
  const std::set<int> eligible{0, 2, 3, 5, 7};
  const int trials = 3000;
  double worst_z = 0.0;
  for (int k : {1, 2}) {
    std::vector<int> counts(fb.size(), 0);
    for (int t = 0; t < trials; ++t) {
      Rng rng(derive_seed(99, {static_cast<std::uint64_t>(k), static_cast<std::uint64_t>(t)}));
      for (int c : grpo::select_refinements(group, fb, k, rng).chosen) ++counts[static_cast<std::size_t>(c)];
    }
    const double p = static_cast<double>(k) / static_cast<double>(eligible.size());
    const double sigma = std::sqrt(trials * p * (1.0 - p));
    for (std::size_t j = 0; j < fb.size(); ++j) {
      if (!eligible.count(static_cast<int>(j))) {
        o.require(counts[j] == 0, "ineligible candidate chosen");
        continue;
      }
      worst_z = std::max(worst_z, std::abs(counts[j] - trials * p) / sigma);
    }
  }
  o.require(worst_z <= 3.0, "selection frequency off by " + fmt(worst_z, 2) + " sigma");
  o.note(std::to_string(run.batches) + " batches clean, selection max |z| " + fmt(worst_z, 2));
  return o;
}

Outcome sft_competence(const evaluate::EvalReport& rep, double runtime) {
  Outcome o;
  std::size_t formed = 0;
  for (const auto& row : rep.rows) formed += row.well_formed;
  const double frac = static_cast<double>(formed) / static_cast<double>(rep.rows.size());
  o.require(frac >= 0.95, "well-formed " + fmt(frac, 3));
  o.require(rep.means.pdms >= 0.55, "mean PDMS " + fmt(rep.means.pdms, 3));
  o.require(runtime < 180.0, "runtime " + fmt(runtime, 1) + " s");
  o.note("well-formed " + fmt(frac, 3) + ", mean PDMS " + fmt(rep.means.pdms, 4) + ", " + fmt(runtime, 1) + " s");
  return o;
}

Outcome curation_behavior(const std::vector<curation::RolloutStats>& stats, const curation::CurationConfig& cfg) {
  Outcome o;
  const auto kept = curation::filter(stats, cfg);
  const std::set<std::string> kept_set(kept.begin(), kept.end());
  const double frac = static_cast<double>(kept.size()) / static_cast<double>(stats.size());
  o.require(frac >= 0.25 && frac <= 0.35, "kept fraction " + fmt(frac, 3));
  for (const auto& st : stats) {
    if (st.all_fail_pdms && !kept_set.count(st.scenario_id)) o.require(false, "all-fail scenario discarded");
    if (!kept_set.count(st.scenario_id) &&
        !(st.mean_reward >= cfg.discard_mean_min && st.std_reward <= cfg.discard_std_max))
      o.require(false, "discarded scenario outside the rule");
  }
  o.note("kept " + std::to_string(kept.size()) + "/" + std::to_string(stats.size()) + " (" + fmt(frac, 3) + ")");
  return o;
}

Outcome planning_accuracy_check() {
  Outcome o;
  Rng rng(10);
  const int n = 500;
  std::vector<MetaAction> gt(n), pred(n);
  int speed = 0, path = 0, both = 0;
  for (int i = 0; i < n; ++i) {
    gt[static_cast<std::size_t>(i)] = {static_cast<Longitudinal>(rng.uniform_int(0, kLongitudinalCount - 1)),
                                       static_cast<Lateral>(rng.uniform_int(0, kLateralCount - 1))};
    MetaAction p = gt[static_cast<std::size_t>(i)];
    // Planted rates: 70% longitudinal and 60% lateral agreement, drawn independently.
    if (!rng.bernoulli(0.7))
      p.longitudinal = static_cast<Longitudinal>((static_cast<int>(p.longitudinal) + rng.uniform_int(1, 3)) % 4);
    if (!rng.bernoulli(0.6))
      p.lateral = static_cast<Lateral>((static_cast<int>(p.lateral) + rng.uniform_int(1, 4)) % 5);
    pred[static_cast<std::size_t>(i)] = p;
    const bool s = p.longitudinal == gt[static_cast<std::size_t>(i)].longitudinal;
    const bool l = p.lateral == gt[static_cast<std::size_t>(i)].lateral;
    speed += s;
    path += l;
    both += s && l;
  }
  const auto acc = metrics::planning_accuracy(pred, gt);
  o.require(acc.speed == static_cast<double>(speed) / n, "speed accuracy");
  o.require(acc.path == static_cast<double>(path) / n, "path accuracy");
  o.require(acc.overall == static_cast<double>(both) / n, "overall accuracy");
  // The joint bound on every prefix of the pairs.
  for (int len = 1; len <= n; ++len) {
    const auto a = metrics::planning_accuracy(std::span(pred.data(), static_cast<std::size_t>(len)),
                                              std::span(gt.data(), static_cast<std::size_t>(len)));
    if (a.overall > std::min(a.speed, a.path)) {
      o.require(false, "overall exceeds an axis at length " + std::to_string(len));
      break;
    }
  }
  o.note("speed " + fmt(acc.speed, 3) + ", path " + fmt(acc.path, 3) + ", overall " + fmt(acc.overall, 3));
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome reproducibility(const checkpoint::Checkpoint& sft_ck, const std::vector<ScenarioRecord>& curated,
                        const config::RunConfig& base) {
  Outcome o;
  setenv("FBGRPO_THREADS", "1", 1);
  config::RunConfig cfg = base;
  cfg.train.mode = grpo::Mode::elf;
  cfg.train.seed = 77;
  cfg.train_epochs = 1;
  const std::vector<ScenarioRecord> subset(curated.begin(), curated.begin() + static_cast<long>(std::min<std::size_t>(24, curated.size())));
  const fs::path root = fs::temp_directory_path() / "fbgrpo_acceptance_repro";
  fs::remove_all(root);
  pipeline::run_training(subset, sft_ck, cfg, {root / "a", false, true});
  pipeline::run_training(subset, sft_ck, cfg, {root / "b", false, true});
  unsetenv("FBGRPO_THREADS");
  const std::string a = slurp(root / "a" / "metrics.csv"), b = slurp(root / "b" / "metrics.csv");
  o.require(!a.empty(), "empty metrics log");
  o.require(a == b, "metrics logs differ");
  o.require(slurp(root / "a" / "rollouts.jsonl") == slurp(root / "b" / "rollouts.jsonl"), "rollout logs differ");
  const auto ca = checkpoint::load(root / "a" / "final.ckpt.json"), cb = checkpoint::load(root / "b" / "final.ckpt.json");
  o.require(ca.params.theta == cb.params.theta, "final parameters differ");
  o.note(std::to_string(std::count(a.begin(), a.end(), '\n') - 2) + " identical metric rows");
  fs::remove_all(root);
  return o;
}

// Final-epoch fraction of groups whose on-policy rollouts all score below s.
struct ModeRun {
  double pdms = 0.0;
  double final_fail = 0.0;
  double seconds = 0.0;
};

ModeRun run_mode(const policy::PolicyParams& sft_params, const std::vector<ScenarioRecord>& curated,
                 const config::RunConfig& base, grpo::Mode mode, std::uint64_t seed) {
  grpo::TrainConfig cfg = base.train;
  cfg.mode = mode;
  cfg.seed = seed;
  const int epochs = base.train_epochs;
  long groups = 0, fails = 0;
  grpo::TrainHooks hooks;
  hooks.on_step = [&](const grpo::StepReport& rep) {
    if (rep.metrics.epoch != epochs - 1) return;
    for (const auto& g : *rep.groups) {
      bool all = true;
      for (const auto& s : g.group.samples) all = all && s.reward.r_traj < cfg.s;
      ++groups;
      fails += all;
    }
  };
  policy::PolicyParams p = sft_params;
  const auto t0 = Clock::now();
  grpo::train(p, curated, cfg, epochs, hooks);
  ModeRun out;
  out.seconds = seconds_since(t0);
  out.pdms = evaluate::evaluate(p, curated, {cfg.s, cfg.metrics}).means.pdms;
  out.final_fail = groups ? static_cast<double>(fails) / static_cast<double>(groups) : 0.0;
  return out;
}

}  // namespace

int main() {
  std::vector<std::pair<std::string, Outcome>> results(11);
  const char* names[] = {"formula exactness",        "goal-reward table",      "gradient correctness",
                         "advantage normalization",  "structural invariants",  "SFT competence",
                         "directional PDMS (elf vs grpo)", "total-failure reduction", "curation behavior",
                         "planning accuracy",        "reproducibility"};
  auto guarded = [&](int idx, const std::function<Outcome()>& fn) {
    try {
      results[static_cast<std::size_t>(idx)] = {names[idx], fn()};
    } catch (const std::exception& e) {
      Outcome o;
      o.require(false, std::string("exception: ") + e.what());
      results[static_cast<std::size_t>(idx)] = {names[idx], o};
    }
    std::fprintf(stderr, "[%s] done\n", names[idx]);
  };

  guarded(0, formula_exactness);
  guarded(1, goal_table);
  guarded(9, planning_accuracy_check);

  const config::RunConfig cfg;
  const auto corpus = scenario::generate_corpus(kCorpusSize, cfg.scenario.mix, kCorpusSeed, cfg.scenario.generation);

  // SFT on the seeded corpus.
  checkpoint::Checkpoint sft_ck;
  evaluate::EvalReport sft_eval;
  double sft_seconds = 0.0;
  bool sft_ok = false;
  guarded(5, [&] {
    const auto t0 = Clock::now();
    sft_ck = pipeline::run_sft(corpus, cfg, kSftSeed).checkpoint;
    sft_seconds = seconds_since(t0);
    sft_eval = evaluate::evaluate(sft_ck.params, corpus, {cfg.train.s, cfg.metrics});
    sft_ok = true;
    return sft_competence(sft_eval, sft_seconds);
  });

  auto need_sft = [&](int idx, const std::function<Outcome()>& fn) {
    if (sft_ok) return guarded(idx, fn);
    Outcome o;
    o.require(false, "SFT stage failed");
    results[static_cast<std::size_t>(idx)] = {names[idx], o};
  };

  need_sft(2, [&] { return gradient_correctness(sft_ck.params, corpus); });

  StructuralRun structural;
  bool structural_ok = false;
  need_sft(4, [&] {
    structural = structural_run(sft_ck.params, corpus);
    structural_ok = true;
    return structural_invariants(structural);
  });
  if (structural_ok) {
    guarded(3, [&] { return advantage_normalization(structural); });
  } else {
    Outcome o;
    o.require(false, "training run failed");
    results[3] = {names[3], o};
  }

  need_sft(8, [&] {
    const auto stats = curation::estimate_stats(sft_ck.params, corpus, cfg.curation, kCurationSeed);
    return curation_behavior(stats, cfg.curation);
  });

  // RL comparison on a curated pool of scenarios that SFT never saw.
  std::vector<ScenarioRecord> curated;
  double sft_subset = 0.0;
  need_sft(6, [&] {
    const auto pool =
        scenario::generate_corpus(kPoolSize, scenario::FamilyMix::uniform(), kPoolSeed, cfg.scenario.generation);
    const auto stats = curation::estimate_stats(sft_ck.params, pool, cfg.curation, kCurationSeed);
    curated = pipeline::select_subset(pool, curation::filter(stats, cfg.curation));
    sft_subset = evaluate::evaluate(sft_ck.params, curated, {cfg.train.s, cfg.metrics}).means.pdms;

    std::map<grpo::Mode, std::vector<ModeRun>> runs;
    for (std::uint64_t seed : {1, 2, 3}) {
      for (grpo::Mode m : {grpo::Mode::grpo, grpo::Mode::elf}) {
        runs[m].push_back(run_mode(sft_ck.params, curated, cfg, m, seed));
        std::fprintf(stderr, "  %s seed %llu: pdms %.4f final fail %.4f (%.0f s)\n", std::string(grpo::to_string(m)).c_str(),
                     static_cast<unsigned long long>(seed), runs[m].back().pdms, runs[m].back().final_fail,
                     runs[m].back().seconds);
      }
    }
    auto avg = [&](grpo::Mode m, double ModeRun::*field) {
      double s = 0.0;
      for (const auto& r : runs[m]) s += r.*field;
      return s / static_cast<double>(runs[m].size());
    };
    double slowest = 0.0;
    for (const auto& [m, rs] : runs)
      for (const auto& r : rs) slowest = std::max(slowest, r.seconds);
    const double grpo_pdms = avg(grpo::Mode::grpo, &ModeRun::pdms), elf_pdms = avg(grpo::Mode::elf, &ModeRun::pdms);
    const double grpo_fail = avg(grpo::Mode::grpo, &ModeRun::final_fail);
    const double elf_fail = avg(grpo::Mode::elf, &ModeRun::final_fail);

    Outcome o7;
    o7.require(curated.size() >= 40, "curated subset has " + std::to_string(curated.size()) + " scenarios");
    o7.require(elf_pdms >= grpo_pdms + 0.03, "elf - grpo = " + fmt(elf_pdms - grpo_pdms));
    o7.require(grpo_pdms >= sft_subset, "grpo below sft");
    o7.require(elf_pdms >= sft_subset, "elf below sft");
    o7.require(slowest < 600.0, "slowest run " + fmt(slowest, 0) + " s");
    o7.note("subset " + std::to_string(curated.size()) + ", sft " + fmt(sft_subset) + ", grpo " + fmt(grpo_pdms) +
            ", elf " + fmt(elf_pdms) + ", slowest run " + fmt(slowest, 0) + " s");

    Outcome o8;
    o8.require(elf_fail <= 0.7 * grpo_fail, "ratio " + fmt(grpo_fail > 0 ? elf_fail / grpo_fail : 0.0, 3));
    o8.note("final-epoch total-failure ratio grpo " + fmt(grpo_fail) + ", elf " + fmt(elf_fail));
    results[7] = {names[7], o8};
    return o7;
  });
  if (results[7].first.empty()) {
    Outcome o;
    o.require(false, "RL comparison did not run");
    results[7] = {names[7], o};
  }

  need_sft(10, [&] { return reproducibility(sft_ck, curated.empty() ? corpus : curated, cfg); });

  int failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const auto& [name, o] = results[i];
    std::printf("%-4s %2zu. %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, name.c_str(), o.detail.c_str());
    failed += !o.pass;
  }
  std::fflush(stdout);
  return failed == 0 ? 0 : 1;
}
