#include "fbgrpo/grpo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fbgrpo/features.hpp"
#include "fbgrpo/parallel.hpp"

namespace fbgrpo::grpo {

namespace {

constexpr double kStdGuard = 1e-8;

enum StreamTag : std::uint64_t { kOnPolicyStream = 1, kFeedbackStream = 2, kSelectStream = 3 };

bool onpolicy_like(Origin o) { return o != Origin::feedback; }

Rollout score(policy::SampleOutput sample, const ScenarioRecord& record, const TrainConfig& cfg) {
  Rollout r;
  r.parsed = response::parse(sample.tokens);
  r.reward = rewards::total_reward(record.scene, r.parsed, record.gt_trajectory, cfg.metrics);
  r.verdict = teacher::classify(r.reward, cfg.s);
  r.sample = std::move(sample);
  return r;
}

void require_finite(double v, const char* what, int entry) {
  if (!std::isfinite(v)) throw NumericalFailure(std::string("non-finite ") + what + " in batch entry " + std::to_string(entry), entry);
}

}  // namespace

std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::grpo: return "grpo";
    case Mode::gt_grpo: return "gt_grpo";
    case Mode::rule_grpo: return "rule_grpo";
    case Mode::elf: return "elf";
  }
  return "?";
}

Mode mode_from_string(std::string_view s) {
  if (s == "grpo") return Mode::grpo;
  if (s == "gt_grpo" || s == "gt-grpo") return Mode::gt_grpo;
  if (s == "rule_grpo" || s == "rule-grpo") return Mode::rule_grpo;
  if (s == "elf") return Mode::elf;
  throw std::invalid_argument("unknown trainer mode: " + std::string(s));
}

std::string_view to_string(Origin o) {
  switch (o) {
    case Origin::onpolicy: return "onpolicy";
    case Origin::feedback: return "feedback";
    case Origin::gt: return "gt";
    case Origin::duplicate: return "duplicate";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (n < 2) throw std::invalid_argument("group size n must be at least 2");
  if (k < 1 || k >= n) throw std::invalid_argument("refinement count k must satisfy 1 <= k < n");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("threshold s must lie in (0, 1)");
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("shaping gamma must lie in (0, 1)");
  if (!(beta >= 0.0)) throw std::invalid_argument("KL weight beta must be non-negative");
  if (!(epsilon > 0.0 && epsilon < 1.0)) throw std::invalid_argument("clip epsilon must lie in (0, 1)");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (iterations < 1) throw std::invalid_argument("iterations must be at least 1");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("learning rate must be non-negative");
  if (scenarios_per_step == 0) throw std::invalid_argument("scenarios per step must be positive");
  metrics.validate();
}

std::uint64_t group_stream(std::uint64_t seed, const std::string& scenario_id, std::uint64_t epoch) {
  return derive_seed(seed, {hash_string(scenario_id), epoch});
}

RolloutGroup rollout_group(const Eigen::VectorXd& theta, const ScenarioRecord& record, const TrainConfig& cfg,
                           std::uint64_t stream) {
  const features::FeatureVector feat = features::base_features(record.scene);
  RolloutGroup g;
  g.scenario_id = record.scenario_id;
  g.samples.reserve(static_cast<std::size_t>(cfg.n));
  for (int i = 0; i < cfg.n; ++i) {
    Rng rng(derive_seed(stream, {kOnPolicyStream, static_cast<std::uint64_t>(i)}));
    g.samples.push_back(score(policy::sample(theta, feat, cfg.temperature, rng), record, cfg));
  }
  return g;
}

std::vector<FeedbackRollout> feedback_rollout(const Eigen::VectorXd& theta, const ScenarioRecord& record,
                                              const RolloutGroup& group, const TrainConfig& cfg,
                                              std::uint64_t stream, bool rule_only) {
  const features::FeatureVector base = features::base_features(record.scene);
  std::vector<FeedbackRollout> out;
  out.reserve(group.samples.size());
  for (std::size_t i = 0; i < group.samples.size(); ++i) {
    const Rollout& orig = group.samples[i];
    const bool correct = orig.verdict == teacher::Verdict::correct;
    FeedbackRollout fb;
    if (rule_only) {
      fb.query = teacher::build_rule_query(base, orig.parsed, correct);
    } else {
      if (!correct) {
        fb.report = teacher::diagnose(record.scene, orig.parsed, record.gt_trajectory, record.gt_meta,
                                      orig.reward.scores, cfg.s, cfg.metrics);
      }
      fb.query = teacher::build_feedback_query(base, orig.parsed, fb.report);
    }
    Rng rng(derive_seed(stream, {kFeedbackStream, static_cast<std::uint64_t>(i)}));
    fb.rollout = score(policy::sample(theta, fb.query, cfg.temperature, rng, policy::Conditioning::feedback), record, cfg);
    out.push_back(std::move(fb));
  }
  return out;
}

Selection select_refinements(const RolloutGroup& group, const std::vector<FeedbackRollout>& fb, int k, Rng& rng) {
  if (group.samples.empty()) throw std::invalid_argument("empty rollout group");
  Selection sel;
  sel.argmax_index = 0;
  sel.r_max = group.samples[0].reward.r_traj;
  for (std::size_t i = 1; i < group.samples.size(); ++i) {
    if (group.samples[i].reward.r_traj > sel.r_max) {
      sel.r_max = group.samples[i].reward.r_traj;
      sel.argmax_index = static_cast<int>(i);
    }
  }
  std::vector<int> candidates;
  for (std::size_t j = 0; j < fb.size(); ++j) {
    if (fb[j].rollout.reward.r_traj > sel.r_max) candidates.push_back(static_cast<int>(j));
  }
  if (static_cast<int>(candidates.size()) <= k) {
    sel.chosen = candidates;
  } else {
    // Partial Fisher-Yates: the first k positions form a uniform sample without replacement.
    for (int i = 0; i < k; ++i) {
      const auto j = static_cast<std::size_t>(rng.uniform_int(i, static_cast<std::int64_t>(candidates.size()) - 1));
      std::swap(candidates[static_cast<std::size_t>(i)], candidates[j]);
    }
    sel.chosen.assign(candidates.begin(), candidates.begin() + k);
  }
  sel.duplicates = k - static_cast<int>(sel.chosen.size());
  return sel;
}

std::vector<double> compute_advantages(const std::vector<double>& rewards) {
  std::vector<double> adv(rewards.size(), 0.0);
  if (rewards.empty()) return adv;
  const double n = static_cast<double>(rewards.size());
  const double mean = std::accumulate(rewards.begin(), rewards.end(), 0.0) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double sd = std::sqrt(var / n);
  if (sd < kStdGuard) return adv;
  for (std::size_t i = 0; i < rewards.size(); ++i) adv[i] = (rewards[i] - mean) / sd;
  return adv;
}

void compute_advantages(FinalBatch& batch) {
  std::vector<double> totals;
  totals.reserve(batch.entries.size());
  for (const BatchEntry& e : batch.entries) totals.push_back(e.reward.total);
  batch.advantages = compute_advantages(totals);
}

GroupResult build_batch(const Eigen::VectorXd& theta, const ScenarioRecord& record, const TrainConfig& cfg,
                        std::uint64_t stream) {
  GroupResult out;
  out.group = rollout_group(theta, record, cfg, stream);
  FinalBatch& batch = out.batch;
  batch.scenario_id = record.scenario_id;
  batch.features = features::base_features(record.scene);
  for (std::size_t i = 0; i < out.group.samples.size(); ++i) {
    const Rollout& r = out.group.samples[i];
    batch.entries.push_back({r.sample.tokens, r.reward, Origin::onpolicy, r.sample.per_token_logprob, static_cast<int>(i)});
  }
  Rng select_rng(derive_seed(stream, {kSelectStream}));
  const Selection base_sel = select_refinements(out.group, {}, cfg.k, select_rng);
  batch.argmax_index = base_sel.argmax_index;

  switch (cfg.mode) {
    case Mode::grpo:
      break;
    case Mode::gt_grpo: {
      const response::TokenSeq gt = response::encode_gt(record);
      const rewards::RewardBreakdown reward =
          rewards::total_reward(record.scene, response::parse(gt), record.gt_trajectory, cfg.metrics);
      const std::vector<double> old = policy::logprob(theta, batch.features, gt);
      for (int j = 0; j < cfg.k; ++j) batch.entries.push_back({gt, reward, Origin::gt, old, j});
      break;
    }
    case Mode::rule_grpo:
    case Mode::elf: {
      out.feedback = feedback_rollout(theta, record, out.group, cfg, stream, cfg.mode == Mode::rule_grpo);
      const Selection sel = select_refinements(out.group, out.feedback, cfg.k, select_rng);
      for (int j : sel.chosen) {
        const Rollout& r = out.feedback[static_cast<std::size_t>(j)].rollout;
        batch.entries.push_back({r.sample.tokens, r.reward, Origin::feedback, {}, j});
      }
      const BatchEntry best = batch.entries[static_cast<std::size_t>(sel.argmax_index)];
      for (int d = 0; d < sel.duplicates; ++d) {
        BatchEntry dup = best;
        dup.origin = Origin::duplicate;
        batch.entries.push_back(std::move(dup));
      }
      break;
    }
  }
  compute_advantages(batch);
  return out;
}

double ObjectiveStats::clip_fraction() const {
  std::size_t evals = 0, clipped = 0;
  for (std::size_t i = 0; i < clip_evaluations.size(); ++i) {
    evals += clip_evaluations[i];
    clipped += clipped_tokens[i];
  }
  return evals == 0 ? 0.0 : static_cast<double>(clipped) / static_cast<double>(evals);
}

ObjectiveResult objective_and_grad(const policy::PolicyParams& params, const Eigen::VectorXd& old_theta,
                                   const FinalBatch& batch, const TrainConfig& cfg) {
  if (!params.has_reference()) throw std::invalid_argument("objective needs a frozen reference snapshot");
  if (batch.advantages.size() != batch.entries.size()) throw std::invalid_argument("batch advantages not computed");
  ObjectiveResult res;
  res.grad = Eigen::VectorXd::Zero(params.theta.size());
  const double inv_n = 1.0 / cfg.n;
  const double inv_k = 1.0 / cfg.k;
  const double inv_entries = 1.0 / static_cast<double>(batch.entries.size());
  double kl_sum = 0.0;

  for (std::size_t e = 0; e < batch.entries.size(); ++e) {
    const BatchEntry& entry = batch.entries[e];
    const int idx = static_cast<int>(e);
    const std::size_t L = entry.tokens.size();
    if (L == 0) continue;
    const double inv_len = 1.0 / static_cast<double>(L);
    const double A = batch.advantages[e];
    require_finite(A, "advantage", idx);
    const std::vector<double> lp = policy::logprob(params.theta, batch.features, entry.tokens);
    const std::vector<double> lref = policy::logprob(params.reference, batch.features, entry.tokens);
    std::vector<double> lold;
    if (onpolicy_like(entry.origin)) {
      lold = entry.old_logprob.size() == L ? entry.old_logprob : policy::logprob(old_theta, batch.features, entry.tokens);
    }
    std::vector<double> weights(L, 0.0);
    double kl_entry = 0.0;
    const auto o = static_cast<std::size_t>(entry.origin);
    for (std::size_t t = 0; t < L; ++t) {
      require_finite(lp[t], "log-probability", idx);
      const double log_rho = lref[t] - lp[t];
      const double rho = std::exp(log_rho);
      require_finite(rho, "reference ratio", idx);
      kl_entry += (rho - log_rho - 1.0) * inv_len;
      weights[t] -= cfg.beta * inv_entries * inv_len * (1.0 - rho);

      if (onpolicy_like(entry.origin)) {
        const double c = std::exp(lp[t] - lold[t]);
        require_finite(c, "probability ratio", idx);
        const bool clipped = (A > 0.0 && c > 1.0 + cfg.epsilon) || (A < 0.0 && c < 1.0 - cfg.epsilon);
        ++res.stats.clip_evaluations[o];
        if (clipped) {
          ++res.stats.clipped_tokens[o];
          res.stats.onpolicy_term += std::clamp(c, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon) * A * inv_len * inv_n;
        } else {
          res.stats.onpolicy_term += c * A * inv_len * inv_n;
          weights[t] += A * c * inv_len * inv_n;
        }
      } else {
        const double p = std::exp(lp[t]);
        const double denom = p + cfg.gamma;
        res.stats.feedback_term += A * shaping(p, cfg.gamma) * inv_len * inv_k;
        const double dfdlogp = cfg.freeze_shaping_denominator ? p / denom : cfg.gamma * p / (denom * denom);
        weights[t] += A * dfdlogp * inv_len * inv_k;
      }
    }
    kl_sum += kl_entry;
    policy::accumulate_grad(params.theta, batch.features, entry.tokens, weights, res.grad);
  }
  res.stats.kl = kl_sum * inv_entries;
  res.stats.objective = res.stats.onpolicy_term + res.stats.feedback_term - cfg.beta * res.stats.kl;
  res.value = res.stats.objective;
  require_finite(res.value, "objective", -1);
  if (!res.grad.allFinite()) throw NumericalFailure("non-finite gradient", -1);
  return res;
}

long steps_per_epoch(std::size_t corpus_size, const TrainConfig& cfg) {
  return static_cast<long>((corpus_size + cfg.scenarios_per_step - 1) / cfg.scenarios_per_step);
}

std::vector<StepMetrics> train(policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                               const TrainConfig& cfg, int epochs, const TrainHooks& hooks) {
  cfg.validate();
  if (corpus.empty()) throw std::invalid_argument("training corpus must be nonempty");
  if (!params.has_reference()) throw std::invalid_argument("training needs SFT-initialized parameters");
  const long spe = steps_per_epoch(corpus.size(), cfg);
  const long total = spe * epochs;
  std::vector<StepMetrics> log;
  std::vector<std::size_t> order;
  int order_epoch = -1;

  for (long step = hooks.start_step; step < total; ++step) {
    const int epoch = static_cast<int>(step / spe);
    if (epoch != order_epoch) {
      order.resize(corpus.size());
      std::iota(order.begin(), order.end(), 0);
      Rng rng(derive_seed(cfg.seed, {0xE90C, static_cast<std::uint64_t>(epoch)}));
      for (std::size_t i = order.size(); i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
      }
      order_epoch = epoch;
    }
    const std::size_t begin = static_cast<std::size_t>(step % spe) * cfg.scenarios_per_step;
    const std::size_t end = std::min(corpus.size(), begin + cfg.scenarios_per_step);
    const std::size_t count = end - begin;

    const Eigen::VectorXd old_theta = params.theta;
    std::vector<GroupResult> groups(count);
    parallel_for(count, [&](std::size_t i) {
      const ScenarioRecord& rec = corpus[order[begin + i]];
      groups[i] = build_batch(old_theta, rec, cfg, group_stream(cfg.seed, rec.scenario_id, static_cast<std::uint64_t>(epoch)));
    });

    std::vector<std::vector<ObjectiveStats>> pass_stats;
    for (int it = 0; it < cfg.iterations; ++it) {
      std::vector<ObjectiveResult> results(count);
      parallel_for(count, [&](std::size_t i) { results[i] = objective_and_grad(params, old_theta, groups[i].batch, cfg); });
      Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.theta.size());
      std::vector<ObjectiveStats> stats;
      for (std::size_t i = 0; i < count; ++i) {
        grad += results[i].grad;
        stats.push_back(results[i].stats);
      }
      grad /= static_cast<double>(count);
      policy::clip_grad_norm(grad);
      params.theta += cfg.learning_rate * grad;
      pass_stats.push_back(std::move(stats));
    }

    StepMetrics m;
    m.step = step;
    m.epoch = epoch;
    for (std::size_t i = 0; i < count; ++i) {
      const auto& samples = groups[i].group.samples;
      bool all_pdms = true, all_nc = true, all_dac = true;
      double pd = 0.0, tot = 0.0;
      for (const Rollout& r : samples) {
        pd += r.reward.r_traj;
        tot += r.reward.total;
        all_pdms = all_pdms && r.reward.r_traj < cfg.s;
        all_nc = all_nc && r.reward.scored && r.reward.scores.nc == 0.0;
        all_dac = all_dac && r.reward.scored && r.reward.scores.dac == 0.0;
      }
      m.mean_pdms += pd / static_cast<double>(samples.size());
      m.mean_total_reward += tot / static_cast<double>(samples.size());
      m.pdms_fail += all_pdms;
      m.nc_fail += all_nc;
      m.dac_fail += all_dac;
      for (const BatchEntry& e : groups[i].batch.entries) m.injected += e.origin == Origin::feedback;
      m.kl += pass_stats.front()[i].kl;
      m.clip_fraction += pass_stats.back()[i].clip_fraction();
    }
    const double c = static_cast<double>(count);
    m.mean_pdms /= c;
    m.mean_total_reward /= c;
    m.pdms_fail /= c;
    m.nc_fail /= c;
    m.dac_fail /= c;
    m.kl /= c;
    m.clip_fraction /= c;
    m.injected /= c;
    log.push_back(m);
    if (hooks.on_step) hooks.on_step(StepReport{m, &groups, &pass_stats});
  }
  return log;
}

nlohmann::json group_log(const GroupResult& g, long step, int epoch, const ObjectiveStats* stats) {
  using nlohmann::json;
  json rewards_json = json::array(), origins = json::array(), tokens = json::array();
  for (const BatchEntry& e : g.batch.entries) {
    rewards_json.push_back({{"r_traj", e.reward.r_traj}, {"r_fmt", e.reward.r_fmt}, {"r_goal", e.reward.r_goal},
                            {"total", e.reward.total}});
    origins.push_back(std::string(to_string(e.origin)));
    tokens.push_back(e.tokens);
  }
  json onpolicy = {{"r_traj", json::array()}, {"nc", json::array()}, {"dac", json::array()}};
  for (const Rollout& r : g.group.samples) {
    onpolicy["r_traj"].push_back(r.reward.r_traj);
    onpolicy["nc"].push_back(r.reward.scored ? r.reward.scores.nc : 0.0);
    onpolicy["dac"].push_back(r.reward.scored ? r.reward.scores.dac : 0.0);
  }
  json j = {{"step", step},          {"epoch", epoch},           {"scenario_id", g.batch.scenario_id},
            {"rewards", rewards_json}, {"origins", origins},     {"advantages", g.batch.advantages},
            {"tokens", tokens},        {"onpolicy", onpolicy}};
  if (!g.feedback.empty()) {
    json fb_r = json::array(), reports = json::array();
    for (const FeedbackRollout& f : g.feedback) {
      fb_r.push_back(f.rollout.reward.r_traj);
      reports.push_back(f.report ? teacher::report_to_json(*f.report) : json(nullptr));
    }
    j["feedback_r_traj"] = fb_r;
    j["feedback_reports"] = reports;
  }
  if (stats) {
    j["objective"] = {{"total", stats->objective},
                      {"onpolicy_term", stats->onpolicy_term},
                      {"feedback_term", stats->feedback_term},
                      {"kl", stats->kl},
                      {"clip_fraction", stats->clip_fraction()}};
  }
  return j;
}

}  // namespace fbgrpo::grpo
