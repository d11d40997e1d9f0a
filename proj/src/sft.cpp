#include "fbgrpo/sft.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "fbgrpo/features.hpp"
#include "fbgrpo/parallel.hpp"
#include "fbgrpo/rewards.hpp"
#include "fbgrpo/teacher.hpp"

namespace fbgrpo::sft {

namespace {

constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;

Trajectory local_gt(const ScenarioRecord& r) {
  const Pose2 pose = r.scene.ego_pose();
  Trajectory t;
  for (int k = 0; k < kHorizonSteps; ++k) t.waypoints[k] = pose.to_local(r.gt_trajectory.waypoints[k]);
  return t;
}

}  // namespace

void SftConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("sft epochs must be non-negative");
  if (!(learning_rate >= 0.0)) throw std::invalid_argument("sft learning rate must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("sft batch size must be positive");
  if (feedback_pairs_per_record < 0) throw std::invalid_argument("feedback pairs per record must be non-negative");
  if (!(s > 0.0 && s < 1.0)) throw std::invalid_argument("threshold s must lie in (0, 1)");
  metrics.validate();
}

response::TokenSeq perturbed_response(const ScenarioRecord& record, Rng& rng) {
  Trajectory t = local_gt(record);
  switch (rng.uniform_int(0, 3)) {
    case 0: {  // wrong speed
      const double scale = rng.bernoulli(0.5) ? rng.uniform(0.2, 0.8) : rng.uniform(1.2, 1.6);
      for (Vec2& p : t.waypoints) p = p * scale;
      break;
    }
    case 1: {  // lateral drift
      const double shift = rng.uniform(1.0, 4.5) * (rng.bernoulli(0.5) ? 1.0 : -1.0);
      for (int k = 0; k < kHorizonSteps; ++k) t.waypoints[k].y += shift * std::min(1.0, (k + 1) / 6.0);
      break;
    }
    case 2: {  // ignore the scene and hold the current speed straight ahead
      for (int k = 0; k < kHorizonSteps; ++k) t.waypoints[k] = {record.scene.ego.speed * kStepSeconds * (k + 1), 0.0};
      break;
    }
    default: {  // jitter
      Vec2 drift;
      for (int k = 0; k < kHorizonSteps; ++k) {
        drift += Vec2{rng.uniform(-0.75, 0.75), rng.uniform(-0.5, 0.5)};
        t.waypoints[k] += drift;
      }
      break;
    }
  }
  for (Vec2& p : t.waypoints) p.x = std::max(p.x, 0.0);
  MetaAction meta = record.gt_meta;
  if (rng.bernoulli(0.5)) meta.longitudinal = static_cast<Longitudinal>(rng.uniform_int(0, kLongitudinalCount - 1));
  if (rng.bernoulli(0.3)) meta.lateral = static_cast<Lateral>(rng.uniform_int(0, kLateralCount - 1));
  int cell = response::interacting_cell(record.scene);
  if (rng.bernoulli(0.4)) {
    cell = rng.bernoulli(0.5) ? response::kNoCell : static_cast<int>(rng.uniform_int(0, response::kObstacleCells - 1));
  }
  return response::encode_response(meta, cell, t);
}

std::vector<policy::SftExample> build_dataset(const std::vector<ScenarioRecord>& corpus, const SftConfig& cfg,
                                              std::uint64_t seed) {
  cfg.validate();
  const std::size_t per = 1 + static_cast<std::size_t>(cfg.feedback_pairs_per_record);
  std::vector<policy::SftExample> out(corpus.size() * per);
  parallel_for(corpus.size(), [&](std::size_t i) {
    const ScenarioRecord& r = corpus[i];
    const features::FeatureVector base = features::base_features(r.scene);
    const response::TokenSeq gt = response::encode_gt(r);
    out[i * per] = {base, gt};
    for (int j = 0; j < cfg.feedback_pairs_per_record; ++j) {
      Rng rng(derive_seed(seed, {hash_string(r.scenario_id), static_cast<std::uint64_t>(j), 0x5f7}));
      const response::TokenSeq prior = perturbed_response(r, rng);
      const response::ParsedResponse parsed = response::parse(prior);
      const rewards::RewardBreakdown reward = rewards::total_reward(r.scene, parsed, r.gt_trajectory, cfg.metrics);
      std::optional<teacher::DiagnosticReport> report;
      if (teacher::classify(reward, cfg.s) == teacher::Verdict::wrong) {
        report = teacher::diagnose(r.scene, parsed, r.gt_trajectory, r.gt_meta, reward.scores, cfg.s, cfg.metrics);
      }
      out[i * per + 1 + static_cast<std::size_t>(j)] = {teacher::build_feedback_query(base, parsed, report), gt};
    }
  });
  return out;
}

std::vector<EpochLog> train_sft(policy::PolicyParams& params, const std::vector<ScenarioRecord>& corpus,
                                const SftConfig& cfg, std::uint64_t seed,
                                const std::function<void(const EpochLog&)>& on_epoch) {
  if (corpus.empty()) throw std::invalid_argument("SFT corpus must be nonempty");
  const std::vector<policy::SftExample> data = build_dataset(corpus, cfg, seed);
  Eigen::VectorXd m = Eigen::VectorXd::Zero(params.theta.size());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(params.theta.size());
  std::vector<std::size_t> order(data.size());
  std::vector<EpochLog> logs;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(derive_seed(seed, {0x5f7e, static_cast<std::uint64_t>(epoch)}));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);
    }
    const double lr = cfg.cosine_decay
                          ? 0.5 * cfg.learning_rate * (1.0 + std::cos(std::numbers::pi * epoch / cfg.epochs))
                          : cfg.learning_rate;
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<policy::SftExample> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) batch.push_back(data[order[i]]);
      Eigen::VectorXd grad;
      loss_sum += policy::sft_loss(params.theta, batch, &grad);
      ++batches;
      ++step;
      m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad;
      v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(step));
      params.theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + kAdamEps);
    }
    EpochLog log{epoch, loss_sum / static_cast<double>(batches)};
    logs.push_back(log);
    if (on_epoch) on_epoch(log);
  }
  params.freeze_reference();
  return logs;
}

}  // namespace fbgrpo::sft
