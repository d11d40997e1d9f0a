#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "fbgrpo/features.hpp"
#include "fbgrpo/response.hpp"
#include "fbgrpo/rng.hpp"

namespace fbgrpo::policy {

using features::FeatureVector;
using response::TokenSeq;

inline constexpr int kEmbedDim = 32;
inline constexpr int kHidden = 128;
inline constexpr int kPositions = response::kMaxLength;
// Per-step input: previous-token embedding, mean prefix embedding, position one-hot, features.
inline constexpr int kInputDim = 2 * kEmbedDim + kPositions + features::kFeatureDim;
inline constexpr double kGradClip = 1.0;

std::size_t param_count();

// Small random initialization; the output layer starts near uniform.
Eigen::VectorXd init_params(std::uint64_t seed);

// Trainable parameters plus the frozen reference snapshot taken after SFT.
struct PolicyParams {
  Eigen::VectorXd theta;
  Eigen::VectorXd reference;

  bool has_reference() const { return reference.size() == theta.size() && theta.size() > 0; }
  void freeze_reference() { reference = theta; }
};

enum class Conditioning { base, feedback };

struct SampleOutput {
  TokenSeq tokens;
  std::vector<double> per_token_logprob;  // temperature-1 measure
  double total_logprob = 0.0;
  Conditioning conditioning = Conditioning::base;
};

// Autoregressive sampling from softmax(logits / temperature); stops at END or the
// maximum length. Temperatures below 1e-6 decode greedily.
SampleOutput sample(const Eigen::VectorXd& theta, const FeatureVector& feat, double temperature, Rng& rng,
                    Conditioning conditioning = Conditioning::base);
TokenSeq greedy(const Eigen::VectorXd& theta, const FeatureVector& feat);

// Teacher-forced per-token log-probabilities at temperature 1.
std::vector<double> logprob(const Eigen::VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens);
// Full next-token distributions (vocab x length) under teacher forcing.
Eigen::MatrixXd token_distributions(const Eigen::VectorXd& theta, const FeatureVector& feat,
                                    std::span<const int> tokens);

// Gradient of the summed token log-probabilities.
Eigen::VectorXd grad_logprob(const Eigen::VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens);
// Adds sum_t weights[t] * grad log p_t into `grad` and returns the per-token log-probabilities.
std::vector<double> accumulate_grad(const Eigen::VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens,
                     std::span<const double> weights, Eigen::VectorXd& grad);

struct SftExample {
  FeatureVector feat;
  TokenSeq tokens;
};

// Mean over the batch of sequence negative log-likelihood and its gradient.
double sft_loss(const Eigen::VectorXd& theta, std::span<const SftExample> batch, Eigen::VectorXd* grad = nullptr);
// One clipped gradient-descent step; returns the loss before the step.
double sft_step(Eigen::VectorXd& theta, std::span<const SftExample> batch, double learning_rate);

// Mean over tokens of rho - ln rho - 1 with rho = pi_ref / pi_theta; 0 for an empty sequence.
double kl_to_reference(const Eigen::VectorXd& theta, const Eigen::VectorXd& reference, const FeatureVector& feat,
                       std::span<const int> tokens);

// Rescales `grad` in place so its norm is at most `max_norm`; returns the norm before clipping.
double clip_grad_norm(Eigen::VectorXd& grad, double max_norm = kGradClip);

}  // namespace fbgrpo::policy
