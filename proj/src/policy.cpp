#include "fbgrpo/policy.hpp"

#include <cmath>
#include <stdexcept>

namespace fbgrpo::policy {

namespace {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;
constexpr int V = response::kVocabSize;

struct Offsets {
  std::size_t emb, w1, b1, w2, u, b2, wo, bo, total;
};

constexpr Offsets layout() {
  Offsets o{};
  std::size_t at = 0;
  o.emb = at;
  at += static_cast<std::size_t>(kEmbedDim) * V;
  o.w1 = at;
  at += static_cast<std::size_t>(kHidden) * kInputDim;
  o.b1 = at;
  at += kHidden;
  o.w2 = at;
  at += static_cast<std::size_t>(kHidden) * kHidden;
  o.u = at;
  at += static_cast<std::size_t>(kHidden) * features::kFeatureDim;
  o.b2 = at;
  at += kHidden;
  o.wo = at;
  at += static_cast<std::size_t>(V) * kHidden;
  o.bo = at;
  at += V;
  o.total = at;
  return o;
}

constexpr Offsets kLayout = layout();

template <typename Scalar>
struct Views {
  using Mat = Map<std::conditional_t<std::is_const_v<Scalar>, const MatrixXd, MatrixXd>>;
  using Vec = Map<std::conditional_t<std::is_const_v<Scalar>, const VectorXd, VectorXd>>;
  Mat emb;  // kEmbedDim x V, one column per token
  Mat w1;
  Vec b1;
  Mat w2;
  Mat u;
  Vec b2;
  Mat wo;
  Vec bo;

  explicit Views(Scalar* p)
      : emb(p + kLayout.emb, kEmbedDim, V),
        w1(p + kLayout.w1, kHidden, kInputDim),
        b1(p + kLayout.b1, kHidden),
        w2(p + kLayout.w2, kHidden, kHidden),
        u(p + kLayout.u, kHidden, features::kFeatureDim),
        b2(p + kLayout.b2, kHidden),
        wo(p + kLayout.wo, V, kHidden),
        bo(p + kLayout.bo, V) {}
};

void check_inputs(const VectorXd& theta, const FeatureVector& feat, std::size_t length) {
  if (static_cast<std::size_t>(theta.size()) != kLayout.total) throw std::invalid_argument("parameter vector has wrong size");
  if (feat.size() != features::kFeatureDim) throw std::invalid_argument("feature vector has wrong size");
  if (length > static_cast<std::size_t>(kPositions)) throw std::invalid_argument("token sequence longer than 24");
}

// Running state of the autoregressive input: previous token and prefix embedding sum.
struct Prefix {
  VectorXd sum = VectorXd::Zero(kEmbedDim);
  int count = 0;
  int prev = -1;
};

void build_input(const Views<const double>& w, const FeatureVector& feat, const Prefix& pre, int position,
                 Eigen::Ref<VectorXd> x) {
  x.setZero();
  if (pre.prev >= 0) x.segment(0, kEmbedDim) = w.emb.col(pre.prev);
  if (pre.count > 0) x.segment(kEmbedDim, kEmbedDim) = pre.sum / pre.count;
  x[2 * kEmbedDim + position] = 1.0;
  x.segment(2 * kEmbedDim + kPositions, features::kFeatureDim) = feat;
}

struct StepOut {
  VectorXd h1, h2, logits;
};

// The feature term U * feat + b2 is shared by every step of a sequence.
void step(const Views<const double>& w, const VectorXd& feat_term, const Eigen::Ref<const VectorXd>& x, StepOut& out) {
  out.h1 = (w.w1 * x + w.b1).array().tanh().matrix();
  out.h2 = (w.w2 * out.h1 + feat_term).array().tanh().matrix();
  out.logits = w.wo * out.h2 + w.bo;
}

VectorXd log_softmax(const VectorXd& z) {
  const double m = z.maxCoeff();
  const double lse = m + std::log((z.array() - m).exp().sum());
  return z.array() - lse;
}

void push(Prefix& pre, const Views<const double>& w, int token) {
  pre.sum += w.emb.col(token);
  ++pre.count;
  pre.prev = token;
}

struct Forward {
  MatrixXd x, h1, h2, logp;  // one column per position
};

Forward forward(const VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens) {
  check_inputs(theta, feat, tokens.size());
  const Views<const double> w(theta.data());
  const int L = static_cast<int>(tokens.size());
  Forward f;
  f.x.resize(kInputDim, L);
  Prefix pre;
  for (int t = 0; t < L; ++t) {
    if (tokens[t] < 0 || tokens[t] >= V) throw std::invalid_argument("token id out of range");
    build_input(w, feat, pre, t, f.x.col(t));
    push(pre, w, tokens[t]);
  }
  // Teacher forcing fixes every input up front, so the layers run as matrix products.
  f.h1.noalias() = w.w1 * f.x;
  f.h1 = (f.h1.colwise() + w.b1).array().tanh().matrix();
  const VectorXd feat_term = w.u * feat + w.b2;
  f.h2.noalias() = w.w2 * f.h1;
  f.h2 = (f.h2.colwise() + feat_term).array().tanh().matrix();
  f.logp.noalias() = w.wo * f.h2;
  f.logp.colwise() += w.bo;
  for (int t = 0; t < L; ++t) {
    const double m = f.logp.col(t).maxCoeff();
    const double lse = m + std::log((f.logp.col(t).array() - m).exp().sum());
    f.logp.col(t).array() -= lse;
  }
  return f;
}

double standard_normal(Rng& rng) {
  const double u1 = 1.0 - rng.uniform();
  const double u2 = rng.uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

}  // namespace

std::size_t param_count() { return kLayout.total; }

VectorXd init_params(std::uint64_t seed) {
  Rng rng(derive_seed(seed, {0x1417}));
  VectorXd theta = VectorXd::Zero(static_cast<Eigen::Index>(kLayout.total));
  auto fill = [&](std::size_t offset, std::size_t count, double scale) {
    for (std::size_t i = 0; i < count; ++i) theta[static_cast<Eigen::Index>(offset + i)] = scale * standard_normal(rng);
  };
  fill(kLayout.emb, static_cast<std::size_t>(kEmbedDim) * V, 0.5);
  fill(kLayout.w1, static_cast<std::size_t>(kHidden) * kInputDim, 1.0 / std::sqrt(static_cast<double>(kInputDim)));
  fill(kLayout.w2, static_cast<std::size_t>(kHidden) * kHidden, 1.0 / std::sqrt(static_cast<double>(kHidden)));
  fill(kLayout.u, static_cast<std::size_t>(kHidden) * features::kFeatureDim,
       1.0 / std::sqrt(static_cast<double>(features::kFeatureDim)));
  fill(kLayout.wo, static_cast<std::size_t>(V) * kHidden, 0.01);
  return theta;
}

SampleOutput sample(const VectorXd& theta, const FeatureVector& feat, double temperature, Rng& rng,
                    Conditioning conditioning) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  check_inputs(theta, feat, 0);
  const Views<const double> w(theta.data());
  const VectorXd feat_term = w.u * feat + w.b2;
  SampleOutput out;
  out.conditioning = conditioning;
  Prefix pre;
  VectorXd x(kInputDim);
  StepOut s;
  for (int t = 0; t < kPositions; ++t) {
    build_input(w, feat, pre, t, x);
    step(w, feat_term, x, s);
    const VectorXd logp = log_softmax(s.logits);
    int token = 0;
    if (temperature < 1e-6) {
      s.logits.maxCoeff(&token);
    } else {
      const VectorXd pt = log_softmax(s.logits / temperature).array().exp();
      double u = rng.uniform();
      token = V - 1;
      for (int i = 0; i < V; ++i) {
        u -= pt[i];
        if (u < 0.0) {
          token = i;
          break;
        }
      }
    }
    out.tokens.push_back(token);
    out.per_token_logprob.push_back(logp[token]);
    out.total_logprob += logp[token];
    if (token == response::kEnd) break;
    push(pre, w, token);
  }
  return out;
}

TokenSeq greedy(const VectorXd& theta, const FeatureVector& feat) {
  Rng unused(0);
  return sample(theta, feat, 1e-9, unused).tokens;
}

std::vector<double> logprob(const VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens) {
  const Forward f = forward(theta, feat, tokens);
  std::vector<double> out(tokens.size());
  for (std::size_t t = 0; t < tokens.size(); ++t) out[t] = f.logp(tokens[t], static_cast<Eigen::Index>(t));
  return out;
}

MatrixXd token_distributions(const VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens) {
  return forward(theta, feat, tokens).logp.array().exp();
}

std::vector<double> accumulate_grad(const VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens,
                                    std::span<const double> weights, VectorXd& grad) {
  if (weights.size() != tokens.size()) throw std::invalid_argument("one weight per token required");
  if (grad.size() != theta.size()) throw std::invalid_argument("gradient buffer has wrong size");
  const int L = static_cast<int>(tokens.size());
  if (L == 0) return {};
  const Forward f = forward(theta, feat, tokens);
  std::vector<double> lp(tokens.size());
  for (int t = 0; t < L; ++t) lp[t] = f.logp(tokens[t], t);
  const Views<const double> w(theta.data());
  Views<double> g(grad.data());

  // d(sum w_t log p_t)/dz_t = w_t (onehot(y_t) - p_t)
  MatrixXd dz = -f.logp.array().exp();
  for (int t = 0; t < L; ++t) {
    dz(tokens[t], t) += 1.0;
    dz.col(t) *= weights[t];
  }
  g.wo.noalias() += dz * f.h2.transpose();
  g.bo += dz.rowwise().sum();
  MatrixXd da2 = (w.wo.transpose() * dz).array() * (1.0 - f.h2.array().square());
  g.w2.noalias() += da2 * f.h1.transpose();
  const VectorXd da2_sum = da2.rowwise().sum();
  g.u.noalias() += da2_sum * feat.transpose();
  g.b2 += da2_sum;
  MatrixXd da1 = (w.w2.transpose() * da2).array() * (1.0 - f.h1.array().square());
  g.w1.noalias() += da1 * f.x.transpose();
  g.b1 += da1.rowwise().sum();
  const MatrixXd dx = w.w1.transpose() * da1;
  for (int t = 1; t < L; ++t) {
    g.emb.col(tokens[t - 1]) += dx.block(0, t, kEmbedDim, 1);
    const VectorXd dmean = dx.block(kEmbedDim, t, kEmbedDim, 1) / static_cast<double>(t);
    for (int i = 0; i < t; ++i) g.emb.col(tokens[i]) += dmean;
  }
  return lp;
}

VectorXd grad_logprob(const VectorXd& theta, const FeatureVector& feat, std::span<const int> tokens) {
  check_inputs(theta, feat, tokens.size());
  VectorXd grad = VectorXd::Zero(theta.size());
  const std::vector<double> ones(tokens.size(), 1.0);
  accumulate_grad(theta, feat, tokens, ones, grad);
  return grad;
}

double sft_loss(const VectorXd& theta, std::span<const SftExample> batch, VectorXd* grad) {
  if (batch.empty()) throw std::invalid_argument("SFT batch must be nonempty");
  const double inv = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;
  if (grad) grad->setZero(theta.size());
  for (const SftExample& ex : batch) {
    std::vector<double> lps;
    if (grad) {
      const std::vector<double> wts(ex.tokens.size(), -inv);
      lps = accumulate_grad(theta, ex.feat, ex.tokens, wts, *grad);
    } else {
      lps = logprob(theta, ex.feat, ex.tokens);
    }
    for (double lp : lps) loss -= lp * inv;
  }
  return loss;
}

double sft_step(VectorXd& theta, std::span<const SftExample> batch, double learning_rate) {
  VectorXd grad;
  const double loss = sft_loss(theta, batch, &grad);
  clip_grad_norm(grad);
  theta -= learning_rate * grad;
  return loss;
}

double kl_to_reference(const VectorXd& theta, const VectorXd& reference, const FeatureVector& feat,
                       std::span<const int> tokens) {
  if (tokens.empty()) return 0.0;
  const std::vector<double> lp = logprob(theta, feat, tokens);
  const std::vector<double> lr = logprob(reference, feat, tokens);
  double sum = 0.0;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    const double log_rho = lr[t] - lp[t];
    sum += std::exp(log_rho) - log_rho - 1.0;
  }
  return sum / static_cast<double>(tokens.size());
}

double clip_grad_norm(VectorXd& grad, double max_norm) {
  const double n = grad.norm();
  if (n > max_norm && n > 0.0) grad *= max_norm / n;
  return n;
}

}  // namespace fbgrpo::policy
