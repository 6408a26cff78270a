#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expa/env_core.hpp"

namespace expa {

// The five trainable tensors. Also serves as the gradient container.
struct PolicyTensors {
  Eigen::MatrixXd embeddings;                    // |V| x d
  Eigen::MatrixXd w_query, w_key, w_value, w_out;  // d x d
  Eigen::MatrixXd head;                          // N x d

  int dim() const { return static_cast<int>(embeddings.cols()); }

  template <class F>
  void for_each(F&& f) {
    f(embeddings);
    f(w_query);
    f(w_key);
    f(w_value);
    f(w_out);
    f(head);
  }
  template <class F>
  void for_each(F&& f) const {
    f(embeddings);
    f(w_query);
    f(w_key);
    f(w_value);
    f(w_out);
    f(head);
  }

  void set_zero();
  static PolicyTensors zeros_like(const PolicyTensors& other);
  void add_scaled(const PolicyTensors& other, double scale);
  void scale(double s);
  bool all_finite() const;
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);
};

using PolicyGradients = PolicyTensors;

// Token embeddings, a single causal self-attention block with sinusoidal
// position encodings and tanh readout at the last position, and the expanded
// linear-softmax head W (one row per action, vocab rows first).
struct PolicyParameters {
  PolicyTensors w;
  std::uint64_t catalog_hash = 0;
  std::int64_t version = 0;

  int dim() const { return w.dim(); }
  int vocab_size() const { return static_cast<int>(w.embeddings.rows()); }
  int num_actions() const { return static_cast<int>(w.head.rows()); }
};

// Random base initialization; expanded head rows start at zero.
PolicyParameters init_policy(const ActionCatalog& catalog, int dim, Rng& rng);

// w_a <- mean of the description tokens' head rows (exact copy for
// single-token descriptions). Idempotent; vocab rows untouched.
void init_expanded_actions(PolicyParameters& params, const ActionCatalog& catalog);

// ---- encoder ----

// Per-history cache of token inputs u and attention keys/values. Row 0 is the
// begin token; history token i sits at row i+1. Extending with a history that
// shares the cached prefix only computes the new rows.
struct EncoderCache {
  Eigen::MatrixXd u, k, v;
  std::vector<TokenId> tokens;
  int rows = 0;  // valid rows (tokens.size() + 1 once built)

  void reset() {
    tokens.clear();
    rows = 0;
  }
};

void encoder_extend(const PolicyParameters& params, std::span<const TokenId> history,
                    EncoderCache& cache);

// g(h_{1..prefix_len}): attention from the last visible position over rows
// 0..prefix_len, output projection with residual, tanh.
Eigen::VectorXd encode_prefix(const PolicyParameters& params, const EncoderCache& cache,
                              int prefix_len);

// Accumulates d(loss)/d(params) given dg = d(loss)/d(encoding).
void encode_prefix_backward(const PolicyParameters& params, const EncoderCache& cache,
                            int prefix_len, const Eigen::VectorXd& dg, PolicyGradients& grads);

// Convenience single-shot encoding of a token sequence.
Eigen::VectorXd encode(const PolicyParameters& params, std::span<const TokenId> history);

// ---- distributions ----

std::vector<int> available_for_env(int active_env, const ActionCatalog& catalog);

// Softmax of head logits restricted to `support` (ascending global indices).
ActionDistribution masked_distribution(const PolicyParameters& params, const Eigen::VectorXd& g,
                                       std::span<const int> support);

ActionDistribution action_distribution(const PolicyParameters& params,
                                       std::span<const TokenId> history, int active_env,
                                       const ActionCatalog& catalog);

// Backprop through logits = head * g for the restricted softmax.
// dlogits aligns with dist.support.
void logits_backward(const PolicyParameters& params, const EncoderCache& cache, int prefix_len,
                     const Eigen::VectorXd& g, const ActionDistribution& dist,
                     const Eigen::VectorXd& dlogits, PolicyGradients& grads);

// ---- KL ----

// Exact KL(p || q) over `support` with both distributions renormalized to it.
double kl_restricted(const PolicyParameters& p, const PolicyParameters& q,
                     std::span<const TokenId> history, std::span<const int> support);

// KL over the original vocabulary V (language-environment regularizer).
double kl_vocab(const PolicyParameters& p, const PolicyParameters& ref,
                std::span<const TokenId> history);

// Cache-based variant used by the training loop; accumulates d(KL)/d(p) into
// grads (scaled by `coef`) when grads != nullptr. Returns the KL value.
double kl_restricted_cached(const PolicyParameters& p, const EncoderCache& p_cache,
                            const PolicyParameters& q, const EncoderCache& q_cache,
                            int prefix_len, std::span<const int> support, double coef,
                            PolicyGradients* grads);

// ---- rollout replay ----

// Log π(a_t | h_t, e_t) at every trainable record, recomputed from the stored
// history prefixes.
std::vector<double> sequence_logprob(const PolicyParameters& params, const Rollout& rollout,
                                     const ActionCatalog& catalog);

// ---- sampling adapter ----

class NeuralPolicy final : public PolicyInterface {
 public:
  explicit NeuralPolicy(const PolicyParameters& params) : params_(&params) {}
  ActionDistribution distribution(const GlobalState& state, const ActionCatalog& catalog) override;

 private:
  const PolicyParameters* params_;
  EncoderCache cache_;
  std::int64_t seen_version_ = -1;  // invalidate the cache on parameter updates
};

// ---- language pretraining ----

struct PretrainCfg {
  int epochs = 10;
  double learning_rate = 1e-3;
  double holdout_fraction = 0.1;
  std::uint64_t seed = 1;
};

struct PretrainStats {
  std::vector<double> epoch_loss;  // mean next-token NLL per epoch
  double holdout_perplexity = 0.0;
};

// Next-token cross-entropy over V only; expanded head rows are untouched.
PretrainStats pretrain_language(PolicyParameters& params,
                                const std::vector<std::vector<TokenId>>& corpus,
                                const PretrainCfg& cfg);

// ---- checkpoints ----

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
nlohmann::json params_to_json(const PolicyParameters& params);
PolicyParameters params_from_json(const nlohmann::json& j);
void save_params(const std::string& path, const PolicyParameters& params);
// Throws std::runtime_error when the stored catalog hash does not match.
PolicyParameters load_params(const std::string& path, const ActionCatalog& catalog);

}  // namespace expa
