#include "expa/optim.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace expa {

void UpdateConfig::validate() const {
  if (epsilon <= 0.0 || epsilon >= 1.0) throw std::invalid_argument("epsilon must be in (0,1)");
  if (beta < 0.0) throw std::invalid_argument("beta must be >= 0");
  if (m < 2) throw std::invalid_argument("group size m must be >= 2");
  if (sigma_floor <= 0.0) throw std::invalid_argument("sigma_floor must be > 0");
}

// ---- PPO surrogate ----

SurrogateResult ppo_surrogate(const PolicyParameters& params_new, const PolicyParameters& params_old,
                              const PolicyParameters& ref, const Rollout& rollout, double advantage,
                              const UpdateConfig& cfg, const ActionCatalog& catalog) {
  SurrogateResult result;
  result.grad = PolicyTensors::zeros_like(params_new.w);
  EncoderCache cache_new, cache_old, cache_ref;
  encoder_extend(params_new, rollout.final_state.history, cache_new);
  encoder_extend(params_old, rollout.final_state.history, cache_old);
  if (cfg.beta > 0.0) encoder_extend(ref, rollout.final_state.history, cache_ref);

  std::vector<int> vocab_support(catalog.vocab_size());
  std::iota(vocab_support.begin(), vocab_support.end(), 0);

  for (const RolloutRecord& rec : rollout.records) {
    if (!rec.trainable) continue;  // observation positions receive no update
    const int len = rec.pre_history_length;
    std::vector<int> support = available_for_env(rec.active_env, catalog);

    Eigen::VectorXd g_new = encode_prefix(params_new, cache_new, len);
    ActionDistribution dist_new = masked_distribution(params_new, g_new, support);
    Eigen::VectorXd g_old = encode_prefix(params_old, cache_old, len);
    ActionDistribution dist_old = masked_distribution(params_old, g_old, support);

    double p_new = 0.0, p_old = 0.0;
    std::size_t chosen = 0;
    for (std::size_t i = 0; i < support.size(); ++i) {
      if (support[i] == rec.action) {
        p_new = dist_new.probs[i];
        p_old = dist_old.probs[i];
        chosen = i;
      }
    }
    if (p_old == 0.0)
      throw std::logic_error("zero old-policy probability at a taken action");

    const double ratio = p_new / p_old;
    const double clipped = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
    const double s_plain = ratio * advantage;
    const double s_clip = clipped * advantage;
    result.value += std::min(s_plain, s_clip);
    if (s_plain <= s_clip && advantage != 0.0) {
      // d(ratio * a)/dz = a * ratio * (1[chosen] - p); the clipped branch is
      // constant in theta.
      Eigen::VectorXd dlogits(static_cast<Eigen::Index>(support.size()));
      for (std::size_t i = 0; i < support.size(); ++i)
        dlogits(static_cast<Eigen::Index>(i)) =
            advantage * ratio * ((i == chosen ? 1.0 : 0.0) - dist_new.probs[i]);
      logits_backward(params_new, cache_new, len, g_new, dist_new, dlogits, result.grad);
    }

    if (cfg.beta > 0.0) {
      std::span<const int> kl_support =
          rec.active_env == 0 ? std::span<const int>(vocab_support) : std::span<const int>(support);
      double kl = kl_restricted_cached(params_new, cache_new, ref, cache_ref, len, kl_support,
                                       -cfg.beta, &result.grad);
      result.value -= cfg.beta * kl;
    }
  }
  return result;
}

// ---- counterfactual rollouts ----

namespace {

// π(desc | h) under teacher forcing; geometric mean across description
// tokens. Single-token descriptions take the fast path over the shared cache.
double desc_probability(const PolicyParameters& params, const EncoderCache& cache, int prefix_len,
                        std::span<const TokenId> history, std::span<const TokenId> desc,
                        const ActionCatalog& catalog) {
  std::vector<int> support = available_for_env(0, catalog);
  if (desc.size() == 1) {
    Eigen::VectorXd g = encode_prefix(params, cache, prefix_len);
    ActionDistribution dist = masked_distribution(params, g, support);
    for (std::size_t i = 0; i < dist.support.size(); ++i)
      if (dist.support[i] == desc[0]) return dist.probs[i];
    return 0.0;
  }
  std::vector<TokenId> context(history.begin(), history.begin() + prefix_len);
  double log_sum = 0.0;
  for (TokenId t : desc) {
    ActionDistribution dist = action_distribution(params, context, 0, catalog);
    double p = 0.0;
    for (std::size_t i = 0; i < dist.support.size(); ++i)
      if (dist.support[i] == t) p = dist.probs[i];
    if (p == 0.0) return 0.0;
    log_sum += std::log(p);
    context.push_back(t);
  }
  return std::exp(log_sum / static_cast<double>(desc.size()));
}

}  // namespace

std::vector<double> intervention_weights(const PolicyParameters& params, const Rollout& factual,
                                         int route_env, const ActionCatalog& catalog) {
  const std::vector<TokenId>& desc = catalog.env(route_env).route_desc;
  EncoderCache cache;
  encoder_extend(params, factual.final_state.history, cache);
  std::vector<double> weights(factual.records.size(), 0.0);
  for (std::size_t t = 0; t < factual.records.size(); ++t) {
    const RolloutRecord& rec = factual.records[t];
    if (rec.active_env != 0) continue;
    weights[t] = desc_probability(params, cache, rec.pre_history_length,
                                  factual.final_state.history, desc, catalog);
  }
  return weights;
}

int sample_intervention_step_from_weights(std::span<const double> weights, const Rollout& factual,
                                          Rng& rng) {
  double total = std::accumulate(weights.begin(), weights.end(), 0.0);
  if (total > 0.0) return static_cast<int>(rng.discrete(weights));
  // Degenerate fallback: uniform over language-environment records.
  std::vector<int> language_steps;
  for (std::size_t t = 0; t < factual.records.size(); ++t)
    if (factual.records[t].active_env == 0) language_steps.push_back(static_cast<int>(t));
  if (language_steps.empty())
    throw std::invalid_argument("factual rollout has no language-environment step");
  return language_steps[rng.uniform(language_steps.size())];
}

int sample_intervention_step(const PolicyParameters& params, const Rollout& factual, int route_env,
                             const ActionCatalog& catalog, Rng& rng) {
  std::vector<double> weights = intervention_weights(params, factual, route_env, catalog);
  return sample_intervention_step_from_weights(weights, factual, rng);
}

RolloutPair counterfactual_rollout(const PolicyParameters& params, const Rollout& factual,
                                   int route_env, const EpisodeSpec& episode,
                                   const ActionCatalog& catalog, const EnvRegistry& registry,
                                   const RolloutLimits& limits, Rng& rng) {
  RolloutPair pair;
  pair.factual = factual;
  pair.forced_route = route_env;
  const int t_star = sample_intervention_step(params, factual, route_env, catalog, rng);
  pair.intervention_step = t_star;

  GlobalState state = initial_state(episode, catalog);
  Rollout cf;
  for (int t = 0; t < t_star; ++t) {
    apply_action(state, factual.records[t].action, catalog, registry);
    cf.records.push_back(factual.records[t]);
  }

  RolloutRecord forced;
  forced.pre_history_length = static_cast<int>(state.history.size());
  forced.active_env = state.active_env;  // 0 by construction of the weights
  forced.action = catalog.route_index(route_env);
  ActionDistribution dist = action_distribution(params, state.history, state.active_env, catalog);
  for (std::size_t i = 0; i < dist.support.size(); ++i)
    if (dist.support[i] == forced.action) forced.logged_prob = dist.probs[i];
  apply_action(state, forced.action, catalog, registry);
  cf.records.push_back(forced);

  NeuralPolicy policy(params);
  continue_rollout(policy, state, cf, episode, catalog, registry, limits, rng, /*greedy=*/false);
  cf.final_state = std::move(state);
  finalize_rollout(cf, episode);
  pair.counterfactual = std::move(cf);
  return pair;
}

// ---- batch updates ----

namespace {

double mean_routes(std::span<const Rollout> rollouts, const ActionCatalog& catalog) {
  if (rollouts.empty()) return 0.0;
  long long total = 0;
  for (const Rollout& r : rollouts)
    for (const RolloutRecord& rec : r.records)
      if (catalog.action(rec.action).kind == ActionKind::Route) ++total;
  return static_cast<double>(total) / static_cast<double>(rollouts.size());
}

std::vector<Rollout> sample_factuals(const PolicyParameters& params, const EpisodeSpec& episode,
                                     int m, const ActionCatalog& catalog,
                                     const EnvRegistry& registry, const RolloutLimits& limits,
                                     std::uint64_t seed) {
  std::vector<Rollout> out;
  out.reserve(m);
  for (int i = 0; i < m; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(i)));
    NeuralPolicy policy(params);
    out.push_back(run_rollout(policy, episode, catalog, registry, limits, rng));
  }
  return out;
}

struct WeightedRollout {
  const Rollout* rollout;
  double advantage;
};

BatchMetrics apply_group_update(PolicyParameters& params, const PolicyParameters& params_old,
                                const PolicyParameters& ref,
                                std::span<const WeightedRollout> group, const UpdateConfig& cfg,
                                const ActionCatalog& catalog, AdamState& adam) {
  BatchMetrics metrics;
  PolicyGradients total = PolicyTensors::zeros_like(params.w);
  const double inv_m = 1.0 / static_cast<double>(group.size());
  for (const WeightedRollout& w : group) {
    SurrogateResult s = ppo_surrogate(params, params_old, ref, *w.rollout, w.advantage, cfg, catalog);
    total.add_scaled(s.grad, inv_m);
    metrics.surrogate += inv_m * s.value;
  }
  if (!total.all_finite())
    throw TrainAbortError("non-finite gradient in batch update");
  adam_step(params.w, total, adam, cfg.adam_options());
  ++params.version;
  return metrics;
}

}  // namespace

std::vector<double> group_advantages(std::span<const double> rewards, double sigma_floor) {
  const double m = static_cast<double>(rewards.size());
  double mu = std::accumulate(rewards.begin(), rewards.end(), 0.0) / m;
  double var = 0.0;
  for (double r : rewards) var += (r - mu) * (r - mu);
  double sigma = std::sqrt(var / m);  // population std ([1,0,0,1] -> 0.5)
  std::vector<double> adv(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i)
    adv[i] = (rewards[i] - mu) / std::max(sigma, sigma_floor);
  return adv;
}

BatchMetrics cpo_batch_update(PolicyParameters& params, const PolicyParameters& ref,
                              const EpisodeSpec& episode, int forced_route_env,
                              const UpdateConfig& cfg, const ActionCatalog& catalog,
                              const EnvRegistry& registry, const RolloutLimits& limits,
                              std::uint64_t seed, AdamState& adam) {
  cfg.validate();
  const PolicyParameters params_old = params;  // batch-start snapshot
  std::vector<Rollout> factual =
      sample_factuals(params_old, episode, cfg.m, catalog, registry, limits, seed);
  std::vector<RolloutPair> pairs;
  pairs.reserve(cfg.m);
  for (int i = 0; i < cfg.m; ++i) {
    Rng rng(Rng::derive(seed, static_cast<std::uint64_t>(cfg.m + i)));
    pairs.push_back(counterfactual_rollout(params_old, factual[i], forced_route_env, episode,
                                           catalog, registry, limits, rng));
  }

  std::vector<double> rewards(cfg.m);
  for (int i = 0; i < cfg.m; ++i) rewards[i] = factual[i].cumulative_reward;
  const double max_reward = *std::max_element(rewards.begin(), rewards.end());

  std::vector<WeightedRollout> group;
  group.reserve(cfg.m);
  if (max_reward <= 0.0) {
    // Exploration branch: advantage r̄' - r̄ on the counterfactual rollout.
    for (int i = 0; i < cfg.m; ++i)
      group.push_back({&pairs[i].counterfactual,
                       pairs[i].counterfactual.cumulative_reward - rewards[i]});
  } else {
    std::vector<double> adv = group_advantages(rewards, cfg.sigma_floor);
    for (int i = 0; i < cfg.m; ++i) group.push_back({&factual[i], adv[i]});
  }

  BatchMetrics metrics = apply_group_update(params, params_old, ref, group, cfg, catalog, adam);
  metrics.counterfactual_branch = max_reward <= 0.0;
  metrics.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / cfg.m;
  double cf_sum = 0.0;
  for (const RolloutPair& p : pairs) cf_sum += p.counterfactual.cumulative_reward;
  metrics.mean_counterfactual_reward = cf_sum / cfg.m;
  metrics.tool_invocations = mean_routes(factual, catalog);
  metrics.episodes = 2 * cfg.m;
  return metrics;
}

BatchMetrics grpo_batch_update(PolicyParameters& params, const PolicyParameters& ref,
                               const EpisodeSpec& episode, const UpdateConfig& cfg,
                               const ActionCatalog& catalog, const EnvRegistry& registry,
                               const RolloutLimits& limits, std::uint64_t seed, AdamState& adam) {
  cfg.validate();
  const PolicyParameters params_old = params;
  std::vector<Rollout> factual =
      sample_factuals(params_old, episode, cfg.m, catalog, registry, limits, seed);
  std::vector<double> rewards(cfg.m);
  for (int i = 0; i < cfg.m; ++i) rewards[i] = factual[i].cumulative_reward;
  std::vector<double> adv = group_advantages(rewards, cfg.sigma_floor);
  std::vector<WeightedRollout> group;
  group.reserve(cfg.m);
  for (int i = 0; i < cfg.m; ++i) group.push_back({&factual[i], adv[i]});

  BatchMetrics metrics = apply_group_update(params, params_old, ref, group, cfg, catalog, adam);
  metrics.mean_reward = std::accumulate(rewards.begin(), rewards.end(), 0.0) / cfg.m;
  metrics.tool_invocations = mean_routes(factual, catalog);
  metrics.episodes = cfg.m;
  return metrics;
}

}  // namespace expa
