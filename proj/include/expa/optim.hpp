#pragma once

#include <optional>
#include <string>
#include <vector>

#include "expa/adam.hpp"
#include "expa/policy.hpp"
#include "expa/tasks.hpp"

namespace expa {

enum class AdvantageMode { Cpo, Grpo };

struct UpdateConfig {
  double epsilon = 0.2;  // PPO clipping threshold
  double beta = 0.01;    // KL regularization coefficient
  int m = 8;             // group size
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double sigma_floor = 1e-6;
  AdvantageMode mode = AdvantageMode::Cpo;

  void validate() const;
  AdamOptions adam_options() const {
    return {learning_rate, adam_beta1, adam_beta2, adam_eps, /*maximize=*/true};
  }
};

struct TrainAbortError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RolloutPair {
  Rollout factual;
  Rollout counterfactual;
  int intervention_step = -1;
  int forced_route = 0;  // env id
};

// PPO-style clipped surrogate with per-step KL regularization against the
// reference policy. The sum runs over trainable records only; the KL is over
// V at language-environment steps and over E_e inside environment e.
struct SurrogateResult {
  double value = 0.0;
  PolicyGradients grad;
};
SurrogateResult ppo_surrogate(const PolicyParameters& params_new, const PolicyParameters& params_old,
                              const PolicyParameters& ref, const Rollout& rollout, double advantage,
                              const UpdateConfig& cfg, const ActionCatalog& catalog);

// Per-record weights for sampling the intervention step t': the policy's
// probability of the routing description tokens at language-environment
// records (geometric mean under teacher forcing for multi-token
// descriptions); zero elsewhere.
std::vector<double> intervention_weights(const PolicyParameters& params, const Rollout& factual,
                                         int route_env, const ActionCatalog& catalog);

// Samples t' proportionally to intervention_weights, falling back to uniform
// over language-environment records when every weight is zero (possible only
// through floating-point underflow).
int sample_intervention_step(const PolicyParameters& params, const Rollout& factual, int route_env,
                             const ActionCatalog& catalog, Rng& rng);
int sample_intervention_step_from_weights(std::span<const double> weights, const Rollout& factual,
                                          Rng& rng);

// do(a_{t'} = g_i): copies the factual records before t', forces the routing
// action, and resumes Algorithm-1 sampling to termination.
RolloutPair counterfactual_rollout(const PolicyParameters& params, const Rollout& factual,
                                   int route_env, const EpisodeSpec& episode,
                                   const ActionCatalog& catalog, const EnvRegistry& registry,
                                   const RolloutLimits& limits, Rng& rng);

// Group-standardized advantages (r - mean) / max(population std, floor).
std::vector<double> group_advantages(std::span<const double> rewards, double sigma_floor);

struct BatchMetrics {
  double mean_reward = 0.0;  // factual rollouts
  double mean_counterfactual_reward = 0.0;
  bool counterfactual_branch = false;
  double tool_invocations = 0.0;  // mean routing actions per factual rollout
  double surrogate = 0.0;
  int episodes = 0;  // rollouts generated in this batch
};

// One CPO update on a group of m factual rollouts and their counterfactual
// pairs from the same initial state: the exploration branch (advantage
// r̄' - r̄ on the counterfactual) when no factual reward is positive, the
// group-relative exploit branch otherwise. Averages the m per-pair gradients
// and applies a single optimizer step; params_old is the batch-start snapshot.
BatchMetrics cpo_batch_update(PolicyParameters& params, const PolicyParameters& ref,
                              const EpisodeSpec& episode, int forced_route_env,
                              const UpdateConfig& cfg, const ActionCatalog& catalog,
                              const EnvRegistry& registry, const RolloutLimits& limits,
                              std::uint64_t seed, AdamState& adam);

// GRPO baseline: m factual rollouts, group-standardized advantages, same
// surrogate and optimizer step.
BatchMetrics grpo_batch_update(PolicyParameters& params, const PolicyParameters& ref,
                               const EpisodeSpec& episode, const UpdateConfig& cfg,
                               const ActionCatalog& catalog, const EnvRegistry& registry,
                               const RolloutLimits& limits, std::uint64_t seed, AdamState& adam);

// ---- training driver ----

struct ProbeCfg {
  int size = 32;    // instances (sorting probes enumerate rank classes)
  int every = 25;   // evaluate every N steps
  std::uint64_t seed = 7;
};

struct PhaseCfg {
  int steps = 0;  // batches in this phase (last phase absorbs the rest)
  nlohmann::json generator;
};

struct TrainConfig {
  std::string task;  // arithmetic | countdown | count | sorting | ordering
  std::vector<PhaseCfg> phases;
  RewardConfig reward;
  std::vector<std::string> envs;
  int policy_dim = 64;
  int max_labels = 5;
  std::uint64_t seed = 0;
  int steps = 100;
  long long max_episodes = 0;  // 0 = no episode budget
  int rollout_max_steps = 96;
  UpdateConfig update;
  bool pretrain_enabled = true;
  int pretrain_instances = 400;
  PretrainCfg pretrain;
  CorpusCfg corpus;
  ProbeCfg probe;
  int checkpoint_every = 0;  // 0 = final only
  std::string out_dir;
  std::optional<std::string> dataset_path;  // cycle instances from a file instead

  // Programmatic consumers only (not part of the JSON schema): invoked on the
  // probe cadence; returning true stops training early (target reached).
  std::function<bool(const PolicyParameters&, int step, long long episodes)> probe_hook;
};

struct MetricsRow {
  int step = 0;
  double mean_reward = 0.0;
  double probe_accuracy = 0.0;
  double tool_invocations_per_rollout = 0.0;
  double branch_cf_fraction = 0.0;
  long long episodes = 0;
};

struct TrainResult {
  std::vector<MetricsRow> rows;
  PolicyParameters params;
  PolicyParameters ref;
  long long episodes = 0;
  double final_probe_accuracy = 0.0;
  double best_probe_accuracy = 0.0;
};

TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json train_config_to_json(const TrainConfig& cfg);

// Full loop: catalog + registry from config, optional language pretraining,
// description-based initialization, frozen reference snapshot, batch updates
// with metrics. Aborts with TrainAbortError on non-finite gradients.
TrainResult train(const TrainConfig& cfg);

// Resumable variant: `resume_from` restores params/ref/optimizer/step.
TrainResult train(const TrainConfig& cfg, const std::optional<std::string>& resume_from,
                  const std::optional<std::string>& checkpoint_dir);

void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows);

// Probe evaluation (greedy decoding): task success rate, where success is
// exact match for language-answer tasks and a correctly sorted final hidden
// state for sorting tasks.
double probe_accuracy(const PolicyParameters& params, std::span<const TaskInstance> probes,
                      const RewardConfig& reward, const ActionCatalog& catalog,
                      const EnvRegistry& registry, const RolloutLimits& limits);

// Exhaustive sorting probes: every rank class of size n, both directions.
std::vector<TaskInstance> sorting_probe_set(int n, const ActionCatalog& catalog);

}  // namespace expa
