#pragma once

#include <functional>
#include <string>
#include <vector>

#include "expa/catalog.hpp"
#include "expa/environments.hpp"
#include "expa/rng.hpp"

namespace expa {

enum class Provenance { Agent, RouteDesc, Observation };

// Global state s_t = (h_t, e_t, z_t): fully observed token history with
// per-position provenance, the active environment, and the latent world plus
// per-environment invocation micro states.
struct GlobalState {
  std::vector<TokenId> history;
  std::vector<Provenance> tags;
  int active_env = 0;  // 0 = language
  World world;
  std::vector<EnvMicroState> micro;  // index env_id - 1
  int step_count = 0;

  void append(TokenId t, Provenance p) {
    history.push_back(t);
    tags.push_back(p);
  }
};

enum class TerminationCause { AnswerEmitted, StepLimit, EnvError };

struct RolloutRecord {
  int pre_history_length = 0;  // history size before this action's appends
  int active_env = 0;          // e_t at decision time
  int action = -1;             // global action index
  double reward = 0.0;
  bool trainable = true;
  double logged_prob = 1.0;  // π_old(a_t | h_t, e_t) at generation time
};

struct Rollout {
  std::vector<RolloutRecord> records;
  double cumulative_reward = 0.0;
  GlobalState final_state;
  TerminationCause terminated_by = TerminationCause::StepLimit;
};

struct ActionDistribution {
  std::vector<int> support;   // global indices, ascending
  std::vector<double> probs;  // same order; sums to 1 over the support
};

class PolicyInterface {
 public:
  virtual ~PolicyInterface() = default;
  virtual ActionDistribution distribution(const GlobalState& state,
                                          const ActionCatalog& catalog) = 0;
};

// Deterministic policy that replays a fixed action list (one-hot
// distributions); used by scripted demonstrations and test oracles.
class ScriptedPolicy final : public PolicyInterface {
 public:
  explicit ScriptedPolicy(std::vector<int> actions) : actions_(std::move(actions)) {}
  ActionDistribution distribution(const GlobalState& state, const ActionCatalog& catalog) override;

 private:
  std::vector<int> actions_;
  std::size_t next_ = 0;
};

// Everything the rollout driver needs from a task: prompt, initial latent
// world, the terminating token, and the terminal reward hook.
struct EpisodeSpec {
  std::vector<TokenId> prompt;
  World world;
  TokenId done_token = -1;
  std::function<double(const Rollout&)> terminal_reward;
};

struct RolloutLimits {
  int max_steps = 128;
};

// Ẽ_0 = V ∪ {g_i}; Ẽ_e = E_e. Global indices in ascending order.
std::vector<int> available_actions(const GlobalState& state, const ActionCatalog& catalog);

struct ApplyResult {
  double reward = 0.0;
  std::vector<int> observation_positions;
  bool env_exited = false;
};

// Executes one expanded action: vocab tokens extend the history, routing
// actions append desc(g_i) and activate environment i with a fresh micro
// state, environment actions invoke step_i and append its observation,
// returning to the language environment when exit is set.
ApplyResult apply_action(GlobalState& state, int action, const ActionCatalog& catalog,
                         const EnvRegistry& registry);

GlobalState initial_state(const EpisodeSpec& episode, const ActionCatalog& catalog);

// Expanded-action rollout loop: seeds the history with the prompt (tagged as
// observation), samples π(· | h_t, e_t) over the available actions, applies
// each action, and stops on the done token in the language environment or on
// the step limit. The terminal reward lands on the last record.
Rollout run_rollout(PolicyInterface& policy, const EpisodeSpec& episode,
                    const ActionCatalog& catalog, const EnvRegistry& registry,
                    const RolloutLimits& limits, Rng& rng, bool greedy = false);

// Samples further actions from `state` until termination, appending records.
// Used by run_rollout and by the counterfactual constructor after the forced
// routing step. Does not apply the terminal reward.
void continue_rollout(PolicyInterface& policy, GlobalState& state, Rollout& rollout,
                      const EpisodeSpec& episode, const ActionCatalog& catalog,
                      const EnvRegistry& registry, const RolloutLimits& limits, Rng& rng,
                      bool greedy);

// Adds the terminal reward to the last record and recomputes r̄.
void finalize_rollout(Rollout& rollout, const EpisodeSpec& episode);

std::string rollout_to_jsonl(const Rollout& rollout, const ActionCatalog& catalog);

const char* termination_name(TerminationCause c);

}  // namespace expa
