#include "expa/env_core.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace expa {

std::vector<int> available_actions(const GlobalState& state, const ActionCatalog& catalog) {
  if (state.active_env < 0 || state.active_env > catalog.num_envs())
    throw std::invalid_argument("invalid active environment id");
  std::vector<int> out;
  if (state.active_env == 0) {
    out.reserve(catalog.vocab_size() + catalog.num_envs());
    for (int t = 0; t < catalog.vocab_size(); ++t) out.push_back(t);
    for (int e = 1; e <= catalog.num_envs(); ++e) out.push_back(catalog.route_index(e));
    std::sort(out.begin(), out.end());
  } else {
    const EnvironmentEntry& e = catalog.env(state.active_env);
    out.reserve(e.action_labels.size());
    for (int j = 0; j < static_cast<int>(e.action_labels.size()); ++j)
      out.push_back(e.actions_base + j);
  }
  return out;
}

ApplyResult apply_action(GlobalState& state, int action, const ActionCatalog& catalog,
                         const EnvRegistry& registry) {
  const ActionRef& a = catalog.action(action);
  ApplyResult result;
  switch (a.kind) {
    case ActionKind::VocabToken:
      assert(state.active_env == 0 && "vocab tokens are language-environment actions");
      state.append(a.token, Provenance::Agent);
      break;
    case ActionKind::Route: {
      assert(state.active_env == 0 && "routing actions are language-environment actions");
      for (TokenId t : a.desc) {
        state.append(t, Provenance::RouteDesc);
        result.observation_positions.push_back(static_cast<int>(state.history.size()) - 1);
      }
      state.active_env = a.env_id;
      state.micro[a.env_id - 1].clear();  // fresh invocation
      break;
    }
    case ActionKind::EnvAction: {
      assert(state.active_env == a.env_id && "environment action outside its environment");
      StepOutcome outcome = registry.env(a.env_id).step(state.micro[a.env_id - 1], state.world,
                                                        a.local_id, catalog.vocab());
      for (TokenId t : outcome.observation) {
        state.append(t, Provenance::Observation);
        result.observation_positions.push_back(static_cast<int>(state.history.size()) - 1);
      }
      if (outcome.exit) {
        state.active_env = 0;
        result.env_exited = true;
      }
      break;
    }
  }
  ++state.step_count;
  return result;
}

GlobalState initial_state(const EpisodeSpec& episode, const ActionCatalog& catalog) {
  GlobalState s;
  s.world = episode.world;
  s.micro.resize(catalog.num_envs());
  for (TokenId t : episode.prompt) s.append(t, Provenance::Observation);
  return s;
}

ActionDistribution ScriptedPolicy::distribution(const GlobalState& state,
                                                const ActionCatalog& catalog) {
  ActionDistribution dist;
  dist.support = available_actions(state, catalog);
  dist.probs.assign(dist.support.size(), 0.0);
  if (next_ >= actions_.size()) throw std::runtime_error("scripted policy ran out of actions");
  int action = actions_[next_++];
  bool found = false;
  for (std::size_t i = 0; i < dist.support.size(); ++i) {
    if (dist.support[i] == action) {
      dist.probs[i] = 1.0;
      found = true;
    }
  }
  if (!found) throw std::runtime_error("scripted action not available in current environment");
  return dist;
}

namespace {

int pick_action(const ActionDistribution& dist, Rng& rng, bool greedy) {
  if (greedy) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < dist.probs.size(); ++i)
      if (dist.probs[i] > dist.probs[best]) best = i;  // ties -> lowest index
    return dist.support[best];
  }
  return dist.support[rng.discrete(dist.probs)];
}

}  // namespace

void continue_rollout(PolicyInterface& policy, GlobalState& state, Rollout& rollout,
                      const EpisodeSpec& episode, const ActionCatalog& catalog,
                      const EnvRegistry& registry, const RolloutLimits& limits, Rng& rng,
                      bool greedy) {
  while (static_cast<int>(rollout.records.size()) < limits.max_steps) {
    ActionDistribution dist = policy.distribution(state, catalog);
    int action = pick_action(dist, rng, greedy);
    RolloutRecord rec;
    rec.pre_history_length = static_cast<int>(state.history.size());
    rec.active_env = state.active_env;
    rec.action = action;
    for (std::size_t i = 0; i < dist.support.size(); ++i)
      if (dist.support[i] == action) rec.logged_prob = dist.probs[i];
    ApplyResult applied = apply_action(state, action, catalog, registry);
    rec.reward = applied.reward;
    rollout.records.push_back(rec);
    const ActionRef& a = catalog.action(action);
    if (a.kind == ActionKind::VocabToken && a.token == episode.done_token) {
      rollout.terminated_by = TerminationCause::AnswerEmitted;
      return;
    }
  }
  rollout.terminated_by = TerminationCause::StepLimit;
}

void finalize_rollout(Rollout& rollout, const EpisodeSpec& episode) {
  if (episode.terminal_reward) rollout.records.back().reward += episode.terminal_reward(rollout);
  rollout.cumulative_reward = 0.0;
  for (const RolloutRecord& r : rollout.records) rollout.cumulative_reward += r.reward;
}

Rollout run_rollout(PolicyInterface& policy, const EpisodeSpec& episode,
                    const ActionCatalog& catalog, const EnvRegistry& registry,
                    const RolloutLimits& limits, Rng& rng, bool greedy) {
  if (limits.max_steps < 1) throw std::invalid_argument("max_steps must be >= 1");
  Rollout rollout;
  GlobalState state = initial_state(episode, catalog);
  continue_rollout(policy, state, rollout, episode, catalog, registry, limits, rng, greedy);
  rollout.final_state = std::move(state);
  finalize_rollout(rollout, episode);
  return rollout;
}

const char* termination_name(TerminationCause c) {
  switch (c) {
    case TerminationCause::AnswerEmitted: return "answer_emitted";
    case TerminationCause::StepLimit: return "step_limit";
    case TerminationCause::EnvError: return "env_error";
  }
  return "unknown";
}

std::string rollout_to_jsonl(const Rollout& rollout, const ActionCatalog& catalog) {
  nlohmann::json j;
  const Vocabulary& vocab = catalog.vocab();
  std::size_t prompt_len = rollout.records.empty()
                               ? rollout.final_state.history.size()
                               : static_cast<std::size_t>(rollout.records.front().pre_history_length);
  nlohmann::json prompt = nlohmann::json::array();
  nlohmann::json history = nlohmann::json::array();
  for (std::size_t i = 0; i < rollout.final_state.history.size(); ++i) {
    const std::string& text = vocab.text(rollout.final_state.history[i]);
    if (i < prompt_len) prompt.push_back(text);
    history.push_back(text);
  }
  j["prompt"] = std::move(prompt);
  j["final_history"] = std::move(history);
  j["cumulative_reward"] = rollout.cumulative_reward;
  j["terminated_by"] = termination_name(rollout.terminated_by);
  nlohmann::json records = nlohmann::json::array();
  for (std::size_t t = 0; t < rollout.records.size(); ++t) {
    const RolloutRecord& r = rollout.records[t];
    const ActionRef& a = catalog.action(r.action);
    const char* kind = a.kind == ActionKind::VocabToken ? "vocab_token"
                       : a.kind == ActionKind::Route    ? "route"
                                                        : "env_action";
    records.push_back({{"t", t},
                       {"env", r.active_env},
                       {"action_kind", kind},
                       {"action_label", a.label},
                       {"reward", r.reward},
                       {"trainable", r.trainable}});
  }
  j["records"] = std::move(records);
  return j.dump();
}

}  // namespace expa
