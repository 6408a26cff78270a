#include <doctest.h>

#include <algorithm>
#include <set>

#include "expa/env_core.hpp"
#include "expa/policy.hpp"
#include "expa/tasks.hpp"

using namespace expa;

namespace {

struct Fixture {
  ActionCatalog catalog;
  EnvRegistry registry;
  Fixture(std::vector<std::string> envs = {"calculator", "compare", "swap"})
      : catalog(standard_catalog(envs)), registry(catalog) {}
};

// Uniform random choice over the available actions.
class UniformPolicy final : public PolicyInterface {
 public:
  ActionDistribution distribution(const GlobalState& state, const ActionCatalog& catalog) override {
    ActionDistribution d;
    d.support = available_actions(state, catalog);
    d.probs.assign(d.support.size(), 1.0 / d.support.size());
    return d;
  }
};

}  // namespace

TEST_CASE("catalog layout and sizes") {
  Fixture f;
  const ActionCatalog& c = f.catalog;
  // N = |V| + K + sum |E_i|
  CHECK(c.num_actions() == c.vocab_size() + 3 + 15 + 5 + 5);
  CHECK(c.env_action_count(c.env_id_by_name("calculator")) == 15);
  CHECK(c.env_action_count(c.env_id_by_name("compare")) == 5);
  // global indices of vocab tokens are [0, |V|)
  for (int i = 0; i < c.vocab_size(); ++i) {
    CHECK(c.action(i).kind == ActionKind::VocabToken);
    CHECK(c.action(i).global_index == i);
  }
  // every description token is a vocabulary member
  for (int i = 0; i < c.num_actions(); ++i)
    for (TokenId t : c.action(i).desc) CHECK(t < c.vocab_size());
  // catalogs with different layouts hash differently
  ActionCatalog other = standard_catalog(std::vector<std::string>{"calculator"});
  CHECK(other.hash() != c.hash());
}

TEST_CASE("available_actions per environment") {
  Fixture f;
  GlobalState s;
  s.micro.resize(f.catalog.num_envs());
  // language: all vocab plus K routes
  auto lang = available_actions(s, f.catalog);
  CHECK(static_cast<int>(lang.size()) == f.catalog.vocab_size() + 3);
  // calculator: exactly its 15 buttons
  s.active_env = f.catalog.env_id_by_name("calculator");
  auto calc = available_actions(s, f.catalog);
  CHECK(calc.size() == 15);
  for (int a : calc) {
    CHECK(f.catalog.action(a).kind == ActionKind::EnvAction);
    CHECK(f.catalog.action(a).env_id == s.active_env);
  }
  // compare: its 5 labels, no vocab tokens
  s.active_env = f.catalog.env_id_by_name("compare");
  auto cmp = available_actions(s, f.catalog);
  CHECK(cmp.size() == 5);
  for (int a : cmp) CHECK(f.catalog.action(a).kind == ActionKind::EnvAction);
  s.active_env = 99;
  CHECK_THROWS_AS(available_actions(s, f.catalog), std::invalid_argument);
}

TEST_CASE("apply_action semantics") {
  Fixture f;
  const Vocabulary& v = f.catalog.vocab();
  GlobalState s;
  s.micro.resize(f.catalog.num_envs());
  s.world.hidden = HiddenArray{2, {9, 4}, true};

  // vocab token: agent-tagged append, env unchanged
  apply_action(s, v.id("the"), f.catalog, f.registry);
  CHECK(s.history.size() == 1);
  CHECK(s.tags.back() == Provenance::Agent);
  CHECK(s.active_env == 0);

  // route: desc appended as route_desc, env activated
  int calc = f.catalog.env_id_by_name("calculator");
  apply_action(s, f.catalog.route_index(calc), f.catalog, f.registry);
  CHECK(s.active_env == calc);
  CHECK(v.text(s.history.back()) == "calculate");
  CHECK(s.tags.back() == Provenance::RouteDesc);

  // env action with exit: observation appended, control returns to language
  int eq = f.catalog.env_action_index(calc, 14);
  ApplyResult r = apply_action(s, eq, f.catalog, f.registry);
  CHECK(r.env_exited);
  CHECK(s.active_env == 0);
  CHECK(s.tags.back() == Provenance::Observation);
}

TEST_CASE("rollout terminates immediately on done") {
  Fixture f;
  const Vocabulary& v = f.catalog.vocab();
  EpisodeSpec episode;
  episode.prompt = v.encode_str("sort A B ascending");
  episode.done_token = v.id("done");
  ScriptedPolicy policy({v.id("done")});
  Rng rng(1);
  Rollout r = run_rollout(policy, episode, f.catalog, f.registry, {8}, rng);
  CHECK(r.records.size() == 1);
  CHECK(r.terminated_by == TerminationCause::AnswerEmitted);
}

TEST_CASE("route to compare then two labels gives three records with the observation") {
  Fixture f;
  const Vocabulary& v = f.catalog.vocab();
  EpisodeSpec episode;
  episode.prompt = v.encode_str("sort A B ascending");
  episode.done_token = v.id("done");
  episode.world.hidden = HiddenArray{2, {3, 8}, true};
  int cmp = f.catalog.env_id_by_name("compare");
  ScriptedPolicy policy({f.catalog.route_index(cmp), f.catalog.env_action_index(cmp, 0),
                         f.catalog.env_action_index(cmp, 1), v.id("done")});
  Rng rng(1);
  Rollout r = run_rollout(policy, episode, f.catalog, f.registry, {16}, rng);
  CHECK(r.terminated_by == TerminationCause::AnswerEmitted);
  CHECK(r.records.size() == 4);
  // after the third record the history carries "A < B"
  const GlobalState& fs = r.final_state;
  std::string text = v.decode_str(fs.history);
  CHECK(text.find("A < B") != std::string::npos);
}

TEST_CASE("step limit yields exactly max_steps records") {
  Fixture f;
  const Vocabulary& v = f.catalog.vocab();
  EpisodeSpec episode;
  episode.prompt = v.encode_str("compute 1 + 1");
  episode.done_token = v.id("done");
  ScriptedPolicy policy(std::vector<int>(64, v.id("the")));
  Rng rng(1);
  Rollout r = run_rollout(policy, episode, f.catalog, f.registry, {5}, rng);
  CHECK(r.records.size() == 5);
  CHECK(r.terminated_by == TerminationCause::StepLimit);
}

TEST_CASE("state-machine properties over random-policy rollouts") {
  Fixture f;
  const Vocabulary& v = f.catalog.vocab();
  UniformPolicy policy;
  long long steps = 0;
  std::uint64_t seed = 99;
  for (int episode_i = 0; steps < 20000; ++episode_i) {
    EpisodeSpec episode;
    episode.prompt = v.encode_str("sort A B C ascending");
    episode.done_token = v.id("done");
    episode.world.hidden = HiddenArray{3, {5, 1, 9}, true};
    Rng rng(Rng::derive(seed, episode_i));
    GlobalState state = initial_state(episode, f.catalog);
    Rollout r;
    // replicate the driver loop so each step's availability can be asserted
    while (static_cast<int>(r.records.size()) < 64) {
      auto avail = available_actions(state, f.catalog);
      ActionDistribution dist = policy.distribution(state, f.catalog);
      int action = dist.support[rng.discrete(dist.probs)];
      CHECK(std::find(avail.begin(), avail.end(), action) != avail.end());
      int env_before = state.active_env;
      ApplyResult applied = apply_action(state, action, f.catalog, f.registry);
      if (applied.env_exited) CHECK(state.active_env == 0);
      (void)env_before;
      r.records.push_back({0, env_before, action, 0.0, true, 1.0});
      ++steps;
      const ActionRef& a = f.catalog.action(action);
      if (a.kind == ActionKind::VocabToken && a.token == episode.done_token) break;
    }
  }
  CHECK(steps >= 20000);
}

TEST_CASE("provenance partition and history concatenation") {
  Fixture f;
  const Vocabulary& v = f.catalog.vocab();
  UniformPolicy policy;
  for (int episode_i = 0; episode_i < 40; ++episode_i) {
    EpisodeSpec episode;
    episode.prompt = v.encode_str("sort A B ascending");
    episode.done_token = v.id("done");
    episode.world.hidden = HiddenArray{2, {5, 1}, true};
    Rng rng(Rng::derive(123, episode_i));
    Rollout r = run_rollout(policy, episode, f.catalog, f.registry, {48}, rng);
    const GlobalState& fs = r.final_state;
    REQUIRE(fs.history.size() == fs.tags.size());
    // Replay: prompt positions are observations; each record contributes
    // agent positions exactly when it is a vocab-token action.
    std::size_t pos = episode.prompt.size();
    for (std::size_t i = 0; i < pos; ++i) CHECK(fs.tags[i] == Provenance::Observation);
    GlobalState replay = initial_state(episode, f.catalog);
    for (const RolloutRecord& rec : r.records) {
      CHECK(rec.pre_history_length == static_cast<int>(replay.history.size()));
      CHECK(rec.trainable);  // every record is an agent-chosen action
      apply_action(replay, rec.action, f.catalog, f.registry);
      const ActionRef& a = f.catalog.action(rec.action);
      for (std::size_t i = pos; i < replay.history.size(); ++i) {
        if (a.kind == ActionKind::VocabToken)
          CHECK(fs.tags[i] == Provenance::Agent);
        else if (a.kind == ActionKind::Route)
          CHECK(fs.tags[i] == Provenance::RouteDesc);
        else
          CHECK(fs.tags[i] == Provenance::Observation);
      }
      pos = replay.history.size();
    }
    // history equals prompt ⊕ per-record appends
    CHECK(replay.history == fs.history);
    CHECK(pos == fs.history.size());
  }
}

TEST_CASE("rollout determinism under fixed seed") {
  Fixture f;
  Rng seed_rng(5);
  ActionCatalog catalog = standard_catalog(std::vector<std::string>{"compare", "swap"});
  EnvRegistry registry(catalog);
  PolicyParameters params = init_policy(catalog, 16, seed_rng);
  init_expanded_actions(params, catalog);
  const Vocabulary& v = catalog.vocab();
  EpisodeSpec episode;
  episode.prompt = v.encode_str("sort A B C ascending");
  episode.done_token = v.id("done");
  episode.world.hidden = HiddenArray{3, {5, 1, 9}, true};

  auto run_once = [&] {
    NeuralPolicy policy(params);
    Rng rng(4242);
    return run_rollout(policy, episode, catalog, registry, {40}, rng);
  };
  Rollout a = run_once();
  Rollout b = run_once();
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].action == b.records[i].action);
    CHECK(a.records[i].logged_prob == b.records[i].logged_prob);  // bit-identical
    CHECK(a.records[i].reward == b.records[i].reward);
  }
  CHECK(a.final_state.history == b.final_state.history);
  CHECK(a.cumulative_reward == b.cumulative_reward);
}

TEST_CASE("rollout JSONL serialization schema") {
  Fixture f;
  const Vocabulary& v = f.catalog.vocab();
  EpisodeSpec episode;
  episode.prompt = v.encode_str("sort A B ascending");
  episode.done_token = v.id("done");
  episode.world.hidden = HiddenArray{2, {5, 1}, true};
  int swp = f.catalog.env_id_by_name("swap");
  ScriptedPolicy policy({f.catalog.route_index(swp), f.catalog.env_action_index(swp, 0),
                         f.catalog.env_action_index(swp, 1), v.id("done")});
  Rng rng(1);
  Rollout r = run_rollout(policy, episode, f.catalog, f.registry, {16}, rng);
  nlohmann::json j = nlohmann::json::parse(rollout_to_jsonl(r, f.catalog));
  CHECK(j.at("prompt").size() == episode.prompt.size());
  CHECK(j.at("final_history").size() == r.final_state.history.size());
  CHECK(j.at("terminated_by") == "answer_emitted");
  REQUIRE(j.at("records").size() == 4);
  for (const auto& rec : j.at("records")) {
    CHECK(rec.contains("t"));
    CHECK(rec.contains("env"));
    CHECK(rec.contains("action_kind"));
    CHECK(rec.contains("action_label"));
    CHECK(rec.contains("reward"));
    CHECK(rec.contains("trainable"));
  }
  CHECK(j.at("records").at(0).at("action_kind") == "route");
  CHECK(j.at("records").at(1).at("action_kind") == "env_action");
  CHECK(j.at("records").at(3).at("action_kind") == "vocab_token");
}
