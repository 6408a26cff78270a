#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "expa/optim.hpp"
#include "support/finite_diff.hpp"

using namespace expa;

namespace {

struct Fixture {
  ActionCatalog catalog;
  EnvRegistry registry;
  PolicyParameters params;
  RewardConfig reward;

  Fixture(int dim = 6, std::uint64_t seed = 2)
      : catalog(standard_catalog(std::vector<std::string>{"compare", "swap"}, 2)),
        registry(catalog) {
    Rng rng(seed);
    params = init_policy(catalog, dim, rng);
    init_expanded_actions(params, catalog);
  }

  EpisodeSpec sort2_episode(bool sorted = false) const {
    const Vocabulary& v = catalog.vocab();
    EpisodeSpec e;
    e.prompt = v.encode_str("sort A B ascending");
    e.done_token = v.id("done");
    e.world.hidden = HiddenArray{2, {sorted ? 1LL : 9LL, sorted ? 9LL : 1LL}, true};
    return e;
  }

  Rollout sample_rollout(const EpisodeSpec& episode, std::uint64_t seed, int max_steps = 16) {
    NeuralPolicy policy(params);
    Rng rng(seed);
    return run_rollout(policy, episode, catalog, registry, {max_steps}, rng);
  }
};

UpdateConfig base_cfg() {
  UpdateConfig cfg;
  cfg.m = 2;
  cfg.beta = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("group advantages match the stated standardization") {
  std::vector<double> rewards{1.0, 0.0, 0.0, 1.0};
  std::vector<double> adv = group_advantages(rewards, 1e-6);
  REQUIRE(adv.size() == 4);
  CHECK(adv[0] == doctest::Approx(1.0));
  CHECK(adv[1] == doctest::Approx(-1.0));
  CHECK(adv[2] == doctest::Approx(-1.0));
  CHECK(adv[3] == doctest::Approx(1.0));
  double mean = (adv[0] + adv[1] + adv[2] + adv[3]) / 4.0;
  CHECK(std::abs(mean) < 1e-15);
  // invariant under positive affine transformation of the rewards
  std::vector<double> scaled{8.0, 5.0, 5.0, 8.0};
  std::vector<double> adv2 = group_advantages(scaled, 1e-6);
  for (int i = 0; i < 4; ++i) CHECK(adv2[i] == doctest::Approx(adv[i]));
  // equal rewards: zero advantages via the sigma floor
  for (double a : group_advantages(std::vector<double>{0.5, 0.5, 0.5}, 1e-6)) CHECK(a == 0.0);
  // on rewards [1,0]: advantages [1,-1]
  std::vector<double> pair_adv = group_advantages(std::vector<double>{1.0, 0.0}, 1e-6);
  CHECK(pair_adv[0] == doctest::Approx(1.0));
  CHECK(pair_adv[1] == doctest::Approx(-1.0));
}

TEST_CASE("ppo_surrogate at the sampling point reduces to the policy gradient") {
  Fixture f;
  EpisodeSpec episode = f.sort2_episode();
  Rollout r = f.sample_rollout(episode, 99);
  UpdateConfig cfg = base_cfg();
  const double advantage = 0.7;

  SurrogateResult s = ppo_surrogate(f.params, f.params, f.params, r, advantage, cfg, f.catalog);
  // ratio = 1 and KL = 0: value is T * a
  CHECK(s.value == doctest::Approx(advantage * static_cast<double>(r.records.size())));

  auto score = [&](const PolicyParameters& p) {
    std::vector<double> lp = sequence_logprob(p, r, f.catalog);
    double total = 0.0;
    for (double x : lp) total += x;
    return advantage * total;
  };
  std::vector<double> numeric = fdiff::finite_diff(f.params, score);
  CHECK(fdiff::max_rel_error(s.grad.flatten(), numeric) < 1e-4);
}

TEST_CASE("ppo_surrogate zero advantage and zero beta is identically zero") {
  Fixture f;
  Rollout r = f.sample_rollout(f.sort2_episode(), 7);
  UpdateConfig cfg = base_cfg();
  SurrogateResult s = ppo_surrogate(f.params, f.params, f.params, r, 0.0, cfg, f.catalog);
  CHECK(s.value == 0.0);
  for (double g : s.grad.flatten()) CHECK(g == 0.0);
}

TEST_CASE("ppo_surrogate gradient matches finite differences off-policy") {
  for (int config = 0; config < 3; ++config) {
    Fixture f(6, 500 + config);
    Fixture old_f(6, 600 + config);
    Fixture ref_f(6, 700 + config);
    EpisodeSpec episode = f.sort2_episode(config % 2 == 0);
    NeuralPolicy old_policy(old_f.params);
    Rng rng(12 + config);
    Rollout r = run_rollout(old_policy, episode, f.catalog, f.registry, {3}, rng);
    UpdateConfig cfg;
    cfg.m = 2;
    cfg.beta = 0.05;
    cfg.epsilon = 0.2;
    const double advantage = 1.3;
    SurrogateResult s =
        ppo_surrogate(f.params, old_f.params, ref_f.params, r, advantage, cfg, f.catalog);
    auto objective = [&](const PolicyParameters& p) {
      return ppo_surrogate(p, old_f.params, ref_f.params, r, advantage, cfg, f.catalog).value;
    };
    std::vector<double> numeric = fdiff::finite_diff(f.params, objective);
    CHECK(fdiff::max_rel_error(s.grad.flatten(), numeric) < 1e-4);
  }
}

TEST_CASE("clipped surrogate value is bounded by T|a|(1+eps) for beta = 0") {
  Fixture f(6, 21);
  Fixture old_f(6, 22);
  UpdateConfig cfg = base_cfg();
  cfg.epsilon = 0.2;
  for (int trial = 0; trial < 10; ++trial) {
    EpisodeSpec episode = f.sort2_episode(trial % 2 == 0);
    NeuralPolicy old_policy(old_f.params);
    Rng rng(trial);
    Rollout r = run_rollout(old_policy, episode, f.catalog, f.registry, {6}, rng);
    for (double advantage : {0.5 + trial, -(0.5 + trial)}) {
      SurrogateResult s =
          ppo_surrogate(f.params, old_f.params, f.params, r, advantage, cfg, f.catalog);
      CHECK(s.value <=
            r.records.size() * std::abs(advantage) * (1.0 + cfg.epsilon) + 1e-12);
    }
  }
}

TEST_CASE("non-trainable records are skipped entirely") {
  Fixture f(6, 31);
  Rollout r = f.sample_rollout(f.sort2_episode(), 5);
  UpdateConfig cfg;
  cfg.m = 2;
  cfg.beta = 0.03;
  SurrogateResult base = ppo_surrogate(f.params, f.params, f.params, r, 0.9, cfg, f.catalog);

  Rollout padded = r;
  RolloutRecord fake;
  fake.pre_history_length = 0;
  fake.active_env = 0;
  fake.action = f.catalog.vocab().id("sort");
  fake.trainable = false;  // observation-style position: no update allowed
  fake.logged_prob = 1.0;
  padded.records.insert(padded.records.begin(), fake);
  SurrogateResult same = ppo_surrogate(f.params, f.params, f.params, padded, 0.9, cfg, f.catalog);
  CHECK(base.value == same.value);
  CHECK(base.grad.flatten() == same.grad.flatten());
}

TEST_CASE("intervention weights: language steps carry the description probability") {
  Fixture f;
  Rollout r = f.sample_rollout(f.sort2_episode(), 11, 24);
  int cmp = f.catalog.env_id_by_name("compare");
  std::vector<double> w = intervention_weights(f.params, r, cmp, f.catalog);
  REQUIRE(w.size() == r.records.size());
  TokenId desc = f.catalog.env(cmp).route_desc[0];
  for (std::size_t t = 0; t < w.size(); ++t) {
    if (r.records[t].active_env != 0) {
      CHECK(w[t] == 0.0);
      continue;
    }
    ActionDistribution d = action_distribution(
        f.params,
        std::span<const TokenId>(r.final_state.history.data(),
                                 static_cast<std::size_t>(r.records[t].pre_history_length)),
        0, f.catalog);
    double expect = 0.0;
    for (std::size_t i = 0; i < d.support.size(); ++i)
      if (d.support[i] == desc) expect = d.probs[i];
    CHECK(w[t] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("intervention step frequencies match the weights (3 sigma)") {
  Fixture f;
  Rollout r = f.sample_rollout(f.sort2_episode(), 13, 24);
  int cmp = f.catalog.env_id_by_name("compare");
  std::vector<double> w = intervention_weights(f.params, r, cmp, f.catalog);
  double total = 0.0;
  for (double x : w) total += x;
  REQUIRE(total > 0.0);
  const int draws = 10000;
  std::vector<int> counts(w.size(), 0);
  Rng rng(424242);
  for (int i = 0; i < draws; ++i)
    ++counts[sample_intervention_step(f.params, r, cmp, f.catalog, rng)];
  for (std::size_t t = 0; t < w.size(); ++t) {
    double p = w[t] / total;
    double sigma = std::sqrt(draws * p * (1.0 - p));
    CHECK(std::abs(counts[t] - draws * p) <= 3.0 * sigma + 1.0);
  }
}

TEST_CASE("all-zero weights fall back to uniform over language steps") {
  Fixture f;
  Rollout r = f.sample_rollout(f.sort2_episode(), 17, 16);
  // underflow scenario: every weight is exactly zero
  std::vector<double> zero_weights(r.records.size(), 0.0);
  std::vector<int> language_steps;
  for (std::size_t t = 0; t < r.records.size(); ++t)
    if (r.records[t].active_env == 0) language_steps.push_back(static_cast<int>(t));
  REQUIRE(!language_steps.empty());
  Rng rng(5);
  std::vector<int> counts(r.records.size(), 0);
  const int draws = 4000;
  for (int i = 0; i < draws; ++i)
    ++counts[sample_intervention_step_from_weights(zero_weights, r, rng)];
  double expected = static_cast<double>(draws) / language_steps.size();
  for (std::size_t t = 0; t < r.records.size(); ++t) {
    bool is_language = std::find(language_steps.begin(), language_steps.end(),
                                 static_cast<int>(t)) != language_steps.end();
    if (!is_language) {
      CHECK(counts[t] == 0);
    } else {
      CHECK(std::abs(counts[t] - expected) < 5.0 * std::sqrt(expected));
    }
  }
  // degenerate weights except one step: t' is that step with probability 1
  std::vector<double> point(r.records.size(), 0.0);
  point[language_steps[0]] = 0.42;
  for (int i = 0; i < 50; ++i)
    CHECK(sample_intervention_step_from_weights(point, r, rng) == language_steps[0]);
  // a rollout with no language step cannot take the fallback
  Rollout no_lang = r;
  for (auto& rec : no_lang.records) rec.active_env = 1;
  CHECK_THROWS_AS(sample_intervention_step_from_weights(
                      std::vector<double>(no_lang.records.size(), 0.0), no_lang, rng),
                  std::invalid_argument);
}

TEST_CASE("counterfactual rollouts share the prefix and force the route") {
  Fixture f;
  EpisodeSpec episode = f.sort2_episode();
  int cmp = f.catalog.env_id_by_name("compare");
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rollout factual = f.sample_rollout(episode, 1000 + seed, 24);
    Rng rng(seed);
    RolloutPair pair =
        counterfactual_rollout(f.params, factual, cmp, episode, f.catalog, f.registry, {24}, rng);
    const int t_star = pair.intervention_step;
    REQUIRE(t_star >= 0);
    REQUIRE(t_star < static_cast<int>(factual.records.size()));
    for (int t = 0; t < t_star; ++t)
      CHECK(pair.counterfactual.records[t].action == factual.records[t].action);
    const RolloutRecord& forced = pair.counterfactual.records[t_star];
    CHECK(forced.action == f.catalog.route_index(cmp));
    CHECK(forced.active_env == 0);
    int shared = forced.pre_history_length;
    CHECK(shared == factual.records[t_star].pre_history_length);
    for (int i = 0; i < shared; ++i)
      CHECK(pair.counterfactual.final_state.history[i] == factual.final_state.history[i]);
    ActionDistribution d = action_distribution(
        f.params,
        std::span<const TokenId>(factual.final_state.history.data(),
                                 static_cast<std::size_t>(shared)),
        0, f.catalog);
    for (std::size_t i = 0; i < d.support.size(); ++i)
      if (d.support[i] == forced.action)
        CHECK(forced.logged_prob == doctest::Approx(d.probs[i]).epsilon(1e-12));
  }
}

TEST_CASE("cpo branch selection on crafted reward vectors") {
  Fixture f;
  UpdateConfig cfg = base_cfg();
  cfg.m = 4;

  // all terminal rewards zero -> counterfactual branch
  EpisodeSpec zero_episode = f.sort2_episode();
  zero_episode.terminal_reward = [](const Rollout&) { return 0.0; };
  AdamState adam;
  PolicyParameters before = f.params;
  BatchMetrics m1 = cpo_batch_update(f.params, before, zero_episode, 1, cfg, f.catalog, f.registry,
                                     {16}, 77, adam);
  CHECK(m1.counterfactual_branch);
  CHECK(m1.episodes == 2 * cfg.m);
  // r' - r = 0 for every pair and beta = 0: parameters unchanged (bitwise)
  CHECK(f.params.w.flatten() == before.w.flatten());

  // any positive factual reward -> exploit branch
  int call = 0;
  EpisodeSpec pos_episode = f.sort2_episode();
  pos_episode.terminal_reward = [&call](const Rollout&) {
    static const double pattern[] = {1.0, 0.0, 0.0, 1.0};
    double r = call < 4 ? pattern[call] : 0.0;  // factual rollouts come first
    ++call;
    return r;
  };
  AdamState adam2;
  BatchMetrics m2 = cpo_batch_update(f.params, before, pos_episode, 1, cfg, f.catalog, f.registry,
                                     {16}, 78, adam2);
  CHECK_FALSE(m2.counterfactual_branch);
  CHECK(m2.mean_reward == doctest::Approx(0.5));
}

TEST_CASE("grpo with equal rewards leaves parameters unchanged") {
  Fixture f;
  UpdateConfig cfg = base_cfg();
  cfg.m = 4;
  cfg.mode = AdvantageMode::Grpo;
  EpisodeSpec episode = f.sort2_episode();
  episode.terminal_reward = [](const Rollout&) { return 0.7; };
  AdamState adam;
  PolicyParameters before = f.params;
  BatchMetrics m = grpo_batch_update(f.params, before, episode, cfg, f.catalog, f.registry, {16},
                                     5150, adam);
  CHECK(m.mean_reward == doctest::Approx(0.7));
  CHECK(m.episodes == cfg.m);
  CHECK(f.params.w.flatten() == before.w.flatten());
}

TEST_CASE("train: seed-fixed short runs are bit-reproducible and resumable") {
  namespace fs = std::filesystem;
  TrainConfig cfg;
  cfg.task = "sorting";
  PhaseCfg phase;
  phase.steps = 0;
  phase.generator = {{"mix", {1.0, 0.0, 0.0, 0.0}}, {"value_lo", 0}, {"value_hi", 9}};
  cfg.phases = {phase};
  cfg.envs = {"compare", "swap"};
  cfg.max_labels = 2;
  cfg.policy_dim = 8;
  cfg.seed = 11;
  cfg.steps = 6;
  cfg.rollout_max_steps = 16;
  cfg.update.m = 2;
  cfg.update.beta = 0.0;
  cfg.pretrain_enabled = false;
  cfg.probe.size = 8;
  cfg.probe.every = 2;

  TrainResult a = train(cfg);
  TrainResult b = train(cfg);
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    CHECK(a.rows[i].mean_reward == b.rows[i].mean_reward);
    CHECK(a.rows[i].tool_invocations_per_rollout == b.rows[i].tool_invocations_per_rollout);
    CHECK(a.rows[i].probe_accuracy == b.rows[i].probe_accuracy);
  }
  CHECK(a.params.w.flatten() == b.params.w.flatten());

  // interrupted at step 3 + resume reproduces the uninterrupted run
  fs::path dir = fs::temp_directory_path() / "expa_train_resume";
  fs::create_directories(dir);
  TrainConfig first_half = cfg;
  first_half.steps = 3;
  first_half.checkpoint_every = 3;
  train(first_half, std::nullopt, dir.string());
  TrainResult resumed = train(cfg, (dir / "checkpoint_3.json").string(), std::nullopt);
  REQUIRE(resumed.rows.size() == 3);  // steps 3,4,5
  for (std::size_t i = 0; i < resumed.rows.size(); ++i) {
    const MetricsRow& want = a.rows[3 + i];
    CHECK(resumed.rows[i].step == want.step);
    CHECK(resumed.rows[i].mean_reward == want.mean_reward);
    CHECK(resumed.rows[i].tool_invocations_per_rollout == want.tool_invocations_per_rollout);
  }
  CHECK(resumed.params.w.flatten() == a.params.w.flatten());
}
