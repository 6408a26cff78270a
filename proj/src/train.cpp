#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "expa/config.hpp"
#include "expa/optim.hpp"

namespace expa {

namespace {

const char* advantage_mode_name(AdvantageMode m) {
  return m == AdvantageMode::Cpo ? "cpo" : "grpo";
}

AdvantageMode advantage_mode_from_name(const std::string& s) {
  if (s == "cpo") return AdvantageMode::Cpo;
  if (s == "grpo") return AdvantageMode::Grpo;
  throw ConfigError("advantage_mode must be 'cpo' or 'grpo'");
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

TrainConfig train_config_from_json(const nlohmann::json& j) {
  require_keys(j,
               {"task", "generator", "phases", "reward", "envs", "policy_dim", "max_labels",
                "seed", "steps", "max_episodes", "rollout_max_steps", "update", "pretrain",
                "probe", "checkpoint_every", "out", "dataset"},
               "train config");
  TrainConfig cfg;
  cfg.task = j.at("task").get<std::string>();
  if (j.contains("phases")) {
    if (j.contains("generator")) throw ConfigError("give either 'generator' or 'phases', not both");
    for (const auto& p : j.at("phases")) {
      require_keys(p, {"steps", "generator"}, "phase");
      PhaseCfg phase;
      phase.steps = p.at("steps").get<int>();
      phase.generator = p.at("generator");
      cfg.phases.push_back(std::move(phase));
    }
    if (cfg.phases.empty()) throw ConfigError("phases must not be empty");
  } else {
    PhaseCfg phase;
    phase.steps = 0;
    phase.generator = j.contains("generator") ? j.at("generator") : nlohmann::json::object();
    cfg.phases.push_back(std::move(phase));
  }
  if (j.contains("reward")) {
    const auto& r = j.at("reward");
    require_keys(r, {"lambda_cmp", "lambda_swap", "floor"}, "reward config");
    cfg.reward.lambda_cmp = get_or(r, "lambda_cmp", cfg.reward.lambda_cmp);
    cfg.reward.lambda_swap = get_or(r, "lambda_swap", cfg.reward.lambda_swap);
    cfg.reward.floor = get_or(r, "floor", cfg.reward.floor);
    if (cfg.reward.lambda_cmp < 0 || cfg.reward.lambda_swap < 0 || cfg.reward.floor > 0)
      throw ConfigError("reward: penalties must be >= 0 and floor <= 0");
  }
  cfg.envs = j.contains("envs") ? j.at("envs").get<std::vector<std::string>>()
                                : default_envs(cfg.task);
  cfg.policy_dim = get_or(j, "policy_dim", cfg.policy_dim);
  cfg.max_labels = get_or(j, "max_labels", cfg.max_labels);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.steps = get_or(j, "steps", cfg.steps);
  cfg.max_episodes = get_or<long long>(j, "max_episodes", cfg.max_episodes);
  cfg.rollout_max_steps = get_or(j, "rollout_max_steps", cfg.rollout_max_steps);
  if (j.contains("update")) {
    const auto& u = j.at("update");
    require_keys(u,
                 {"epsilon", "beta", "m", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps",
                  "sigma_floor", "advantage_mode"},
                 "update config");
    cfg.update.epsilon = get_or(u, "epsilon", cfg.update.epsilon);
    cfg.update.beta = get_or(u, "beta", cfg.update.beta);
    cfg.update.m = get_or(u, "m", cfg.update.m);
    cfg.update.learning_rate = get_or(u, "learning_rate", cfg.update.learning_rate);
    cfg.update.adam_beta1 = get_or(u, "adam_beta1", cfg.update.adam_beta1);
    cfg.update.adam_beta2 = get_or(u, "adam_beta2", cfg.update.adam_beta2);
    cfg.update.adam_eps = get_or(u, "adam_eps", cfg.update.adam_eps);
    cfg.update.sigma_floor = get_or(u, "sigma_floor", cfg.update.sigma_floor);
    if (u.contains("advantage_mode"))
      cfg.update.mode = advantage_mode_from_name(u.at("advantage_mode").get<std::string>());
  }
  cfg.update.validate();
  if (j.contains("pretrain")) {
    const auto& p = j.at("pretrain");
    require_keys(p,
                 {"enabled", "instances", "epochs", "learning_rate", "holdout_fraction", "seed",
                  "demo_fraction", "min_interactions", "max_interactions"},
                 "pretrain config");
    cfg.pretrain_enabled = get_or(p, "enabled", cfg.pretrain_enabled);
    cfg.pretrain_instances = get_or(p, "instances", cfg.pretrain_instances);
    cfg.pretrain.epochs = get_or(p, "epochs", cfg.pretrain.epochs);
    cfg.pretrain.learning_rate = get_or(p, "learning_rate", cfg.pretrain.learning_rate);
    cfg.pretrain.holdout_fraction = get_or(p, "holdout_fraction", cfg.pretrain.holdout_fraction);
    cfg.pretrain.seed = get_or<std::uint64_t>(p, "seed", cfg.pretrain.seed);
    cfg.corpus.demo_fraction = get_or(p, "demo_fraction", cfg.corpus.demo_fraction);
    cfg.corpus.min_interactions = get_or(p, "min_interactions", cfg.corpus.min_interactions);
    cfg.corpus.max_interactions = get_or(p, "max_interactions", cfg.corpus.max_interactions);
  }
  if (j.contains("probe")) {
    const auto& p = j.at("probe");
    require_keys(p, {"size", "every", "seed"}, "probe config");
    cfg.probe.size = get_or(p, "size", cfg.probe.size);
    cfg.probe.every = get_or(p, "every", cfg.probe.every);
    cfg.probe.seed = get_or<std::uint64_t>(p, "seed", cfg.probe.seed);
  }
  cfg.checkpoint_every = get_or(j, "checkpoint_every", cfg.checkpoint_every);
  cfg.out_dir = get_or<std::string>(j, "out", "");
  if (j.contains("dataset")) cfg.dataset_path = j.at("dataset").get<std::string>();
  return cfg;
}

nlohmann::json train_config_to_json(const TrainConfig& cfg) {
  nlohmann::json j;
  j["task"] = cfg.task;
  if (cfg.phases.size() == 1) {
    j["generator"] = cfg.phases[0].generator;
  } else {
    nlohmann::json phases = nlohmann::json::array();
    for (const PhaseCfg& p : cfg.phases) phases.push_back({{"steps", p.steps}, {"generator", p.generator}});
    j["phases"] = std::move(phases);
  }
  j["reward"] = {{"lambda_cmp", cfg.reward.lambda_cmp},
                 {"lambda_swap", cfg.reward.lambda_swap},
                 {"floor", cfg.reward.floor}};
  j["envs"] = cfg.envs;
  j["policy_dim"] = cfg.policy_dim;
  j["max_labels"] = cfg.max_labels;
  j["seed"] = cfg.seed;
  j["steps"] = cfg.steps;
  j["max_episodes"] = cfg.max_episodes;
  j["rollout_max_steps"] = cfg.rollout_max_steps;
  j["update"] = {{"epsilon", cfg.update.epsilon},
                 {"beta", cfg.update.beta},
                 {"m", cfg.update.m},
                 {"learning_rate", cfg.update.learning_rate},
                 {"adam_beta1", cfg.update.adam_beta1},
                 {"adam_beta2", cfg.update.adam_beta2},
                 {"adam_eps", cfg.update.adam_eps},
                 {"sigma_floor", cfg.update.sigma_floor},
                 {"advantage_mode", advantage_mode_name(cfg.update.mode)}};
  j["pretrain"] = {{"enabled", cfg.pretrain_enabled},
                   {"instances", cfg.pretrain_instances},
                   {"epochs", cfg.pretrain.epochs},
                   {"learning_rate", cfg.pretrain.learning_rate},
                   {"holdout_fraction", cfg.pretrain.holdout_fraction},
                   {"seed", cfg.pretrain.seed},
                   {"demo_fraction", cfg.corpus.demo_fraction},
                   {"min_interactions", cfg.corpus.min_interactions},
                   {"max_interactions", cfg.corpus.max_interactions}};
  j["probe"] = {{"size", cfg.probe.size}, {"every", cfg.probe.every}, {"seed", cfg.probe.seed}};
  j["checkpoint_every"] = cfg.checkpoint_every;
  if (!cfg.out_dir.empty()) j["out"] = cfg.out_dir;
  if (cfg.dataset_path) j["dataset"] = *cfg.dataset_path;
  return j;
}

// ---- probes ----

namespace {

std::vector<int> sorting_sizes(const TrainConfig& cfg) {
  std::vector<int> sizes;
  for (const PhaseCfg& phase : cfg.phases) {
    SortingCfg s = sorting_cfg_from_json(phase.generator);
    for (int n = 2; n <= 5; ++n)
      if (s.mix[n - 2] > 0.0 && std::find(sizes.begin(), sizes.end(), n) == sizes.end())
        sizes.push_back(n);
  }
  std::sort(sizes.begin(), sizes.end());
  return sizes;
}

// All rank classes of each size, both directions, with representative values.
std::vector<TaskInstance> sorting_probes(std::span<const int> sizes, const ActionCatalog& catalog) {
  const Vocabulary& vocab = catalog.vocab();
  static const char* kLabels[] = {"A", "B", "C", "D", "E"};
  std::vector<TaskInstance> probes;
  for (int n : sizes) {
    std::vector<int> ranks(n);
    std::iota(ranks.begin(), ranks.end(), 0);
    do {
      for (bool ascending : {true, false}) {
        TaskInstance t;
        t.kind = TaskKind::Sort;
        t.metadata.n = n;
        HiddenArray a;
        a.n = n;
        a.ascending = ascending;
        for (int r : ranks) a.values.push_back(7 + 11 * r);
        t.hidden = std::move(a);
        t.prompt.push_back(vocab.id("sort"));
        for (int i = 0; i < n; ++i) t.prompt.push_back(vocab.id(kLabels[i]));
        t.prompt.push_back(vocab.id(ascending ? "ascending" : "descending"));
        probes.push_back(std::move(t));
      }
    } while (std::next_permutation(ranks.begin(), ranks.end()));
  }
  return probes;
}

std::vector<TaskInstance> build_probe_set(const TrainConfig& cfg, const ActionCatalog& catalog) {
  std::vector<TaskInstance> probes;
  if (cfg.task == "sorting") {
    probes = sorting_probes(sorting_sizes(cfg), catalog);
  } else {
    Rng rng(cfg.probe.seed);
    nlohmann::json gen = cfg.phases.back().generator;
    gen["n_instances"] = cfg.probe.size;
    probes = generate_dataset(cfg.task, gen, catalog, rng);
  }
  if (static_cast<int>(probes.size()) > cfg.probe.size) {
    Rng rng(cfg.probe.seed);
    rng.shuffle(probes);
    probes.resize(cfg.probe.size);
  }
  return probes;
}

bool probe_success(const Rollout& r, const TaskInstance& task, const ActionCatalog& catalog) {
  if (task.kind == TaskKind::Sort) return r.final_state.world.hidden->sorted();
  return reward_em(r, task, catalog) == 1.0;
}

}  // namespace

double probe_accuracy(const PolicyParameters& params, std::span<const TaskInstance> probes,
                      const RewardConfig& reward, const ActionCatalog& catalog,
                      const EnvRegistry& registry, const RolloutLimits& limits) {
  if (probes.empty()) return 0.0;
  int success = 0;
  for (const TaskInstance& task : probes) {
    EpisodeSpec episode = make_episode(task, reward, catalog, registry);
    NeuralPolicy policy(params);
    Rng rng(17);  // greedy decoding: the stream is unused
    Rollout r = run_rollout(policy, episode, catalog, registry, limits, rng, /*greedy=*/true);
    if (probe_success(r, task, catalog)) ++success;
  }
  return static_cast<double>(success) / static_cast<double>(probes.size());
}

// ---- checkpoints ----

namespace {

struct TrainState {
  PolicyParameters params;
  PolicyParameters ref;
  AdamState adam;
  int step = 0;
  long long episodes = 0;
};

void save_train_checkpoint(const std::string& path, const TrainState& st) {
  nlohmann::json j;
  j["step"] = st.step;
  j["episodes"] = st.episodes;
  j["params"] = params_to_json(st.params);
  j["ref"] = params_to_json(st.ref);
  j["adam"] = adam_to_json(st.adam);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << j.dump();
}

TrainState load_train_checkpoint(const std::string& path, const ActionCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  TrainState st;
  try {
    nlohmann::json j = nlohmann::json::parse(in);
    st.step = j.at("step").get<int>();
    st.episodes = j.at("episodes").get<long long>();
    st.params = params_from_json(j.at("params"));
    st.ref = params_from_json(j.at("ref"));
    st.adam = adam_from_json(j.at("adam"));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt training checkpoint '" + path + "': " + e.what());
  }
  if (st.params.catalog_hash != catalog.hash())
    throw std::runtime_error("checkpoint catalog hash mismatch");
  return st;
}

const nlohmann::json& phase_generator(const TrainConfig& cfg, int step) {
  int offset = 0;
  for (const PhaseCfg& p : cfg.phases) {
    if (p.steps <= 0 || step < offset + p.steps) return p.generator;
    offset += p.steps;
  }
  return cfg.phases.back().generator;
}

}  // namespace

TrainResult train(const TrainConfig& cfg) { return train(cfg, std::nullopt, std::nullopt); }

TrainResult train(const TrainConfig& cfg, const std::optional<std::string>& resume_from,
                  const std::optional<std::string>& checkpoint_dir) {
  ActionCatalog catalog = standard_catalog(cfg.envs, cfg.max_labels);
  EnvRegistry registry(catalog);
  RolloutLimits limits{cfg.rollout_max_steps};

  std::vector<TaskInstance> dataset;
  if (cfg.dataset_path) {
    dataset = read_dataset_jsonl(*cfg.dataset_path, catalog);
    if (dataset.empty()) throw ConfigError("dataset '" + *cfg.dataset_path + "' is empty");
  }

  TrainState st;
  if (resume_from) {
    st = load_train_checkpoint(*resume_from, catalog);
  } else {
    Rng init_rng(Rng::derive(cfg.seed, 0xA11CE));
    st.params = init_policy(catalog, cfg.policy_dim, init_rng);
    if (cfg.pretrain_enabled) {
      Rng corpus_rng(Rng::derive(cfg.seed, 0xC0FFEE));
      nlohmann::json gen = cfg.phases.back().generator;
      gen["n_instances"] = cfg.pretrain_instances;
      std::vector<TaskInstance> instances =
          dataset.empty() ? generate_dataset(cfg.task, gen, catalog, corpus_rng)
                          : std::vector<TaskInstance>(
                                dataset.begin(),
                                dataset.begin() + std::min<std::size_t>(dataset.size(),
                                                                        cfg.pretrain_instances));
      std::vector<std::vector<TokenId>> corpus =
          build_pretrain_corpus(instances, cfg.corpus, catalog, registry, corpus_rng);
      pretrain_language(st.params, corpus, cfg.pretrain);
    }
    init_expanded_actions(st.params, catalog);
    st.ref = st.params;  // frozen post-initialization reference
  }

  std::vector<TaskInstance> probes = build_probe_set(cfg, catalog);

  TrainResult result;
  double probe_now = probe_accuracy(st.params, probes, cfg.reward, catalog, registry, limits);
  result.best_probe_accuracy = probe_now;

  const int num_envs = catalog.num_envs();
  for (; st.step < cfg.steps; ++st.step) {
    if (cfg.max_episodes > 0 && st.episodes >= cfg.max_episodes) break;
    const std::uint64_t step_seed = Rng::derive(cfg.seed, 1000003ULL + st.step);
    TaskInstance task;
    if (!dataset.empty()) {
      task = dataset[st.step % dataset.size()];
    } else {
      Rng task_rng(step_seed);
      task = sample_task(cfg.task, phase_generator(cfg, st.step), catalog, task_rng);
    }
    EpisodeSpec episode = make_episode(task, cfg.reward, catalog, registry);

    BatchMetrics metrics;
    if (cfg.update.mode == AdvantageMode::Cpo) {
      int forced = 1 + st.step % num_envs;  // round-robin over environments
      metrics = cpo_batch_update(st.params, st.ref, episode, forced, cfg.update, catalog, registry,
                                 limits, Rng::derive(step_seed, 1), st.adam);
    } else {
      metrics = grpo_batch_update(st.params, st.ref, episode, cfg.update, catalog, registry, limits,
                                  Rng::derive(step_seed, 1), st.adam);
    }
    st.episodes += metrics.episodes;

    bool stop_requested = false;
    if (cfg.probe.every > 0 && (st.step + 1) % cfg.probe.every == 0) {
      probe_now = probe_accuracy(st.params, probes, cfg.reward, catalog, registry, limits);
      result.best_probe_accuracy = std::max(result.best_probe_accuracy, probe_now);
      if (cfg.probe_hook) stop_requested = cfg.probe_hook(st.params, st.step, st.episodes);
    }

    MetricsRow row;
    row.step = st.step;
    row.mean_reward = metrics.mean_reward;
    row.probe_accuracy = probe_now;
    row.tool_invocations_per_rollout = metrics.tool_invocations;
    row.branch_cf_fraction = metrics.counterfactual_branch ? 1.0 : 0.0;
    row.episodes = st.episodes;
    result.rows.push_back(row);

    if (checkpoint_dir && cfg.checkpoint_every > 0 && (st.step + 1) % cfg.checkpoint_every == 0) {
      ++st.step;  // persisted step = next step to run
      save_train_checkpoint(*checkpoint_dir + "/checkpoint_" + std::to_string(st.step) + ".json", st);
      --st.step;
    }
    if (stop_requested) {
      ++st.step;
      break;
    }
  }

  probe_now = probe_accuracy(st.params, probes, cfg.reward, catalog, registry, limits);
  result.best_probe_accuracy = std::max(result.best_probe_accuracy, probe_now);
  result.final_probe_accuracy = probe_now;
  result.params = std::move(st.params);
  result.ref = std::move(st.ref);
  result.episodes = st.episodes;
  if (checkpoint_dir) {
    TrainState final_state{result.params, result.ref, st.adam, st.step, st.episodes};
    save_train_checkpoint(*checkpoint_dir + "/checkpoint_final.json", final_state);
  }
  return result;
}

void write_metrics_csv(const std::string& path, std::span<const MetricsRow> rows) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << "step,mean_reward,probe_accuracy,tool_invocations_per_rollout,branch_cf_fraction\n";
  out.precision(17);
  for (const MetricsRow& r : rows) {
    out << r.step << ',' << r.mean_reward << ',' << r.probe_accuracy << ','
        << r.tool_invocations_per_rollout << ',' << r.branch_cf_fraction << '\n';
  }
}

}  // namespace expa
