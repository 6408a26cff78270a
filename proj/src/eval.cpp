#include "expa/eval.hpp"

#include <thread>

namespace expa {

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["task"] = task;
  j["decoding"] = decoding;
  j["count"] = count;
  j["successes"] = successes;
  j["score"] = score;
  if (!strata.empty()) {
    nlohmann::json s = nlohmann::json::object();
    for (const auto& [min_swaps, counts] : strata) {
      s[std::to_string(min_swaps)] = {
          {"successes", counts.first},
          {"total", counts.second},
          {"accuracy", counts.second ? static_cast<double>(counts.first) / counts.second : 0.0}};
    }
    j["by_min_swaps"] = std::move(s);
  }
  return j;
}

EvalReport run_eval(const PolicyFactory& make_policy, std::span<const TaskInstance> tasks,
                    const EvalConfig& cfg, const ActionCatalog& catalog,
                    const EnvRegistry& registry) {
  EvalReport report;
  report.decoding = cfg.greedy ? "greedy" : "sampled";
  report.count = static_cast<int>(tasks.size());
  if (tasks.empty()) return report;
  report.task = task_kind_name(tasks.front().kind);

  RolloutLimits limits{cfg.max_steps};
  std::vector<char> success(tasks.size(), 0);

  auto worker = [&](std::size_t begin, std::size_t end) {
    std::unique_ptr<PolicyInterface> policy = make_policy();
    for (std::size_t i = begin; i < end; ++i) {
      const TaskInstance& task = tasks[i];
      EpisodeSpec episode = make_episode(task, cfg.reward, catalog, registry);
      Rng rng(Rng::derive(cfg.seed, i));  // per-instance stream: job count has no effect
      Rollout r = run_rollout(*policy, episode, catalog, registry, limits, rng, cfg.greedy);
      bool ok = task.kind == TaskKind::Sort ? r.final_state.world.hidden->sorted()
                                            : reward_em(r, task, catalog) == 1.0;
      success[i] = ok ? 1 : 0;
    }
  };

  const int jobs = std::max(1, cfg.jobs);
  if (jobs == 1) {
    worker(0, tasks.size());
  } else {
    std::vector<std::thread> threads;
    const std::size_t chunk = (tasks.size() + jobs - 1) / jobs;
    for (int t = 0; t < jobs; ++t) {
      std::size_t begin = t * chunk;
      std::size_t end = std::min(tasks.size(), begin + chunk);
      if (begin >= end) break;
      threads.emplace_back(worker, begin, end);
    }
    for (auto& th : threads) th.join();
  }

  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (success[i]) ++report.successes;
    if (tasks[i].kind == TaskKind::Sort) {
      int bucket = min_swaps_needed(*tasks[i].hidden);
      auto& [ok, total] = report.strata[bucket];
      if (success[i]) ++ok;
      ++total;
    }
  }
  report.score = static_cast<double>(report.successes) / static_cast<double>(report.count);
  return report;
}

EvalReport run_eval(const PolicyParameters& params, std::span<const TaskInstance> tasks,
                    const EvalConfig& cfg, const ActionCatalog& catalog,
                    const EnvRegistry& registry) {
  return run_eval([&params]() { return std::make_unique<NeuralPolicy>(params); }, tasks, cfg,
                  catalog, registry);
}

}  // namespace expa
