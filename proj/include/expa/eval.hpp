#pragma once

#include <functional>
#include <map>
#include <memory>

#include "expa/optim.hpp"

namespace expa {

struct EvalConfig {
  bool greedy = true;
  std::uint64_t seed = 0;  // sampled decoding only
  int max_steps = 96;
  RewardConfig reward;
  int jobs = 1;
};

struct EvalReport {
  std::string task;
  std::string decoding;  // "greedy" | "sampled"
  int count = 0;
  int successes = 0;
  double score = 0.0;                     // EM for calc tasks, accuracy for sorting
  std::map<int, std::pair<int, int>> strata;  // sorting: min swaps -> (successes, total)

  nlohmann::json to_json() const;
};

using PolicyFactory = std::function<std::unique_ptr<PolicyInterface>()>;

// Runs the policy over a test set; deterministic given (config, seed)
// regardless of the job count. Sorting reports accuracy stratified by the
// instance's minimal swap count; everything else reports exact match.
EvalReport run_eval(const PolicyFactory& make_policy, std::span<const TaskInstance> tasks,
                    const EvalConfig& cfg, const ActionCatalog& catalog,
                    const EnvRegistry& registry);

EvalReport run_eval(const PolicyParameters& params, std::span<const TaskInstance> tasks,
                    const EvalConfig& cfg, const ActionCatalog& catalog,
                    const EnvRegistry& registry);

}  // namespace expa
