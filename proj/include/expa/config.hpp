#pragma once

#include <initializer_list>
#include <string>

#include <nlohmann/json.hpp>

#include "expa/tasks.hpp"

namespace expa {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Strict parsing: unknown keys are rejected so typos cannot silently change a
// run.
void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const std::string& context);

ArithmeticCfg arithmetic_cfg_from_json(const nlohmann::json& j);
CountdownCfg countdown_cfg_from_json(const nlohmann::json& j);
CountCfg count_cfg_from_json(const nlohmann::json& j);
SortingCfg sorting_cfg_from_json(const nlohmann::json& j);
OrderingCfg ordering_cfg_from_json(const nlohmann::json& j);

// Generates one instance of `task` from its generator config.
TaskInstance sample_task(const std::string& task, const nlohmann::json& generator,
                         const ActionCatalog& catalog, Rng& rng);
// Batch variant honoring the config's n_instances.
std::vector<TaskInstance> generate_dataset(const std::string& task, const nlohmann::json& generator,
                                           const ActionCatalog& catalog, Rng& rng);

// Default environment set for a task ("calculator" for the calc family,
// compare+swap for sorting/ordering).
std::vector<std::string> default_envs(const std::string& task);

}  // namespace expa
