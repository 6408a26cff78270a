#include "expa/config.hpp"

#include <algorithm>

namespace expa {

void require_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                  const std::string& context) {
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&key](const char* k) { return key == k; }) == allowed.end())
      throw ConfigError(context + ": unknown key '" + key + "'");
  }
}

namespace {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  return j.at(key).get<T>();
}

}  // namespace

ArithmeticCfg arithmetic_cfg_from_json(const nlohmann::json& j) {
  require_keys(j, {"max_digits", "min_ops", "max_ops", "paraphrase_fraction", "n_instances"},
               "arithmetic generator");
  ArithmeticCfg cfg;
  cfg.max_digits = get_or(j, "max_digits", cfg.max_digits);
  cfg.min_ops = get_or(j, "min_ops", cfg.min_ops);
  cfg.max_ops = get_or(j, "max_ops", cfg.max_ops);
  cfg.paraphrase_fraction = get_or(j, "paraphrase_fraction", cfg.paraphrase_fraction);
  cfg.n_instances = get_or(j, "n_instances", cfg.n_instances);
  return cfg;
}

CountdownCfg countdown_cfg_from_json(const nlohmann::json& j) {
  require_keys(j, {"max_digits", "max_ops", "n_instances"}, "countdown generator");
  CountdownCfg cfg;
  cfg.max_digits = get_or(j, "max_digits", cfg.max_digits);
  cfg.max_ops = get_or(j, "max_ops", cfg.max_ops);
  cfg.n_instances = get_or(j, "n_instances", cfg.n_instances);
  return cfg;
}

CountCfg count_cfg_from_json(const nlohmann::json& j) {
  require_keys(j, {"max_len", "n_instances"}, "count generator");
  CountCfg cfg;
  cfg.max_len = get_or(j, "max_len", cfg.max_len);
  cfg.n_instances = get_or(j, "n_instances", cfg.n_instances);
  return cfg;
}

SortingCfg sorting_cfg_from_json(const nlohmann::json& j) {
  require_keys(j, {"mix", "value_lo", "value_hi", "n_instances"}, "sorting generator");
  SortingCfg cfg;
  if (j.contains("mix")) cfg.mix = j.at("mix").get<std::vector<double>>();
  if (cfg.mix.size() != 4) throw ConfigError("sorting mix must list fractions for n = 2..5");
  double total = cfg.mix[0] + cfg.mix[1] + cfg.mix[2] + cfg.mix[3];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("sorting mix fractions must sum to 1");
  cfg.value_lo = get_or(j, "value_lo", cfg.value_lo);
  cfg.value_hi = get_or(j, "value_hi", cfg.value_hi);
  cfg.n_instances = get_or(j, "n_instances", cfg.n_instances);
  return cfg;
}

OrderingCfg ordering_cfg_from_json(const nlohmann::json& j) {
  require_keys(j, {"order_fraction", "size_mix", "value_lo", "value_hi", "n_instances"},
               "ordering generator");
  OrderingCfg cfg;
  cfg.order_fraction = get_or(j, "order_fraction", cfg.order_fraction);
  if (j.contains("size_mix")) cfg.size_mix = j.at("size_mix").get<std::vector<double>>();
  if (cfg.size_mix.size() != 4) throw ConfigError("ordering size_mix must list fractions for n = 2..5");
  double total = cfg.size_mix[0] + cfg.size_mix[1] + cfg.size_mix[2] + cfg.size_mix[3];
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("ordering size_mix fractions must sum to 1");
  cfg.value_lo = get_or(j, "value_lo", cfg.value_lo);
  cfg.value_hi = get_or(j, "value_hi", cfg.value_hi);
  cfg.n_instances = get_or(j, "n_instances", cfg.n_instances);
  return cfg;
}

std::vector<TaskInstance> generate_dataset(const std::string& task, const nlohmann::json& generator,
                                           const ActionCatalog& catalog, Rng& rng) {
  if (task == "arithmetic") return gen_arithmetic(arithmetic_cfg_from_json(generator), catalog, rng);
  if (task == "countdown") return gen_countdown(countdown_cfg_from_json(generator), catalog, rng);
  if (task == "count") return gen_count(count_cfg_from_json(generator), catalog, rng);
  if (task == "sorting") return gen_sorting(sorting_cfg_from_json(generator), catalog, rng);
  if (task == "ordering") return gen_ordering(ordering_cfg_from_json(generator), catalog, rng);
  throw ConfigError("unknown task '" + task + "'");
}

TaskInstance sample_task(const std::string& task, const nlohmann::json& generator,
                         const ActionCatalog& catalog, Rng& rng) {
  nlohmann::json one = generator;
  one["n_instances"] = 1;
  return generate_dataset(task, one, catalog, rng).at(0);
}

std::vector<std::string> default_envs(const std::string& task) {
  if (task == "sorting" || task == "ordering") return {"compare", "swap"};
  return {"calculator"};
}

}  // namespace expa
