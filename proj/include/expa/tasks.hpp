#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "expa/env_core.hpp"

namespace expa {

enum class TaskKind { Arithmetic, Countdown, Count, Sort, Order };

const char* task_kind_name(TaskKind k);
TaskKind task_kind_from_name(const std::string& name);

struct TaskMetadata {
  std::vector<long long> numbers;  // expression literals (countdown: shuffled)
  int operand_count = 0;
  bool paraphrased = false;
  int template_id = -1;
  std::string expression;  // spaced source expression, e.g. "12 + 7 * 2"
  long long target_value = 0;
  int n = 0;                // sort/order item count
  std::string subkind;      // ordering dataset: "order" | "compare"
};

struct TaskInstance {
  TaskKind kind = TaskKind::Arithmetic;
  std::vector<TokenId> prompt;
  std::vector<TokenId> target;  // canonical answer tokens (calc/order tasks)
  std::optional<HiddenArray> hidden;
  TaskMetadata metadata;
  std::uint64_t seed = 0;
};

struct RewardConfig {
  double lambda_cmp = 0.05;
  double lambda_swap = 0.05;
  double floor = -1.0;
};

// ---- generators (Dataset Details recipes) ----

struct ArithmeticCfg {
  int max_digits = 5;
  int min_ops = 2;
  int max_ops = 4;
  double paraphrase_fraction = 0.1;
  int n_instances = 1000;
};

struct CountdownCfg {
  int max_digits = 4;
  int max_ops = 3;
  int n_instances = 20000;
};

struct CountCfg {
  int max_len = 20;
  int n_instances = 1000;
};

struct SortingCfg {
  std::vector<double> mix = {0.1, 0.2, 0.3, 0.4};  // fractions for n = 2..5
  long long value_lo = 0;
  long long value_hi = 99;
  int n_instances = 1000;
};

struct OrderingCfg {
  double order_fraction = 0.95;                       // rest: single compare
  std::vector<double> size_mix = {0.3, 0.3, 0.2, 0.2};  // n = 2..5
  long long value_lo = 0;
  long long value_hi = 99;
  int n_instances = 1000;
};

std::vector<TaskInstance> gen_arithmetic(const ArithmeticCfg&, const ActionCatalog&, Rng&);
std::vector<TaskInstance> gen_countdown(const CountdownCfg&, const ActionCatalog&, Rng&);
std::vector<TaskInstance> gen_count(const CountCfg&, const ActionCatalog&, Rng&);
std::vector<TaskInstance> gen_sorting(const SortingCfg&, const ActionCatalog&, Rng&);
std::vector<TaskInstance> gen_ordering(const OrderingCfg&, const ActionCatalog&, Rng&);

// ---- rewards ----

// Exact-match terminal reward: the agent-emitted span between the last
// "answer" marker and episode end (terminator excluded), token-exact against
// the canonical target; countdown answers go through the expression check.
double reward_em(const Rollout& rollout, const TaskInstance& task, const ActionCatalog& catalog);

// true iff the expression parses, uses exactly the given number multiset, and
// evaluates to the target.
bool verify_countdown_answer(std::span<const std::string> expr_tokens,
                             std::span<const long long> numbers, long long target);

struct SortingInteractionCounts {
  int comparisons = 0;  // completed compare invocations (incl. ERR outcomes)
  int swaps = 0;        // completed swap invocations (incl. ERR outcomes)
};
SortingInteractionCounts count_sort_interactions(const Rollout& rollout, const TaskInstance& task,
                                                 const ActionCatalog& catalog,
                                                 const EnvRegistry& registry);

// Worst-case optimal comparison budget (1, 3, 5, 7 for n = 2..5).
int comparison_budget(int n);
// Minimal swaps for an instance: n minus the cycle count of the permutation
// taking the initial array to the requested order.
int min_swaps_needed(const HiddenArray& a);

double reward_sorting(const Rollout& rollout, const TaskInstance& task, const RewardConfig& cfg,
                      const ActionCatalog& catalog, const EnvRegistry& registry);

// Bundles prompt, latent world and terminal reward hook for the rollout
// driver. The catalog and registry must outlive the returned spec.
EpisodeSpec make_episode(const TaskInstance& task, const RewardConfig& cfg,
                         const ActionCatalog& catalog, const EnvRegistry& registry);

// ---- serialization ----

nlohmann::json task_to_json(const TaskInstance&, const ActionCatalog&);
TaskInstance task_from_json(const nlohmann::json&, const ActionCatalog&);
void write_dataset_jsonl(const std::string& path, std::span<const TaskInstance>,
                         const ActionCatalog&);
std::vector<TaskInstance> read_dataset_jsonl(const std::string& path, const ActionCatalog&);

// ---- paraphrase machinery (exposed for the round-trip tests) ----

std::vector<std::string> number_to_words(long long v);  // 0..99999, canonical English
long long words_to_number(std::span<const std::string> words, std::size_t& pos);
std::vector<std::string> expression_to_words(const std::string& spaced_expr);
std::string words_to_expression(std::span<const std::string> words);
int paraphrase_template_count();
std::vector<std::string> apply_template(int id, std::span<const std::string> expr_words);
// Inverts apply_template + expression_to_words; returns the spaced expression.
std::string detemplate(std::span<const std::string> prompt_words);

// ---- language pretraining corpora ----

struct CorpusCfg {
  double demo_fraction = 0.2;  // calc tasks: fraction of full tool-use traces
  int min_interactions = 1;    // sorting traces: random invocation count range
  int max_interactions = 4;
};

// One token sequence per instance, teaching token grammar and observation
// formats (full histories as the policy would see them).
std::vector<std::vector<TokenId>> build_pretrain_corpus(std::span<const TaskInstance> instances,
                                                        const CorpusCfg& cfg,
                                                        const ActionCatalog& catalog,
                                                        const EnvRegistry& registry, Rng& rng);

}  // namespace expa
