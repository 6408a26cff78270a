#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "expa/env_core.hpp"
#include "expa/environments.hpp"

namespace expa {

// Accumulated comparison facts over n positions, closed under transitivity.
// Relations are between hidden VALUES: less(x, y) means position x holds the
// smaller value.
class ComparisonSet {
 public:
  explicit ComparisonSet(int n);
  int size() const { return n_; }
  void add(int x, int y, bool x_less);
  // -1 unknown, 0 greater, 1 less (value at x vs value at y)
  int relation(int x, int y) const;
  bool fully_determined() const;
  // Target position of each element for ascending (or descending) order;
  // throws IndeterminateOrderError unless fully determined.
  std::vector<int> target_positions(bool ascending = true) const;

 private:
  int n_;
  std::vector<signed char> less_;  // less_[x*n+y] == 1 iff value(x) < value(y) known
};

struct IndeterminateOrderError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Minimal transposition sequence sorting the array described by the
// comparison results; length is always n - (number of permutation cycles).
std::vector<std::pair<int, int>> min_swap(const ComparisonSet& relations, bool ascending = true);
// Same, from target positions directly (target[i] = where element i must go).
std::vector<std::pair<int, int>> min_swap_perm(std::span<const int> target_positions);

// Exact average of the minimal swap count over all n! permutations.
Rational optimal_swap_stats(int n);

// All rank patterns of size n in lexicographic order; pattern[i] is the rank
// of the hidden value at position i.
std::vector<std::vector<int>> all_rank_patterns(int n);

// ---- decision trees ----

struct DecisionTree {
  struct Node {
    bool leaf = false;
    int cmp_a = -1, cmp_b = -1;            // internal: positions compared
    std::unique_ptr<Node> less, greater;   // children keyed by outcome
    std::vector<std::pair<int, int>> swaps;  // leaf payload
    std::vector<int> perms;  // consistent rank-pattern indices (into all_rank_patterns(n))
  };
  int n = 0;
  std::unique_ptr<Node> root;

  int node_count() const;
  int leaf_count() const;
};

enum class TreeObjective { WorstCase, Average };

// Exact search over information states (sets of consistent permutations) with
// memoization; leaves sort with min_swap.
DecisionTree optimal_comparison_tree(int n, TreeObjective objective);

// ---- classical baselines ----

struct SortTrace {
  int comparisons = 0;
  int swaps = 0;
};

// Textbook insertion sort with adjacent comparisons and adjacent swaps.
SortTrace insertion_sort_trace(std::span<const long long> values);

// Next comparison of the adaptive pivot strategy for n = 4 given the facts
// accumulated so far; nullopt once the order is fully determined.
std::optional<std::pair<int, int>> pivot_sort4_next_comparison(const ComparisonSet& relations);

// Pivot sorter for four elements: compares A against B and C, resolves the
// rest with the fewest additional checks, finishes with min_swap. Worst case
// five comparisons; swap count always minimal.
SortTrace pivot_sort4(const std::function<bool(int, int)>& compare_fn,
                      const std::function<void(int, int)>& swap_fn);

// ---- extraction from a policy ----

struct ExtractionError : std::runtime_error {
  ExtractionError(const std::string& what, std::vector<int> pattern)
      : std::runtime_error(what), offending_pattern(std::move(pattern)) {}
  std::vector<int> offending_pattern;
};

// Runs the policy greedily on every relative-order class of n hidden values
// (ascending instances), records the comparison at each branch and the
// terminal swaps, and merges the traces into a decision tree. Errors when the
// policy swaps before the order is resolved, compares after swapping, hits an
// ERR outcome, or loops.
DecisionTree extract_decision_tree(PolicyInterface& policy, int n, const ActionCatalog& catalog,
                                   const EnvRegistry& registry, int max_steps = 256);

// A PolicyInterface that plays the pivot_sort4 strategy through the
// compare/swap environments; used for round-trip tests and as a reference
// strategy in stats.
class PivotSortAgent final : public PolicyInterface {
 public:
  ActionDistribution distribution(const GlobalState& state, const ActionCatalog& catalog) override;
};

// Preorder ids of nodes whose removal keeps every consistent permutation's
// leaf actions unchanged (the prunable "red" nodes).
std::vector<int> find_redundant_nodes(const DecisionTree& tree);

// Removes redundant internal nodes until none remain; idempotent and
// accuracy-preserving.
DecisionTree prune_redundant(const DecisionTree& tree);

// ---- statistics ----

struct SortOutcome {
  int comparisons = 0;
  int swaps = 0;
  bool sorted = false;
};
using SortStrategy = std::function<SortOutcome(std::span<const int> rank_pattern)>;

struct SortStats {
  Rational avg_comparisons{0};
  Rational avg_swaps{0};
  int worst_comparisons = 0;
  double accuracy = 0.0;
};

// Exact averages over all n! rank patterns (n <= 8).
SortStats sort_stats(const SortStrategy& strategy, int n);

SortStrategy insertion_strategy();
SortStrategy pivot_sort4_strategy();
SortStrategy tree_strategy(const DecisionTree& tree);
// Greedy rollout of a policy through the compare/swap environments; counts
// completed invocations.
SortStrategy policy_strategy(PolicyInterface& policy, const ActionCatalog& catalog,
                             const EnvRegistry& registry, int max_steps = 256);

// Walks the tree for one pattern: comparisons = path length, swaps from the
// leaf; fails (sorted=false) if a missing branch is hit.
SortOutcome tree_outcome(const DecisionTree& tree, std::span<const int> pattern);

// DOT rendering; nodes whose preorder id is in `red_ids` are colored red.
std::string tree_to_dot(const DecisionTree& tree, std::span<const int> red_ids = {});

}  // namespace expa
