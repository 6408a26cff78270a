#include <doctest.h>

#include <regex>
#include <set>

#include "expa/sortlab.hpp"
#include "support/bfs_swaps.hpp"

using namespace expa;

namespace {

int cycle_count(const std::vector<int>& perm) {
  std::vector<bool> seen(perm.size(), false);
  int cycles = 0;
  for (std::size_t i = 0; i < perm.size(); ++i) {
    if (seen[i]) continue;
    ++cycles;
    for (std::size_t j = i; !seen[j]; j = perm[j]) seen[j] = true;
  }
  return cycles;
}

// Minimal syntactic DOT check: brace structure, node and edge statements,
// and edge endpoints referring to declared nodes.
bool dot_parses(const std::string& dot) {
  std::istringstream in(dot);
  std::string line;
  if (!std::getline(in, line) || line.rfind("digraph", 0) != 0 || line.find('{') == std::string::npos)
    return false;
  std::set<std::string> declared;
  std::regex node_re(R"(^\s*(n\d+)\s*\[.*\];$)");
  std::regex edge_re(R"(^\s*(n\d+)\s*->\s*(n\d+)\s*\[.*\];$)");
  std::regex attr_re(R"(^\s*node\s*\[.*\];$)");
  bool closed = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line == "}") {
      closed = true;
      continue;
    }
    std::smatch m;
    if (std::regex_match(line, m, node_re)) {
      declared.insert(m[1]);
    } else if (std::regex_match(line, m, edge_re)) {
      if (!declared.count(m[1]) || !declared.count(m[2])) return false;
    } else if (!std::regex_match(line, m, attr_re)) {
      return false;
    }
  }
  return closed;
}

}  // namespace

TEST_CASE("ComparisonSet transitive closure and determination") {
  ComparisonSet r(3);
  CHECK_FALSE(r.fully_determined());
  CHECK_THROWS_AS(r.target_positions(), IndeterminateOrderError);
  r.add(0, 1, true);   // v0 < v1
  r.add(1, 2, true);   // v1 < v2
  CHECK(r.relation(0, 2) == 1);  // transitivity
  CHECK(r.fully_determined());
  CHECK(r.target_positions(true) == std::vector<int>{0, 1, 2});
  CHECK(r.target_positions(false) == std::vector<int>{2, 1, 0});
  CHECK_THROWS_AS(r.add(2, 0, true), std::logic_error);  // contradiction
}

TEST_CASE("min_swap matches the BFS oracle for n <= 6") {
  for (int n = 2; n <= 6; ++n) {
    auto oracle = bfs_oracle::swap_distances(n);
    for (const auto& pattern : all_rank_patterns(n)) {
      auto swaps = min_swap_perm(pattern);
      CHECK(static_cast<int>(swaps.size()) == oracle.at(pattern));
      CHECK(static_cast<int>(swaps.size()) == n - cycle_count(pattern));
      // and the sequence actually sorts
      std::vector<int> p = pattern;
      for (auto [a, b] : swaps) std::swap(p[a], p[b]);
      CHECK(std::is_sorted(p.begin(), p.end()));
    }
  }
}

TEST_CASE("min_swap from comparison results honours the direction") {
  ComparisonSet r(3);
  r.add(0, 1, false);  // v0 > v1
  r.add(1, 2, false);  // v1 > v2
  // descending order: already arranged
  CHECK(min_swap(r, false).empty());
  // ascending: reverse = one swap (0,2)
  auto swaps = min_swap(r, true);
  CHECK(swaps.size() == 1);
}

TEST_CASE("min_swap examples") {
  CHECK(min_swap_perm(std::vector<int>{0, 1, 2, 3}).empty());
  CHECK(min_swap_perm(std::vector<int>{3, 2, 1, 0}).size() == 2);  // two 2-cycles
  CHECK(min_swap_perm(std::vector<int>{1, 2, 3, 0}).size() == 3);  // one 4-cycle
}

TEST_CASE("optimal_swap_stats exact values and BFS cross-check") {
  CHECK(optimal_swap_stats(2) == Rational(1, 2));
  CHECK(optimal_swap_stats(4) == Rational(46, 24));
  for (int n = 2; n <= 6; ++n) {
    auto oracle = bfs_oracle::swap_distances(n);
    BigInt total = 0;
    for (const auto& [perm, d] : oracle) total += d;
    CHECK(optimal_swap_stats(n) == Rational(total, BigInt(oracle.size())));
  }
}

TEST_CASE("optimal comparison trees reach the information-theoretic worst case") {
  DecisionTree t2 = optimal_comparison_tree(2, TreeObjective::WorstCase);
  DecisionTree t3 = optimal_comparison_tree(3, TreeObjective::WorstCase);
  DecisionTree t4 = optimal_comparison_tree(4, TreeObjective::WorstCase);
  CHECK(sort_stats(tree_strategy(t2), 2).worst_comparisons == 1);
  CHECK(sort_stats(tree_strategy(t3), 3).worst_comparisons == 3);
  CHECK(sort_stats(tree_strategy(t4), 4).worst_comparisons == 5);
  // correctness and exact swap optimality at the leaves
  for (int n : {2, 3, 4}) {
    DecisionTree t = optimal_comparison_tree(n, TreeObjective::WorstCase);
    SortStats s = sort_stats(tree_strategy(t), n);
    CHECK(s.accuracy == 1.0);
    CHECK(s.avg_swaps == optimal_swap_stats(n));
    CHECK(t.leaf_count() == static_cast<int>(all_rank_patterns(n).size()));
  }
  // the average-optimal tree respects the entropy bound and beats or ties the
  // worst-case tree on average
  DecisionTree a4 = optimal_comparison_tree(4, TreeObjective::Average);
  SortStats avg_stats = sort_stats(tree_strategy(a4), 4);
  SortStats worst_stats = sort_stats(tree_strategy(t4), 4);
  CHECK(static_cast<double>(avg_stats.avg_comparisons) >= std::log2(24.0));
  CHECK(avg_stats.avg_comparisons <= worst_stats.avg_comparisons);
  CHECK(avg_stats.accuracy == 1.0);
}

TEST_CASE("insertion sort trace examples and averages") {
  CHECK(insertion_sort_trace(std::vector<long long>{1, 2, 3, 4}).comparisons == 3);
  CHECK(insertion_sort_trace(std::vector<long long>{1, 2, 3, 4}).swaps == 0);
  CHECK(insertion_sort_trace(std::vector<long long>{4, 3, 2, 1}).comparisons == 6);
  CHECK(insertion_sort_trace(std::vector<long long>{4, 3, 2, 1}).swaps == 6);
  SortStats s = sort_stats(insertion_strategy(), 4);
  CHECK(s.avg_swaps == Rational(3));  // mean inversions = n(n-1)/4
  CHECK(s.accuracy == 1.0);
}

TEST_CASE("pivot_sort4 sorts every permutation with minimal swaps and <= 5 comparisons") {
  auto strategy = pivot_sort4_strategy();
  for (const auto& pattern : all_rank_patterns(4)) {
    SortOutcome o = strategy(pattern);
    CHECK(o.sorted);
    CHECK(o.swaps == 4 - cycle_count(pattern));
    CHECK(o.comparisons <= 5);
  }
  SortStats s = sort_stats(strategy, 4);
  CHECK(s.accuracy == 1.0);
  CHECK(s.worst_comparisons <= 5);
  CHECK(s.avg_swaps == optimal_swap_stats(4));
  SortStats ins = sort_stats(insertion_strategy(), 4);
  CHECK(s.avg_comparisons < ins.avg_comparisons);  // strictly better on average
}

TEST_CASE("pivot agent round-trips through decision-tree extraction") {
  ActionCatalog catalog = standard_catalog(std::vector<std::string>{"compare", "swap"}, 4);
  EnvRegistry registry(catalog);
  PivotSortAgent agent;
  DecisionTree tree = extract_decision_tree(agent, 4, catalog, registry);
  CHECK(tree.leaf_count() == 24);  // one consistent permutation per leaf
  auto pivot = pivot_sort4_strategy();
  for (const auto& pattern : all_rank_patterns(4)) {
    SortOutcome via_tree = tree_outcome(tree, pattern);
    SortOutcome via_pivot = pivot(pattern);
    CHECK(via_tree.sorted);
    CHECK(via_tree.comparisons == via_pivot.comparisons);  // identical schedule
    CHECK(via_tree.swaps == via_pivot.swaps);
  }
  // the pivot schedule has no redundant comparison to prune
  DecisionTree pruned = prune_redundant(tree);
  CHECK(pruned.node_count() == tree.node_count());
}

TEST_CASE("policy strategy adapter reports environment-level counts") {
  ActionCatalog catalog = standard_catalog(std::vector<std::string>{"compare", "swap"}, 4);
  EnvRegistry registry(catalog);
  PivotSortAgent agent;
  SortStats s = sort_stats(policy_strategy(agent, catalog, registry), 4);
  CHECK(s.accuracy == 1.0);
  CHECK(s.worst_comparisons <= 5);
  CHECK(s.avg_swaps == optimal_swap_stats(4));
}

TEST_CASE("extraction rejects premature swaps") {
  ActionCatalog catalog = standard_catalog(std::vector<std::string>{"compare", "swap"}, 2);
  EnvRegistry registry(catalog);
  // A policy that swaps A,B immediately and stops.
  class SwapFirst final : public PolicyInterface {
   public:
    ActionDistribution distribution(const GlobalState& state, const ActionCatalog& c) override {
      ActionDistribution d;
      d.support = available_actions(state, c);
      d.probs.assign(d.support.size(), 0.0);
      int swp = c.env_id_by_name("swap");
      int want;
      if (state.active_env == 0) {
        bool swapped = false;
        for (std::size_t i = 0; i < state.history.size(); ++i)
          if (state.tags[i] == Provenance::Observation &&
              c.vocab().text(state.history[i]) == "swapped")
            swapped = true;
        want = swapped ? c.vocab().id("done") : c.route_index(swp);
      } else {
        want = c.env_action_index(state.active_env, state.micro[state.active_env - 1].first_pick ? 1 : 0);
      }
      for (std::size_t i = 0; i < d.support.size(); ++i)
        if (d.support[i] == want) d.probs[i] = 1.0;
      return d;
    }
  } policy;
  CHECK_THROWS_AS(extract_decision_tree(policy, 2, catalog, registry), ExtractionError);
  try {
    extract_decision_tree(policy, 2, catalog, registry);
  } catch (const ExtractionError& e) {
    CHECK(e.offending_pattern.size() == 2);  // the failing permutation is surfaced
  }
}

TEST_CASE("prune_redundant removes determined and behaviourally equal nodes") {
  // Hand-built n=2 tree with a duplicated comparison on each path.
  DecisionTree tree;
  tree.n = 2;
  auto leaf_sorted = std::make_unique<DecisionTree::Node>();
  leaf_sorted->leaf = true;
  auto leaf_swap = std::make_unique<DecisionTree::Node>();
  leaf_swap->leaf = true;
  leaf_swap->swaps = {{0, 1}};

  auto dup_less = std::make_unique<DecisionTree::Node>();
  dup_less->cmp_a = 0;
  dup_less->cmp_b = 1;
  dup_less->less = std::move(leaf_sorted);  // outcome determined on this path
  auto dup_greater = std::make_unique<DecisionTree::Node>();
  dup_greater->cmp_a = 0;
  dup_greater->cmp_b = 1;
  dup_greater->greater = std::move(leaf_swap);

  auto root = std::make_unique<DecisionTree::Node>();
  root->cmp_a = 0;
  root->cmp_b = 1;
  root->less = std::move(dup_less);
  root->greater = std::move(dup_greater);
  root->perms = {0, 1};
  tree.root = std::move(root);

  CHECK(tree.node_count() == 5);
  std::vector<int> red = find_redundant_nodes(tree);
  CHECK(red.size() == 2);
  DecisionTree pruned = prune_redundant(tree);
  CHECK(pruned.node_count() == 3);
  SortStats s = sort_stats(tree_strategy(pruned), 2);
  CHECK(s.accuracy == 1.0);
  CHECK(s.worst_comparisons == 1);
  // idempotent
  DecisionTree again = prune_redundant(pruned);
  CHECK(again.node_count() == pruned.node_count());
  CHECK(tree_to_dot(again) == tree_to_dot(pruned));
  // never increases the average comparison count
  CHECK(sort_stats(tree_strategy(pruned), 2).avg_comparisons <=
        sort_stats(tree_strategy(tree), 2).avg_comparisons);
}

TEST_CASE("optimal trees have nothing to prune") {
  DecisionTree t4 = optimal_comparison_tree(4, TreeObjective::WorstCase);
  CHECK(find_redundant_nodes(t4).empty());
  DecisionTree pruned = prune_redundant(t4);
  CHECK(pruned.node_count() == t4.node_count());
}

TEST_CASE("DOT output parses and marks redundant nodes red") {
  DecisionTree t3 = optimal_comparison_tree(3, TreeObjective::WorstCase);
  std::string dot = tree_to_dot(t3);
  CHECK(dot_parses(dot));
  CHECK(dot.find("color=red") == std::string::npos);

  // a tree with a redundant node renders it red
  ActionCatalog catalog = standard_catalog(std::vector<std::string>{"compare", "swap"}, 2);
  DecisionTree tree;
  tree.n = 2;
  auto leaf_sorted = std::make_unique<DecisionTree::Node>();
  leaf_sorted->leaf = true;
  auto dup = std::make_unique<DecisionTree::Node>();
  dup->cmp_a = 0;
  dup->cmp_b = 1;
  dup->less = std::move(leaf_sorted);
  auto leaf_swap = std::make_unique<DecisionTree::Node>();
  leaf_swap->leaf = true;
  leaf_swap->swaps = {{0, 1}};
  auto root = std::make_unique<DecisionTree::Node>();
  root->cmp_a = 0;
  root->cmp_b = 1;
  root->less = std::move(dup);
  root->greater = std::move(leaf_swap);
  root->perms = {0, 1};
  tree.root = std::move(root);
  std::vector<int> red = find_redundant_nodes(tree);
  std::string dot2 = tree_to_dot(tree, red);
  CHECK(dot_parses(dot2));
  CHECK(dot2.find("color=red") != std::string::npos);
}
