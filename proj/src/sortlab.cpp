#include "expa/sortlab.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <sstream>
#include <unordered_map>

namespace expa {

// ---- ComparisonSet ----

ComparisonSet::ComparisonSet(int n) : n_(n), less_(static_cast<std::size_t>(n) * n, 0) {}

int ComparisonSet::relation(int x, int y) const {
  if (less_[x * n_ + y]) return 1;
  if (less_[y * n_ + x]) return 0;
  return -1;
}

void ComparisonSet::add(int x, int y, bool x_less) {
  if (!x_less) std::swap(x, y);
  if (less_[y * n_ + x]) throw std::logic_error("contradictory comparison fact");
  if (less_[x * n_ + y]) return;
  // x < y plus everything below x is below everything above y.
  std::vector<int> below{x}, above{y};
  for (int i = 0; i < n_; ++i) {
    if (less_[i * n_ + x]) below.push_back(i);
    if (less_[y * n_ + i]) above.push_back(i);
  }
  for (int b : below)
    for (int a : above) less_[b * n_ + a] = 1;
}

bool ComparisonSet::fully_determined() const {
  for (int i = 0; i < n_; ++i)
    for (int j = i + 1; j < n_; ++j)
      if (relation(i, j) < 0) return false;
  return true;
}

std::vector<int> ComparisonSet::target_positions(bool ascending) const {
  if (!fully_determined())
    throw IndeterminateOrderError("comparison results do not determine the permutation");
  std::vector<int> target(n_);
  for (int i = 0; i < n_; ++i) {
    int smaller = 0;
    for (int j = 0; j < n_; ++j)
      if (j != i && relation(j, i) == 1) ++smaller;
    target[i] = ascending ? smaller : n_ - 1 - smaller;
  }
  return target;
}

// ---- min_swap ----

std::vector<std::pair<int, int>> min_swap_perm(std::span<const int> target_positions) {
  std::vector<int> perm(target_positions.begin(), target_positions.end());
  std::vector<std::pair<int, int>> swaps;
  for (int i = 0; i < static_cast<int>(perm.size()); ++i) {
    while (perm[i] != i) {
      int j = perm[i];
      std::swap(perm[i], perm[j]);
      swaps.emplace_back(i, j);
    }
  }
  return swaps;
}

std::vector<std::pair<int, int>> min_swap(const ComparisonSet& relations, bool ascending) {
  return min_swap_perm(relations.target_positions(ascending));
}

Rational optimal_swap_stats(int n) {
  if (n < 1 || n > 8) throw std::invalid_argument("optimal_swap_stats supports n in [1,8]");
  std::vector<int> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  BigInt total = 0;
  BigInt count = 0;
  do {
    std::vector<bool> seen(n, false);
    int cycles = 0;
    for (int i = 0; i < n; ++i) {
      if (seen[i]) continue;
      ++cycles;
      for (int j = i; !seen[j]; j = perm[j]) seen[j] = true;
    }
    total += n - cycles;
    ++count;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return Rational(total, count);
}

std::vector<std::vector<int>> all_rank_patterns(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<int>> out;
  do {
    out.push_back(p);
  } while (std::next_permutation(p.begin(), p.end()));
  return out;
}

// ---- decision tree basics ----

namespace {

int count_nodes(const DecisionTree::Node* node) {
  if (!node) return 0;
  return 1 + count_nodes(node->less.get()) + count_nodes(node->greater.get());
}

int count_leaves(const DecisionTree::Node* node) {
  if (!node) return 0;
  if (node->leaf) return 1;
  return count_leaves(node->less.get()) + count_leaves(node->greater.get());
}

}  // namespace

int DecisionTree::node_count() const { return count_nodes(root.get()); }
int DecisionTree::leaf_count() const { return count_leaves(root.get()); }

// ---- optimal comparison trees ----

namespace {

using StateKey = std::vector<std::uint64_t>;

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const {
    std::size_t h = 14695981039346656037ULL;
    for (std::uint64_t w : k) {
      h ^= w;
      h *= 1099511628211ULL;
    }
    return h;
  }
};

StateKey make_key(std::span<const int> perms, int total) {
  StateKey key((total + 63) / 64, 0);
  for (int p : perms) key[p / 64] |= (1ULL << (p % 64));
  return key;
}

struct TreeSearch {
  const std::vector<std::vector<int>>& patterns;
  int n;
  TreeObjective objective;
  // cost (worst-case depth or total comparisons) plus the optimal pair
  std::unordered_map<StateKey, std::pair<long long, int>, StateKeyHash> memo;

  long long solve(const std::vector<int>& perms) {
    if (perms.size() <= 1) return 0;
    StateKey key = make_key(perms, static_cast<int>(patterns.size()));
    auto it = memo.find(key);
    if (it != memo.end()) return it->second.first;
    long long best = std::numeric_limits<long long>::max();
    int best_pair = -1;
    for (int a = 0; a < n; ++a) {
      for (int b = a + 1; b < n; ++b) {
        std::vector<int> less, greater;
        for (int p : perms)
          (patterns[p][a] < patterns[p][b] ? less : greater).push_back(p);
        if (less.empty() || greater.empty()) continue;  // resolved pair
        long long cost;
        if (objective == TreeObjective::WorstCase)
          cost = 1 + std::max(solve(less), solve(greater));
        else
          cost = static_cast<long long>(perms.size()) + solve(less) + solve(greater);
        if (cost < best) {
          best = cost;
          best_pair = a * n + b;
        }
      }
    }
    memo.emplace(std::move(key), std::make_pair(best, best_pair));
    return best;
  }

  std::unique_ptr<DecisionTree::Node> build(const std::vector<int>& perms) {
    auto node = std::make_unique<DecisionTree::Node>();
    node->perms = perms;
    if (perms.size() == 1) {
      node->leaf = true;
      node->swaps = min_swap_perm(patterns[perms[0]]);
      return node;
    }
    solve(perms);
    StateKey key = make_key(perms, static_cast<int>(patterns.size()));
    int pair = memo.at(key).second;
    node->cmp_a = pair / n;
    node->cmp_b = pair % n;
    std::vector<int> less, greater;
    for (int p : perms)
      (patterns[p][node->cmp_a] < patterns[p][node->cmp_b] ? less : greater).push_back(p);
    node->less = build(less);
    node->greater = build(greater);
    return node;
  }
};

}  // namespace

DecisionTree optimal_comparison_tree(int n, TreeObjective objective) {
  if (n < 1 || n > 5) throw std::invalid_argument("optimal_comparison_tree supports n in [1,5]");
  static std::map<int, std::vector<std::vector<int>>> pattern_cache;
  auto it = pattern_cache.find(n);
  if (it == pattern_cache.end()) it = pattern_cache.emplace(n, all_rank_patterns(n)).first;
  TreeSearch search{it->second, n, objective, {}};
  std::vector<int> all(it->second.size());
  std::iota(all.begin(), all.end(), 0);
  DecisionTree tree;
  tree.n = n;
  tree.root = search.build(all);
  return tree;
}

// ---- insertion sort ----

SortTrace insertion_sort_trace(std::span<const long long> values) {
  std::vector<long long> a(values.begin(), values.end());
  SortTrace trace;
  for (std::size_t i = 1; i < a.size(); ++i) {
    for (std::size_t j = i; j > 0; --j) {
      ++trace.comparisons;
      if (a[j - 1] > a[j]) {
        std::swap(a[j - 1], a[j]);
        ++trace.swaps;
      } else {
        break;
      }
    }
  }
  return trace;
}

// ---- pivot sorter ----

std::optional<std::pair<int, int>> pivot_sort4_next_comparison(const ComparisonSet& r) {
  if (r.size() != 4) throw std::invalid_argument("pivot strategy is defined for n = 4");
  // Pivot phase: A vs B, then A vs C.
  if (r.relation(0, 1) < 0) return std::make_pair(0, 1);
  if (r.relation(0, 2) < 0) return std::make_pair(0, 2);
  const bool b_below = r.relation(1, 0) == 1;
  const bool c_below = r.relation(2, 0) == 1;
  if (b_below != c_below) {
    // B and C straddle the pivot: place D against A, then against the one
    // element sharing D's side.
    if (r.relation(0, 3) < 0) return std::make_pair(0, 3);
    const bool d_below = r.relation(3, 0) == 1;
    int peer = d_below ? (b_below ? 1 : 2) : (b_below ? 2 : 1);
    if (r.relation(3, peer) < 0) return std::make_pair(3, peer);
    return std::nullopt;
  }
  // B and C share a side: order the chain A,B,C, then binary-insert D.
  if (r.relation(1, 2) < 0) return std::make_pair(1, 2);
  // Chain x0 < x1 < x2 over {0,1,2}; compare D with the middle, then with the
  // remaining boundary of D's half.
  int chain[3] = {0, 1, 2};
  std::sort(chain, chain + 3, [&r](int a, int b) { return r.relation(a, b) == 1; });
  if (r.relation(3, chain[1]) < 0) return std::make_pair(3, chain[1]);
  if (r.relation(3, chain[1]) == 1) {
    if (r.relation(3, chain[0]) < 0) return std::make_pair(3, chain[0]);
  } else {
    if (r.relation(3, chain[2]) < 0) return std::make_pair(3, chain[2]);
  }
  return std::nullopt;
}

SortTrace pivot_sort4(const std::function<bool(int, int)>& compare_fn,
                      const std::function<void(int, int)>& swap_fn) {
  ComparisonSet r(4);
  SortTrace trace;
  while (auto cmp = pivot_sort4_next_comparison(r)) {
    auto [a, b] = *cmp;
    bool a_less = compare_fn(a, b);
    ++trace.comparisons;
    r.add(a, b, a_less);
  }
  for (auto [a, b] : min_swap(r)) {
    swap_fn(a, b);
    ++trace.swaps;
  }
  return trace;
}

// ---- extraction ----

namespace {

struct ClassTrace {
  std::vector<std::tuple<int, int, bool>> comparisons;  // (first, second, first_less)
  std::vector<std::pair<int, int>> swaps;
};

int label_position(const std::string& label) {
  if (label.size() == 1 && label[0] >= 'A' && label[0] <= 'E') return label[0] - 'A';
  return -1;
}

// Runs the policy greedily on the given ascending Sort instance and parses
// the semantic trace of completed invocations.
ClassTrace trace_policy_on_pattern(PolicyInterface& policy, std::span<const int> pattern,
                                   const ActionCatalog& catalog, const EnvRegistry& registry,
                                   int max_steps) {
  const int n = static_cast<int>(pattern.size());
  const Vocabulary& vocab = catalog.vocab();
  static const char* kLabels[] = {"A", "B", "C", "D", "E"};

  EpisodeSpec episode;
  episode.done_token = vocab.id("done");
  episode.prompt.push_back(vocab.id("sort"));
  for (int i = 0; i < n; ++i) episode.prompt.push_back(vocab.id(kLabels[i]));
  episode.prompt.push_back(vocab.id("ascending"));
  HiddenArray a;
  a.n = n;
  a.ascending = true;
  for (int r : pattern) a.values.push_back(7 + 11 * r);
  episode.world.hidden = a;

  RolloutLimits limits{max_steps};
  Rng rng(3);
  Rollout rollout = run_rollout(policy, episode, catalog, registry, limits, rng, /*greedy=*/true);
  std::vector<int> pat(pattern.begin(), pattern.end());
  if (rollout.terminated_by != TerminationCause::AnswerEmitted)
    throw ExtractionError("policy did not terminate (step limit hit)", pat);

  ClassTrace trace;
  ComparisonSet relations(n);
  bool swapped_yet = false;
  // Replay to observe invocation completions.
  GlobalState state;
  state.world.hidden = a;
  state.micro.resize(catalog.num_envs());
  int pending_env = 0;
  std::vector<int> picks;
  for (const RolloutRecord& rec : rollout.records) {
    const ActionRef& act = catalog.action(rec.action);
    if (act.kind == ActionKind::Route) {
      pending_env = act.env_id;
      picks.clear();
    } else if (act.kind == ActionKind::EnvAction) {
      picks.push_back(label_position(act.label));
    }
    ApplyResult applied = apply_action(state, rec.action, catalog, registry);
    if (!applied.env_exited) continue;
    const std::string& env_name = catalog.env(pending_env).name;
    bool error_outcome = picks.size() != 2 || picks[0] == picks[1] || picks[0] < 0 ||
                         picks[1] < 0 || picks[0] >= n || picks[1] >= n;
    if (error_outcome) throw ExtractionError("invocation ended in ERR", pat);
    if (env_name == "compare") {
      if (swapped_yet) throw ExtractionError("comparison after a swap", pat);
      bool first_less = a.values[picks[0]] < a.values[picks[1]];
      // The hidden array is mutated only by swaps, none yet, so compare
      // against the original values.
      trace.comparisons.emplace_back(picks[0], picks[1], first_less);
      relations.add(picks[0], picks[1], first_less);
    } else if (env_name == "swap") {
      if (!relations.fully_determined())
        throw ExtractionError("swap before the order was resolved", pat);
      swapped_yet = true;
      trace.swaps.emplace_back(picks[0], picks[1]);
    }
  }
  if (!state.world.hidden->sorted())
    throw ExtractionError("policy failed to sort the hidden array", pat);
  return trace;
}

std::unique_ptr<DecisionTree::Node> merge_traces(const std::vector<ClassTrace>& traces,
                                                 const std::vector<std::vector<int>>& patterns,
                                                 std::vector<int> classes, std::size_t depth) {
  auto node = std::make_unique<DecisionTree::Node>();
  node->perms = classes;
  const ClassTrace& first = traces[classes.front()];
  if (first.comparisons.size() == depth) {
    for (int c : classes) {
      if (traces[c].comparisons.size() != depth || c != classes.front())
        throw ExtractionError("inconsistent traces reached one leaf", patterns[c]);
    }
    node->leaf = true;
    node->swaps = first.swaps;
    return node;
  }
  auto [a, b, _] = first.comparisons[depth];
  for (int c : classes) {
    if (traces[c].comparisons.size() <= depth)
      throw ExtractionError("trace ended while siblings keep comparing", patterns[c]);
    auto [ca, cb, co] = traces[c].comparisons[depth];
    if (ca != a || cb != b)
      throw ExtractionError("non-deterministic comparison schedule", patterns[c]);
  }
  node->cmp_a = a;
  node->cmp_b = b;
  std::vector<int> less, greater;
  for (int c : classes)
    (std::get<2>(traces[c].comparisons[depth]) ? less : greater).push_back(c);
  if (!less.empty()) node->less = merge_traces(traces, patterns, std::move(less), depth + 1);
  if (!greater.empty())
    node->greater = merge_traces(traces, patterns, std::move(greater), depth + 1);
  return node;
}

}  // namespace

DecisionTree extract_decision_tree(PolicyInterface& policy, int n, const ActionCatalog& catalog,
                                   const EnvRegistry& registry, int max_steps) {
  std::vector<std::vector<int>> patterns = all_rank_patterns(n);
  std::vector<ClassTrace> traces;
  traces.reserve(patterns.size());
  for (const auto& p : patterns)
    traces.push_back(trace_policy_on_pattern(policy, p, catalog, registry, max_steps));
  std::vector<int> classes(patterns.size());
  std::iota(classes.begin(), classes.end(), 0);
  DecisionTree tree;
  tree.n = n;
  tree.root = merge_traces(traces, patterns, std::move(classes), 0);
  return tree;
}

// ---- pivot agent ----

ActionDistribution PivotSortAgent::distribution(const GlobalState& state,
                                                const ActionCatalog& catalog) {
  const Vocabulary& vocab = catalog.vocab();
  ActionDistribution dist;
  dist.support = available_actions(state, catalog);
  dist.probs.assign(dist.support.size(), 0.0);
  auto choose = [&dist](int action) {
    for (std::size_t i = 0; i < dist.support.size(); ++i)
      if (dist.support[i] == action) {
        dist.probs[i] = 1.0;
        return;
      }
    throw std::logic_error("pivot agent chose an unavailable action");
  };

  const HiddenArray& z = state.world.hidden.value();
  const int n = z.n;
  // Rebuild the relation set from comparison observations ("X < Y").
  ComparisonSet relations(n);
  const TokenId tok_less = vocab.id("<");
  const TokenId tok_greater = vocab.id(">");
  for (std::size_t i = 1; i + 1 < state.history.size(); ++i) {
    if (state.tags[i] != Provenance::Observation) continue;
    if (state.history[i] != tok_less && state.history[i] != tok_greater) continue;
    int x = label_position(vocab.text(state.history[i - 1]));
    int y = label_position(vocab.text(state.history[i + 1]));
    if (x < 0 || y < 0) continue;
    relations.add(x, y, state.history[i] == tok_less);
  }
  // Count completed swaps to know our position in the swap schedule.
  const TokenId tok_swapped = vocab.id("swapped");
  int swaps_done = 0;
  for (std::size_t i = 0; i < state.history.size(); ++i)
    if (state.tags[i] == Provenance::Observation && state.history[i] == tok_swapped) ++swaps_done;

  const int compare_env = catalog.env_id_by_name("compare");
  const int swap_env = catalog.env_id_by_name("swap");
  std::optional<std::pair<int, int>> next_cmp = pivot_sort4_next_comparison(relations);

  if (state.active_env == compare_env) {
    const EnvMicroState& micro = state.micro[state.active_env - 1];
    auto [a, b] = next_cmp.value();
    choose(catalog.env_action_index(compare_env, micro.first_pick ? b : a));
    return dist;
  }
  if (state.active_env == swap_env) {
    const EnvMicroState& micro = state.micro[state.active_env - 1];
    auto swaps = min_swap(relations, z.ascending);
    auto [a, b] = swaps.at(swaps_done);
    choose(catalog.env_action_index(swap_env, micro.first_pick ? b : a));
    return dist;
  }
  if (next_cmp) {
    choose(catalog.route_index(compare_env));
    return dist;
  }
  auto swaps = min_swap(relations, z.ascending);
  if (swaps_done < static_cast<int>(swaps.size())) {
    choose(catalog.route_index(swap_env));
    return dist;
  }
  choose(vocab.id("done"));
  return dist;
}

// ---- pruning ----

namespace {

using Walk = std::optional<std::vector<std::pair<int, int>>>;

Walk walk_tree(const DecisionTree::Node* node, std::span<const int> pattern) {
  while (node) {
    if (node->leaf) return node->swaps;
    node = pattern[node->cmp_a] < pattern[node->cmp_b] ? node->less.get() : node->greater.get();
  }
  return std::nullopt;  // fell off a missing branch
}

void annotate(DecisionTree::Node* node, const std::vector<std::vector<int>>& patterns,
              std::vector<int> perms) {
  node->perms = perms;
  if (node->leaf) return;
  std::vector<int> less, greater;
  for (int p : perms)
    (patterns[p][node->cmp_a] < patterns[p][node->cmp_b] ? less : greater).push_back(p);
  if (node->less) annotate(node->less.get(), patterns, std::move(less));
  if (node->greater) annotate(node->greater.get(), patterns, std::move(greater));
}

bool node_redundant(const DecisionTree::Node* node, const std::vector<std::vector<int>>& patterns) {
  if (node->leaf) return false;
  if (!node->less || !node->greater) return true;  // outcome determined on this path
  for (int p : node->perms) {
    Walk a = walk_tree(node->less.get(), patterns[p]);
    Walk b = walk_tree(node->greater.get(), patterns[p]);
    if (!a || !b || *a != *b) return false;
  }
  return true;
}

// Preorder search for the first redundant node; returns the owning pointer.
std::unique_ptr<DecisionTree::Node>* find_prunable(std::unique_ptr<DecisionTree::Node>* slot,
                                                   const std::vector<std::vector<int>>& patterns) {
  DecisionTree::Node* node = slot->get();
  if (!node || node->leaf) return nullptr;
  if (node_redundant(node, patterns)) return slot;
  if (auto* found = find_prunable(&node->less, patterns)) return found;
  return find_prunable(&node->greater, patterns);
}

std::unique_ptr<DecisionTree::Node> clone_tree(const DecisionTree::Node* node) {
  if (!node) return nullptr;
  auto copy = std::make_unique<DecisionTree::Node>();
  copy->leaf = node->leaf;
  copy->cmp_a = node->cmp_a;
  copy->cmp_b = node->cmp_b;
  copy->swaps = node->swaps;
  copy->perms = node->perms;
  copy->less = clone_tree(node->less.get());
  copy->greater = clone_tree(node->greater.get());
  return copy;
}

void preorder_collect(const DecisionTree::Node* node, std::vector<const DecisionTree::Node*>& out) {
  if (!node) return;
  out.push_back(node);
  preorder_collect(node->less.get(), out);
  preorder_collect(node->greater.get(), out);
}

}  // namespace

DecisionTree prune_redundant(const DecisionTree& tree) {
  const std::vector<std::vector<int>> patterns = all_rank_patterns(tree.n);
  DecisionTree out;
  out.n = tree.n;
  out.root = clone_tree(tree.root.get());
  if (!out.root) return out;
  for (;;) {
    annotate(out.root.get(), patterns, out.root->perms);
    std::unique_ptr<DecisionTree::Node>* slot = find_prunable(&out.root, patterns);
    if (!slot) break;
    DecisionTree::Node* node = slot->get();
    std::unique_ptr<DecisionTree::Node> keep =
        node->less ? std::move(node->less) : std::move(node->greater);
    *slot = std::move(keep);
  }
  annotate(out.root.get(), patterns, out.root->perms);
  return out;
}

std::vector<int> find_redundant_nodes(const DecisionTree& tree) {
  // A node is reported red when the fixpoint pruning pass would remove it:
  // compare preorder node identity against the pruned tree by replaying the
  // pruning and tracking survivors.
  const std::vector<std::vector<int>> patterns = all_rank_patterns(tree.n);
  DecisionTree work;
  work.n = tree.n;
  work.root = clone_tree(tree.root.get());
  // Map each working node to its preorder id in the original tree.
  std::vector<const DecisionTree::Node*> orig_nodes, work_nodes;
  preorder_collect(tree.root.get(), orig_nodes);
  preorder_collect(work.root.get(), work_nodes);
  std::unordered_map<const DecisionTree::Node*, int> id_of;
  for (std::size_t i = 0; i < work_nodes.size(); ++i)
    id_of[work_nodes[i]] = static_cast<int>(i);
  std::vector<int> removed;
  for (;;) {
    annotate(work.root.get(), patterns, work.root->perms);
    std::unique_ptr<DecisionTree::Node>* slot = find_prunable(&work.root, patterns);
    if (!slot) break;
    removed.push_back(id_of.at(slot->get()));
    DecisionTree::Node* node = slot->get();
    std::unique_ptr<DecisionTree::Node> keep =
        node->less ? std::move(node->less) : std::move(node->greater);
    *slot = std::move(keep);
  }
  std::sort(removed.begin(), removed.end());
  return removed;
}

// ---- statistics ----

SortOutcome tree_outcome(const DecisionTree& tree, std::span<const int> pattern) {
  SortOutcome out;
  const DecisionTree::Node* node = tree.root.get();
  while (node && !node->leaf) {
    ++out.comparisons;
    node = pattern[node->cmp_a] < pattern[node->cmp_b] ? node->less.get() : node->greater.get();
  }
  if (!node) return out;  // missing branch: unsorted
  std::vector<int> p(pattern.begin(), pattern.end());
  for (auto [a, b] : node->swaps) {
    std::swap(p[a], p[b]);
    ++out.swaps;
  }
  out.sorted = std::is_sorted(p.begin(), p.end());
  return out;
}

SortStats sort_stats(const SortStrategy& strategy, int n) {
  if (n < 2 || n > 8) throw std::invalid_argument("sort_stats supports n in [2,8]");
  SortStats stats;
  BigInt total_cmp = 0, total_swap = 0, count = 0;
  long long sorted_count = 0;
  for (const auto& pattern : all_rank_patterns(n)) {
    SortOutcome o = strategy(pattern);
    total_cmp += o.comparisons;
    total_swap += o.swaps;
    stats.worst_comparisons = std::max(stats.worst_comparisons, o.comparisons);
    if (o.sorted) ++sorted_count;
    ++count;
  }
  stats.avg_comparisons = Rational(total_cmp, count);
  stats.avg_swaps = Rational(total_swap, count);
  stats.accuracy = static_cast<double>(sorted_count) / static_cast<double>(count);
  return stats;
}

SortStrategy insertion_strategy() {
  return [](std::span<const int> pattern) {
    std::vector<long long> values(pattern.begin(), pattern.end());
    SortTrace t = insertion_sort_trace(values);
    return SortOutcome{t.comparisons, t.swaps, true};
  };
}

SortStrategy pivot_sort4_strategy() {
  return [](std::span<const int> pattern) {
    std::vector<int> p(pattern.begin(), pattern.end());
    SortTrace t = pivot_sort4([&p](int a, int b) { return p[a] < p[b]; },
                              [&p](int a, int b) { std::swap(p[a], p[b]); });
    return SortOutcome{t.comparisons, t.swaps, std::is_sorted(p.begin(), p.end())};
  };
}

SortStrategy tree_strategy(const DecisionTree& tree) {
  return [&tree](std::span<const int> pattern) { return tree_outcome(tree, pattern); };
}

SortStrategy policy_strategy(PolicyInterface& policy, const ActionCatalog& catalog,
                             const EnvRegistry& registry, int max_steps) {
  return [&policy, &catalog, &registry, max_steps](std::span<const int> pattern) {
    const int n = static_cast<int>(pattern.size());
    const Vocabulary& vocab = catalog.vocab();
    static const char* kLabels[] = {"A", "B", "C", "D", "E"};
    EpisodeSpec episode;
    episode.done_token = vocab.id("done");
    episode.prompt.push_back(vocab.id("sort"));
    for (int i = 0; i < n; ++i) episode.prompt.push_back(vocab.id(kLabels[i]));
    episode.prompt.push_back(vocab.id("ascending"));
    HiddenArray a;
    a.n = n;
    a.ascending = true;
    for (int r : pattern) a.values.push_back(7 + 11 * r);
    episode.world.hidden = a;
    RolloutLimits limits{max_steps};
    Rng rng(5);
    Rollout rollout = run_rollout(policy, episode, catalog, registry, limits, rng, /*greedy=*/true);
    SortOutcome out;
    // Count completed invocations by replay.
    GlobalState state;
    state.world.hidden = a;
    state.micro.resize(catalog.num_envs());
    for (const RolloutRecord& rec : rollout.records) {
      ApplyResult applied = apply_action(state, rec.action, catalog, registry);
      if (applied.env_exited) {
        const std::string& name = catalog.env(catalog.action(rec.action).env_id).name;
        if (name == "compare") ++out.comparisons;
        if (name == "swap") ++out.swaps;
      }
    }
    out.sorted = state.world.hidden->sorted();
    return out;
  };
}

// ---- DOT export ----

std::string tree_to_dot(const DecisionTree& tree, std::span<const int> red_ids) {
  std::ostringstream out;
  out << "digraph decision_tree {\n  node [shape=box];\n";
  std::vector<const DecisionTree::Node*> nodes;
  preorder_collect(tree.root.get(), nodes);
  std::unordered_map<const DecisionTree::Node*, int> id_of;
  for (std::size_t i = 0; i < nodes.size(); ++i) id_of[nodes[i]] = static_cast<int>(i);
  static const char* kLabels[] = {"A", "B", "C", "D", "E"};
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const DecisionTree::Node* node = nodes[i];
    out << "  n" << i << " [label=\"";
    if (node->leaf) {
      if (node->swaps.empty()) {
        out << "no swaps";
      } else {
        for (std::size_t s = 0; s < node->swaps.size(); ++s) {
          if (s) out << "; ";
          out << "swap " << kLabels[node->swaps[s].first] << "," << kLabels[node->swaps[s].second];
        }
      }
      out << "\" shape=ellipse";
    } else {
      out << kLabels[node->cmp_a] << "?" << kLabels[node->cmp_b] << "\"";
      if (std::find(red_ids.begin(), red_ids.end(), static_cast<int>(i)) != red_ids.end())
        out << " color=red fontcolor=red";
    }
    out << "];\n";
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const DecisionTree::Node* node = nodes[i];
    if (node->leaf) continue;
    if (node->less)
      out << "  n" << i << " -> n" << id_of.at(node->less.get()) << " [label=\"<\"];\n";
    if (node->greater)
      out << "  n" << i << " -> n" << id_of.at(node->greater.get()) << " [label=\">\"];\n";
  }
  out << "}\n";
  return out.str();
}

}  // namespace expa
