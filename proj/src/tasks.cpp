#include "expa/tasks.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace expa {

const char* task_kind_name(TaskKind k) {
  switch (k) {
    case TaskKind::Arithmetic: return "arithmetic";
    case TaskKind::Countdown: return "countdown";
    case TaskKind::Count: return "count";
    case TaskKind::Sort: return "sort";
    case TaskKind::Order: return "order";
  }
  return "unknown";
}

TaskKind task_kind_from_name(const std::string& name) {
  if (name == "arithmetic") return TaskKind::Arithmetic;
  if (name == "countdown") return TaskKind::Countdown;
  if (name == "count") return TaskKind::Count;
  if (name == "sort") return TaskKind::Sort;
  if (name == "order") return TaskKind::Order;
  throw std::invalid_argument("unknown task kind: '" + name + "'");
}

// ---------- English number words ----------

namespace {

const char* kOnes[] = {"zero", "one", "two",   "three", "four",    "five",    "six",
                       "seven", "eight", "nine", "ten",   "eleven",  "twelve",  "thirteen",
                       "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen"};
const char* kTens[] = {"", "", "twenty", "thirty", "forty", "fifty", "sixty", "seventy", "eighty", "ninety"};

void words_below_thousand(long long v, std::vector<std::string>& out) {
  if (v >= 100) {
    out.push_back(kOnes[v / 100]);
    out.push_back("hundred");
    v %= 100;
    if (v == 0) return;
  }
  if (v >= 20) {
    out.push_back(kTens[v / 10]);
    if (v % 10) out.push_back(kOnes[v % 10]);
  } else if (v > 0 || out.empty()) {
    out.push_back(kOnes[v]);
  }
}

int ones_value(const std::string& w) {
  for (int i = 0; i < 20; ++i)
    if (w == kOnes[i]) return i;
  return -1;
}

int tens_value(const std::string& w) {
  for (int i = 2; i <= 9; ++i)
    if (w == kTens[i]) return i * 10;
  return -1;
}

bool is_number_word(const std::string& w) {
  return ones_value(w) >= 0 || tens_value(w) >= 0 || w == "hundred" || w == "thousand";
}

}  // namespace

std::vector<std::string> number_to_words(long long v) {
  if (v < 0 || v > 99999) throw std::invalid_argument("number word rendering limited to 0..99999");
  std::vector<std::string> out;
  if (v >= 1000) {
    words_below_thousand(v / 1000, out);
    out.push_back("thousand");
    v %= 1000;
    if (v == 0) return out;
  }
  words_below_thousand(v, out);
  return out;
}

long long words_to_number(std::span<const std::string> words, std::size_t& pos) {
  long long total = 0;
  long long current = 0;
  bool any = false;
  while (pos < words.size()) {
    const std::string& w = words[pos];
    int v1 = ones_value(w);
    int v10 = tens_value(w);
    if (v1 >= 0) {
      current += v1;
      any = true;
      ++pos;
    } else if (v10 >= 0) {
      current += v10;
      any = true;
      ++pos;
    } else if (w == "hundred" && any) {
      current *= 100;
      ++pos;
    } else if (w == "thousand" && any) {
      total += current * 1000;
      current = 0;
      ++pos;
    } else {
      break;
    }
  }
  if (!any) throw std::invalid_argument("expected a number word");
  return total + current;
}

std::vector<std::string> expression_to_words(const std::string& spaced_expr) {
  std::istringstream in(spaced_expr);
  std::string tok;
  std::vector<std::string> out;
  while (in >> tok) {
    if (tok == "+")
      out.push_back("plus");
    else if (tok == "-")
      out.push_back("minus");
    else if (tok == "*")
      out.push_back("times");
    else if (tok == "/") {
      out.push_back("divided");
      out.push_back("by");
    } else {
      for (const std::string& w : number_to_words(std::stoll(tok))) out.push_back(w);
    }
  }
  return out;
}

std::string words_to_expression(std::span<const std::string> words) {
  std::string out;
  std::size_t pos = 0;
  auto emit = [&out](const std::string& s) {
    if (!out.empty()) out += ' ';
    out += s;
  };
  while (pos < words.size()) {
    const std::string& w = words[pos];
    if (w == "plus") {
      emit("+");
      ++pos;
    } else if (w == "minus") {
      emit("-");
      ++pos;
    } else if (w == "times") {
      emit("*");
      ++pos;
    } else if (w == "divided") {
      if (pos + 1 >= words.size() || words[pos + 1] != "by")
        throw std::invalid_argument("'divided' without 'by'");
      emit("/");
      pos += 2;
    } else {
      emit(std::to_string(words_to_number(words, pos)));
    }
  }
  return out;
}

// ---------- paraphrase templates ----------

namespace {

struct TemplateFrame {
  std::vector<std::string> prefix;
  std::vector<std::string> suffix;
};

const std::vector<TemplateFrame>& frames() {
  static const std::vector<TemplateFrame> f = {
      {{"what", "is"}, {}},
      {{"compute"}, {}},
      {{"find"}, {}},
      {{"what", "is", "the", "value", "of"}, {}},
      {{"evaluate"}, {}},
      {{"the", "value", "of"}, {"is", "what"}},
      {{"find", "the", "result", "of"}, {}},
      {{"what", "is", "the", "result", "of"}, {}},
      {{"compute", "the", "value", "of"}, {}},
      {{}, {"equals", "what"}},
  };
  return f;
}

}  // namespace

int paraphrase_template_count() { return static_cast<int>(frames().size()); }

std::vector<std::string> apply_template(int id, std::span<const std::string> expr_words) {
  const TemplateFrame& f = frames().at(id);
  std::vector<std::string> out(f.prefix);
  out.insert(out.end(), expr_words.begin(), expr_words.end());
  out.insert(out.end(), f.suffix.begin(), f.suffix.end());
  return out;
}

std::string detemplate(std::span<const std::string> prompt_words) {
  // Longest prefix first so "what is the value of" wins over "what is".
  std::vector<int> order(frames().size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [](int a, int b) {
    return frames()[a].prefix.size() > frames()[b].prefix.size();
  });
  for (int id : order) {
    const TemplateFrame& f = frames()[id];
    if (prompt_words.size() < f.prefix.size() + f.suffix.size() + 1) continue;
    bool ok = true;
    for (std::size_t i = 0; i < f.prefix.size() && ok; ++i) ok = prompt_words[i] == f.prefix[i];
    for (std::size_t i = 0; i < f.suffix.size() && ok; ++i)
      ok = prompt_words[prompt_words.size() - f.suffix.size() + i] == f.suffix[i];
    if (!ok) continue;
    std::vector<std::string> middle(prompt_words.begin() + f.prefix.size(),
                                    prompt_words.end() - f.suffix.size());
    if (middle.empty() || !is_number_word(middle.front())) continue;
    return words_to_expression(middle);
  }
  throw std::invalid_argument("prompt does not match any paraphrase template");
}

// ---------- expression builder ----------

namespace {

long long pow10ll(int d) {
  long long v = 1;
  while (d-- > 0) v *= 10;
  return v;
}

long long sample_literal(int max_digits, Rng& rng) {
  int d = rng.uniform_int(1, max_digits);
  long long lo = d == 1 ? 0 : pow10ll(d - 1);
  long long hi = pow10ll(d) - 1;
  return rng.uniform_int(static_cast<int>(lo), static_cast<int>(hi));
}

// Random divisor of `term` with at most max_digits digits, assembled from a
// partial trial-division factorization (primes <= 1024 plus the cofactor when
// it is small enough).
long long random_divisor(const BigInt& term, int max_digits, Rng& rng) {
  long long limit = pow10ll(max_digits) - 1;
  if (term == 0) {
    long long v = 0;
    while (v == 0) v = sample_literal(max_digits, rng);
    return v;
  }
  std::vector<std::pair<long long, int>> factors;
  BigInt rest = term;
  for (long long p = 2; p <= 1024 && rest > 1; ++p) {
    int e = 0;
    while (rest % p == 0) {
      rest /= p;
      ++e;
    }
    if (e > 0) factors.emplace_back(p, e);
  }
  if (rest > 1 && rest <= limit) factors.emplace_back(static_cast<long long>(rest), 1);
  rng.shuffle(factors);
  long long divisor = 1;
  for (auto [p, e] : factors) {
    int k = rng.uniform_int(0, e);
    for (int i = 0; i < k; ++i) {
      if (divisor > limit / p) break;
      divisor *= p;
    }
  }
  return divisor;
}

struct BuiltExpression {
  std::vector<long long> literals;
  std::string spaced;
  BigInt value;
};

BuiltExpression build_expression(int n_ops, int max_digits, Rng& rng) {
  BuiltExpression e;
  auto push = [&e](const std::string& s) {
    if (!e.spaced.empty()) e.spaced += ' ';
    e.spaced += s;
  };
  long long first = sample_literal(max_digits, rng);
  e.literals.push_back(first);
  push(std::to_string(first));
  BigInt sum = 0;
  BigInt term = first;
  int sign = 1;
  for (int i = 0; i < n_ops; ++i) {
    int op = rng.uniform_int(0, 3);  // + - * /
    long long v;
    if (op == 3) {
      v = random_divisor(term, max_digits, rng);
      term /= v;
    } else if (op == 2) {
      v = sample_literal(max_digits, rng);
      term *= v;
    } else {
      sum += sign * term;
      sign = (op == 0) ? 1 : -1;
      v = sample_literal(max_digits, rng);
      term = v;
    }
    static const char* kOps[] = {"+", "-", "*", "/"};
    push(kOps[op]);
    push(std::to_string(v));
    e.literals.push_back(v);
  }
  sum += sign * term;
  e.value = sum;
  return e;
}

void append_tokens(std::vector<TokenId>& out, const std::vector<std::string>& words,
                   const Vocabulary& vocab) {
  for (const std::string& w : words) out.push_back(vocab.id(w));
}

void append_spaced(std::vector<TokenId>& out, const std::string& spaced, const Vocabulary& vocab) {
  std::istringstream in(spaced);
  std::string tok;
  while (in >> tok) {
    if (tok.size() > 1 && (tok[0] == '-' || std::isdigit(static_cast<unsigned char>(tok[0])))) {
      // multi-digit literal -> digit tokens
      std::size_t i = 0;
      if (tok[0] == '-') {
        out.push_back(vocab.id("-"));
        i = 1;
      }
      for (; i < tok.size(); ++i) out.push_back(vocab.id(std::string(1, tok[i])));
    } else {
      out.push_back(vocab.id(tok));
    }
  }
}

std::vector<TokenId> render_value_tokens(const BigInt& v, const Vocabulary& vocab) {
  std::vector<TokenId> out;
  for (const std::string& t : render_number(Rational(v))) out.push_back(vocab.id(t));
  return out;
}

HiddenArray random_hidden(int n, long long lo, long long hi, bool ascending, Rng& rng) {
  if (hi - lo + 1 < n) throw std::invalid_argument("value range too small for distinct values");
  HiddenArray a;
  a.n = n;
  a.ascending = ascending;
  while (static_cast<int>(a.values.size()) < n) {
    long long v = lo + static_cast<long long>(rng.uniform(static_cast<std::uint64_t>(hi - lo + 1)));
    if (std::find(a.values.begin(), a.values.end(), v) == a.values.end()) a.values.push_back(v);
  }
  return a;
}

int sample_mix(std::span<const double> mix, Rng& rng) {
  double total = 0;
  for (double f : mix) total += f;
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("mix fractions must sum to 1");
  return static_cast<int>(rng.discrete(mix));
}

const char* kLabels[] = {"A", "B", "C", "D", "E"};

}  // namespace

// ---------- generators ----------

std::vector<TaskInstance> gen_arithmetic(const ArithmeticCfg& cfg, const ActionCatalog& catalog,
                                         Rng& rng) {
  if (cfg.min_ops < 1 || cfg.min_ops > cfg.max_ops)
    throw std::invalid_argument("need 1 <= min_ops <= max_ops");
  const Vocabulary& vocab = catalog.vocab();
  std::vector<TaskInstance> out;
  out.reserve(cfg.n_instances);
  for (int i = 0; i < cfg.n_instances; ++i) {
    TaskInstance t;
    t.kind = TaskKind::Arithmetic;
    t.seed = rng.next_u64();
    Rng inst_rng(t.seed);
    int n_ops = inst_rng.uniform_int(cfg.min_ops, cfg.max_ops);
    BuiltExpression e = build_expression(n_ops, cfg.max_digits, inst_rng);
    t.metadata.expression = e.spaced;
    t.metadata.numbers = e.literals;
    t.metadata.operand_count = static_cast<int>(e.literals.size());
    t.metadata.paraphrased = inst_rng.uniform_real() < cfg.paraphrase_fraction;
    if (t.metadata.paraphrased) {
      t.metadata.template_id = inst_rng.uniform_int(0, paraphrase_template_count() - 1);
      append_tokens(t.prompt, apply_template(t.metadata.template_id, expression_to_words(e.spaced)),
                    vocab);
    } else {
      t.prompt.push_back(vocab.id("compute"));
      append_spaced(t.prompt, e.spaced, vocab);
    }
    t.target = render_value_tokens(e.value, vocab);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TaskInstance> gen_countdown(const CountdownCfg& cfg, const ActionCatalog& catalog,
                                        Rng& rng) {
  const Vocabulary& vocab = catalog.vocab();
  std::vector<TaskInstance> out;
  out.reserve(cfg.n_instances);
  for (int i = 0; i < cfg.n_instances; ++i) {
    TaskInstance t;
    t.kind = TaskKind::Countdown;
    t.seed = rng.next_u64();
    Rng inst_rng(t.seed);
    int n_ops = inst_rng.uniform_int(1, cfg.max_ops);
    BuiltExpression e = build_expression(n_ops, cfg.max_digits, inst_rng);
    t.metadata.expression = e.spaced;
    t.metadata.target_value = static_cast<long long>(e.value);
    t.metadata.numbers = e.literals;
    inst_rng.shuffle(t.metadata.numbers);
    t.metadata.operand_count = static_cast<int>(e.literals.size());
    t.prompt.push_back(vocab.id("reach"));
    append_spaced(t.prompt, std::to_string(t.metadata.target_value), vocab);
    t.prompt.push_back(vocab.id("using"));
    for (std::size_t j = 0; j < t.metadata.numbers.size(); ++j) {
      if (j) t.prompt.push_back(vocab.id("and"));
      append_spaced(t.prompt, std::to_string(t.metadata.numbers[j]), vocab);
    }
    t.target = render_value_tokens(e.value, vocab);
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TaskInstance> gen_count(const CountCfg& cfg, const ActionCatalog& catalog, Rng& rng) {
  if (cfg.max_len < 1 || cfg.max_len > 20) throw std::invalid_argument("max_len must be in [1,20]");
  const Vocabulary& vocab = catalog.vocab();
  static const char* kAlphabet[] = {"w", "x", "y", "z"};
  std::vector<TaskInstance> out;
  out.reserve(cfg.n_instances);
  for (int i = 0; i < cfg.n_instances; ++i) {
    TaskInstance t;
    t.kind = TaskKind::Count;
    t.seed = rng.next_u64();
    Rng inst_rng(t.seed);
    int len = inst_rng.uniform_int(1, cfg.max_len);
    int query = inst_rng.uniform_int(0, 3);
    int count = 0;
    std::vector<int> seq(len);
    for (int j = 0; j < len; ++j) {
      seq[j] = inst_rng.uniform_int(0, 3);
      if (seq[j] == query) ++count;
    }
    t.prompt = vocab.encode_str("how many");
    t.prompt.push_back(vocab.id(kAlphabet[query]));
    t.prompt.push_back(vocab.id("in"));
    for (int s : seq) t.prompt.push_back(vocab.id(kAlphabet[s]));
    t.target = render_value_tokens(BigInt(count), vocab);
    t.metadata.target_value = count;
    t.metadata.n = len;
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TaskInstance> gen_sorting(const SortingCfg& cfg, const ActionCatalog& catalog,
                                      Rng& rng) {
  const Vocabulary& vocab = catalog.vocab();
  std::vector<TaskInstance> out;
  out.reserve(cfg.n_instances);
  for (int i = 0; i < cfg.n_instances; ++i) {
    TaskInstance t;
    t.kind = TaskKind::Sort;
    t.seed = rng.next_u64();
    Rng inst_rng(t.seed);
    int n = 2 + sample_mix(cfg.mix, inst_rng);
    bool ascending = inst_rng.uniform_real() < 0.5;
    t.hidden = random_hidden(n, cfg.value_lo, cfg.value_hi, ascending, inst_rng);
    t.metadata.n = n;
    t.prompt.push_back(vocab.id("sort"));
    for (int j = 0; j < n; ++j) t.prompt.push_back(vocab.id(kLabels[j]));
    t.prompt.push_back(vocab.id(ascending ? "ascending" : "descending"));
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<TaskInstance> gen_ordering(const OrderingCfg& cfg, const ActionCatalog& catalog,
                                       Rng& rng) {
  const Vocabulary& vocab = catalog.vocab();
  std::vector<TaskInstance> out;
  out.reserve(cfg.n_instances);
  for (int i = 0; i < cfg.n_instances; ++i) {
    TaskInstance t;
    t.kind = TaskKind::Order;
    t.seed = rng.next_u64();
    Rng inst_rng(t.seed);
    int n = 2 + sample_mix(cfg.size_mix, inst_rng);
    bool ascending = inst_rng.uniform_real() < 0.5;
    t.hidden = random_hidden(n, cfg.value_lo, cfg.value_hi, ascending, inst_rng);
    t.metadata.n = n;
    bool order_task = inst_rng.uniform_real() < cfg.order_fraction;
    if (order_task) {
      t.metadata.subkind = "order";
      t.prompt.push_back(vocab.id("order"));
      for (int j = 0; j < n; ++j) t.prompt.push_back(vocab.id(kLabels[j]));
      t.prompt.push_back(vocab.id(ascending ? "ascending" : "descending"));
      // Target: labels sorted by hidden value in the requested direction.
      std::vector<int> idx(n);
      for (int j = 0; j < n; ++j) idx[j] = j;
      std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        return ascending ? t.hidden->values[a] < t.hidden->values[b]
                         : t.hidden->values[a] > t.hidden->values[b];
      });
      for (int j : idx) t.target.push_back(vocab.id(kLabels[j]));
    } else {
      t.metadata.subkind = "compare";
      int a = inst_rng.uniform_int(0, n - 1);
      int b = a;
      while (b == a) b = inst_rng.uniform_int(0, n - 1);
      t.prompt.push_back(vocab.id("relation"));
      t.prompt.push_back(vocab.id(kLabels[a]));
      t.prompt.push_back(vocab.id(kLabels[b]));
      t.target.push_back(vocab.id(t.hidden->values[a] < t.hidden->values[b] ? "<" : ">"));
    }
    out.push_back(std::move(t));
  }
  return out;
}

// ---------- rewards ----------

double reward_em(const Rollout& rollout, const TaskInstance& task, const ActionCatalog& catalog) {
  const Vocabulary& vocab = catalog.vocab();
  const TokenId answer_tok = vocab.id("answer");
  const TokenId done_tok = vocab.id("done");
  const GlobalState& s = rollout.final_state;
  std::ptrdiff_t start = -1;
  for (std::ptrdiff_t i = static_cast<std::ptrdiff_t>(s.history.size()) - 1; i >= 0; --i) {
    if (s.history[i] == answer_tok && s.tags[i] == Provenance::Agent) {
      start = i;
      break;
    }
  }
  if (start < 0) return 0.0;
  std::vector<std::string> span;
  for (std::size_t i = start + 1; i < s.history.size(); ++i) {
    if (s.tags[i] != Provenance::Agent) continue;
    if (s.history[i] == done_tok) break;
    span.push_back(vocab.text(s.history[i]));
  }
  if (task.kind == TaskKind::Countdown)
    return verify_countdown_answer(span, task.metadata.numbers, task.metadata.target_value) ? 1.0
                                                                                            : 0.0;
  if (span.size() != task.target.size()) return 0.0;
  for (std::size_t i = 0; i < span.size(); ++i)
    if (span[i] != vocab.text(task.target[i])) return 0.0;
  return 1.0;
}

bool verify_countdown_answer(std::span<const std::string> expr_tokens,
                             std::span<const long long> numbers, long long target) {
  Rational value;
  try {
    value = evaluate_expression(expr_tokens);
  } catch (const EvalError&) {
    return false;
  }
  if (value != Rational(target)) return false;
  // Multiset of literals must equal the given numbers exactly.
  std::multiset<long long> want(numbers.begin(), numbers.end());
  std::multiset<long long> got;
  std::size_t i = 0;
  while (i < expr_tokens.size()) {
    const std::string& t = expr_tokens[i];
    if (!t.empty() && std::isdigit(static_cast<unsigned char>(t[0]))) {
      std::string digits;
      while (i < expr_tokens.size() && !expr_tokens[i].empty() &&
             std::all_of(expr_tokens[i].begin(), expr_tokens[i].end(),
                         [](unsigned char c) { return std::isdigit(c); })) {
        digits += expr_tokens[i];
        ++i;
      }
      got.insert(std::stoll(digits));
    } else {
      ++i;
    }
  }
  return got == want;
}

SortingInteractionCounts count_sort_interactions(const Rollout& rollout, const TaskInstance& task,
                                                 const ActionCatalog& catalog,
                                                 const EnvRegistry& registry) {
  SortingInteractionCounts counts;
  GlobalState s;
  s.world.hidden = task.hidden;
  s.micro.resize(catalog.num_envs());
  for (const RolloutRecord& r : rollout.records) {
    ApplyResult applied = apply_action(s, r.action, catalog, registry);
    if (applied.env_exited) {
      const std::string& name = catalog.env(catalog.action(r.action).env_id).name;
      if (name == "compare") ++counts.comparisons;
      if (name == "swap") ++counts.swaps;
    }
  }
  return counts;
}

int comparison_budget(int n) {
  switch (n) {
    case 2: return 1;
    case 3: return 3;
    case 4: return 5;
    case 5: return 7;
    default: throw std::invalid_argument("comparison budget defined for n in [2,5]");
  }
}

int min_swaps_needed(const HiddenArray& a) {
  std::vector<int> target = a.target_positions();
  std::vector<bool> seen(a.n, false);
  int cycles = 0;
  for (int i = 0; i < a.n; ++i) {
    if (seen[i]) continue;
    ++cycles;
    int j = i;
    while (!seen[j]) {
      seen[j] = true;
      j = target[j];
    }
  }
  return a.n - cycles;
}

double reward_sorting(const Rollout& rollout, const TaskInstance& task, const RewardConfig& cfg,
                      const ActionCatalog& catalog, const EnvRegistry& registry) {
  // Replay to recover the final hidden state and the interaction counts; this
  // keeps the reward a pure function of (records, instance).
  SortingInteractionCounts counts;
  GlobalState s;
  s.world.hidden = task.hidden;
  s.micro.resize(catalog.num_envs());
  for (const RolloutRecord& r : rollout.records) {
    ApplyResult applied = apply_action(s, r.action, catalog, registry);
    if (applied.env_exited) {
      const std::string& name = catalog.env(catalog.action(r.action).env_id).name;
      if (name == "compare") ++counts.comparisons;
      if (name == "swap") ++counts.swaps;
    }
  }
  double base = s.world.hidden->sorted() ? 1.0 : 0.0;
  double penalty =
      cfg.lambda_cmp * std::max(0, counts.comparisons - comparison_budget(task.hidden->n)) +
      cfg.lambda_swap * std::max(0, counts.swaps - min_swaps_needed(*task.hidden));
  return std::max(cfg.floor, base - penalty);
}

EpisodeSpec make_episode(const TaskInstance& task, const RewardConfig& cfg,
                         const ActionCatalog& catalog, const EnvRegistry& registry) {
  EpisodeSpec e;
  e.prompt = task.prompt;
  e.world.hidden = task.hidden;
  e.done_token = catalog.vocab().id("done");
  if (task.kind == TaskKind::Sort) {
    e.terminal_reward = [task, cfg, &catalog, &registry](const Rollout& r) {
      return reward_sorting(r, task, cfg, catalog, registry);
    };
  } else {
    e.terminal_reward = [task, &catalog](const Rollout& r) { return reward_em(r, task, catalog); };
  }
  return e;
}

// ---------- serialization ----------

nlohmann::json task_to_json(const TaskInstance& t, const ActionCatalog& catalog) {
  const Vocabulary& vocab = catalog.vocab();
  nlohmann::json j;
  j["kind"] = task_kind_name(t.kind);
  j["prompt"] = vocab.decode(t.prompt);
  j["target"] = vocab.decode(t.target);
  if (t.hidden) {
    j["hidden"] = {{"values", t.hidden->values}, {"ascending", t.hidden->ascending}};
  }
  nlohmann::json m;
  m["numbers"] = t.metadata.numbers;
  m["operand_count"] = t.metadata.operand_count;
  m["paraphrased"] = t.metadata.paraphrased;
  m["template_id"] = t.metadata.template_id;
  m["expression"] = t.metadata.expression;
  m["target_value"] = t.metadata.target_value;
  m["n"] = t.metadata.n;
  m["subkind"] = t.metadata.subkind;
  j["metadata"] = std::move(m);
  j["seed"] = t.seed;
  return j;
}

TaskInstance task_from_json(const nlohmann::json& j, const ActionCatalog& catalog) {
  const Vocabulary& vocab = catalog.vocab();
  TaskInstance t;
  t.kind = task_kind_from_name(j.at("kind").get<std::string>());
  for (const auto& s : j.at("prompt")) t.prompt.push_back(vocab.id(s.get<std::string>()));
  for (const auto& s : j.at("target")) t.target.push_back(vocab.id(s.get<std::string>()));
  if (j.contains("hidden")) {
    HiddenArray a;
    a.values = j["hidden"].at("values").get<std::vector<long long>>();
    a.n = static_cast<int>(a.values.size());
    a.ascending = j["hidden"].at("ascending").get<bool>();
    t.hidden = std::move(a);
  }
  const nlohmann::json& m = j.at("metadata");
  t.metadata.numbers = m.at("numbers").get<std::vector<long long>>();
  t.metadata.operand_count = m.at("operand_count").get<int>();
  t.metadata.paraphrased = m.at("paraphrased").get<bool>();
  t.metadata.template_id = m.at("template_id").get<int>();
  t.metadata.expression = m.at("expression").get<std::string>();
  t.metadata.target_value = m.at("target_value").get<long long>();
  t.metadata.n = m.at("n").get<int>();
  t.metadata.subkind = m.at("subkind").get<std::string>();
  t.seed = j.at("seed").get<std::uint64_t>();
  return t;
}

void write_dataset_jsonl(const std::string& path, std::span<const TaskInstance> tasks,
                         const ActionCatalog& catalog) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  for (const TaskInstance& t : tasks) out << task_to_json(t, catalog).dump() << '\n';
}

std::vector<TaskInstance> read_dataset_jsonl(const std::string& path, const ActionCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::vector<TaskInstance> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(task_from_json(nlohmann::json::parse(line), catalog));
  }
  return out;
}

// ---------- pretraining corpora ----------

namespace {

// Presses for a spaced expression: every digit / operator character in order.
std::vector<int> button_actions(const std::string& spaced, const ActionCatalog& catalog,
                                int calc_env) {
  std::vector<int> out;
  const EnvironmentEntry& env = catalog.env(calc_env);
  auto local_of = [&env](const std::string& label) {
    for (std::size_t i = 0; i < env.action_labels.size(); ++i)
      if (env.action_labels[i] == label) return static_cast<int>(i);
    throw std::logic_error("no calculator button '" + label + "'");
  };
  for (char c : spaced) {
    if (c == ' ') continue;
    out.push_back(catalog.env_action_index(calc_env, local_of(std::string(1, c))));
  }
  return out;
}

std::vector<TokenId> scripted_history(const TaskInstance& task, std::vector<int> actions,
                                      const ActionCatalog& catalog, const EnvRegistry& registry) {
  ScriptedPolicy policy(std::move(actions));
  EpisodeSpec episode;
  episode.prompt = task.prompt;
  episode.world.hidden = task.hidden;
  episode.done_token = catalog.vocab().id("done");
  RolloutLimits limits;
  limits.max_steps = 1 << 20;
  Rng rng(0);
  Rollout r = run_rollout(policy, episode, catalog, registry, limits, rng, /*greedy=*/false);
  return r.final_state.history;
}

}  // namespace

std::vector<std::vector<TokenId>> build_pretrain_corpus(std::span<const TaskInstance> instances,
                                                        const CorpusCfg& cfg,
                                                        const ActionCatalog& catalog,
                                                        const EnvRegistry& registry, Rng& rng) {
  const Vocabulary& vocab = catalog.vocab();
  const TokenId answer_tok = vocab.id("answer");
  const TokenId done_tok = vocab.id("done");
  std::vector<std::vector<TokenId>> corpus;
  corpus.reserve(instances.size());
  for (const TaskInstance& task : instances) {
    bool demo = rng.uniform_real() < cfg.demo_fraction;
    if (task.kind == TaskKind::Sort || task.kind == TaskKind::Order) {
      // Random legal interaction walk with real observations, then the answer
      // span (true target when demo, scrambled otherwise) and done.
      std::vector<int> actions;
      int compare_env = catalog.env_id_by_name("compare");
      int swap_env = catalog.env_id_by_name("swap");
      int n = task.hidden ? task.hidden->n : 2;
      int k = rng.uniform_int(cfg.min_interactions, cfg.max_interactions);
      for (int i = 0; i < k; ++i) {
        bool use_swap = task.kind == TaskKind::Sort && swap_env != 0 && rng.uniform_real() < 0.5;
        int env = use_swap ? swap_env : compare_env;
        if (env == 0) break;
        int pickable = std::min(n, catalog.env_action_count(env));
        actions.push_back(catalog.route_index(env));
        actions.push_back(catalog.env_action_index(env, rng.uniform_int(0, pickable - 1)));
        actions.push_back(catalog.env_action_index(env, rng.uniform_int(0, pickable - 1)));
      }
      if (task.kind == TaskKind::Order) {
        actions.push_back(answer_tok);
        std::vector<TokenId> span = task.target;
        if (!demo) rng.shuffle(span);
        for (TokenId t : span) actions.push_back(t);
      }
      actions.push_back(done_tok);
      corpus.push_back(scripted_history(task, std::move(actions), catalog, registry));
      continue;
    }
    // Calculator-task trace.
    int calc_env = catalog.env_id_by_name("calculator");
    std::vector<int> actions;
    if (demo && calc_env != 0 && !task.metadata.expression.empty()) {
      actions.push_back(catalog.route_index(calc_env));
      for (int a : button_actions(task.metadata.expression, catalog, calc_env)) actions.push_back(a);
      actions.push_back(
          catalog.env_action_index(calc_env, catalog.env_action_count(calc_env) - 1));  // '='
      actions.push_back(answer_tok);
      std::vector<TokenId> span =
          task.kind == TaskKind::Countdown
              ? [&] {
                  std::vector<TokenId> s;
                  append_spaced(s, task.metadata.expression, vocab);
                  return s;
                }()
              : task.target;
      for (TokenId t : span) actions.push_back(t);
    } else {
      actions.push_back(answer_tok);
      if (demo) {  // no calculator registered: direct correct answer
        for (TokenId t : task.target) actions.push_back(t);
      } else {
        int len = std::max<std::size_t>(1, task.target.size());
        for (int i = 0; i < len; ++i)
          actions.push_back(vocab.id(std::string(1, '0' + rng.uniform_int(0, 9))));
      }
    }
    actions.push_back(done_tok);
    corpus.push_back(scripted_history(task, std::move(actions), catalog, registry));
  }
  return corpus;
}

}  // namespace expa
