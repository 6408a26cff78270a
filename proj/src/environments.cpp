#include "expa/environments.hpp"

#include <algorithm>
#include <sstream>

namespace expa {

namespace {

bool is_digit_token(const std::string& t) {
  if (t.empty()) return false;
  for (char c : t)
    if (c < '0' || c > '9') return false;
  return true;
}

bool is_operator_token(const std::string& t) {
  return t == "+" || t == "-" || t == "*" || t == "/";
}

}  // namespace

Rational evaluate_expression(std::span<const std::string> tokens) {
  // Fold digit runs into literals, then evaluate a + / - chain of
  // multiplicative terms in one left-to-right pass.
  struct Item {
    bool op;
    char op_ch = 0;
    BigInt value;
  };
  std::vector<Item> items;
  std::size_t i = 0;
  while (i < tokens.size()) {
    const std::string& t = tokens[i];
    if (is_digit_token(t)) {
      std::string digits;
      while (i < tokens.size() && is_digit_token(tokens[i])) {
        digits += tokens[i];
        ++i;
      }
      // strip leading zeros; cpp_int would read "0..." as octal
      std::size_t nz = digits.find_first_not_of('0');
      digits = (nz == std::string::npos) ? "0" : digits.substr(nz);
      items.push_back({false, 0, BigInt(digits)});
    } else if (is_operator_token(t)) {
      items.push_back({true, t[0], 0});
      ++i;
    } else {
      throw EvalError("unexpected token '" + t + "'");
    }
  }
  if (items.empty()) throw EvalError("empty expression");
  if (items.front().op || items.back().op) throw EvalError("expression starts or ends with an operator");
  for (std::size_t j = 1; j < items.size(); ++j)
    if (items[j].op == items[j - 1].op)
      throw EvalError(items[j].op ? "consecutive operators" : "consecutive literals");

  Rational sum = 0;
  Rational term = Rational(items[0].value);
  char pending = '+';
  for (std::size_t j = 1; j < items.size(); j += 2) {
    char op = items[j].op_ch;
    Rational rhs(items[j + 1].value);
    if (op == '*' || op == '/') {
      if (op == '/' && rhs == 0) throw EvalError("division by zero");
      if (op == '*')
        term *= rhs;
      else
        term /= rhs;
    } else {
      sum += (pending == '+') ? term : -term;
      pending = op;
      term = rhs;
    }
  }
  sum += (pending == '+') ? term : -term;
  return sum;
}

Rational evaluate_expression(const std::string& spaced) {
  std::vector<std::string> tokens;
  std::istringstream in(spaced);
  std::string t;
  while (in >> t) tokens.push_back(t);
  return evaluate_expression(tokens);
}

std::vector<std::string> render_number(const Rational& q) {
  std::vector<std::string> out;
  auto push_integer = [&out](const BigInt& v) {
    BigInt a = v < 0 ? BigInt(-v) : v;
    if (v < 0) out.emplace_back("-");
    std::string digits = a.str();
    for (char c : digits) out.emplace_back(1, c);
  };
  BigInt num = boost::multiprecision::numerator(q);
  BigInt den = boost::multiprecision::denominator(q);  // canonical: den > 0, gcd = 1
  push_integer(num);
  if (den != 1) {
    out.emplace_back("/");
    std::string digits = den.str();
    for (char c : digits) out.emplace_back(1, c);
  }
  return out;
}

bool HiddenArray::sorted() const {
  for (int i = 0; i + 1 < n; ++i) {
    if (ascending ? values[i] > values[i + 1] : values[i] < values[i + 1]) return false;
  }
  return true;
}

std::vector<int> HiddenArray::target_positions() const {
  std::vector<int> target(n);
  for (int i = 0; i < n; ++i) {
    int rank = 0;
    for (int j = 0; j < n; ++j)
      if (j != i && (ascending ? values[j] < values[i] : values[j] > values[i])) ++rank;
    target[i] = rank;
  }
  return target;
}

const std::string& CalculatorEnv::name() const {
  static const std::string n = "calculator";
  return n;
}

StepOutcome CalculatorEnv::step(EnvMicroState& state, World&, int local_action,
                                const Vocabulary& vocab) const {
  static const char* kButtons[] = {"0", "1", "2", "3", "4", "5", "6", "7",
                                   "8", "9", "+", "-", "*", "/", "="};
  if (local_action < 0 || local_action >= 15) throw std::out_of_range("calculator button out of range");
  const std::string button = kButtons[local_action];
  if (button != "=") {
    state.calc_buffer.push_back(local_action);
    return {{vocab.id(button)}, false};
  }
  std::vector<std::string> expr;
  expr.reserve(state.calc_buffer.size());
  for (int b : state.calc_buffer) expr.emplace_back(kButtons[b]);
  StepOutcome out;
  out.exit = true;
  out.observation.push_back(vocab.id("="));
  try {
    for (const std::string& t : render_number(evaluate_expression(expr)))
      out.observation.push_back(vocab.id(t));
  } catch (const EvalError&) {
    out.observation.push_back(vocab.id("ERR"));
  }
  return out;
}

const std::string& CompareEnv::name() const {
  static const std::string n = "compare";
  return n;
}

StepOutcome CompareEnv::step(EnvMicroState& state, World& world, int local_action,
                             const Vocabulary& vocab) const {
  const HiddenArray& z = world.hidden.value();
  static const char* kLabels[] = {"A", "B", "C", "D", "E"};
  // Labels beyond the instance's active prefix are rejected with an error
  // observation; they are reachable because E_i always exposes every label.
  if (local_action < 0 || local_action >= z.n) return {{vocab.id("ERR")}, true};
  if (!state.first_pick) {
    state.first_pick = local_action;
    return {{vocab.id(kLabels[local_action])}, false};
  }
  int first = *state.first_pick;
  if (first == local_action) return {{vocab.id("ERR")}, true};
  bool less = z.values[first] < z.values[local_action];
  return {{vocab.id(kLabels[first]), vocab.id(less ? "<" : ">"), vocab.id(kLabels[local_action])}, true};
}

const std::string& SwapEnv::name() const {
  static const std::string n = "swap";
  return n;
}

StepOutcome SwapEnv::step(EnvMicroState& state, World& world, int local_action,
                          const Vocabulary& vocab) const {
  HiddenArray& z = world.hidden.value();
  static const char* kLabels[] = {"A", "B", "C", "D", "E"};
  if (local_action < 0 || local_action >= z.n) return {{vocab.id("ERR")}, true};
  if (!state.first_pick) {
    state.first_pick = local_action;
    return {{vocab.id(kLabels[local_action])}, false};
  }
  int first = *state.first_pick;
  if (first == local_action) return {{vocab.id("ERR")}, true};
  std::swap(z.values[first], z.values[local_action]);
  return {{vocab.id("swapped"), vocab.id(kLabels[first]), vocab.id(kLabels[local_action])}, true};
}

EnvRegistry::EnvRegistry(const ActionCatalog& catalog) {
  for (int e = 1; e <= catalog.num_envs(); ++e) {
    const std::string& name = catalog.env(e).name;
    if (name == "calculator")
      envs_.push_back(std::make_unique<CalculatorEnv>());
    else if (name == "compare")
      envs_.push_back(std::make_unique<CompareEnv>());
    else if (name == "swap")
      envs_.push_back(std::make_unique<SwapEnv>());
    else
      throw std::invalid_argument("no environment implementation for '" + name + "'");
  }
}

}  // namespace expa
