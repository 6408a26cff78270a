#pragma once

#include <boost/multiprecision/cpp_int.hpp>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "expa/catalog.hpp"
#include "expa/vocab.hpp"

namespace expa {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

struct EvalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Exact evaluation of a digit/operator token string ("12+7*2") with standard
// precedence (* and / bind tighter, left-associative). Unbounded integers,
// exact division. Throws EvalError on malformed input or division by zero.
Rational evaluate_expression(std::span<const std::string> tokens);
Rational evaluate_expression(const std::string& spaced);

// Canonical token rendering: integers as sign + digits, non-integers as
// "p / q" in lowest terms.
std::vector<std::string> render_number(const Rational& q);

// Hidden value array for the compare/swap environments. Position labels are
// the first n of A..E; values stay hidden from the policy.
struct HiddenArray {
  int n = 0;
  std::vector<long long> values;  // by position, pairwise distinct
  bool ascending = true;

  bool sorted() const;
  // rank[i] = number of positions holding a smaller value than position i
  // under the requested direction (i.e. the target position of i's value).
  std::vector<int> target_positions() const;
};

// Per-invocation micro state; cleared every time control routes into an
// environment. One struct serves all built-in environments.
struct EnvMicroState {
  std::vector<int> calc_buffer;       // pressed button local ids
  std::optional<int> first_pick;      // compare/swap two-pick protocol
  void clear() {
    calc_buffer.clear();
    first_pick.reset();
  }
};

// Task-level latent world, observable only through interactions.
struct World {
  std::optional<HiddenArray> hidden;
};

struct StepOutcome {
  std::vector<TokenId> observation;
  bool exit = false;
};

class Environment {
 public:
  virtual ~Environment() = default;
  virtual const std::string& name() const = 0;
  virtual StepOutcome step(EnvMicroState& state, World& world, int local_action,
                           const Vocabulary& vocab) const = 0;
};

class CalculatorEnv final : public Environment {
 public:
  const std::string& name() const override;
  StepOutcome step(EnvMicroState&, World&, int, const Vocabulary&) const override;
};

class CompareEnv final : public Environment {
 public:
  const std::string& name() const override;
  StepOutcome step(EnvMicroState&, World&, int, const Vocabulary&) const override;
};

class SwapEnv final : public Environment {
 public:
  const std::string& name() const override;
  StepOutcome step(EnvMicroState&, World&, int, const Vocabulary&) const override;
};

// Environment implementations indexed by env_id, built to match a catalog.
class EnvRegistry {
 public:
  explicit EnvRegistry(const ActionCatalog& catalog);
  const Environment& env(int env_id) const { return *envs_.at(env_id - 1); }

 private:
  std::vector<std::unique_ptr<Environment>> envs_;
};

}  // namespace expa
