#pragma once

// Independent reference evaluator for expression tokens: recursive descent
// over hand-rolled big-integer fractions, deliberately sharing no code with
// the production evaluator.

#include <boost/multiprecision/cpp_int.hpp>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace refeval {

using Int = boost::multiprecision::cpp_int;

struct Frac {
  Int num;
  Int den;  // > 0

  void reduce() {
    if (den < 0) {
      num = -num;
      den = -den;
    }
    Int g = boost::multiprecision::gcd(num < 0 ? Int(-num) : num, den);
    if (g > 1) {
      num /= g;
      den /= g;
    }
  }
};

inline Frac make_frac(Int n, Int d) {
  Frac f{std::move(n), std::move(d)};
  f.reduce();
  return f;
}

struct Parser {
  std::span<const std::string> tokens;
  std::size_t pos = 0;

  bool at_number() const {
    if (pos >= tokens.size()) return false;
    for (char c : tokens[pos])
      if (c < '0' || c > '9') return false;
    return !tokens[pos].empty();
  }

  Frac number() {
    if (!at_number()) throw std::runtime_error("expected number");
    Int v = 0;
    while (at_number()) {
      for (char c : tokens[pos]) v = v * 10 + (c - '0');
      ++pos;
    }
    return make_frac(v, 1);
  }

  Frac term() {
    Frac left = number();
    while (pos < tokens.size() && (tokens[pos] == "*" || tokens[pos] == "/")) {
      bool mul = tokens[pos] == "*";
      ++pos;
      Frac right = number();
      if (mul) {
        left = make_frac(left.num * right.num, left.den * right.den);
      } else {
        if (right.num == 0) throw std::runtime_error("division by zero");
        left = make_frac(left.num * right.den, left.den * right.num);
      }
    }
    return left;
  }

  Frac expr() {
    Frac left = term();
    while (pos < tokens.size() && (tokens[pos] == "+" || tokens[pos] == "-")) {
      bool add = tokens[pos] == "+";
      ++pos;
      Frac right = term();
      Int n = left.num * right.den;
      if (add)
        n += right.num * left.den;
      else
        n -= right.num * left.den;
      left = make_frac(std::move(n), left.den * right.den);
    }
    if (pos != tokens.size()) throw std::runtime_error("trailing tokens");
    return left;
  }
};

inline std::optional<Frac> reference_evaluate(std::span<const std::string> tokens) {
  try {
    Parser p{tokens};
    return p.expr();
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace refeval
