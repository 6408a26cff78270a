#pragma once

// Brute-force countdown solvability oracle: tries every permutation of the
// numbers and every operator tuple under standard precedence (expressions are
// parenthesis-free, matching the calculator's grammar).

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "support/reference_eval.hpp"

namespace countdown {

inline bool solvable(std::span<const long long> numbers, long long target) {
  std::vector<long long> nums(numbers.begin(), numbers.end());
  std::sort(nums.begin(), nums.end());
  const char* ops[] = {"+", "-", "*", "/"};
  do {
    const std::size_t k = nums.size() - 1;
    std::vector<int> choice(k, 0);
    for (;;) {
      std::vector<std::string> tokens;
      for (std::size_t i = 0; i < nums.size(); ++i) {
        if (i) tokens.push_back(ops[choice[i - 1]]);
        tokens.push_back(std::to_string(nums[i]));
      }
      auto value = refeval::reference_evaluate(tokens);
      if (value && value->den == 1 && value->num == target) return true;
      // next operator tuple
      std::size_t i = 0;
      while (i < k && ++choice[i] == 4) choice[i++] = 0;
      if (i == k) break;
    }
  } while (std::next_permutation(nums.begin(), nums.end()));
  return false;
}

}  // namespace countdown
