#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace expa {

using TokenId = int;

// Closed token vocabulary. Token 0 is the begin-of-sequence marker "<s>".
class Vocabulary {
 public:
  TokenId add(const std::string& text);
  TokenId id(const std::string& text) const;  // throws std::out_of_range if absent
  std::optional<TokenId> find(const std::string& text) const;
  const std::string& text(TokenId id) const;
  int size() const { return static_cast<int>(tokens_.size()); }

  std::vector<TokenId> encode(std::span<const std::string> texts) const;
  std::vector<std::string> decode(std::span<const TokenId> ids) const;
  // Encodes a space-separated string; convenient for tests and fixtures.
  std::vector<TokenId> encode_str(const std::string& spaced) const;
  std::string decode_str(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

// The shared toy vocabulary: digits, operators, position labels, task words,
// English number/operator words for the paraphrase templates, and the control
// tokens ("answer", "done", routing descriptions).
Vocabulary standard_vocabulary();

}  // namespace expa
