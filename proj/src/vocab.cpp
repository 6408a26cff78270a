#include "expa/vocab.hpp"

#include <sstream>
#include <stdexcept>

namespace expa {

TokenId Vocabulary::add(const std::string& text) {
  auto it = index_.find(text);
  if (it != index_.end()) return it->second;
  TokenId id = static_cast<TokenId>(tokens_.size());
  tokens_.push_back(text);
  index_.emplace(text, id);
  return id;
}

TokenId Vocabulary::id(const std::string& text) const {
  auto it = index_.find(text);
  if (it == index_.end()) throw std::out_of_range("unknown token: '" + text + "'");
  return it->second;
}

std::optional<TokenId> Vocabulary::find(const std::string& text) const {
  auto it = index_.find(text);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& Vocabulary::text(TokenId id) const { return tokens_.at(id); }

std::vector<TokenId> Vocabulary::encode(std::span<const std::string> texts) const {
  std::vector<TokenId> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(id(t));
  return out;
}

std::vector<std::string> Vocabulary::decode(std::span<const TokenId> ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (TokenId t : ids) out.push_back(text(t));
  return out;
}

std::vector<TokenId> Vocabulary::encode_str(const std::string& spaced) const {
  std::vector<TokenId> out;
  std::istringstream in(spaced);
  std::string tok;
  while (in >> tok) out.push_back(id(tok));
  return out;
}

std::string Vocabulary::decode_str(std::span<const TokenId> ids) const {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out += ' ';
    out += text(ids[i]);
  }
  return out;
}

Vocabulary standard_vocabulary() {
  Vocabulary v;
  // Control and structure tokens first so token ids stay stable.
  for (const char* t : {"<s>", "answer", "done"}) v.add(t);
  for (const char* t : {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9"}) v.add(t);
  for (const char* t : {"+", "-", "*", "/", "="}) v.add(t);
  for (const char* t : {"ERR", "<", ">", "swapped"}) v.add(t);
  for (const char* t : {"A", "B", "C", "D", "E"}) v.add(t);
  // Routing descriptions.
  for (const char* t : {"calculate", "compare", "swap"}) v.add(t);
  // Task statement words.
  for (const char* t : {"sort", "order", "relation", "ascending", "descending",
                        "count", "how", "many", "in", "what", "is", "the", "of",
                        "compute", "result", "value", "find", "evaluate", "to",
                        "from", "number", "numbers", "target", "using", "reach",
                        "make", "equals", "and", "please"})
    v.add(t);
  // Count-task symbol alphabet.
  for (const char* t : {"w", "x", "y", "z"}) v.add(t);
  // English number words (canonical forms up to 5 digits).
  for (const char* t : {"zero", "one", "two", "three", "four", "five", "six",
                        "seven", "eight", "nine", "ten", "eleven", "twelve",
                        "thirteen", "fourteen", "fifteen", "sixteen",
                        "seventeen", "eighteen", "nineteen", "twenty", "thirty",
                        "forty", "fifty", "sixty", "seventy", "eighty",
                        "ninety", "hundred", "thousand"})
    v.add(t);
  // Operator words for paraphrased expressions.
  for (const char* t : {"plus", "minus", "times", "divided", "by"}) v.add(t);
  return v;
}

}  // namespace expa
