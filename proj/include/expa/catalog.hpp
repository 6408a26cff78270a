#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "expa/vocab.hpp"

namespace expa {

enum class ActionKind { VocabToken, Route, EnvAction };

// One entry of the expanded action space. Global indices lay out as
// [0, |V|) vocab tokens, then for each external environment its routing
// action followed by its local action block.
struct ActionRef {
  ActionKind kind;
  int global_index = -1;
  TokenId token = -1;  // vocab actions only
  int env_id = 0;      // Route / EnvAction
  int local_id = -1;   // EnvAction only
  std::string label;   // human-readable ("calculate", "A", "7", ...)
  std::vector<TokenId> desc;  // description tokens, all members of the vocabulary
};

struct EnvironmentEntry {
  int env_id = 0;  // 1..K
  std::string name;
  std::vector<TokenId> route_desc;
  std::vector<std::string> action_labels;
  std::vector<std::vector<TokenId>> action_descs;
  int route_global = -1;
  int actions_base = -1;  // global index of local action 0
};

class ActionCatalog {
 public:
  ActionCatalog(Vocabulary vocab, std::vector<EnvironmentEntry> envs);

  const Vocabulary& vocab() const { return vocab_; }
  int vocab_size() const { return vocab_.size(); }
  int num_envs() const { return static_cast<int>(envs_.size()); }
  int num_actions() const { return static_cast<int>(actions_.size()); }

  const ActionRef& action(int global_index) const { return actions_.at(global_index); }
  const EnvironmentEntry& env(int env_id) const { return envs_.at(env_id - 1); }
  int route_index(int env_id) const { return env(env_id).route_global; }
  int env_action_index(int env_id, int local_id) const;
  int env_action_count(int env_id) const { return static_cast<int>(env(env_id).action_labels.size()); }
  // Environment id by name, 0 if unknown.
  int env_id_by_name(const std::string& name) const;

  // FNV-1a over the full catalog layout; checkpoints store it so a parameter
  // file cannot be loaded against a different action space.
  std::uint64_t hash() const { return hash_; }

 private:
  Vocabulary vocab_;
  std::vector<EnvironmentEntry> envs_;
  std::vector<ActionRef> actions_;
  std::uint64_t hash_ = 0;
};

// Standard environments by name: "calculator" (15 buttons), "compare" and
// "swap" (5 position labels each). `max_labels` trims compare/swap label sets.
ActionCatalog standard_catalog(std::span<const std::string> env_names, int max_labels = 5);

}  // namespace expa
