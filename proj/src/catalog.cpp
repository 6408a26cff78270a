#include "expa/catalog.hpp"

#include <stdexcept>

namespace expa {

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::uint64_t fnv1a_str(std::uint64_t h, const std::string& s) {
  h = fnv1a(h, s.data(), s.size());
  return fnv1a(h, "\x1f", 1);
}

}  // namespace

ActionCatalog::ActionCatalog(Vocabulary vocab, std::vector<EnvironmentEntry> envs)
    : vocab_(std::move(vocab)), envs_(std::move(envs)) {
  actions_.reserve(vocab_.size());
  for (TokenId t = 0; t < vocab_.size(); ++t) {
    ActionRef a;
    a.kind = ActionKind::VocabToken;
    a.global_index = t;
    a.token = t;
    a.label = vocab_.text(t);
    a.desc = {t};
    actions_.push_back(std::move(a));
  }
  for (std::size_t i = 0; i < envs_.size(); ++i) {
    EnvironmentEntry& e = envs_[i];
    e.env_id = static_cast<int>(i) + 1;
    if (e.action_labels.size() != e.action_descs.size())
      throw std::invalid_argument("environment '" + e.name + "': label/desc size mismatch");
    ActionRef route;
    route.kind = ActionKind::Route;
    route.global_index = static_cast<int>(actions_.size());
    route.env_id = e.env_id;
    route.label = e.name;
    route.desc = e.route_desc;
    e.route_global = route.global_index;
    actions_.push_back(std::move(route));
    e.actions_base = static_cast<int>(actions_.size());
    for (std::size_t j = 0; j < e.action_labels.size(); ++j) {
      ActionRef a;
      a.kind = ActionKind::EnvAction;
      a.global_index = static_cast<int>(actions_.size());
      a.env_id = e.env_id;
      a.local_id = static_cast<int>(j);
      a.label = e.action_labels[j];
      a.desc = e.action_descs[j];
      actions_.push_back(std::move(a));
    }
  }
  // Validate descriptions and hash the layout.
  std::uint64_t h = 14695981039346656037ULL;
  for (TokenId t = 0; t < vocab_.size(); ++t) h = fnv1a_str(h, vocab_.text(t));
  for (const ActionRef& a : actions_) {
    for (TokenId t : a.desc)
      if (t < 0 || t >= vocab_.size())
        throw std::invalid_argument("action '" + a.label + "': description token outside vocabulary");
    int kind = static_cast<int>(a.kind);
    h = fnv1a(h, &kind, sizeof kind);
    h = fnv1a_str(h, a.label);
    h = fnv1a(h, a.desc.data(), a.desc.size() * sizeof(TokenId));
  }
  hash_ = h;
}

int ActionCatalog::env_action_index(int env_id, int local_id) const {
  const EnvironmentEntry& e = env(env_id);
  if (local_id < 0 || local_id >= static_cast<int>(e.action_labels.size()))
    throw std::out_of_range("local action id out of range for env '" + e.name + "'");
  return e.actions_base + local_id;
}

int ActionCatalog::env_id_by_name(const std::string& name) const {
  for (const auto& e : envs_)
    if (e.name == name) return e.env_id;
  return 0;
}

ActionCatalog standard_catalog(std::span<const std::string> env_names, int max_labels) {
  Vocabulary v = standard_vocabulary();
  if (max_labels < 2 || max_labels > 5) throw std::invalid_argument("max_labels must be in [2,5]");
  std::vector<EnvironmentEntry> envs;
  for (const std::string& name : env_names) {
    EnvironmentEntry e;
    e.name = name;
    if (name == "calculator") {
      e.route_desc = {v.id("calculate")};
      for (const char* b : {"0", "1", "2", "3", "4", "5", "6", "7", "8", "9",
                            "+", "-", "*", "/", "="}) {
        e.action_labels.emplace_back(b);
        e.action_descs.push_back({v.id(b)});
      }
    } else if (name == "compare" || name == "swap") {
      e.route_desc = {v.id(name)};
      const char* labels[] = {"A", "B", "C", "D", "E"};
      for (int i = 0; i < max_labels; ++i) {
        e.action_labels.emplace_back(labels[i]);
        e.action_descs.push_back({v.id(labels[i])});
      }
    } else {
      throw std::invalid_argument("unknown environment name: '" + name + "'");
    }
    envs.push_back(std::move(e));
  }
  return ActionCatalog(std::move(v), std::move(envs));
}

}  // namespace expa
