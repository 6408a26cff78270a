#include "expa/adam.hpp"

namespace expa {

namespace {

nlohmann::json tensors_to_json(const PolicyTensors& t) {
  nlohmann::json j;
  j["embeddings"] = matrix_to_json(t.embeddings);
  j["w_query"] = matrix_to_json(t.w_query);
  j["w_key"] = matrix_to_json(t.w_key);
  j["w_value"] = matrix_to_json(t.w_value);
  j["w_out"] = matrix_to_json(t.w_out);
  j["head"] = matrix_to_json(t.head);
  return j;
}

PolicyTensors tensors_from_json(const nlohmann::json& j) {
  PolicyTensors t;
  t.embeddings = matrix_from_json(j.at("embeddings"));
  t.w_query = matrix_from_json(j.at("w_query"));
  t.w_key = matrix_from_json(j.at("w_key"));
  t.w_value = matrix_from_json(j.at("w_value"));
  t.w_out = matrix_from_json(j.at("w_out"));
  t.head = matrix_from_json(j.at("head"));
  return t;
}

}  // namespace

nlohmann::json adam_to_json(const AdamState& s) {
  nlohmann::json j;
  j["t"] = s.t;
  j["initialized"] = s.initialized;
  if (s.initialized) {
    j["m"] = tensors_to_json(s.m);
    j["v"] = tensors_to_json(s.v);
  }
  return j;
}

AdamState adam_from_json(const nlohmann::json& j) {
  AdamState s;
  s.t = j.at("t").get<long long>();
  s.initialized = j.at("initialized").get<bool>();
  if (s.initialized) {
    s.m = tensors_from_json(j.at("m"));
    s.v = tensors_from_json(j.at("v"));
  }
  return s;
}

}  // namespace expa
