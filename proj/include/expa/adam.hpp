#pragma once

#include "expa/policy.hpp"

namespace expa {

struct AdamOptions {
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  bool maximize = true;  // RL objectives are ascended
};

struct AdamState {
  PolicyTensors m, v;
  long long t = 0;
  bool initialized = false;
};

inline void adam_step(PolicyTensors& w, const PolicyGradients& g, AdamState& s,
                      const AdamOptions& opt) {
  if (!s.initialized) {
    s.m = PolicyTensors::zeros_like(w);
    s.v = PolicyTensors::zeros_like(w);
    s.initialized = true;
  }
  ++s.t;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(s.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(s.t));
  const double sign = opt.maximize ? 1.0 : -1.0;
  auto step = [&](Eigen::MatrixXd& wm, const Eigen::MatrixXd& gm, Eigen::MatrixXd& mm,
                  Eigen::MatrixXd& vm) {
    mm = opt.beta1 * mm + (1.0 - opt.beta1) * gm;
    vm = opt.beta2 * vm.array().matrix() + (1.0 - opt.beta2) * gm.array().square().matrix();
    wm.array() += sign * opt.learning_rate * (mm.array() / bc1) /
                  ((vm.array() / bc2).sqrt() + opt.eps);
  };
  step(w.embeddings, g.embeddings, s.m.embeddings, s.v.embeddings);
  step(w.w_query, g.w_query, s.m.w_query, s.v.w_query);
  step(w.w_key, g.w_key, s.m.w_key, s.v.w_key);
  step(w.w_value, g.w_value, s.m.w_value, s.v.w_value);
  step(w.w_out, g.w_out, s.m.w_out, s.v.w_out);
  step(w.head, g.head, s.m.head, s.v.head);
}

nlohmann::json adam_to_json(const AdamState& s);
AdamState adam_from_json(const nlohmann::json& j);

}  // namespace expa
