#include "expa/policy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>

#include "expa/adam.hpp"

namespace expa {

void PolicyTensors::set_zero() {
  for_each([](Eigen::MatrixXd& m) { m.setZero(); });
}

PolicyTensors PolicyTensors::zeros_like(const PolicyTensors& other) {
  PolicyTensors t = other;
  t.set_zero();
  return t;
}

void PolicyTensors::add_scaled(const PolicyTensors& other, double scale) {
  embeddings += scale * other.embeddings;
  w_query += scale * other.w_query;
  w_key += scale * other.w_key;
  w_value += scale * other.w_value;
  w_out += scale * other.w_out;
  head += scale * other.head;
}

void PolicyTensors::scale(double s) {
  for_each([s](Eigen::MatrixXd& m) { m *= s; });
}

bool PolicyTensors::all_finite() const {
  bool ok = true;
  for_each([&ok](const Eigen::MatrixXd& m) { ok = ok && m.allFinite(); });
  return ok;
}

std::vector<double> PolicyTensors::flatten() const {
  std::vector<double> out;
  for_each([&out](const Eigen::MatrixXd& m) { out.insert(out.end(), m.data(), m.data() + m.size()); });
  return out;
}

void PolicyTensors::unflatten(std::span<const double> flat) {
  std::size_t off = 0;
  for_each([&](Eigen::MatrixXd& m) {
    std::copy(flat.begin() + off, flat.begin() + off + m.size(), m.data());
    off += m.size();
  });
  if (off != flat.size()) throw std::invalid_argument("flat parameter size mismatch");
}

PolicyParameters init_policy(const ActionCatalog& catalog, int dim, Rng& rng) {
  PolicyParameters p;
  p.catalog_hash = catalog.hash();
  auto randn = [&rng](Eigen::MatrixXd& m, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = scale * rng.normal();
  };
  p.w.embeddings.resize(catalog.vocab_size(), dim);
  randn(p.w.embeddings, 0.3);
  const double attn_scale = 1.0 / std::sqrt(static_cast<double>(dim));
  for (Eigen::MatrixXd* m : {&p.w.w_query, &p.w.w_key, &p.w.w_value, &p.w.w_out}) {
    m->resize(dim, dim);
    randn(*m, attn_scale);
  }
  p.w.head.setZero(catalog.num_actions(), dim);
  Eigen::MatrixXd vocab_rows(catalog.vocab_size(), dim);
  randn(vocab_rows, 0.3);
  p.w.head.topRows(catalog.vocab_size()) = vocab_rows;
  return p;
}

void init_expanded_actions(PolicyParameters& params, const ActionCatalog& catalog) {
  if (params.catalog_hash != catalog.hash())
    throw std::invalid_argument("parameters were built for a different catalog");
  for (int a = catalog.vocab_size(); a < catalog.num_actions(); ++a) {
    const ActionRef& ref = catalog.action(a);
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(params.dim());
    for (TokenId t : ref.desc) row += params.w.head.row(t);
    params.w.head.row(a) = row / static_cast<double>(ref.desc.size());
  }
}

// ---- encoder ----

namespace {

constexpr TokenId kBeginToken = 0;

double position_encoding(int pos, int i, int dim) {
  const double exponent = static_cast<double>(2 * (i / 2)) / dim;
  const double rate = std::pow(10000.0, exponent);
  const double x = pos / rate;
  return (i % 2 == 0) ? std::sin(x) : std::cos(x);
}

void input_row(const PolicyParameters& params, TokenId token, int pos, Eigen::MatrixXd& u, int row) {
  const int d = params.dim();
  for (int i = 0; i < d; ++i)
    u(row, i) = params.w.embeddings(token, i) + position_encoding(pos, i, d);
}

}  // namespace

void encoder_extend(const PolicyParameters& params, std::span<const TokenId> history,
                    EncoderCache& cache) {
  const int d = params.dim();
  // Reuse the cached prefix when the new history extends it.
  std::size_t common = 0;
  while (common < cache.tokens.size() && common < history.size() &&
         cache.tokens[common] == history[common])
    ++common;
  if (common < cache.tokens.size()) {
    cache.tokens.resize(common);
    cache.rows = static_cast<int>(common) + (cache.rows > 0 ? 1 : 0);
  }
  const int need = static_cast<int>(history.size()) + 1;
  if (cache.u.rows() < need) {
    int capacity = std::max<int>(64, static_cast<int>(cache.u.rows()));
    while (capacity < need) capacity *= 2;
    cache.u.conservativeResize(capacity, d);
    cache.k.conservativeResize(capacity, d);
    cache.v.conservativeResize(capacity, d);
  }
  if (cache.rows == 0) {
    input_row(params, kBeginToken, 0, cache.u, 0);
    cache.k.row(0) = cache.u.row(0) * params.w.w_key.transpose();
    cache.v.row(0) = cache.u.row(0) * params.w.w_value.transpose();
    cache.rows = 1;
  }
  for (std::size_t i = cache.tokens.size(); i < history.size(); ++i) {
    const int row = static_cast<int>(i) + 1;
    input_row(params, history[i], row, cache.u, row);
    cache.k.row(row) = cache.u.row(row) * params.w.w_key.transpose();
    cache.v.row(row) = cache.u.row(row) * params.w.w_value.transpose();
    cache.tokens.push_back(history[i]);
    cache.rows = row + 1;
  }
}

namespace {

struct AttnForward {
  Eigen::VectorXd q, alpha, attn, g;
};

AttnForward attention_forward(const PolicyParameters& params, const EncoderCache& cache,
                              int prefix_len) {
  if (prefix_len < 0 || prefix_len + 1 > cache.rows)
    throw std::out_of_range("prefix length beyond encoder cache");
  const int rows = prefix_len + 1;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.dim()));
  AttnForward f;
  Eigen::VectorXd u_last = cache.u.row(prefix_len).transpose();
  f.q = params.w.w_query * u_last;
  Eigen::VectorXd scores = cache.k.topRows(rows) * f.q * inv_sqrt_d;
  const double mx = scores.maxCoeff();
  f.alpha = (scores.array() - mx).exp();
  f.alpha /= f.alpha.sum();
  f.attn = cache.v.topRows(rows).transpose() * f.alpha;
  f.g = (params.w.w_out * f.attn + u_last).array().tanh();
  return f;
}

}  // namespace

Eigen::VectorXd encode_prefix(const PolicyParameters& params, const EncoderCache& cache,
                              int prefix_len) {
  return attention_forward(params, cache, prefix_len).g;
}

void encode_prefix_backward(const PolicyParameters& params, const EncoderCache& cache,
                            int prefix_len, const Eigen::VectorXd& dg, PolicyGradients& grads) {
  const AttnForward f = attention_forward(params, cache, prefix_len);
  const int rows = prefix_len + 1;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(params.dim()));
  Eigen::VectorXd u_last = cache.u.row(prefix_len).transpose();

  Eigen::VectorXd dpre = dg.array() * (1.0 - f.g.array().square());
  grads.w_out += dpre * f.attn.transpose();
  Eigen::VectorXd dattn = params.w.w_out.transpose() * dpre;
  Eigen::VectorXd du_last = dpre;  // residual path

  Eigen::VectorXd dalpha = cache.v.topRows(rows) * dattn;
  // softmax backward
  const double dot = f.alpha.dot(dalpha);
  Eigen::VectorXd ds = f.alpha.array() * (dalpha.array() - dot);

  Eigen::VectorXd dq = cache.k.topRows(rows).transpose() * ds * inv_sqrt_d;
  grads.w_query += dq * u_last.transpose();
  du_last += params.w.w_query.transpose() * dq;

  // Rank-1 accumulations for the key/value projections.
  Eigen::VectorXd ds_u = cache.u.topRows(rows).transpose() * ds;
  Eigen::VectorXd alpha_u = cache.u.topRows(rows).transpose() * f.alpha;
  grads.w_key += (f.q * inv_sqrt_d) * ds_u.transpose();
  grads.w_value += dattn * alpha_u.transpose();

  Eigen::VectorXd wk_q = params.w.w_key.transpose() * f.q * inv_sqrt_d;
  Eigen::VectorXd wv_da = params.w.w_value.transpose() * dattn;

  // Per-position input gradients -> embedding rows.
  for (int r = 0; r < rows; ++r) {
    Eigen::VectorXd du = ds(r) * wk_q + f.alpha(r) * wv_da;
    if (r == prefix_len) du += du_last;
    const TokenId tok = (r == 0) ? kBeginToken : cache.tokens[r - 1];
    grads.embeddings.row(tok) += du.transpose();
  }
}

Eigen::VectorXd encode(const PolicyParameters& params, std::span<const TokenId> history) {
  EncoderCache cache;
  encoder_extend(params, history, cache);
  return encode_prefix(params, cache, static_cast<int>(history.size()));
}

// ---- distributions ----

std::vector<int> available_for_env(int active_env, const ActionCatalog& catalog) {
  GlobalState s;
  s.active_env = active_env;
  return available_actions(s, catalog);
}

ActionDistribution masked_distribution(const PolicyParameters& params, const Eigen::VectorXd& g,
                                       std::span<const int> support) {
  ActionDistribution dist;
  dist.support.assign(support.begin(), support.end());
  dist.probs.resize(support.size());
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < support.size(); ++i) {
    dist.probs[i] = params.w.head.row(support[i]).dot(g);
    mx = std::max(mx, dist.probs[i]);
  }
  double z = 0.0;
  for (double& p : dist.probs) {
    p = std::exp(p - mx);
    z += p;
  }
  for (double& p : dist.probs) p /= z;
  return dist;
}

ActionDistribution action_distribution(const PolicyParameters& params,
                                       std::span<const TokenId> history, int active_env,
                                       const ActionCatalog& catalog) {
  Eigen::VectorXd g = encode(params, history);
  std::vector<int> support = available_for_env(active_env, catalog);
  return masked_distribution(params, g, support);
}

void logits_backward(const PolicyParameters& params, const EncoderCache& cache, int prefix_len,
                     const Eigen::VectorXd& g, const ActionDistribution& dist,
                     const Eigen::VectorXd& dlogits, PolicyGradients& grads) {
  Eigen::VectorXd dgsum = Eigen::VectorXd::Zero(params.dim());
  for (std::size_t i = 0; i < dist.support.size(); ++i) {
    if (dlogits(static_cast<Eigen::Index>(i)) == 0.0) continue;
    grads.head.row(dist.support[i]) += dlogits(static_cast<Eigen::Index>(i)) * g.transpose();
    dgsum += dlogits(static_cast<Eigen::Index>(i)) * params.w.head.row(dist.support[i]).transpose();
  }
  encode_prefix_backward(params, cache, prefix_len, dgsum, grads);
}

// ---- KL ----

double kl_restricted_cached(const PolicyParameters& p, const EncoderCache& p_cache,
                            const PolicyParameters& q, const EncoderCache& q_cache,
                            int prefix_len, std::span<const int> support, double coef,
                            PolicyGradients* grads) {
  Eigen::VectorXd gp = encode_prefix(p, p_cache, prefix_len);
  Eigen::VectorXd gq = encode_prefix(q, q_cache, prefix_len);
  ActionDistribution dp = masked_distribution(p, gp, support);
  ActionDistribution dq = masked_distribution(q, gq, support);
  double kl = 0.0;
  for (std::size_t i = 0; i < support.size(); ++i)
    kl += dp.probs[i] * (std::log(dp.probs[i]) - std::log(dq.probs[i]));
  if (grads != nullptr && coef != 0.0) {
    // dKL/dz_a = p_a (log(p_a/q_a) - KL)
    Eigen::VectorXd dlogits(static_cast<Eigen::Index>(support.size()));
    for (std::size_t i = 0; i < support.size(); ++i)
      dlogits(static_cast<Eigen::Index>(i)) =
          coef * dp.probs[i] * (std::log(dp.probs[i]) - std::log(dq.probs[i]) - kl);
    logits_backward(p, p_cache, prefix_len, gp, dp, dlogits, *grads);
  }
  return kl;
}

double kl_restricted(const PolicyParameters& p, const PolicyParameters& q,
                     std::span<const TokenId> history, std::span<const int> support) {
  EncoderCache cp, cq;
  encoder_extend(p, history, cp);
  encoder_extend(q, history, cq);
  return kl_restricted_cached(p, cp, q, cq, static_cast<int>(history.size()), support, 0.0, nullptr);
}

double kl_vocab(const PolicyParameters& p, const PolicyParameters& ref,
                std::span<const TokenId> history) {
  std::vector<int> support(p.vocab_size());
  for (int i = 0; i < p.vocab_size(); ++i) support[i] = i;
  return kl_restricted(p, ref, history, support);
}

// ---- rollout replay ----

std::vector<double> sequence_logprob(const PolicyParameters& params, const Rollout& rollout,
                                     const ActionCatalog& catalog) {
  EncoderCache cache;
  encoder_extend(params, rollout.final_state.history, cache);
  std::vector<double> out;
  out.reserve(rollout.records.size());
  for (const RolloutRecord& rec : rollout.records) {
    if (!rec.trainable) continue;
    Eigen::VectorXd g = encode_prefix(params, cache, rec.pre_history_length);
    std::vector<int> support = available_for_env(rec.active_env, catalog);
    ActionDistribution dist = masked_distribution(params, g, support);
    double p = 0.0;
    for (std::size_t i = 0; i < dist.support.size(); ++i)
      if (dist.support[i] == rec.action) p = dist.probs[i];
    out.push_back(std::log(p));
  }
  return out;
}

ActionDistribution NeuralPolicy::distribution(const GlobalState& state,
                                              const ActionCatalog& catalog) {
  if (params_->version != seen_version_) {
    cache_.reset();
    seen_version_ = params_->version;
  }
  encoder_extend(*params_, state.history, cache_);
  Eigen::VectorXd g = encode_prefix(*params_, cache_, static_cast<int>(state.history.size()));
  std::vector<int> support = available_for_env(state.active_env, catalog);
  return masked_distribution(*params_, g, support);
}

// ---- language pretraining ----

PretrainStats pretrain_language(PolicyParameters& params,
                                const std::vector<std::vector<TokenId>>& corpus,
                                const PretrainCfg& cfg) {
  PretrainStats stats;
  if (corpus.empty()) return stats;
  const int vocab = params.vocab_size();
  std::vector<int> support(vocab);
  for (int i = 0; i < vocab; ++i) support[i] = i;

  Rng rng(cfg.seed);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng.shuffle(order);
  std::size_t holdout = static_cast<std::size_t>(cfg.holdout_fraction * corpus.size());
  std::vector<std::size_t> train_idx(order.begin(), order.end() - holdout);
  std::vector<std::size_t> hold_idx(order.end() - holdout, order.end());

  AdamState opt;
  // Only vocabulary head rows take language-model gradient; expanded rows
  // must come out bit-identical, so mask them after each accumulation.
  const int expanded_rows = params.num_actions() - vocab;
  EncoderCache cache;
  auto sequence_grad = [&](const std::vector<TokenId>& seq, PolicyGradients* grads) {
    cache.reset();
    encoder_extend(params, seq, cache);
    double nll = 0.0;
    for (std::size_t j = 0; j < seq.size(); ++j) {
      Eigen::VectorXd g = encode_prefix(params, cache, static_cast<int>(j));
      ActionDistribution dist = masked_distribution(params, g, support);
      nll -= std::log(dist.probs[seq[j]]);
      if (grads) {
        Eigen::VectorXd dlogits(vocab);
        for (int a = 0; a < vocab; ++a) dlogits(a) = dist.probs[a];
        dlogits(seq[j]) -= 1.0;  // d(-log p)/dz
        logits_backward(params, cache, static_cast<int>(j), g, dist, dlogits, *grads);
      }
    }
    return nll / std::max<std::size_t>(1, seq.size());
  };

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(train_idx);
    double loss_sum = 0.0;
    for (std::size_t idx : train_idx) {
      PolicyGradients grads = PolicyTensors::zeros_like(params.w);
      loss_sum += sequence_grad(corpus[idx], &grads);
      if (expanded_rows > 0) grads.head.bottomRows(expanded_rows).setZero();
      adam_step(params.w, grads, opt,
                {.learning_rate = cfg.learning_rate, .maximize = false});
      ++params.version;
    }
    stats.epoch_loss.push_back(loss_sum / train_idx.size());
  }
  double hold_nll = 0.0;
  std::size_t hold_tokens = 0;
  for (std::size_t idx : hold_idx) {
    hold_nll += sequence_grad(corpus[idx], nullptr) * corpus[idx].size();
    hold_tokens += corpus[idx].size();
  }
  stats.holdout_perplexity = hold_tokens ? std::exp(hold_nll / hold_tokens) : 0.0;
  return stats;
}

// ---- checkpoints ----

nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  const Eigen::Index rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j.at(0).size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

nlohmann::json params_to_json(const PolicyParameters& params) {
  nlohmann::json j;
  j["catalog_hash"] = params.catalog_hash;
  j["version"] = params.version;
  j["embeddings"] = matrix_to_json(params.w.embeddings);
  j["encoder"] = {{"w_query", matrix_to_json(params.w.w_query)},
                  {"w_key", matrix_to_json(params.w.w_key)},
                  {"w_value", matrix_to_json(params.w.w_value)},
                  {"w_out", matrix_to_json(params.w.w_out)}};
  j["head"] = matrix_to_json(params.w.head);
  return j;
}

PolicyParameters params_from_json(const nlohmann::json& j) {
  PolicyParameters p;
  p.catalog_hash = j.at("catalog_hash").get<std::uint64_t>();
  p.version = j.at("version").get<std::int64_t>();
  p.w.embeddings = matrix_from_json(j.at("embeddings"));
  p.w.w_query = matrix_from_json(j.at("encoder").at("w_query"));
  p.w.w_key = matrix_from_json(j.at("encoder").at("w_key"));
  p.w.w_value = matrix_from_json(j.at("encoder").at("w_value"));
  p.w.w_out = matrix_from_json(j.at("encoder").at("w_out"));
  p.w.head = matrix_from_json(j.at("head"));
  return p;
}

void save_params(const std::string& path, const PolicyParameters& params) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open '" + path + "' for writing");
  out << params_to_json(params).dump();
}

PolicyParameters load_params(const std::string& path, const ActionCatalog& catalog) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  PolicyParameters p;
  try {
    p = params_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("corrupt parameter file '" + path + "': " + e.what());
  }
  if (p.catalog_hash != catalog.hash())
    throw std::runtime_error("checkpoint catalog hash mismatch: the parameter file was built "
                             "for a different action catalog");
  return p;
}

}  // namespace expa
