#include "rolldrop/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "rolldrop/errors.hpp"
#include "rolldrop/kernels.hpp"

namespace rolldrop::ppo {

void validate(const PpoConfig& c) {
  if (c.num_envs == 0 || c.steps_per_env == 0) throw ConfigError("ppo: num_envs and steps_per_env must be positive");
  if (c.minibatch_size == 0 || c.batch_size() % c.minibatch_size != 0)
    throw ConfigError("ppo: batch_size (" + std::to_string(c.batch_size()) +
                      ") must be divisible by minibatch_size (" + std::to_string(c.minibatch_size) + ")");
  if (c.epochs == 0) throw ConfigError("ppo: epochs must be positive");
  if (!(c.clip_range > 0.0 && c.clip_range < 1.0)) throw ConfigError("ppo: clip_range must lie in (0, 1)");
  if (!(c.gamma >= 0.0 && c.gamma <= 1.0) || !(c.lambda >= 0.0 && c.lambda <= 1.0))
    throw ConfigError("ppo: gamma and lambda must lie in [0, 1]");
  if (!(c.learning_rate > 0.0)) throw ConfigError("ppo: learning_rate must be positive");
  if (!(c.value_coef >= 0.0) || !(c.entropy_coef >= 0.0)) throw ConfigError("ppo: loss coefficients must be >= 0");
  if (!(c.grad_norm_clip > 0.0)) throw ConfigError("ppo: grad_norm_clip must be positive");
  if (!(c.adam_beta1 >= 0.0 && c.adam_beta1 < 1.0) || !(c.adam_beta2 >= 0.0 && c.adam_beta2 < 1.0))
    throw ConfigError("ppo: Adam betas must lie in [0, 1)");
  if (!(c.adam_eps > 0.0)) throw ConfigError("ppo: adam_eps must be positive");
  if (!(c.sigma_floor > 0.0)) throw ConfigError("ppo: sigma_floor must be positive");
}

GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ContractViolation("gae: input lengths differ");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double carry = 0.0;
  for (std::size_t t = n; t-- > 0;) {
    const double next_value = t + 1 == n ? bootstrap_value : values[t + 1];
    const double live = dones[t] ? 0.0 : 1.0;
    const double delta = rewards[t] + gamma * next_value * live - values[t];
    carry = delta + gamma * lambda * live * carry;
    out.advantages[t] = carry;
  }
  for (std::size_t t = 0; t < n; ++t) out.returns[t] = out.advantages[t] + values[t];
  return out;
}

void normalize(std::span<double> x) {
  if (x.empty()) return;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= static_cast<double>(x.size());
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / static_cast<double>(x.size()));
  for (double& v : x) v = sd > 0.0 ? (v - mean) / sd : v - mean;
}

Dataset make_dataset(const rollout::RolloutBatch& b, double gamma, double lambda, bool normalize_adv) {
  Dataset d;
  d.size = b.size();
  d.obs_size = b.obs_size;
  d.action_size = b.action_size;
  d.obs = b.obs;
  d.actions = b.actions;
  d.old_log_probs = b.log_probs;
  d.advantages.resize(d.size);
  d.returns.resize(d.size);
  for (std::size_t e = 0; e < b.num_envs; ++e) {
    const std::size_t off = b.index(e, 0);
    const GaeResult g = gae(std::span(b.rewards).subspan(off, b.steps), std::span(b.values).subspan(off, b.steps),
                            std::span(b.dones).subspan(off, b.steps), b.last_values[e], gamma, lambda);
    std::copy(g.advantages.begin(), g.advantages.end(), d.advantages.begin() + static_cast<std::ptrdiff_t>(off));
    std::copy(g.returns.begin(), g.returns.end(), d.returns.begin() + static_cast<std::ptrdiff_t>(off));
  }
  if (normalize_adv) normalize(d.advantages);
  return d;
}

double clipped_surrogate(double ratio, double advantage, double clip_range) {
  const double clipped = std::clamp(ratio, 1.0 - clip_range, 1.0 + clip_range);
  return std::min(ratio * advantage, clipped * advantage);
}

std::size_t flat_size(const nn::PolicyNet& policy, const nn::ValueNet& value_net) {
  return policy.body.param_count() + policy.log_std.size() + value_net.body.param_count();
}

std::vector<double> flatten(const nn::PolicyNet& policy, const nn::ValueNet& value_net) {
  std::vector<double> out;
  out.reserve(flat_size(policy, value_net));
  const auto pb = policy.body.params();
  const auto vb = value_net.body.params();
  out.insert(out.end(), pb.begin(), pb.end());
  out.insert(out.end(), policy.log_std.begin(), policy.log_std.end());
  out.insert(out.end(), vb.begin(), vb.end());
  return out;
}

void unflatten(std::span<const double> flat, nn::PolicyNet& policy, nn::ValueNet& value_net) {
  if (flat.size() != flat_size(policy, value_net)) throw ContractViolation("flat parameter size mismatch");
  auto pb = policy.body.params();
  auto vb = value_net.body.params();
  std::size_t o = 0;
  std::copy_n(flat.begin(), pb.size(), pb.begin());
  o += pb.size();
  std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(o), policy.log_std.size(), policy.log_std.begin());
  o += policy.log_std.size();
  std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(o), vb.size(), vb.begin());
}

namespace {

struct ChunkStats {
  double surrogate = 0.0;
  double value_sq = 0.0;
  double clipped = 0.0;
  double kl = 0.0;
};

void check_dataset(const nn::PolicyNet& policy, const nn::ValueNet& value_net, const Dataset& data,
                   std::span<const std::size_t> idx) {
  if (idx.empty()) throw ContractViolation("ppo_loss: empty minibatch");
  if (data.obs_size != policy.obs_size() || data.action_size != policy.action_size() ||
      value_net.body.input_size() != data.obs_size)
    throw ContractViolation("ppo_loss: dataset shape does not match the networks");
  for (std::size_t i : idx)
    if (i >= data.size) throw ContractViolation("ppo_loss: sample index out of range");
}

std::vector<double> dropout_scale(const nn::PolicyNet& policy, std::uint64_t seed, std::uint64_t key) {
  const std::size_t width = policy.dropout_width();
  RngStream rng(seed, kLearnerStream, StreamId::TrainDropout, key * width);
  return nn::train_dropout_scale(policy.train_dropout_p, width, rng);
}

// Per-sample loss terms; writes d(loss)/d(mean) and accumulates d(loss)/d(log_std).
struct SampleGrad {
  double surrogate, value_sq, clipped, kl, grad_value;
};

SampleGrad sample_terms(const nn::PolicyNet& policy, const Dataset& data, std::size_t i, const double* mean,
                        double v, const PpoConfig& cfg, double inv_n, double* grad_mean, double* grad_log_std) {
  const std::size_t a_n = data.action_size;
  const std::span<const double> act(&data.actions[i * a_n], a_n);
  const double logp = nn::gaussian_log_prob(std::span<const double>(mean, a_n), policy.log_std, act);
  const double old = data.old_log_probs[i];
  const double ratio = std::exp(logp - old);
  const double adv = data.advantages[i];
  const double clipped = std::clamp(ratio, 1.0 - cfg.clip_range, 1.0 + cfg.clip_range);
  const double unclipped_term = ratio * adv;
  const double clipped_term = clipped * adv;
  const bool active = unclipped_term <= clipped_term;
  const double g_logp = active ? -unclipped_term * inv_n : 0.0;
  for (std::size_t k = 0; k < a_n; ++k) {
    const double sigma = std::exp(policy.log_std[k]);
    const double diff = act[k] - mean[k];
    const double d = diff / sigma;
    grad_mean[k] = g_logp * (diff / (sigma * sigma));
    grad_log_std[k] += g_logp * (d * d - 1.0);
  }
  const double err = v - data.returns[i];
  SampleGrad s;
  s.surrogate = std::min(unclipped_term, clipped_term);
  s.value_sq = err * err;
  s.clipped = std::abs(ratio - 1.0) > cfg.clip_range ? 1.0 : 0.0;
  s.kl = old - logp;
  s.grad_value = cfg.value_coef * 2.0 * err * inv_n;
  return s;
}

LossAndGrad finish(const nn::PolicyNet& policy, const std::vector<std::vector<double>>& chunk_grads,
                   const std::vector<ChunkStats>& stats, std::size_t n, const PpoConfig& cfg,
                   std::size_t total) {
  LossAndGrad out;
  out.grad.assign(total, 0.0);
  ChunkStats sum;
  for (std::size_t c = 0; c < chunk_grads.size(); ++c) {
    const auto& g = chunk_grads[c];
    for (std::size_t k = 0; k < total; ++k) out.grad[k] += g[k];
    sum.surrogate += stats[c].surrogate;
    sum.value_sq += stats[c].value_sq;
    sum.clipped += stats[c].clipped;
    sum.kl += stats[c].kl;
  }
  const std::size_t ls_off = policy.body.param_count();
  if (cfg.entropy_coef != 0.0)
    for (std::size_t k = 0; k < policy.log_std.size(); ++k) out.grad[ls_off + k] -= cfg.entropy_coef;
  const double dn = static_cast<double>(n);
  out.loss.surrogate = -sum.surrogate / dn;
  out.loss.value = sum.value_sq / dn;
  out.loss.entropy = nn::gaussian_entropy(policy.log_std);
  out.loss.total = out.loss.surrogate + cfg.value_coef * out.loss.value - cfg.entropy_coef * out.loss.entropy;
  out.loss.clip_fraction = sum.clipped / dn;
  out.loss.approx_kl = sum.kl / dn;
  return out;
}

}  // namespace

LossAndGrad ppo_loss(const nn::PolicyNet& policy, const nn::ValueNet& value_net, const Dataset& data,
                     std::span<const std::size_t> idx, const PpoConfig& cfg, std::uint64_t seed,
                     std::uint64_t dropout_key) {
  check_dataset(policy, value_net, data, idx);
  const std::size_t n = idx.size();
  const std::size_t chunks = (n + kGradChunk - 1) / kGradChunk;
  const std::size_t pc = policy.body.param_count();
  const std::size_t a_n = data.action_size;
  const std::size_t o_n = data.obs_size;
  const std::size_t total = flat_size(policy, value_net);
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool train_dropout = policy.train_dropout_p > 0.0;
  const std::size_t width = policy.dropout_width();
  const auto wt_p = kernels::TransposedWeights::of(policy.body);
  const auto wt_v = kernels::TransposedWeights::of(value_net.body);

  std::vector<std::vector<double>> grads(chunks);
  std::vector<ChunkStats> stats(chunks);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t sc = 0; sc < static_cast<std::ptrdiff_t>(chunks); ++sc) {
    const auto c = static_cast<std::size_t>(sc);
    const std::size_t begin = c * kGradChunk;
    const std::size_t rows = std::min(kGradChunk, n - begin);
    std::vector<double> obs(rows * o_n);
    for (std::size_t r = 0; r < rows; ++r)
      std::copy_n(&data.obs[idx[begin + r] * o_n], o_n, &obs[r * o_n]);
    std::vector<double> scale;
    if (train_dropout) {
      scale.resize(rows * width);
      for (std::size_t r = 0; r < rows; ++r) {
        const auto s = dropout_scale(policy, seed, dropout_key + begin + r);
        std::copy(s.begin(), s.end(), &scale[r * width]);
      }
    }
    kernels::BatchTape pt, vt;
    kernels::batch_forward(policy.body, obs, rows, pt, scale, policy.rolldrop_position);
    kernels::batch_forward(value_net.body, obs, rows, vt);

    auto& g = grads[c];
    g.assign(total, 0.0);
    std::vector<double> grad_mean(rows * a_n), grad_v(rows);
    ChunkStats& st = stats[c];
    const auto& means = pt.act.back();
    const auto& vals = vt.act.back();
    for (std::size_t r = 0; r < rows; ++r) {
      const SampleGrad s = sample_terms(policy, data, idx[begin + r], &means[r * a_n], vals[r], cfg, inv_n,
                                        &grad_mean[r * a_n], &g[pc]);
      st.surrogate += s.surrogate;
      st.value_sq += s.value_sq;
      st.clipped += s.clipped;
      st.kl += s.kl;
      grad_v[r] = s.grad_value;
    }
    kernels::batch_backward(policy.body, wt_p, pt, grad_mean, std::span(g).subspan(0, pc));
    kernels::batch_backward(value_net.body, wt_v, vt, grad_v,
                            std::span(g).subspan(pc + a_n, value_net.body.param_count()));
  }
  return finish(policy, grads, stats, n, cfg, total);
}

LossAndGrad ppo_loss_serial(const nn::PolicyNet& policy, const nn::ValueNet& value_net, const Dataset& data,
                            std::span<const std::size_t> idx, const PpoConfig& cfg, std::uint64_t seed,
                            std::uint64_t dropout_key) {
  check_dataset(policy, value_net, data, idx);
  const std::size_t n = idx.size();
  const std::size_t chunks = (n + kGradChunk - 1) / kGradChunk;
  const std::size_t pc = policy.body.param_count();
  const std::size_t a_n = data.action_size;
  const std::size_t o_n = data.obs_size;
  const std::size_t total = flat_size(policy, value_net);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<std::vector<double>> grads(chunks);
  std::vector<ChunkStats> stats(chunks);
  nn::Tape pt, vt;
  std::vector<double> grad_mean(a_n);
  for (std::size_t c = 0; c < chunks; ++c) {
    const std::size_t begin = c * kGradChunk;
    const std::size_t rows = std::min(kGradChunk, n - begin);
    auto& g = grads[c];
    g.assign(total, 0.0);
    const auto gp = std::span(g).subspan(0, pc);
    const auto gv = std::span(g).subspan(pc + a_n, value_net.body.param_count());
    for (std::size_t r = 0; r < rows; ++r) {
      const std::size_t i = idx[begin + r];
      const std::span<const double> obs(&data.obs[i * o_n], o_n);
      std::vector<double> scale;
      nn::UnitScale us;
      if (policy.train_dropout_p > 0.0) {
        scale = dropout_scale(policy, seed, dropout_key + begin + r);
        us = {policy.rolldrop_position, scale};
      }
      nn::forward_cached(policy.body, obs, pt, scale.empty() ? nullptr : &us);
      nn::forward_cached(value_net.body, obs, vt);
      const SampleGrad s = sample_terms(policy, data, i, pt.output().data(), vt.output()[0], cfg, inv_n,
                                        grad_mean.data(), &g[pc]);
      stats[c].surrogate += s.surrogate;
      stats[c].value_sq += s.value_sq;
      stats[c].clipped += s.clipped;
      stats[c].kl += s.kl;
      nn::backward_into(policy.body, pt, grad_mean, gp);
      const double gvv = s.grad_value;
      nn::backward_into(value_net.body, vt, std::span<const double>(&gvv, 1), gv);
    }
  }
  return finish(policy, grads, stats, n, cfg, total);
}

void Adam::step(std::span<double> params, std::span<const double> grad, double lr, double beta1, double beta2,
                double eps) {
  if (params.size() != m_.size() || grad.size() != m_.size()) throw ContractViolation("Adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    m_[k] = beta1 * m_[k] + (1.0 - beta1) * grad[k];
    v_[k] = beta2 * v_[k] + (1.0 - beta2) * grad[k] * grad[k];
    const double mh = m_[k] / c1;
    const double vh = v_[k] / c2;
    params[k] -= lr * mh / (std::sqrt(vh) + eps);
  }
}

double clip_grad_norm(std::span<double> grad, double max_norm) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (double& g : grad) g *= s;
  }
  return norm;
}

Learner make_learner(const nn::NetSpec& spec, std::uint64_t seed) {
  Learner l;
  RngStream init(seed, kLearnerStream, StreamId::Init);
  l.policy = nn::make_policy(spec, init);
  l.value = nn::make_value(spec, init);
  l.adam = Adam(flat_size(l.policy, l.value));
  l.seed = seed;
  return l;
}

namespace {

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

UpdateStats update(Learner& learner, const Dataset& data, const PpoConfig& cfg) {
  validate(cfg);
  const std::size_t n = data.size;
  const std::size_t mb = std::min(cfg.minibatch_size, n);
  if (n == 0 || n % mb != 0) throw ContractViolation("update: dataset size must be a multiple of the minibatch");

  const Learner snapshot = learner;
  const double log_floor = std::log(cfg.sigma_floor);
  std::vector<std::size_t> perm(n);
  UpdateStats stats;
  double norm_sum = 0.0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    RngStream shuffle(learner.seed, kLearnerStream, StreamId::Shuffle, learner.shuffle_counter);
    for (std::size_t i = n - 1; i > 0; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle.next_u64() % (i + 1));
      std::swap(perm[i], perm[j]);
    }
    learner.shuffle_counter = shuffle.counter();

    for (std::size_t start = 0; start < n; start += mb) {
      const std::span<const std::size_t> idx(perm.data() + start, mb);
      LossAndGrad lg = ppo_loss(learner.policy, learner.value, data, idx, cfg, learner.seed,
                                learner.optimizer_steps * mb);
      if (!std::isfinite(lg.loss.total) || !all_finite(lg.grad)) {
        learner = snapshot;
        stats = UpdateStats{};
        stats.aborted = true;
        return stats;
      }
      norm_sum += clip_grad_norm(lg.grad, cfg.grad_norm_clip);
      std::vector<double> flat = flatten(learner.policy, learner.value);
      learner.adam.step(flat, lg.grad, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
      unflatten(flat, learner.policy, learner.value);
      for (double& ls : learner.policy.log_std) ls = std::max(ls, log_floor);
      ++learner.optimizer_steps;
      ++stats.optimizer_steps;
      stats.loss.surrogate += lg.loss.surrogate;
      stats.loss.value += lg.loss.value;
      stats.loss.entropy += lg.loss.entropy;
      stats.loss.total += lg.loss.total;
      stats.loss.clip_fraction += lg.loss.clip_fraction;
      stats.loss.approx_kl += lg.loss.approx_kl;
    }
  }
  const double k = static_cast<double>(stats.optimizer_steps);
  stats.loss.surrogate /= k;
  stats.loss.value /= k;
  stats.loss.entropy /= k;
  stats.loss.total /= k;
  stats.loss.clip_fraction /= k;
  stats.loss.approx_kl /= k;
  stats.grad_norm = norm_sum / k;
  return stats;
}

}  // namespace rolldrop::ppo
