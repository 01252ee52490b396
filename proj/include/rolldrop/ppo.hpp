#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "rolldrop/nn.hpp"
#include "rolldrop/rng.hpp"
#include "rolldrop/rollout.hpp"

namespace rolldrop::ppo {

struct PpoConfig {
  std::size_t num_envs = 128;
  std::size_t steps_per_env = 200;
  std::size_t minibatch_size = 6400;
  std::size_t epochs = 8;
  double clip_range = 0.2;
  double entropy_coef = 0.0;
  double gamma = 0.996;
  double lambda = 0.95;
  double learning_rate = 1e-4;
  double value_coef = 0.5;
  double grad_norm_clip = 1.0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double sigma_floor = 0.2;
  bool normalize_advantages = true;
  std::size_t total_iterations = 1500;

  std::size_t batch_size() const { return num_envs * steps_per_env; }
  bool operator==(const PpoConfig&) const = default;
};

void validate(const PpoConfig& cfg);

// Samples per gradient chunk. Chunks are reduced in index order, so the
// gradient does not depend on how many threads computed them.
inline constexpr std::size_t kGradChunk = 64;

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Backward recursion over one trajectory segment. dones[t] = 1 cuts the
// bootstrap from step t+1 (and from bootstrap_value when t is the last step).
GaeResult gae(std::span<const double> rewards, std::span<const double> values,
              std::span<const std::uint8_t> dones, double bootstrap_value, double gamma, double lambda);

// In place: mean 0, population std 1 (left centred when the std is 0).
void normalize(std::span<double> x);

// Flat training set built from a rollout batch.
struct Dataset {
  std::size_t size = 0;
  std::size_t obs_size = 0;
  std::size_t action_size = 0;
  std::vector<double> obs;
  std::vector<double> actions;
  std::vector<double> old_log_probs;
  std::vector<double> advantages;
  std::vector<double> returns;
};

Dataset make_dataset(const rollout::RolloutBatch& batch, double gamma, double lambda, bool normalize_adv);

struct LossComponents {
  double surrogate = 0.0;  // -mean(min(rho A, clip(rho) A))
  double value = 0.0;      // mean((V - R)^2), before value_coef
  double entropy = 0.0;
  double total = 0.0;
  double clip_fraction = 0.0;
  double approx_kl = 0.0;  // mean(old_logp - logp)
};

// Per-sample surrogate term min(rho A, clip(rho, 1-eps, 1+eps) A).
double clipped_surrogate(double ratio, double advantage, double clip_range);

// The learner's parameters flattened as [policy body | log_std | value body].
std::size_t flat_size(const nn::PolicyNet& policy, const nn::ValueNet& value_net);
std::vector<double> flatten(const nn::PolicyNet& policy, const nn::ValueNet& value_net);
void unflatten(std::span<const double> flat, nn::PolicyNet& policy, nn::ValueNet& value_net);

struct LossAndGrad {
  LossComponents loss;
  std::vector<double> grad;  // flat layout
};

// Loss and analytic gradient over samples idx of the dataset. Train-time
// dropout (policy.train_dropout_p > 0) draws its mask for sample idx[k] from
// the TrainDropout stream at counter (dropout_key + k) * width.
LossAndGrad ppo_loss(const nn::PolicyNet& policy, const nn::ValueNet& value_net, const Dataset& data,
                     std::span<const std::size_t> idx, const PpoConfig& cfg, std::uint64_t seed,
                     std::uint64_t dropout_key);

// Single-threaded per-sample reference of ppo_loss (same chunked reduction).
LossAndGrad ppo_loss_serial(const nn::PolicyNet& policy, const nn::ValueNet& value_net, const Dataset& data,
                            std::span<const std::size_t> idx, const PpoConfig& cfg, std::uint64_t seed,
                            std::uint64_t dropout_key);

class Adam {
 public:
  Adam() = default;
  explicit Adam(std::size_t n) : m_(n, 0.0), v_(n, 0.0) {}
  void step(std::span<double> params, std::span<const double> grad, double lr, double beta1, double beta2,
            double eps);
  std::uint64_t steps() const { return t_; }
  const std::vector<double>& m() const { return m_; }
  const std::vector<double>& v() const { return v_; }

 private:
  std::vector<double> m_, v_;
  std::uint64_t t_ = 0;
};

// Scales grad in place so its L2 norm is at most max_norm; returns the norm before clipping.
double clip_grad_norm(std::span<double> grad, double max_norm);

struct Learner {
  nn::PolicyNet policy;
  nn::ValueNet value;
  Adam adam;
  std::uint64_t seed = 0;
  std::uint64_t shuffle_counter = 0;
  std::uint64_t optimizer_steps = 0;
};

Learner make_learner(const nn::NetSpec& spec, std::uint64_t seed);

struct UpdateStats {
  LossComponents loss;  // averaged over minibatch steps
  double grad_norm = 0.0;
  std::size_t optimizer_steps = 0;
  bool aborted = false;  // a non-finite loss or gradient rolled the update back
};

// epochs x (size / minibatch_size) Adam steps over shuffled minibatches.
UpdateStats update(Learner& learner, const Dataset& data, const PpoConfig& cfg);

}  // namespace rolldrop::ppo
