#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>

#include "oracles.hpp"
#include "rolldrop/checkpoint.hpp"
#include "rolldrop/errors.hpp"
#include "rolldrop/ppo.hpp"
#include "rolldrop/trainer.hpp"
#include "test_util.hpp"

using namespace rolldrop;
using namespace rolldrop::ppo;

namespace {

Learner small_learner(std::size_t obs, std::size_t act, std::uint64_t seed, double train_dropout = 0.0) {
  nn::NetSpec spec;
  spec.obs_size = obs;
  spec.action_size = act;
  spec.hidden = {6, 5, 4};
  spec.train_dropout_p = train_dropout;
  spec.policy_head_scale = 1.0;
  return make_learner(spec, seed);
}

// Synthetic dataset; old log probs sit near the current ones so ratios spread
// around 1 and some samples clip.
Dataset synthetic(const Learner& l, std::size_t n, std::uint64_t seed) {
  RngStream rng(seed, 0, StreamId::Init);
  Dataset d;
  d.size = n;
  d.obs_size = l.policy.obs_size();
  d.action_size = l.policy.action_size();
  d.obs.resize(n * d.obs_size);
  d.actions.resize(n * d.action_size);
  for (double& x : d.obs) x = rng.uniform(-1.0, 1.0);
  for (double& x : d.actions) x = rng.uniform(-2.0, 2.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> o(&d.obs[i * d.obs_size], d.obs_size);
    const auto mean = nn::infer(l.policy.body, o);
    const double lp = nn::gaussian_log_prob(mean, l.policy.log_std, std::span(&d.actions[i * d.action_size], d.action_size));
    d.old_log_probs.push_back(lp + rng.uniform(-0.5, 0.5));
    d.advantages.push_back(rng.uniform(-2.0, 2.0));
    d.returns.push_back(rng.uniform(-1.0, 1.0));
  }
  return d;
}

std::vector<std::size_t> iota(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

}  // namespace

TEST_CASE("gae examples") {
  using V = std::vector<double>;
  using D = std::vector<std::uint8_t>;
  SUBCASE("one step td") {
    const V r{0.7}, v{0.2};
    const GaeResult g = gae(r, v, D{0}, 0.9, 1.0, 1.0);
    CHECK(g.advantages[0] == doctest::Approx(0.7 + 0.9 - 0.2).epsilon(1e-15));
    CHECK(g.returns[0] == doctest::Approx(g.advantages[0] + 0.2).epsilon(1e-15));
  }
  SUBCASE("two steps") {
    const GaeResult g = gae(V{1, 1}, V{0.5, 0.5}, D{0, 0}, 0.5, 0.99, 0.95);
    CHECK(g.advantages[1] == doctest::Approx(0.995).epsilon(1e-14));
    CHECK(g.advantages[0] == doctest::Approx(0.995 + 0.9405 * 0.995).epsilon(1e-14));
    CHECK(g.advantages[0] == doctest::Approx(1.93080).epsilon(1e-5));
  }
  SUBCASE("terminal at step 0") {
    const GaeResult g = gae(V{1.5, 3.0}, V{0.25, 9.0}, D{1, 0}, 7.0, 0.99, 0.95);
    CHECK(g.advantages[0] == 1.5 - 0.25);
  }
  SUBCASE("length mismatch") { CHECK_THROWS_AS(gae(V{1, 2}, V{1}, D{0, 0}, 0, 0.9, 0.9), ContractViolation); }
}

TEST_CASE("gae equals the brute-force n-step sum") {
  RngStream rng(77, 0, StreamId::Init);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t T = 1 + static_cast<std::size_t>(rng.uniform() * 6.0);
    std::vector<double> r(T), v(T);
    std::vector<std::uint8_t> d(T);
    for (std::size_t t = 0; t < T; ++t) {
      r[t] = rng.uniform(-2.0, 2.0);
      v[t] = rng.uniform(-2.0, 2.0);
      d[t] = rng.uniform() < 0.25 ? 1 : 0;
    }
    const double boot = rng.uniform(-2.0, 2.0), gamma = rng.uniform(), lambda = rng.uniform();
    const GaeResult g = gae(r, v, d, boot, gamma, lambda);
    const auto ref = test::gae_brute_force(r, v, d, boot, gamma, lambda);
    for (std::size_t t = 0; t < T; ++t) CHECK(std::abs(g.advantages[t] - ref[t]) <= 1e-12);
  }
}

TEST_CASE("clipped surrogate") {
  CHECK(clipped_surrogate(1.5, 2.0, 0.2) == doctest::Approx(2.4).epsilon(1e-15));
  CHECK(clipped_surrogate(0.5, -1.0, 0.2) == doctest::Approx(-0.8).epsilon(1e-15));
  RngStream rng(5, 0, StreamId::Init);
  for (int i = 0; i < 1000; ++i) {
    const double rho = rng.uniform(0.8, 1.2), a = rng.uniform(-3.0, 3.0);
    CHECK(clipped_surrogate(rho, a, 0.2) == rho * a);
  }

  SUBCASE("ratio 1 gives -mean(A); entropy_coef 0 leaves entropy out") {
    Learner l = small_learner(3, 2, 4);
    Dataset d = synthetic(l, 40, 4);
    for (std::size_t i = 0; i < d.size; ++i) {
      const auto mean = nn::infer(l.policy.body, std::span(&d.obs[i * 3], 3));
      d.old_log_probs[i] = nn::gaussian_log_prob(mean, l.policy.log_std, std::span(&d.actions[i * 2], 2));
    }
    const PpoConfig cfg;
    const auto idx = iota(d.size);
    const LossAndGrad lg = ppo_loss(l.policy, l.value, d, idx, cfg, 1, 0);
    const double mean_a = std::accumulate(d.advantages.begin(), d.advantages.end(), 0.0) / 40.0;
    CHECK(lg.loss.surrogate == doctest::Approx(-mean_a).epsilon(1e-12));
    CHECK(lg.loss.clip_fraction == 0.0);
    CHECK(lg.loss.total == lg.loss.surrogate + cfg.value_coef * lg.loss.value);
  }
}

TEST_CASE("ppo_loss matches the serial reference bitwise") {
  for (double tdp : {0.0, 0.3}) {
    Learner l = small_learner(5, 3, 8, tdp);
    const Dataset d = synthetic(l, 300, 9);
    auto idx = iota(d.size);
    std::reverse(idx.begin(), idx.end());
    PpoConfig cfg;
    cfg.entropy_coef = 0.01;
    const LossAndGrad a = ppo_loss(l.policy, l.value, d, idx, cfg, 3, 17);
    const LossAndGrad b = ppo_loss_serial(l.policy, l.value, d, idx, cfg, 3, 17);
    CHECK(test::bitwise_equal(a.grad, b.grad));
    CHECK(a.loss.total == b.loss.total);
    CHECK(a.loss.surrogate == b.loss.surrogate);
  }
}

TEST_CASE("ppo_loss gradient matches finite differences") {
  for (double tdp : {0.0, 0.3}) {
    Learner l = small_learner(3, 2, 12, tdp);
    const Dataset d = synthetic(l, 64, 13);
    const auto idx = iota(d.size);
    PpoConfig cfg;
    cfg.entropy_coef = 0.01;
    const LossAndGrad lg = ppo_loss(l.policy, l.value, d, idx, cfg, 5, 0);
    const std::vector<double> flat = flatten(l.policy, l.value);
    std::vector<double> fd(flat.size());
    const double h = 1e-6;
    for (std::size_t k = 0; k < flat.size(); ++k) {
      std::vector<double> p = flat;
      p[k] = flat[k] + h;
      unflatten(p, l.policy, l.value);
      const double up = ppo_loss(l.policy, l.value, d, idx, cfg, 5, 0).loss.total;
      p[k] = flat[k] - h;
      unflatten(p, l.policy, l.value);
      const double dn = ppo_loss(l.policy, l.value, d, idx, cfg, 5, 0).loss.total;
      fd[k] = (up - dn) / (2.0 * h);
    }
    unflatten(flat, l.policy, l.value);
    CHECK(test::relative_error(lg.grad, fd) < 1e-6);
  }
}

TEST_CASE("normalize") {
  RngStream rng(31, 0, StreamId::Init);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> x(1 + static_cast<std::size_t>(rng.uniform() * 500));
    const double shift = rng.uniform(-100, 100), spread = rng.uniform(0.01, 50);
    for (double& v : x) v = shift + spread * rng.normal();
    if (x.size() == 1) x.push_back(x[0] + 1.0);
    normalize(x);
    double m = 0.0, s = 0.0;
    for (double v : x) m += v;
    m /= static_cast<double>(x.size());
    for (double v : x) s += (v - m) * (v - m);
    s = std::sqrt(s / static_cast<double>(x.size()));
    CHECK(std::abs(m) <= 1e-12);
    CHECK(std::abs(s - 1.0) <= 1e-9);
  }
  std::vector<double> c(10, 3.0);
  normalize(c);
  for (double v : c) CHECK(v == 0.0);
}

TEST_CASE("zero advantages and exact values leave the parameters alone") {
  Learner l = small_learner(3, 2, 21);
  Dataset d = synthetic(l, 64, 22);
  for (std::size_t i = 0; i < d.size; ++i) {
    d.advantages[i] = 0.0;
    d.returns[i] = nn::value(l.value, std::span(&d.obs[i * 3], 3));
  }
  PpoConfig cfg;
  cfg.minibatch_size = 16;
  cfg.epochs = 3;
  const auto before = flatten(l.policy, l.value);
  const UpdateStats st = update(l, d, cfg);
  CHECK_FALSE(st.aborted);
  CHECK(st.optimizer_steps == 12);
  CHECK(test::bitwise_equal(flatten(l.policy, l.value), before));
}

TEST_CASE("update is deterministic") {
  const Learner l0 = small_learner(4, 2, 40, 0.1);
  const Dataset d = synthetic(l0, 128, 41);
  PpoConfig cfg;
  cfg.minibatch_size = 32;
  cfg.epochs = 4;
  Learner a = l0, b = l0;
  update(a, d, cfg);
  update(b, d, cfg);
  CHECK(test::bitwise_equal(flatten(a.policy, a.value), flatten(b.policy, b.value)));
  CHECK(a.shuffle_counter == b.shuffle_counter);
  CHECK(a.optimizer_steps == 16);
  CHECK_FALSE(test::bitwise_equal(flatten(a.policy, a.value), flatten(l0.policy, l0.value)));
}

TEST_CASE("sigma floor holds after every optimizer step") {
  Learner l = small_learner(3, 2, 50);
  for (double& ls : l.policy.log_std) ls = std::log(0.21);
  Dataset d = synthetic(l, 32, 51);
  // Positive advantages on actions at the mean pull sigma down.
  for (std::size_t i = 0; i < d.size; ++i) {
    const auto mean = nn::infer(l.policy.body, std::span(&d.obs[i * 3], 3));
    std::copy(mean.begin(), mean.end(), &d.actions[i * 2]);
    d.old_log_probs[i] = nn::gaussian_log_prob(mean, l.policy.log_std, mean);
    d.advantages[i] = 1.0;
  }
  PpoConfig cfg;
  cfg.minibatch_size = 32;
  cfg.epochs = 1;
  cfg.learning_rate = 0.05;
  bool reached = false;
  for (int it = 0; it < 30; ++it) {
    update(l, d, cfg);
    for (double ls : l.policy.log_std) {
      CHECK(std::exp(ls) >= cfg.sigma_floor);
      reached = reached || std::exp(ls) == cfg.sigma_floor;
    }
  }
  CHECK(reached);
}

TEST_CASE("non-finite loss aborts the update") {
  Learner l = small_learner(3, 2, 60);
  Dataset d = synthetic(l, 32, 61);
  d.advantages[5] = NAN;
  PpoConfig cfg;
  cfg.minibatch_size = 8;
  const Learner before = l;
  const UpdateStats st = update(l, d, cfg);
  CHECK(st.aborted);
  CHECK(l.policy == before.policy);
  CHECK(l.value == before.value);
  CHECK(l.optimizer_steps == before.optimizer_steps);
}

TEST_CASE("toy velocity tracking improves") {
  // 1D point mass: obs = v - v*, v' = v + 0.2 a, reward -(v' - v*)^2,
  // 10-step episodes.
  Learner l = small_learner(1, 1, 70);
  for (double& ls : l.policy.log_std) ls = std::log(0.5);
  PpoConfig cfg;
  cfg.learning_rate = 3e-3;
  cfg.minibatch_size = 100;
  cfg.epochs = 4;
  cfg.gamma = 0.9;
  const std::size_t episodes = 40, len = 10, n = episodes * len;
  std::vector<double> returns;
  for (std::size_t it = 0; it < 50; ++it) {
    RngStream reset(70, 0, StreamId::EnvReset, it * episodes);
    RngStream act(70, 0, StreamId::ActionNoise, it * n * 2);
    rollout::RolloutBatch b;
    b.obs_size = 1;
    b.action_size = 1;
    b.allocate(episodes, len);
    double total = 0.0;
    for (std::size_t e = 0; e < episodes; ++e) {
      double err = reset.uniform(-1.0, 1.0);
      for (std::size_t t = 0; t < len; ++t) {
        const std::size_t i = b.index(e, t);
        const std::vector<double> o{err};
        const auto mean = nn::infer(l.policy.body, o);
        const auto s = nn::sample_action(mean, l.policy.log_std, act);
        err += 0.2 * s.action[0];
        b.obs[i] = o[0];
        b.actions[i] = s.action[0];
        b.log_probs[i] = s.log_prob;
        b.values[i] = nn::value(l.value, o);
        b.rewards[i] = -err * err;
        b.dones[i] = t + 1 == len;
        total += b.rewards[i];
      }
    }
    returns.push_back(total / static_cast<double>(episodes));
    update(l, make_dataset(b, cfg.gamma, cfg.lambda, true), cfg);
  }
  const double first = (returns[0] + returns[1] + returns[2]) / 3.0;
  const double last = (returns[47] + returns[48] + returns[49]) / 3.0;
  MESSAGE("toy return " << first << " -> " << last);
  CHECK(last > first);
}

TEST_CASE("train writes its artifacts and is reproducible") {
  ExperimentConfig cfg = test::tiny_config();
  test::TempDir dir("train");
  TrainOptions o;
  o.out_dir = dir.path();
  o.iterations = 3;
  const TrainResult a = train(cfg, 5, o);
  CHECK_FALSE(a.terminated);
  REQUIRE(a.records.size() == 3);
  CHECK(std::filesystem::exists(dir / "manifest.json"));
  CHECK(std::filesystem::exists(dir / "policy.bin"));
  CHECK(std::filesystem::exists(dir / "checkpoints" / "policy_000002.bin"));
  CHECK(read_train_records(dir / "train_record.csv") == a.records);
  CHECK(load_policy(dir / "policy.bin") == a.learner.policy);

  TrainOptions mem;
  mem.iterations = 3;
  const TrainResult b = train(cfg, 5, mem);
  CHECK(b.records == a.records);
  CHECK(b.learner.policy == a.learner.policy);

  for (const TrainRecord& r : a.records) CHECK(r.min_sigma >= cfg.ppo.sigma_floor);
}
