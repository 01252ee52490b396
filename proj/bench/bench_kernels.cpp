// Parallel / blocked kernels against their serial references.
#include <benchmark/benchmark.h>

#include <cmath>

#include "rolldrop/activation.hpp"
#include "rolldrop/config.hpp"
#include "rolldrop/kernels.hpp"
#include "rolldrop/ppo.hpp"
#include "rolldrop/rollout.hpp"
#include "rolldrop/trainer.hpp"

using namespace rolldrop;

namespace {

nn::NetSpec desk_spec() {
  nn::NetSpec spec = preset_config("desk").net;
  spec.obs_size = walker::kObsSize;
  spec.action_size = walker::kJoints;
  return spec;
}

ppo::Dataset dataset(std::size_t n) {
  RngStream rng(9, 0, StreamId::Init);
  ppo::Dataset d;
  d.size = n;
  d.obs_size = walker::kObsSize;
  d.action_size = walker::kJoints;
  d.obs.resize(n * d.obs_size);
  d.actions.resize(n * d.action_size);
  for (double& x : d.obs) x = rng.uniform(-1.0, 1.0);
  for (double& x : d.actions) x = rng.uniform(-1.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    d.old_log_probs.push_back(-4.0 + rng.uniform(-0.1, 0.1));
    d.advantages.push_back(rng.normal());
    d.returns.push_back(rng.normal());
  }
  return d;
}

// Whole-minibatch loss and gradient (desk minibatch of 6400 samples).
void BM_PpoLoss(benchmark::State& st) {
  const ppo::Learner l = ppo::make_learner(desk_spec(), 1);
  const ppo::Dataset d = dataset(6400);
  std::vector<std::size_t> idx(d.size);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const ppo::PpoConfig cfg;
  for (auto _ : st) benchmark::DoNotOptimize(ppo::ppo_loss(l.policy, l.value, d, idx, cfg, 1, 0));
}
void BM_PpoLossSerial(benchmark::State& st) {
  const ppo::Learner l = ppo::make_learner(desk_spec(), 1);
  const ppo::Dataset d = dataset(6400);
  std::vector<std::size_t> idx(d.size);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const ppo::PpoConfig cfg;
  for (auto _ : st) benchmark::DoNotOptimize(ppo::ppo_loss_serial(l.policy, l.value, d, idx, cfg, 1, 0));
}

// 32 envs x 50 steps of collection.
void BM_Collect(benchmark::State& st) {
  const ExperimentConfig cfg = preset_config("desk");
  const ppo::Learner l = ppo::make_learner(desk_spec(), 1);
  for (auto _ : st) {
    rollout::VecEnv envs(cfg.env, training_terrain(cfg, 1), 1, 32);
    benchmark::DoNotOptimize(rollout::collect(l.policy, l.value, envs, 50));
  }
}
void BM_CollectSerial(benchmark::State& st) {
  const ExperimentConfig cfg = preset_config("desk");
  const ppo::Learner l = ppo::make_learner(desk_spec(), 1);
  for (auto _ : st) {
    rollout::VecEnv envs(cfg.env, training_terrain(cfg, 1), 1, 32);
    benchmark::DoNotOptimize(rollout::collect_serial(l.policy, l.value, envs, 50));
  }
}

// One 64-row chunk through the blocked kernels vs row-by-row reference.
void BM_BlockedForwardBackward(benchmark::State& st) {
  const ppo::Learner l = ppo::make_learner(desk_spec(), 1);
  const auto& net = l.policy.body;
  const std::size_t rows = ppo::kGradChunk;
  std::vector<double> x(rows * net.input_size(), 0.3), g(rows * net.output_size(), 0.1), grad(net.param_count());
  const auto wt = kernels::TransposedWeights::of(net);
  kernels::BatchTape tape;
  for (auto _ : st) {
    kernels::batch_forward(net, x, rows, tape);
    kernels::batch_backward(net, wt, tape, g, grad);
    benchmark::DoNotOptimize(grad.data());
  }
}
void BM_PerSampleForwardBackward(benchmark::State& st) {
  const ppo::Learner l = ppo::make_learner(desk_spec(), 1);
  const auto& net = l.policy.body;
  const std::size_t rows = ppo::kGradChunk;
  std::vector<double> x(net.input_size(), 0.3), g(net.output_size(), 0.1), grad(net.param_count());
  nn::Tape tape;
  for (auto _ : st) {
    for (std::size_t r = 0; r < rows; ++r) {
      nn::forward_cached(net, x, tape);
      nn::backward_into(net, tape, g, grad);
    }
    benchmark::DoNotOptimize(grad.data());
  }
}

void BM_TanhSpan(benchmark::State& st) {
  std::vector<double> x(4096);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = -4.0 + 8.0 * static_cast<double>(i) / 4096.0;
  std::vector<double> y = x;
  for (auto _ : st) {
    y = x;
    nn::tanh_inplace(y);
    benchmark::DoNotOptimize(y.data());
  }
}
void BM_TanhLibm(benchmark::State& st) {
  std::vector<double> x(4096);
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = -4.0 + 8.0 * static_cast<double>(i) / 4096.0;
  std::vector<double> y = x;
  for (auto _ : st) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::tanh(x[i]);
    benchmark::DoNotOptimize(y.data());
  }
}

}  // namespace

BENCHMARK(BM_PpoLoss)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_PpoLossSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_Collect)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_CollectSerial)->Unit(benchmark::kMillisecond)->UseRealTime();
BENCHMARK(BM_BlockedForwardBackward)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_PerSampleForwardBackward)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TanhSpan)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TanhLibm)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
