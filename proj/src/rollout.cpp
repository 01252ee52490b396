#include "rolldrop/rollout.hpp"

#include <cmath>
#include <cstring>

#include "rolldrop/checkpoint.hpp"
#include "rolldrop/csv.hpp"
#include "rolldrop/errors.hpp"
#include "rolldrop/noise.hpp"

namespace rolldrop::rollout {

using walker::kJoints;
using walker::kRewardTerms;

VecEnv::VecEnv(const walker::EnvConfig& cfg, Terrain terrain, std::uint64_t seed, std::size_t num_envs)
    : cfg_(cfg), terrain_(std::move(terrain)), seed_(seed), slots_(num_envs) {
  walker::validate(cfg_);
  for (std::size_t i = 0; i < num_envs; ++i) {
    const auto id = static_cast<std::uint32_t>(i);
    slots_[i].action_rng = RngStream(seed, id, StreamId::ActionNoise);
    slots_[i].dropout_rng = RngStream(seed, id, StreamId::Dropout);
    reset(i);
  }
}

void VecEnv::reset(std::size_t i) {
  EnvSlot& s = slots_[i];
  RngStream rng(seed_, static_cast<std::uint32_t>(i), StreamId::EnvReset, s.episode * walker::kResetDraws);
  s.state = walker::reset(cfg_, terrain_, rng);
  s.obs = walker::observe(s.state, cfg_);
  ++s.episode;
  s.episode_step = 0;
}

void RolloutBatch::allocate(std::size_t envs, std::size_t steps_per_env) {
  num_envs = envs;
  steps = steps_per_env;
  const std::size_t n = size();
  obs.assign(n * obs_size, 0.0);
  actions.assign(n * action_size, 0.0);
  log_probs.assign(n, 0.0);
  rewards.assign(n, 0.0);
  values.assign(n, 0.0);
  dones.assign(n, 0);
  reasons.assign(n, 0);
  raw_rewards.assign(n, 0.0);
  terms.assign(n * kRewardTerms, 0.0);
  joint_pos.assign(n * kJoints, 0.0);
  joint_vel.assign(n * kJoints, 0.0);
  base_vx.assign(n, 0.0);
  cmd_vx.assign(n, 0.0);
  last_values.assign(envs, 0.0);
  drop_events.clear();
}

namespace {

nn::DropMask forced_mask(const CollectOptions& opts, std::size_t env, std::size_t t, std::size_t width) {
  nn::DropMask mask;
  for (const ForcedDrop& f : opts.forced) {
    if (f.env_id != env || f.step != t) continue;
    if (f.unit >= width) throw ContractViolation("forced drop unit outside the Roll-Drop layer");
    if (mask.empty()) mask.assign(width, 0);
    mask[f.unit] = 1;
  }
  return mask;
}

void check_nets(const nn::PolicyNet& policy, const nn::ValueNet& value_net) {
  nn::validate(policy);
  if (policy.obs_size() != walker::kObsSize || policy.action_size() != kJoints)
    throw ContractViolation("policy shape does not match the walker");
  if (value_net.body.input_size() != walker::kObsSize || value_net.body.output_size() != 1)
    throw ContractViolation("value net shape does not match the walker");
}

// One control step of env e at batch step t.
void advance(const nn::PolicyNet& policy, const nn::ValueNet& value_net, VecEnv& envs, std::size_t e,
             std::size_t t, const CollectOptions& opts, RolloutBatch& b,
             std::vector<nn::DropEvent>& events) {
  EnvSlot& s = envs.slot(e);
  const walker::EnvConfig& cfg = envs.config();
  const std::size_t i = b.index(e, t);
  const std::span<const double> obs(s.obs);

  const nn::DropMask forced = forced_mask(opts, e, t, policy.dropout_width());
  nn::PolicyOutput out = nn::forward(policy, obs, opts.mode, s.dropout_rng, forced);
  const nn::ActionSample sample = nn::sample_action(out.mean, policy.log_std, s.action_rng);
  double log_prob = sample.log_prob;
  if (out.drop) {
    const std::vector<double> plain = nn::infer(policy.body, obs);
    log_prob = nn::gaussian_log_prob(plain, policy.log_std, sample.action);
    nn::DropEvent ev = std::move(*out.drop);
    ev.iteration = opts.iteration;
    ev.env_id = static_cast<std::uint32_t>(e);
    ev.step = t;
    events.push_back(std::move(ev));
  }
  const double v = nn::value(value_net, obs);

  walker::JointArray target{};
  for (std::size_t j = 0; j < kJoints; ++j)
    target[j] = cfg.nominal_pose[j] + cfg.action_scale * sample.action[j];
  walker::StepResult res = walker::step(s.state, target, cfg, envs.terrain());

  std::memcpy(&b.obs[i * b.obs_size], s.obs.data(), b.obs_size * sizeof(double));
  std::memcpy(&b.actions[i * b.action_size], sample.action.data(), b.action_size * sizeof(double));
  b.log_probs[i] = log_prob;
  b.values[i] = v;
  b.rewards[i] = res.reward;
  if (res.reason == walker::DoneReason::TimeLimit) b.rewards[i] += opts.gamma * nn::value(value_net, res.obs);
  b.dones[i] = res.done ? 1 : 0;
  b.reasons[i] = static_cast<std::uint8_t>(res.reason);
  b.raw_rewards[i] = res.terms.total();
  for (std::size_t k = 0; k < kRewardTerms; ++k) b.terms[i * kRewardTerms + k] = res.terms.values[k];
  const auto& st = res.state;
  for (std::size_t j = 0; j < kJoints; ++j) {
    b.joint_pos[i * kJoints + j] = st.q[3 + j];
    b.joint_vel[i * kJoints + j] = st.qd[3 + j];
  }
  b.base_vx[i] = std::cos(st.q[2]) * st.qd[0] + std::sin(st.q[2]) * st.qd[1];
  b.cmd_vx[i] = st.cmd.vx;

  if (res.done) {
    envs.reset(e);
  } else {
    s.state = std::move(res.state);
    s.obs = res.obs;
    ++s.episode_step;
  }
}

}  // namespace

RolloutBatch collect(const nn::PolicyNet& policy, const nn::ValueNet& value_net, VecEnv& envs,
                     std::size_t steps, const CollectOptions& opts) {
  check_nets(policy, value_net);
  RolloutBatch b;
  b.allocate(envs.size(), steps);
  const auto n = static_cast<std::ptrdiff_t>(envs.size());
  std::vector<std::vector<nn::DropEvent>> events(envs.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const auto ue = static_cast<std::size_t>(e);
    for (std::size_t t = 0; t < steps; ++t) advance(policy, value_net, envs, ue, t, opts, b, events[ue]);
    b.last_values[ue] = nn::value(value_net, envs.slot(ue).obs);
  }
  for (auto& ev : events) b.drop_events.insert(b.drop_events.end(), ev.begin(), ev.end());
  return b;
}

RolloutBatch collect_serial(const nn::PolicyNet& policy, const nn::ValueNet& value_net, VecEnv& envs,
                            std::size_t steps, const CollectOptions& opts) {
  check_nets(policy, value_net);
  RolloutBatch b;
  b.allocate(envs.size(), steps);
  std::vector<std::vector<nn::DropEvent>> events(envs.size());
  for (std::size_t t = 0; t < steps; ++t)
    for (std::size_t e = 0; e < envs.size(); ++e) advance(policy, value_net, envs, e, t, opts, b, events[e]);
  for (std::size_t e = 0; e < envs.size(); ++e) b.last_values[e] = nn::value(value_net, envs.slot(e).obs);
  for (auto& ev : events) b.drop_events.insert(b.drop_events.end(), ev.begin(), ev.end());
  return b;
}

bool episode_success(bool fall, double distance, double threshold) { return !fall && distance >= threshold; }

EpisodeResult evaluate_episode(const nn::PolicyNet& policy, const walker::EnvConfig& cfg,
                               const Terrain& terrain, const EvalOptions& opts, walker::EpisodeTrace* trace) {
  nn::validate(policy);
  harness::validate_noise_level(opts.noise);
  walker::EnvConfig ecfg = cfg;
  ecfg.episode_length = cfg.eval_episode_length;
  const std::size_t max_steps =
      opts.max_steps ? *opts.max_steps
                     : static_cast<std::size_t>(std::llround(cfg.eval_episode_length / cfg.control_dt));

  RngStream reset_rng(opts.seed, opts.run_id, StreamId::EnvReset);
  RngStream noise_rng(opts.seed, opts.run_id, StreamId::ObsNoise, opts.noise_key);
  RngStream drop_rng(opts.seed, opts.run_id, StreamId::Dropout);
  RngStream act_rng(opts.seed, opts.run_id, StreamId::ActionNoise);

  walker::ResetOptions ro;
  ro.command = opts.command;
  ro.perturb_joints = opts.perturb_joints;
  walker::WalkerState state = walker::reset(ecfg, terrain, reset_rng, ro);
  walker::Observation obs = walker::observe(state, ecfg);

  EpisodeResult r;
  r.spawn_x = state.spawn_x;
  double lin_sq = 0.0, ang_sq = 0.0, qd_abs = 0.0;
  while (r.steps < max_steps) {
    const std::vector<double> noisy = harness::inject_noise(obs, opts.noise, noise_rng);
    std::vector<double> mean = opts.rolldrop ? nn::forward(policy, noisy, nn::NetMode::Rollout, drop_rng).mean
                                             : nn::infer(policy.body, noisy);
    if (opts.stochastic) mean = nn::sample_action(mean, policy.log_std, act_rng).action;
    walker::JointArray target{};
    for (std::size_t j = 0; j < kJoints; ++j) target[j] = ecfg.nominal_pose[j] + ecfg.action_scale * mean[j];
    walker::StepResult res = walker::step(state, target, ecfg, terrain);
    if (trace) trace->record(res, target);
    ++r.steps;
    const auto& st = res.state;
    const double vx = std::cos(st.q[2]) * st.qd[0] + std::sin(st.q[2]) * st.qd[1];
    lin_sq += (vx - opts.command.vx) * (vx - opts.command.vx);
    ang_sq += (st.qd[2] - opts.command.pitch_rate) * (st.qd[2] - opts.command.pitch_rate);
    for (std::size_t j = 0; j < kJoints; ++j) qd_abs += std::abs(st.qd[3 + j]);
    state = std::move(res.state);
    obs = res.obs;
    if (res.done) {
      r.reason = res.reason;
      break;
    }
  }
  const double n = static_cast<double>(std::max<std::uint64_t>(r.steps, 1));
  r.lin_vel_rms = std::sqrt(lin_sq / n);
  r.ang_vel_rms = std::sqrt(ang_sq / n);
  r.mean_abs_qd = qd_abs / (n * static_cast<double>(kJoints));
  r.fall = walker::is_fall(r.reason) || r.reason == walker::DoneReason::NumericalFailure;
  const double direction = opts.command.vx >= 0.0 ? 1.0 : -1.0;
  r.distance = (state.q[0] - r.spawn_x) * direction;
  if (!std::isfinite(r.distance)) r.distance = 0.0;
  r.success = episode_success(r.fall, r.distance, opts.success_distance);
  return r;
}

namespace {

constexpr char kBatchMagic[8] = {'R', 'L', 'D', 'R', 'P', 'B', 'A', 'T'};

void put(ByteWriter& w, const std::vector<double>& v) {
  w.u64(v.size());
  for (double x : v) w.f64(x);
}
void put(ByteWriter& w, const std::vector<std::uint8_t>& v) {
  w.u64(v.size());
  if (!v.empty()) w.bytes(v.data(), v.size());
}

void get(ByteReader& r, std::vector<double>& v, std::size_t expected) {
  const std::uint64_t n = r.u64();
  if (n != expected) throw CorruptPayload("batch field has " + std::to_string(n) + " entries, expected " +
                                          std::to_string(expected));
  if (n > r.remaining() / 8) throw CorruptPayload("batch payload truncated");
  v.resize(n);
  for (double& x : v) x = r.f64();
}
void get(ByteReader& r, std::vector<std::uint8_t>& v, std::size_t expected) {
  const std::uint64_t n = r.u64();
  if (n != expected) throw CorruptPayload("batch flag field has the wrong length");
  if (n > r.remaining()) throw CorruptPayload("batch payload truncated");
  v.resize(n);
  if (n) r.bytes(v.data(), n);
}

}  // namespace

void save_batch(const std::filesystem::path& path, const RolloutBatch& b) {
  ByteWriter w;
  w.bytes(kBatchMagic, sizeof kBatchMagic);
  w.u32(kBatchVersion);
  w.u64(b.num_envs);
  w.u64(b.steps);
  w.u64(b.obs_size);
  w.u64(b.action_size);
  put(w, b.obs);
  put(w, b.actions);
  put(w, b.log_probs);
  put(w, b.rewards);
  put(w, b.values);
  put(w, b.dones);
  put(w, b.reasons);
  put(w, b.raw_rewards);
  put(w, b.terms);
  put(w, b.joint_pos);
  put(w, b.joint_vel);
  put(w, b.base_vx);
  put(w, b.cmd_vx);
  put(w, b.last_values);
  w.u64(b.drop_events.size());
  for (const auto& ev : b.drop_events) {
    w.u64(ev.iteration);
    w.u32(ev.env_id);
    w.u64(ev.step);
    w.u64(ev.layer);
    w.u32(static_cast<std::uint32_t>(ev.units.size()));
    for (auto u : ev.units) w.u32(u);
  }
  const auto bytes = w.take();
  write_file(path, bytes);
}

RolloutBatch load_batch(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  ByteReader r(bytes);
  char magic[8];
  if (bytes.size() < sizeof magic) throw CorruptPayload("batch file truncated");
  r.bytes(magic, sizeof magic);
  if (std::memcmp(magic, kBatchMagic, sizeof magic) != 0) throw CorruptPayload("not a rollout batch file");
  const std::uint32_t version = r.u32();
  if (version != kBatchVersion)
    throw CorruptPayload("unsupported batch version " + std::to_string(version));
  RolloutBatch b;
  b.num_envs = r.u64();
  b.steps = r.u64();
  b.obs_size = r.u64();
  b.action_size = r.u64();
  const std::size_t n = b.size();
  get(r, b.obs, n * b.obs_size);
  get(r, b.actions, n * b.action_size);
  get(r, b.log_probs, n);
  get(r, b.rewards, n);
  get(r, b.values, n);
  get(r, b.dones, n);
  get(r, b.reasons, n);
  get(r, b.raw_rewards, n);
  get(r, b.terms, n * kRewardTerms);
  get(r, b.joint_pos, n * kJoints);
  get(r, b.joint_vel, n * kJoints);
  get(r, b.base_vx, n);
  get(r, b.cmd_vx, n);
  get(r, b.last_values, b.num_envs);
  const std::uint64_t events = r.u64();
  if (events > r.remaining()) throw CorruptPayload("batch payload truncated");
  for (std::uint64_t k = 0; k < events; ++k) {
    nn::DropEvent ev;
    ev.iteration = r.u64();
    ev.env_id = r.u32();
    ev.step = r.u64();
    ev.layer = r.u64();
    const std::uint32_t units = r.u32();
    if (units > r.remaining() / 4) throw CorruptPayload("batch payload truncated");
    ev.units.resize(units);
    for (auto& u : ev.units) u = r.u32();
    b.drop_events.push_back(std::move(ev));
  }
  if (!r.at_end()) throw CorruptPayload("trailing bytes after batch payload");
  return b;
}

void export_batch_csv(const std::filesystem::path& path, const RolloutBatch& b) {
  std::vector<std::string> header = {"env", "step", "reward", "raw_reward", "value", "log_prob", "done", "reason"};
  for (std::size_t k = 0; k < b.action_size; ++k) header.push_back("a" + std::to_string(k));
  for (std::size_t k = 0; k < b.obs_size; ++k) header.push_back("obs" + std::to_string(k));
  CsvWriter out(path, header);
  std::vector<std::string> cells;
  for (std::size_t e = 0; e < b.num_envs; ++e) {
    for (std::size_t t = 0; t < b.steps; ++t) {
      const std::size_t i = b.index(e, t);
      cells.clear();
      cells.push_back(std::to_string(e));
      cells.push_back(std::to_string(t));
      cells.push_back(format_double(b.rewards[i]));
      cells.push_back(format_double(b.raw_rewards[i]));
      cells.push_back(format_double(b.values[i]));
      cells.push_back(format_double(b.log_probs[i]));
      cells.push_back(std::to_string(b.dones[i]));
      cells.push_back(walker::to_string(static_cast<walker::DoneReason>(b.reasons[i])));
      for (std::size_t k = 0; k < b.action_size; ++k) cells.push_back(format_double(b.actions[i * b.action_size + k]));
      for (std::size_t k = 0; k < b.obs_size; ++k) cells.push_back(format_double(b.obs[i * b.obs_size + k]));
      out.row_cells(cells);
    }
  }
}

void write_drop_events(const std::filesystem::path& path, std::span<const nn::DropEvent> events, bool append) {
  CsvWriter out(path, {"iteration", "env_id", "step", "layer", "unit"}, append);
  for (const auto& ev : events) {
    for (auto u : ev.units) {
      out.row_cells({std::to_string(ev.iteration), std::to_string(ev.env_id), std::to_string(ev.step),
                     std::to_string(ev.layer), std::to_string(u)});
    }
  }
}

std::vector<nn::DropEvent> read_drop_events(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  t.require_columns({"iteration", "env_id", "step", "layer", "unit"});
  const auto it = t.column("iteration");
  const auto env = t.column("env_id");
  const auto step = t.column("step");
  const auto layer = t.column("layer");
  const auto unit = t.column("unit");
  std::vector<nn::DropEvent> out;
  for (std::size_t r = 0; r < it.size(); ++r) {
    nn::DropEvent key;
    key.iteration = static_cast<std::uint64_t>(it[r]);
    key.env_id = static_cast<std::uint32_t>(env[r]);
    key.step = static_cast<std::uint64_t>(step[r]);
    key.layer = static_cast<std::size_t>(layer[r]);
    if (out.empty() || out.back().iteration != key.iteration || out.back().env_id != key.env_id ||
        out.back().step != key.step || out.back().layer != key.layer) {
      out.push_back(key);
    }
    out.back().units.push_back(static_cast<std::uint32_t>(unit[r]));
  }
  return out;
}

}  // namespace rolldrop::rollout
