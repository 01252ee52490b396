#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "rolldrop/nn.hpp"
#include "rolldrop/rng.hpp"
#include "rolldrop/terrain.hpp"
#include "rolldrop/walker.hpp"

namespace rolldrop::rollout {

// One environment of a vectorised set. Every random quantity it consumes comes
// from its own streams (env id = index), so envs can be stepped in any order.
struct EnvSlot {
  walker::WalkerState state;
  walker::Observation obs{};
  std::uint64_t episode = 0;  // episodes started so far, keys the reset draws
  std::uint64_t episode_step = 0;
  RngStream action_rng;
  RngStream dropout_rng;
};

class VecEnv {
 public:
  VecEnv(const walker::EnvConfig& cfg, Terrain terrain, std::uint64_t seed, std::size_t num_envs);

  std::size_t size() const { return slots_.size(); }
  const walker::EnvConfig& config() const { return cfg_; }
  const Terrain& terrain() const { return terrain_; }
  std::uint64_t seed() const { return seed_; }
  EnvSlot& slot(std::size_t i) { return slots_[i]; }
  const EnvSlot& slot(std::size_t i) const { return slots_[i]; }

  // Starts the next episode of env i.
  void reset(std::size_t i);

 private:
  walker::EnvConfig cfg_;
  Terrain terrain_;
  std::uint64_t seed_;
  std::vector<EnvSlot> slots_;
};

// Forces `unit` of the Roll-Drop layer off at batch step `step` of env `env_id`
// (on top of whatever the dropout stream draws).
struct ForcedDrop {
  std::uint32_t env_id = 0;
  std::uint64_t step = 0;
  std::uint32_t unit = 0;
};

struct CollectOptions {
  nn::NetMode mode = nn::NetMode::Rollout;
  std::uint64_t iteration = 0;  // stamped on drop events
  double gamma = 0.996;         // time-limit bootstrap discount
  std::vector<ForcedDrop> forced;
};

// Transitions stored env-major: index = env * steps + t.
struct RolloutBatch {
  std::size_t num_envs = 0;
  std::size_t steps = 0;
  std::size_t obs_size = walker::kObsSize;
  std::size_t action_size = walker::kJoints;

  std::vector<double> obs;        // size() x obs_size
  std::vector<double> actions;    // size() x action_size
  std::vector<double> log_probs;  // under the unperturbed network
  std::vector<double> rewards;    // learning reward (scaled, bootstrapped at time limits)
  std::vector<double> values;
  std::vector<std::uint8_t> dones;
  std::vector<std::uint8_t> reasons;  // walker::DoneReason
  std::vector<double> raw_rewards;    // unscaled total of the reward terms
  std::vector<double> terms;          // size() x kRewardTerms, unscaled
  std::vector<double> joint_pos;      // size() x 4, after the step
  std::vector<double> joint_vel;      // size() x 4, after the step
  std::vector<double> base_vx;        // base-frame forward velocity after the step
  std::vector<double> cmd_vx;
  std::vector<double> last_values;    // per env, V of the observation after the last step
  std::vector<nn::DropEvent> drop_events;  // env order, then step order

  std::size_t size() const { return num_envs * steps; }
  std::size_t index(std::size_t env, std::size_t t) const { return env * steps + t; }
  void allocate(std::size_t envs, std::size_t steps_per_env);
  bool operator==(const RolloutBatch&) const = default;
};

// Parallel over envs (OpenMP); each env runs all its steps.
RolloutBatch collect(const nn::PolicyNet& policy, const nn::ValueNet& value_net, VecEnv& envs,
                     std::size_t steps, const CollectOptions& opts = {});

// Reference loop, step-major over a single thread. Bitwise equal to collect().
RolloutBatch collect_serial(const nn::PolicyNet& policy, const nn::ValueNet& value_net, VecEnv& envs,
                            std::size_t steps, const CollectOptions& opts = {});

struct EvalOptions {
  walker::Command command{0.5, 0.0};
  double noise = 0.0;
  double success_distance = 1.0;  // m along the commanded direction
  bool rolldrop = false;          // keep Roll-Drop live during evaluation
  bool stochastic = false;        // sample actions instead of using the mean
  bool perturb_joints = true;
  std::uint64_t seed = 0;
  std::uint32_t run_id = 0;       // env id of every stream used by the episode
  std::uint64_t noise_key = 0;    // offsets the ObsNoise counter (e.g. per noise level)
  std::optional<std::size_t> max_steps;  // default: eval_episode_length / control_dt
};

struct EpisodeResult {
  bool success = false;
  bool fall = false;
  double distance = 0.0;
  std::uint64_t steps = 0;
  walker::DoneReason reason = walker::DoneReason::None;
  double spawn_x = 0.0;
  double lin_vel_rms = 0.0;  // base-frame vx minus command
  double ang_vel_rms = 0.0;  // pitch rate minus command
  double mean_abs_qd = 0.0;  // over joints and steps
  bool operator==(const EpisodeResult&) const = default;
};

EpisodeResult evaluate_episode(const nn::PolicyNet& policy, const walker::EnvConfig& cfg,
                               const Terrain& terrain, const EvalOptions& opts,
                               walker::EpisodeTrace* trace = nullptr);

// success iff no fall and the displacement along the command reaches the threshold.
bool episode_success(bool fall, double distance, double threshold);

// Versioned binary batch dump ("RLDRPBAT") and a flat CSV export.
inline constexpr std::uint32_t kBatchVersion = 1;
void save_batch(const std::filesystem::path& path, const RolloutBatch& batch);
RolloutBatch load_batch(const std::filesystem::path& path);
void export_batch_csv(const std::filesystem::path& path, const RolloutBatch& batch);

// Header iteration,env_id,step,layer,unit; one row per dropped unit.
void write_drop_events(const std::filesystem::path& path, std::span<const nn::DropEvent> events,
                       bool append = false);
std::vector<nn::DropEvent> read_drop_events(const std::filesystem::path& path);

}  // namespace rolldrop::rollout
