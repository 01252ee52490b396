#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rolldrop/csv.hpp"
#include "rolldrop/rng.hpp"
#include "rolldrop/terrain.hpp"

// Planar two-legged walker: a torso with a front and a hind leg, each with a
// hip and a knee (4 actuated joints). Generalised coordinates are
// (x, z, pitch, front hip, front knee, hind hip, hind knee).
namespace rolldrop::walker {

inline constexpr std::size_t kJoints = 4;
inline constexpr std::size_t kFeet = 2;
inline constexpr std::size_t kDof = 7;
inline constexpr std::size_t kHistory = 7;
inline constexpr std::size_t kObsSize = 2 + 3 + kHistory * kJoints * 2 + kJoints + kFeet + 2;
static_assert(kObsSize == 69);

using JointArray = std::array<double, kJoints>;
using DofArray = std::array<double, kDof>;
using Observation = std::array<double, kObsSize>;

// Offsets of each block inside an Observation.
namespace obs_layout {
inline constexpr std::size_t kGravity = 0;       // sin pitch, cos pitch
inline constexpr std::size_t kBaseVel = 2;       // vx, vz (base frame), pitch rate
inline constexpr std::size_t kJointPosErr = 5;   // 7 frames x 4, newest first
inline constexpr std::size_t kJointVel = 33;     // 7 frames x 4, newest first
inline constexpr std::size_t kPrevAction = 61;   // previous target minus nominal pose
inline constexpr std::size_t kContacts = 65;     // front, hind
inline constexpr std::size_t kCommand = 67;      // vx*, pitch_rate*
}  // namespace obs_layout

struct Morphology {
  double torso_length = 0.4;
  double torso_height = 0.1;
  double torso_mass = 1.5;
  double thigh_length = 0.2;
  double thigh_mass = 0.2;
  double shank_length = 0.2;
  double shank_mass = 0.1;
  double armature = 0.01;  // reflected rotor inertia per joint, kg m^2
  bool operator==(const Morphology&) const = default;
};

struct RewardWeights {
  double orientation = -30.0;
  double lin_vel = 15.0;
  double ang_vel = 15.0;
  double action_smoothness = -7.0;
  double feet_clearance = -400.0;
  double foot_slip = -8.0;
  double joint_position = -4.0;
  double joint_velocity = -0.01;
  double torque = -0.4;
  double swing_duration = 8.0;
  double pronking = -35.0;
  bool operator==(const RewardWeights&) const = default;
};

struct EnvConfig {
  double kp = 15.0;                       // N m / rad
  double kd = 1.0;                        // N m s / rad
  double torque_limit = 20.0;             // N m
  double motor_static_friction = 0.2;     // N m
  double motor_dynamic_friction = 0.01;   // N m s / rad
  double static_friction_threshold = 1e-3;  // rad/s
  double motor_delay = 0.012;             // s
  double ground_friction = 0.4;
  double gravity = -9.81;                 // m/s^2
  double sim_dt = 0.002;                  // s
  double control_dt = 0.02;               // s
  double episode_length = 4.0;            // s, training
  double eval_episode_length = 10.0;      // s
  double contact_stiffness = 1e4;         // N/m
  double contact_damping = 100.0;         // N s/m
  double tangential_stiffness = 5e3;      // N/m
  double tangential_damping = 50.0;       // N s/m
  double joint_limit = 2.6;               // rad
  double fall_height = 0.12;              // m above local terrain
  double fall_pitch = 1.0;                // rad
  JointArray nominal_pose{0.8, -1.6, 0.8, -1.6};
  double reset_joint_noise = 0.05;        // rad, uniform half-width
  double action_scale = 0.25;             // q* = nominal + action_scale * action
  double obs_joint_velocity_scale = 0.1;
  double reward_scale = 0.02;             // learning signal = total * reward_scale
  double k_c = 1.0;
  double tracking_sharpness = 5.0;
  double clearance_target = 0.1;          // m
  double swing_target = 0.5;              // s
  double cmd_vx_min = 0.0;                // m/s
  double cmd_vx_max = 1.0;                // m/s
  double cmd_pitch_rate_max = 0.0;        // rad/s
  double spawn_margin_rear = 2.0;         // m
  double spawn_margin_front = 12.0;       // m
  TerrainSpec terrain{};
  Morphology body{};
  RewardWeights rewards{};

  std::size_t substeps() const;
  std::size_t delay_substeps() const;
  bool operator==(const EnvConfig&) const = default;
};

void validate(const EnvConfig& cfg);

struct Command {
  double vx = 0.0;
  double pitch_rate = 0.0;
  bool operator==(const Command&) const = default;
};

struct WalkerState {
  DofArray q{};
  DofArray qd{};
  std::array<bool, kFeet> contact{};
  std::array<bool, kFeet> anchored{};
  std::array<double, kFeet> anchor_x{};
  std::array<double, kFeet> air_time{};
  // Ring buffer of joint targets, one slot per substep of motor delay.
  std::vector<JointArray> delay;
  std::size_t delay_head = 0;
  JointArray target{};
  JointArray prev_target{};
  JointArray torque{};
  std::array<double, kHistory * kJoints> pos_err_history{};
  std::array<double, kHistory * kJoints> vel_history{};
  Command cmd;
  double time = 0.0;
  std::uint64_t steps = 0;
  double spawn_x = 0.0;
  // Quantities from the last control step used by the reward.
  std::array<double, kFeet> foot_height{};
  std::array<double, kFeet> foot_vx{};
  double swing_sum = 0.0;

  bool operator==(const WalkerState&) const = default;
};

enum class DoneReason { None, LowBase, Pitch, TorsoContact, TimeLimit, NumericalFailure };
std::string to_string(DoneReason reason);
inline bool is_fall(DoneReason r) {
  return r == DoneReason::LowBase || r == DoneReason::Pitch || r == DoneReason::TorsoContact;
}

inline constexpr std::size_t kRewardTerms = 11;
extern const std::array<const char*, kRewardTerms> kRewardTermNames;

struct RewardTerms {
  std::array<double, kRewardTerms> values{};
  double total() const;
};

struct StepResult {
  WalkerState state;
  Observation obs{};
  RewardTerms terms;
  double reward = 0.0;  // terms.total() * reward_scale
  bool done = false;
  DoneReason reason = DoneReason::None;
};

JointArray joints(const DofArray& v);

// Gamma = Kp (q* - q) - Kd qd, then motor friction, then the torque limit.
JointArray impedance_torque(const JointArray& target, const JointArray& q, const JointArray& qd,
                            const EnvConfig& cfg);

// Weighted planar reward terms for the transition prev_target -> target that
// ended in `state`.
RewardTerms compute_reward(const WalkerState& state, const JointArray& prev_target,
                           const JointArray& target, const Command& cmd, const EnvConfig& cfg);

std::optional<DoneReason> fall_detector(const WalkerState& state, const EnvConfig& cfg,
                                        const Terrain& terrain);

double standing_height(const EnvConfig& cfg);

struct ResetOptions {
  std::optional<Command> command;  // overrides the sampled command
  bool perturb_joints = true;
  std::optional<double> spawn_x;   // overrides the sampled spawn point
};

// Draws exactly kResetDraws values from `rng` regardless of options.
inline constexpr std::uint64_t kResetDraws = 8;
WalkerState reset(const EnvConfig& cfg, const Terrain& terrain, RngStream& rng,
                  const ResetOptions& opts = {});

Observation observe(const WalkerState& state, const EnvConfig& cfg);

// One control step: the target enters the motor delay line, then
// substeps() semi-implicit Euler substeps of sim_dt are integrated.
StepResult step(const WalkerState& state, const JointArray& target, const EnvConfig& cfg,
                const Terrain& terrain);

// Single physics substep with an explicit torque (delay and impedance
// bypassed). Exposed for the physics property tests.
struct ContactForce {
  double normal = 0.0;
  double tangential = 0.0;
};
std::array<ContactForce, kFeet> substep(WalkerState& state, const JointArray& torque,
                                        const EnvConfig& cfg, const Terrain& terrain,
                                        bool contacts_enabled = true);

double mechanical_energy(const WalkerState& state, const EnvConfig& cfg);
double total_mass(const EnvConfig& cfg);

struct Point2 {
  double x = 0.0;
  double z = 0.0;
};
std::array<Point2, kFeet> foot_positions(const WalkerState& state, const EnvConfig& cfg);
std::array<Point2, kFeet> foot_velocities(const WalkerState& state, const EnvConfig& cfg);
std::array<Point2, 4> torso_corners(const WalkerState& state, const EnvConfig& cfg);

// Per-control-step CSV trace of an episode.
class EpisodeTrace {
 public:
  explicit EpisodeTrace(const std::filesystem::path& path);
  void record(const StepResult& r, const JointArray& target);

 private:
  CsvWriter out_;
};

}  // namespace rolldrop::walker
