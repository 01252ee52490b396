#include "rolldrop/walker.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <initializer_list>

#include "rolldrop/errors.hpp"

namespace rolldrop::walker {

const std::array<const char*, kRewardTerms> kRewardTermNames = {
    "orientation",    "lin_vel",        "ang_vel", "action_smoothness", "feet_clearance", "foot_slip",
    "joint_position", "joint_velocity", "torque",  "swing_duration",    "pronking"};

namespace {

using Vec2 = Eigen::Vector2d;
using Vec7 = Eigen::Matrix<double, 7, 1>;
using Mat7 = Eigen::Matrix<double, 7, 7>;
using Jac = Eigen::Matrix<double, 2, 7>;

enum Level { kTorso = 0, kThigh = 1, kShank = 2 };

// A vector fixed in the frame of one segment of a leg chain.
struct Term {
  Vec2 r;
  Level level;
};

struct PointKin {
  Vec2 pos;
  Jac jac;
  Vec2 bias;  // d/dt(J) * qd
};

Vec2 rotate(double angle, const Vec2& r) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * r.x() - s * r.y(), s * r.x() + c * r.y()};
}

std::size_t hip_dof(int leg) { return 3 + 2 * static_cast<std::size_t>(leg); }
std::size_t knee_dof(int leg) { return 4 + 2 * static_cast<std::size_t>(leg); }

double segment_angle(const DofArray& q, int leg, Level level) {
  double a = q[2];
  if (level >= kThigh) a += q[hip_dof(leg)];
  if (level >= kShank) a += q[knee_dof(leg)];
  return a;
}

// Position, Jacobian and velocity-product term of base + sum R(phi_t) r_t.
PointKin point_kin(const DofArray& q, const DofArray& qd, int leg, std::initializer_list<Term> terms) {
  PointKin k;
  k.pos = Vec2(q[0], q[1]);
  k.jac.setZero();
  k.jac(0, 0) = 1.0;
  k.jac(1, 1) = 1.0;
  k.bias.setZero();
  for (const Term& t : terms) {
    const double phi = segment_angle(q, leg, t.level);
    const double phid = segment_angle(qd, leg, t.level);
    const Vec2 v = rotate(phi, t.r);
    const Vec2 dv(-v.y(), v.x());  // d/dphi of R(phi) r
    k.pos += v;
    k.jac.col(2) += dv;
    if (t.level >= kThigh) k.jac.col(static_cast<Eigen::Index>(hip_dof(leg))) += dv;
    if (t.level >= kShank) k.jac.col(static_cast<Eigen::Index>(knee_dof(leg))) += dv;
    k.bias -= v * (phid * phid);
  }
  return k;
}

double hip_offset(int leg, const Morphology& b) { return leg == 0 ? 0.5 * b.torso_length : -0.5 * b.torso_length; }

PointKin thigh_com(const DofArray& q, const DofArray& qd, int leg, const Morphology& b) {
  return point_kin(q, qd, leg,
                   {{Vec2(hip_offset(leg, b), 0.0), kTorso}, {Vec2(0.0, -0.5 * b.thigh_length), kThigh}});
}

PointKin shank_com(const DofArray& q, const DofArray& qd, int leg, const Morphology& b) {
  return point_kin(q, qd, leg,
                   {{Vec2(hip_offset(leg, b), 0.0), kTorso},
                    {Vec2(0.0, -b.thigh_length), kThigh},
                    {Vec2(0.0, -0.5 * b.shank_length), kShank}});
}

PointKin foot_kin(const DofArray& q, const DofArray& qd, int leg, const Morphology& b) {
  return point_kin(q, qd, leg,
                   {{Vec2(hip_offset(leg, b), 0.0), kTorso},
                    {Vec2(0.0, -b.thigh_length), kThigh},
                    {Vec2(0.0, -b.shank_length), kShank}});
}

struct BodyKin {
  PointKin com;
  Eigen::Matrix<double, 1, 7> ang;  // angular velocity Jacobian row
  double mass;
  double inertia;
};

std::array<BodyKin, 5> bodies(const DofArray& q, const DofArray& qd, const Morphology& b) {
  std::array<BodyKin, 5> out;
  out[0].com = point_kin(q, qd, 0, {});
  out[0].ang.setZero();
  out[0].ang(2) = 1.0;
  out[0].mass = b.torso_mass;
  out[0].inertia = b.torso_mass * (b.torso_length * b.torso_length + b.torso_height * b.torso_height) / 12.0;
  for (int leg = 0; leg < 2; ++leg) {
    BodyKin& th = out[1 + 2 * leg];
    th.com = thigh_com(q, qd, leg, b);
    th.ang.setZero();
    th.ang(2) = 1.0;
    th.ang(static_cast<Eigen::Index>(hip_dof(leg))) = 1.0;
    th.mass = b.thigh_mass;
    th.inertia = b.thigh_mass * b.thigh_length * b.thigh_length / 12.0;
    BodyKin& sh = out[2 + 2 * leg];
    sh.com = shank_com(q, qd, leg, b);
    sh.ang = th.ang;
    sh.ang(static_cast<Eigen::Index>(knee_dof(leg))) = 1.0;
    sh.mass = b.shank_mass;
    sh.inertia = b.shank_mass * b.shank_length * b.shank_length / 12.0;
  }
  return out;
}

Mat7 mass_matrix(const std::array<BodyKin, 5>& bs, const Morphology& b) {
  Mat7 m = Mat7::Zero();
  for (const auto& bk : bs) {
    m.noalias() += bk.mass * bk.com.jac.transpose() * bk.com.jac;
    m.noalias() += bk.inertia * bk.ang.transpose() * bk.ang;
  }
  for (int j = 3; j < 7; ++j) m(j, j) += b.armature;
  return m;
}

Vec7 to_vec(const DofArray& a) {
  Vec7 v;
  for (std::size_t i = 0; i < kDof; ++i) v(static_cast<Eigen::Index>(i)) = a[i];
  return v;
}

bool all_finite(const WalkerState& s) {
  for (std::size_t i = 0; i < kDof; ++i)
    if (!std::isfinite(s.q[i]) || !std::isfinite(s.qd[i])) return false;
  return true;
}

template <std::size_t N>
void push_history(std::array<double, N>& hist, const JointArray& newest) {
  for (std::size_t frame = kHistory - 1; frame > 0; --frame)
    for (std::size_t j = 0; j < kJoints; ++j) hist[frame * kJoints + j] = hist[(frame - 1) * kJoints + j];
  for (std::size_t j = 0; j < kJoints; ++j) hist[j] = newest[j];
}

void refresh_foot_measurements(WalkerState& s, const EnvConfig& cfg, const Terrain& terrain) {
  for (int leg = 0; leg < 2; ++leg) {
    const PointKin f = foot_kin(s.q, s.qd, leg, cfg.body);
    const Vec2 v = f.jac * to_vec(s.qd);
    s.foot_height[leg] = f.pos.y() - terrain.height(f.pos.x());
    s.foot_vx[leg] = v.x();
  }
}

}  // namespace

std::size_t EnvConfig::substeps() const {
  return static_cast<std::size_t>(std::llround(control_dt / sim_dt));
}

std::size_t EnvConfig::delay_substeps() const {
  return static_cast<std::size_t>(std::llround(motor_delay / sim_dt));
}

void validate(const EnvConfig& cfg) {
  if (!(cfg.sim_dt > 0.0) || !(cfg.control_dt > 0.0)) throw ConfigError("env: time steps must be positive");
  const double ratio = cfg.control_dt / cfg.sim_dt;
  if (std::abs(ratio - std::round(ratio)) > 1e-9 || std::round(ratio) < 1.0)
    throw ConfigError("env: control_dt must be an integer multiple of sim_dt");
  if (!(cfg.motor_delay >= 0.0)) throw ConfigError("env: motor_delay must be >= 0");
  if (!(cfg.torque_limit > 0.0)) throw ConfigError("env: torque_limit must be positive");
  if (!(cfg.ground_friction >= 0.0)) throw ConfigError("env: ground_friction must be >= 0");
  if (!(cfg.episode_length > 0.0) || !(cfg.eval_episode_length > 0.0))
    throw ConfigError("env: episode lengths must be positive");
  if (!(cfg.joint_limit > 0.0)) throw ConfigError("env: joint_limit must be positive");
  if (std::abs(cfg.cmd_vx_min) > 1.0 || std::abs(cfg.cmd_vx_max) > 1.0 || cfg.cmd_vx_min > cfg.cmd_vx_max)
    throw ConfigError("env: command vx range must lie within [-1, 1]");
  if (!(cfg.cmd_pitch_rate_max >= 0.0 && cfg.cmd_pitch_rate_max <= 0.5))
    throw ConfigError("env: cmd_pitch_rate_max must lie in [0, 0.5]");
  if (!(cfg.action_scale > 0.0)) throw ConfigError("env: action_scale must be positive");
  if (!(cfg.terrain.amplitude >= 0.0)) throw ConfigError("env.terrain: amplitude must be >= 0");
  if (!(cfg.terrain.cell_size > 0.0) || !(cfg.terrain.length > 0.0))
    throw ConfigError("env.terrain: cell_size and length must be positive");
  for (double q : cfg.nominal_pose)
    if (std::abs(q) > cfg.joint_limit) throw ConfigError("env: nominal_pose outside the joint limits");
}

std::string to_string(DoneReason reason) {
  switch (reason) {
    case DoneReason::None: return "none";
    case DoneReason::LowBase: return "low_base";
    case DoneReason::Pitch: return "pitch";
    case DoneReason::TorsoContact: return "torso_contact";
    case DoneReason::TimeLimit: return "time_limit";
    case DoneReason::NumericalFailure: return "numerical_failure";
  }
  return "unknown";
}

double RewardTerms::total() const {
  double t = 0.0;
  for (double v : values) t += v;
  return t;
}

JointArray joints(const DofArray& v) { return {v[3], v[4], v[5], v[6]}; }

JointArray impedance_torque(const JointArray& target, const JointArray& q, const JointArray& qd,
                            const EnvConfig& cfg) {
  JointArray tau{};
  for (std::size_t j = 0; j < kJoints; ++j) {
    double t = cfg.kp * (target[j] - q[j]) - cfg.kd * qd[j];
    if (std::abs(qd[j]) > cfg.static_friction_threshold) {
      t -= cfg.motor_dynamic_friction * qd[j];
      t -= qd[j] > 0.0 ? cfg.motor_static_friction : -cfg.motor_static_friction;
    }
    tau[j] = std::clamp(t, -cfg.torque_limit, cfg.torque_limit);
  }
  return tau;
}

RewardTerms compute_reward(const WalkerState& s, const JointArray& prev_target, const JointArray& target,
                           const Command& cmd, const EnvConfig& cfg) {
  const RewardWeights& w = cfg.rewards;
  const double kc = cfg.k_c;
  const double pitch = s.q[2];
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  const double vx_base = cp * s.qd[0] + sp * s.qd[1];

  double smooth = 0.0, jpos = 0.0, jvel = 0.0, torque = 0.0;
  for (std::size_t j = 0; j < kJoints; ++j) {
    const double da = target[j] - prev_target[j];
    const double dq = s.q[3 + j] - cfg.nominal_pose[j];
    smooth += da * da;
    jpos += dq * dq;
    jvel += s.qd[3 + j] * s.qd[3 + j];
    torque += s.torque[j] * s.torque[j];
  }
  double clearance = 0.0, slip = 0.0;
  for (std::size_t f = 0; f < kFeet; ++f) {
    if (s.contact[f]) {
      slip += s.foot_vx[f] * s.foot_vx[f];
    } else {
      const double gap = cfg.clearance_target - s.foot_height[f];
      clearance += gap * gap;
    }
  }
  const bool airborne = !s.contact[0] && !s.contact[1];
  const double lin_err = cmd.vx - vx_base;
  const double ang_err = cmd.pitch_rate - s.qd[2];

  RewardTerms r;
  r.values[0] = w.orientation * kc * (sp * sp + (1.0 - cp) * (1.0 - cp));
  r.values[1] = w.lin_vel * std::exp(-cfg.tracking_sharpness * lin_err * lin_err);
  r.values[2] = w.ang_vel * std::exp(-cfg.tracking_sharpness * ang_err * ang_err);
  r.values[3] = w.action_smoothness * kc * smooth;
  r.values[4] = w.feet_clearance * kc * clearance;
  r.values[5] = w.foot_slip * kc * slip;
  r.values[6] = w.joint_position * kc * jpos;
  r.values[7] = w.joint_velocity * kc * jvel;
  r.values[8] = w.torque * kc * torque;
  r.values[9] = w.swing_duration * s.swing_sum;
  r.values[10] = w.pronking * kc * (airborne ? 1.0 : 0.0);
  return r;
}

std::array<Point2, kFeet> foot_positions(const WalkerState& s, const EnvConfig& cfg) {
  std::array<Point2, kFeet> out;
  for (int leg = 0; leg < 2; ++leg) {
    const PointKin f = foot_kin(s.q, s.qd, leg, cfg.body);
    out[leg] = {f.pos.x(), f.pos.y()};
  }
  return out;
}

std::array<Point2, kFeet> foot_velocities(const WalkerState& s, const EnvConfig& cfg) {
  std::array<Point2, kFeet> out;
  for (int leg = 0; leg < 2; ++leg) {
    const PointKin f = foot_kin(s.q, s.qd, leg, cfg.body);
    const Vec2 v = f.jac * to_vec(s.qd);
    out[leg] = {v.x(), v.y()};
  }
  return out;
}

std::array<Point2, 4> torso_corners(const WalkerState& s, const EnvConfig& cfg) {
  const double hx = 0.5 * cfg.body.torso_length, hz = 0.5 * cfg.body.torso_height;
  std::array<Point2, 4> out;
  const std::array<Vec2, 4> local = {Vec2(hx, hz), Vec2(hx, -hz), Vec2(-hx, hz), Vec2(-hx, -hz)};
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec2 p = Vec2(s.q[0], s.q[1]) + rotate(s.q[2], local[i]);
    out[i] = {p.x(), p.y()};
  }
  return out;
}

std::optional<DoneReason> fall_detector(const WalkerState& s, const EnvConfig& cfg, const Terrain& terrain) {
  for (const Point2& c : torso_corners(s, cfg))
    if (c.z <= terrain.height(c.x)) return DoneReason::TorsoContact;
  if (s.q[1] - terrain.height(s.q[0]) < cfg.fall_height) return DoneReason::LowBase;
  if (std::abs(s.q[2]) > cfg.fall_pitch) return DoneReason::Pitch;
  return std::nullopt;
}

double standing_height(const EnvConfig& cfg) {
  const Morphology& b = cfg.body;
  double h = 0.0;
  for (int leg = 0; leg < 2; ++leg) {
    const double hip = cfg.nominal_pose[2 * leg];
    const double knee = cfg.nominal_pose[2 * leg + 1];
    h = std::max(h, b.thigh_length * std::cos(hip) + b.shank_length * std::cos(hip + knee));
  }
  return h;
}

double total_mass(const EnvConfig& cfg) {
  const Morphology& b = cfg.body;
  return b.torso_mass + 2.0 * (b.thigh_mass + b.shank_mass);
}

Observation observe(const WalkerState& s, const EnvConfig& cfg) {
  namespace L = obs_layout;
  Observation o{};
  const double pitch = s.q[2];
  const double sp = std::sin(pitch), cp = std::cos(pitch);
  o[L::kGravity + 0] = sp;
  o[L::kGravity + 1] = cp;
  o[L::kBaseVel + 0] = cp * s.qd[0] + sp * s.qd[1];
  o[L::kBaseVel + 1] = -sp * s.qd[0] + cp * s.qd[1];
  o[L::kBaseVel + 2] = s.qd[2];
  for (std::size_t i = 0; i < kHistory * kJoints; ++i) {
    o[L::kJointPosErr + i] = s.pos_err_history[i];
    o[L::kJointVel + i] = s.vel_history[i] * cfg.obs_joint_velocity_scale;
  }
  for (std::size_t j = 0; j < kJoints; ++j) o[L::kPrevAction + j] = s.target[j] - cfg.nominal_pose[j];
  for (std::size_t f = 0; f < kFeet; ++f) o[L::kContacts + f] = s.contact[f] ? 1.0 : 0.0;
  o[L::kCommand + 0] = s.cmd.vx;
  o[L::kCommand + 1] = s.cmd.pitch_rate;
  for (double& v : o)
    if (!std::isfinite(v)) v = 0.0;
  return o;
}

WalkerState reset(const EnvConfig& cfg, const Terrain& terrain, RngStream& rng, const ResetOptions& opts) {
  const std::uint64_t start = rng.counter();
  const double u_spawn = rng.uniform();
  std::array<double, kJoints> u_joint{};
  for (double& u : u_joint) u = rng.uniform(-1.0, 1.0);
  const double u_vx = rng.uniform();
  const double u_pr = rng.uniform(-1.0, 1.0);
  rng.set_counter(start + kResetDraws);

  WalkerState s;
  double lo = terrain.x_min() + cfg.spawn_margin_rear;
  double hi = terrain.x_max() - cfg.spawn_margin_front;
  if (hi <= lo) lo = hi = 0.5 * (terrain.x_min() + terrain.x_max());
  const double x = opts.spawn_x ? *opts.spawn_x : lo + (hi - lo) * u_spawn;
  s.spawn_x = x;
  s.q[0] = x;
  s.q[1] = terrain.height(x) + standing_height(cfg);
  s.q[2] = 0.0;
  for (std::size_t j = 0; j < kJoints; ++j) {
    const double noise = opts.perturb_joints ? cfg.reset_joint_noise * u_joint[j] : 0.0;
    s.q[3 + j] = std::clamp(cfg.nominal_pose[j] + noise, -cfg.joint_limit, cfg.joint_limit);
  }
  s.delay.assign(cfg.delay_substeps(), cfg.nominal_pose);
  s.delay_head = 0;
  s.target = cfg.nominal_pose;
  s.prev_target = cfg.nominal_pose;
  if (opts.command) {
    s.cmd = *opts.command;
  } else {
    s.cmd.vx = cfg.cmd_vx_min + (cfg.cmd_vx_max - cfg.cmd_vx_min) * u_vx;
    s.cmd.pitch_rate = cfg.cmd_pitch_rate_max * u_pr;
  }
  refresh_foot_measurements(s, cfg, terrain);
  for (std::size_t f = 0; f < kFeet; ++f) s.contact[f] = s.foot_height[f] <= 1e-6;
  return s;
}

std::array<ContactForce, kFeet> substep(WalkerState& s, const JointArray& torque, const EnvConfig& cfg,
                                        const Terrain& terrain, bool contacts_enabled) {
  const Morphology& b = cfg.body;
  const auto bs = bodies(s.q, s.qd, b);
  const Mat7 m = mass_matrix(bs, b);
  const Vec7 qd = to_vec(s.qd);

  Vec7 rhs = Vec7::Zero();
  for (const auto& bk : bs) {
    rhs.noalias() -= bk.mass * bk.com.jac.transpose() * bk.com.bias;
    rhs.noalias() += bk.mass * bk.com.jac.transpose() * Vec2(0.0, cfg.gravity);
  }
  for (std::size_t j = 0; j < kJoints; ++j) rhs(static_cast<Eigen::Index>(3 + j)) += torque[j];

  std::array<ContactForce, kFeet> forces{};
  for (int leg = 0; leg < 2; ++leg) {
    const PointKin f = foot_kin(s.q, s.qd, leg, b);
    const double ground = terrain.height(f.pos.x());
    const double slope = terrain.slope(f.pos.x());
    const double inv = 1.0 / std::sqrt(1.0 + slope * slope);
    const Vec2 n(-slope * inv, inv);
    const Vec2 t(inv, slope * inv);
    const double pen = (ground - f.pos.y()) * inv;
    if (!contacts_enabled || pen <= 0.0) {
      s.contact[leg] = false;
      s.anchored[leg] = false;
      continue;
    }
    const Vec2 v = f.jac * qd;
    const double vn = v.dot(n);
    const double vt = v.dot(t);
    const double fn = std::max(0.0, cfg.contact_stiffness * pen - cfg.contact_damping * vn);
    if (!s.anchored[leg]) {
      s.anchored[leg] = true;
      s.anchor_x[leg] = f.pos.x();
    }
    const double disp = (f.pos.x() - s.anchor_x[leg]) / inv;
    double ft = -cfg.tangential_stiffness * disp - cfg.tangential_damping * vt;
    const double limit = cfg.ground_friction * fn;
    if (std::abs(ft) > limit) {
      ft = std::copysign(limit, ft);
      s.anchor_x[leg] = f.pos.x() + inv * (ft + cfg.tangential_damping * vt) / cfg.tangential_stiffness;
    }
    rhs.noalias() += f.jac.transpose() * (fn * n + ft * t);
    s.contact[leg] = true;
    forces[leg] = {fn, ft};
  }

  const Vec7 qdd = m.llt().solve(rhs);
  const double dt = cfg.sim_dt;
  for (std::size_t i = 0; i < kDof; ++i) {
    s.qd[i] += dt * qdd(static_cast<Eigen::Index>(i));
    s.q[i] += dt * s.qd[i];
  }
  // Gravity accelerates only the base height coordinate (uniform field); that
  // constant part is integrated exactly.
  s.q[1] -= 0.5 * dt * dt * cfg.gravity;

  for (std::size_t j = 0; j < kJoints; ++j) {
    double& q = s.q[3 + j];
    double& w = s.qd[3 + j];
    if (q > cfg.joint_limit) {
      q = cfg.joint_limit;
      if (w > 0.0) w = 0.0;
    } else if (q < -cfg.joint_limit) {
      q = -cfg.joint_limit;
      if (w < 0.0) w = 0.0;
    }
  }
  return forces;
}

StepResult step(const WalkerState& state, const JointArray& target, const EnvConfig& cfg,
                const Terrain& terrain) {
  StepResult r;
  r.state = state;
  WalkerState& s = r.state;
  for (double v : target)
    if (!std::isfinite(v)) throw ContractViolation("step: non-finite joint target");

  s.prev_target = s.target;
  s.target = target;
  const auto contact_before = s.contact;
  const std::size_t n = cfg.substeps();
  bool failed = false;
  for (std::size_t i = 0; i < n; ++i) {
    JointArray applied = target;
    if (!s.delay.empty()) {
      applied = s.delay[s.delay_head];
      s.delay[s.delay_head] = target;
      s.delay_head = (s.delay_head + 1) % s.delay.size();
    }
    s.torque = impedance_torque(applied, joints(s.q), joints(s.qd), cfg);
    substep(s, s.torque, cfg, terrain);
    if (!all_finite(s)) {
      failed = true;
      break;
    }
  }
  ++s.steps;
  s.time = static_cast<double>(s.steps) * cfg.control_dt;

  if (failed) {
    r.done = true;
    r.reason = DoneReason::NumericalFailure;
    r.obs = observe(s, cfg);
    return r;
  }

  s.swing_sum = 0.0;
  for (std::size_t f = 0; f < kFeet; ++f) {
    if (s.contact[f]) {
      if (!contact_before[f]) s.swing_sum += s.air_time[f] - cfg.swing_target;
      s.air_time[f] = 0.0;
    } else {
      s.air_time[f] += cfg.control_dt;
    }
  }
  refresh_foot_measurements(s, cfg, terrain);

  JointArray err{}, vel{};
  for (std::size_t j = 0; j < kJoints; ++j) {
    err[j] = target[j] - s.q[3 + j];
    vel[j] = s.qd[3 + j];
  }
  push_history(s.pos_err_history, err);
  push_history(s.vel_history, vel);

  r.terms = compute_reward(s, s.prev_target, s.target, s.cmd, cfg);
  r.reward = r.terms.total() * cfg.reward_scale;
  r.obs = observe(s, cfg);
  if (auto fall = fall_detector(s, cfg, terrain)) {
    r.done = true;
    r.reason = *fall;
  } else if (s.time >= cfg.episode_length - 1e-9) {
    r.done = true;
    r.reason = DoneReason::TimeLimit;
  }
  return r;
}

double mechanical_energy(const WalkerState& s, const EnvConfig& cfg) {
  const auto bs = bodies(s.q, s.qd, cfg.body);
  const Mat7 m = mass_matrix(bs, cfg.body);
  const Vec7 qd = to_vec(s.qd);
  double e = 0.5 * qd.dot(m * qd);
  for (const auto& bk : bs) e -= bk.mass * cfg.gravity * bk.com.pos.y();
  return e;
}

EpisodeTrace::EpisodeTrace(const std::filesystem::path& path)
    : out_(path, [] {
        std::vector<std::string> h = {"time", "x", "z", "pitch", "vx", "vz", "pitch_rate"};
        for (int j = 0; j < 4; ++j) h.push_back("q" + std::to_string(j));
        for (int j = 0; j < 4; ++j) h.push_back("qd" + std::to_string(j));
        for (int j = 0; j < 4; ++j) h.push_back("target" + std::to_string(j));
        for (int j = 0; j < 4; ++j) h.push_back("torque" + std::to_string(j));
        h.push_back("contact_front");
        h.push_back("contact_hind");
        for (const char* n : kRewardTermNames) h.push_back(std::string("r_") + n);
        h.push_back("reward");
        h.push_back("done");
        h.push_back("reason");
        return h;
      }()) {}

void EpisodeTrace::record(const StepResult& r, const JointArray& target) {
  const WalkerState& s = r.state;
  std::vector<std::string> c;
  c.push_back(format_double(s.time));
  for (std::size_t i = 0; i < 3; ++i) c.push_back(format_double(s.q[i]));
  for (std::size_t i = 0; i < 3; ++i) c.push_back(format_double(s.qd[i]));
  for (std::size_t j = 0; j < 4; ++j) c.push_back(format_double(s.q[3 + j]));
  for (std::size_t j = 0; j < 4; ++j) c.push_back(format_double(s.qd[3 + j]));
  for (std::size_t j = 0; j < 4; ++j) c.push_back(format_double(target[j]));
  for (std::size_t j = 0; j < 4; ++j) c.push_back(format_double(s.torque[j]));
  c.push_back(s.contact[0] ? "1" : "0");
  c.push_back(s.contact[1] ? "1" : "0");
  for (double v : r.terms.values) c.push_back(format_double(v));
  c.push_back(format_double(r.reward));
  c.push_back(r.done ? "1" : "0");
  c.push_back(to_string(r.reason));
  out_.row_cells(c);
}

}  // namespace rolldrop::walker
