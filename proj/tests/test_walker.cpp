#include <doctest.h>

#include <cmath>
#include <set>

#include "rolldrop/errors.hpp"
#include "rolldrop/terrain.hpp"
#include "rolldrop/walker.hpp"
#include "test_util.hpp"

using namespace rolldrop;
using namespace rolldrop::walker;

namespace {

EnvConfig no_friction() {
  EnvConfig cfg;
  cfg.motor_static_friction = 0.0;
  cfg.motor_dynamic_friction = 0.0;
  return cfg;
}

WalkerState stand(const EnvConfig& cfg, const Terrain& terrain, double seconds) {
  RngStream rng(1, 0, StreamId::EnvReset);
  ResetOptions o;
  o.perturb_joints = false;
  o.command = Command{0.0, 0.0};
  o.spawn_x = 10.0;
  WalkerState s = reset(cfg, terrain, rng, o);
  const auto steps = static_cast<std::size_t>(std::lround(seconds / cfg.control_dt));
  for (std::size_t i = 0; i < steps; ++i) s = step(s, cfg.nominal_pose, cfg, terrain).state;
  return s;
}

}  // namespace

TEST_CASE("impedance torque examples") {
  EnvConfig cfg = no_friction();
  const JointArray q{0.1, -0.2, 0.3, 0.4}, zero{};
  CHECK(impedance_torque(q, q, zero, cfg) == zero);

  const JointArray target{0.3, -0.0, 0.5, 0.6};
  const JointArray qd{0.1, 0.1, 0.1, 0.1};
  const auto t = impedance_torque(target, q, qd, cfg);
  for (double v : t) CHECK(v == doctest::Approx(2.9).epsilon(1e-12));

  const JointArray far{10.1, 9.8, 10.3, 10.4};
  for (double v : impedance_torque(far, q, zero, cfg)) CHECK(v == 20.0);

  SUBCASE("friction opposes motion above the gate only") {
    EnvConfig f;
    const JointArray slow{5e-4, 0, 0, 0}, fast{0.5, 0, 0, 0};
    CHECK(impedance_torque(q, q, slow, f)[0] == -f.kd * 5e-4);
    CHECK(impedance_torque(q, q, fast, f)[0] ==
          doctest::Approx(-f.kd * 0.5 - f.motor_dynamic_friction * 0.5 - f.motor_static_friction).epsilon(1e-12));
  }
}

TEST_CASE("compute_reward examples") {
  EnvConfig cfg;
  WalkerState s;
  s.q[3] = cfg.nominal_pose[0];
  s.q[4] = cfg.nominal_pose[1];
  s.q[5] = cfg.nominal_pose[2];
  s.q[6] = cfg.nominal_pose[3];
  s.qd[0] = 0.4;
  s.qd[2] = 0.1;
  s.contact = {true, true};
  const Command cmd{0.4, 0.1};
  RewardTerms r = compute_reward(s, cfg.nominal_pose, cfg.nominal_pose, cmd, cfg);
  CHECK(r.values[1] == 15.0);
  CHECK(r.values[2] == 15.0);
  CHECK(r.values[0] == 0.0);

  s.torque = {1.0, 1.0, 1.0, 1.0};
  r = compute_reward(s, cfg.nominal_pose, cfg.nominal_pose, cmd, cfg);
  CHECK(r.values[8] == doctest::Approx(-1.6).epsilon(1e-14));

  SUBCASE("tracking terms stay in (0, 15]") {
    RngStream rng(1, 0, StreamId::Init);
    for (int i = 0; i < 1000; ++i) {
      WalkerState t = s;
      t.qd[0] = rng.uniform(-5.0, 5.0);
      t.qd[2] = rng.uniform(-5.0, 5.0);
      const auto rr = compute_reward(t, cfg.nominal_pose, cfg.nominal_pose, cmd, cfg);
      for (double v : rr.values) CHECK(std::isfinite(v));
      CHECK(rr.values[1] > 0.0);
      CHECK(rr.values[1] <= 15.0);
      CHECK(rr.values[2] > 0.0);
      CHECK(rr.values[2] <= 15.0);
    }
  }
}

TEST_CASE("walker at rest holds its height") {
  const EnvConfig cfg;
  const Terrain flat = generate_terrain(TerrainKind::Flat, 0.0, 0.25, 1);
  WalkerState s = stand(cfg, flat, 2.0);
  REQUIRE_FALSE(fall_detector(s, cfg, flat).has_value());
  // The held target is the one the walker settled under; re-targeting to the
  // measured q would drop the gravity load the joint error is carrying.
  const double z0 = s.q[1];
  for (int i = 0; i < 50; ++i) {
    const auto r = step(s, cfg.nominal_pose, cfg, flat);
    REQUIRE_FALSE(r.reason == DoneReason::NumericalFailure);
    s = r.state;
  }
  CHECK(std::abs(s.q[1] - z0) <= 1e-3);
}

TEST_CASE("free body without gravity or contact is ballistic") {
  EnvConfig cfg;
  cfg.gravity = 0.0;
  const Terrain flat;
  WalkerState s;
  s.q = {0.0, 5.0, 0.0, 0.8, -1.6, 0.8, -1.6};
  s.qd = {0.7, -0.3, 0.0, 0.0, 0.0, 0.0, 0.0};
  const DofArray qd0 = s.qd;
  for (int i = 0; i < 500; ++i) substep(s, JointArray{}, cfg, flat, false);
  for (std::size_t i = 0; i < kDof; ++i) CHECK(s.qd[i] == doctest::Approx(qd0[i]).epsilon(1e-12).scale(1.0));
  CHECK(s.q[0] == doctest::Approx(0.7 * 500 * cfg.sim_dt).epsilon(1e-9));
}

TEST_CASE("step is deterministic") {
  const EnvConfig cfg;
  const Terrain rough = generate_terrain(TerrainKind::Rough, 0.02, 0.25, 3);
  RngStream rng(4, 0, StreamId::EnvReset);
  const WalkerState s = reset(cfg, rough, rng);
  const JointArray a{0.9, -1.5, 0.7, -1.7};
  const auto r1 = step(s, a, cfg, rough);
  const auto r2 = step(s, a, cfg, rough);
  CHECK(r1.state == r2.state);
  CHECK(r1.obs == r2.obs);
  CHECK(r1.terms.values == r2.terms.values);
}

TEST_CASE("motor delay is exactly six substeps") {
  EnvConfig cfg = no_friction();
  cfg.control_dt = cfg.sim_dt;  // one substep per step
  cfg.gravity = 0.0;
  CHECK(cfg.delay_substeps() == 6);
  const Terrain flat;
  RngStream rng(1, 0, StreamId::EnvReset);
  ResetOptions o;
  o.perturb_joints = false;
  WalkerState s = reset(cfg, flat, rng, o);
  s.q[1] = 5.0;  // keep the feet off the ground
  JointArray moved = cfg.nominal_pose;
  moved[0] += 0.5;
  std::vector<double> torque0;
  for (int i = 0; i < 10; ++i) {
    s = step(s, moved, cfg, flat).state;
    torque0.push_back(s.torque[0]);
  }
  for (int i = 0; i < 6; ++i) CHECK(std::abs(torque0[i]) < 1e-9);
  CHECK(torque0[6] == doctest::Approx(cfg.kp * 0.5).epsilon(1e-3));
}

TEST_CASE("reset examples") {
  const EnvConfig cfg;
  SUBCASE("same stream, same state") {
    const Terrain flat;
    RngStream a(5, 2, StreamId::EnvReset, 16), b(5, 2, StreamId::EnvReset, 16);
    ResetOptions o;
    o.perturb_joints = false;
    CHECK(reset(cfg, flat, a, o) == reset(cfg, flat, b, o));
    CHECK(a.counter() == 16 + kResetDraws);
  }
  SUBCASE("rough terrain spawn height") {
    const Terrain rough = generate_terrain(TerrainKind::Rough, 0.02, 0.25, 9);
    RngStream rng(5, 0, StreamId::EnvReset);
    for (int i = 0; i < 20; ++i) {
      const WalkerState s = reset(cfg, rough, rng);
      CHECK(s.q[1] == doctest::Approx(rough.height(s.q[0]) + standing_height(cfg)).epsilon(1e-15));
    }
  }
  SUBCASE("100 resets, 100 distinct spawn points") {
    const Terrain rough = generate_terrain(TerrainKind::Rough, 0.02, 0.25, 9);
    RngStream rng(5, 0, StreamId::EnvReset);
    std::set<double> xs;
    for (int i = 0; i < 100; ++i) xs.insert(reset(cfg, rough, rng).q[0]);
    CHECK(xs.size() == 100);
  }
  SUBCASE("histories start at zero") {
    const Terrain flat;
    RngStream rng(5, 0, StreamId::EnvReset);
    ResetOptions o;
    o.perturb_joints = false;
    const WalkerState s = reset(cfg, flat, rng, o);
    const Observation obs = observe(s, cfg);
    for (std::size_t i = obs_layout::kJointPosErr; i < obs_layout::kPrevAction; ++i) CHECK(obs[i] == 0.0);
    CHECK(obs[obs_layout::kContacts] == 1.0);
    CHECK(obs[obs_layout::kContacts + 1] == 1.0);
  }
}

TEST_CASE("terrain examples") {
  const Terrain zero = generate_terrain(TerrainKind::Rough, 0.0, 0.25, 4);
  for (double h : zero.heights()) CHECK(h == 0.0);
  CHECK(generate_terrain(TerrainKind::Rough, 0.03, 0.25, 4) == generate_terrain(TerrainKind::Rough, 0.03, 0.25, 4));
  const Terrain flat = generate_terrain(TerrainKind::Flat, 0.05, 0.25, 1);
  CHECK_FALSE(generate_terrain(TerrainKind::Rough, 0.03, 0.25, 4) ==
              generate_terrain(TerrainKind::Rough, 0.03, 0.25, 5));
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const Terrain t = generate_terrain(TerrainKind::Rough, 0.05, 0.25, seed);
    for (double h : t.heights()) CHECK(std::abs(h) <= 0.05);
  }
  for (double h : flat.heights()) CHECK(h == 0.0);

  SUBCASE("csv round trip") {
    test::TempDir dir("terrain");
    const Terrain t = generate_terrain(TerrainKind::Rough, 0.02, 0.5, 3, -1.0, 10.0);
    save_terrain_csv(dir / "t.csv", t);
    CHECK(load_terrain_csv(dir / "t.csv") == t);
  }
}

TEST_CASE("fall detector examples") {
  const EnvConfig cfg;
  const Terrain flat;
  RngStream rng(1, 0, StreamId::EnvReset);
  ResetOptions o;
  o.perturb_joints = false;
  WalkerState s = reset(cfg, flat, rng, o);
  CHECK_FALSE(fall_detector(s, cfg, flat).has_value());
  WalkerState tilted = s;
  tilted.q[2] = 1.5;
  CHECK(fall_detector(tilted, cfg, flat).has_value());
  WalkerState low = s;
  low.q[1] = flat.height(low.q[0]);
  CHECK(fall_detector(low, cfg, flat).has_value());
}

TEST_CASE("episode ends at the time limit") {
  EnvConfig cfg;
  cfg.episode_length = 0.2;
  const Terrain flat;
  RngStream rng(1, 0, StreamId::EnvReset);
  WalkerState s = reset(cfg, flat, rng);
  StepResult r;
  for (int i = 0; i < 10; ++i) {
    r = step(s, cfg.nominal_pose, cfg, flat);
    s = r.state;
    if (i < 9) REQUIRE_FALSE(r.done);
  }
  CHECK(r.done);
  CHECK(r.reason == DoneReason::TimeLimit);
}

TEST_CASE("non-finite target is rejected") {
  const EnvConfig cfg;
  const Terrain flat;
  RngStream rng(1, 0, StreamId::EnvReset);
  const WalkerState s = reset(cfg, flat, rng);
  CHECK_THROWS_AS(step(s, JointArray{NAN, 0, 0, 0}, cfg, flat), ContractViolation);
}

TEST_CASE("config validation") {
  EnvConfig cfg;
  cfg.control_dt = 0.021;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
  cfg = EnvConfig{};
  cfg.sim_dt = -1.0;
  CHECK_THROWS_AS(validate(cfg), ConfigError);
}

TEST_CASE("free fall conserves energy") {
  const EnvConfig cfg;
  const Terrain flat;
  RngStream rng(11, 0, StreamId::Init);
  for (int trial = 0; trial < 5; ++trial) {
    WalkerState s;
    s.q = {0.0, 50.0, rng.uniform(-0.3, 0.3), 0.8, -1.6, 0.8, -1.6};
    for (double& v : s.qd) v = rng.uniform(-1.0, 1.0);
    const double e0 = mechanical_energy(s, cfg);
    const auto n = static_cast<int>(std::lround(1.0 / cfg.sim_dt));
    for (int i = 0; i < n; ++i) substep(s, JointArray{}, cfg, flat, false);
    const double e1 = mechanical_energy(s, cfg);
    CHECK(std::abs(e1 - e0) / std::abs(e0) < 0.01);
  }
}

TEST_CASE("contact forces are unilateral and inside the friction cone") {
  const EnvConfig cfg;
  const Terrain rough = generate_terrain(TerrainKind::Rough, 0.03, 0.25, 2);
  RngStream rng(12, 0, StreamId::Init);
  RngStream reset_rng(12, 0, StreamId::EnvReset);
  std::size_t contacts = 0;
  for (int i = 0; i < 10000; ++i) {
    WalkerState s = reset(cfg, rough, reset_rng);
    s.q[1] += rng.uniform(-0.02, 0.01);
    s.q[2] = rng.uniform(-0.3, 0.3);
    for (double& v : s.qd) v = rng.uniform(-2.0, 2.0);
    s.qd[1] = rng.uniform(-3.0, 0.5);
    JointArray tau;
    for (double& t : tau) t = rng.uniform(-20.0, 20.0);
    const auto f = substep(s, tau, cfg, rough, true);
    for (const ContactForce& c : f) {
      CHECK(c.normal >= 0.0);
      CHECK(std::abs(c.tangential) <= cfg.ground_friction * c.normal * (1.0 + 1e-12));
      if (c.normal > 0.0) ++contacts;
    }
  }
  CHECK(contacts > 1000);
}
