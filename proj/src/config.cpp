#include "rolldrop/config.hpp"

#include <fstream>
#include <sstream>

#include "rolldrop/errors.hpp"

namespace rolldrop {

using nlohmann::json;

ExperimentConfig preset_config(const std::string& name) {
  ExperimentConfig c;
  c.net.obs_size = walker::kObsSize;
  c.net.action_size = walker::kJoints;
  if (name == "desk") {
    c.preset = "desk";
    return c;
  }
  if (name == "paper") {
    c.preset = "paper";
    c.net.hidden = {512, 256, 256};
    c.ppo.total_iterations = 3000;
    return c;
  }
  throw ConfigError("unknown preset '" + name + "' (expected desk or paper)");
}

std::vector<std::string> preset_names() { return {"desk", "paper"}; }

namespace {

json env_json(const walker::EnvConfig& e) {
  const auto& w = e.rewards;
  const auto& b = e.body;
  return json{
      {"kp", e.kp},
      {"kd", e.kd},
      {"torque_limit", e.torque_limit},
      {"motor_static_friction", e.motor_static_friction},
      {"motor_dynamic_friction", e.motor_dynamic_friction},
      {"static_friction_threshold", e.static_friction_threshold},
      {"motor_delay", e.motor_delay},
      {"ground_friction", e.ground_friction},
      {"gravity", e.gravity},
      {"sim_dt", e.sim_dt},
      {"control_dt", e.control_dt},
      {"episode_length", e.episode_length},
      {"eval_episode_length", e.eval_episode_length},
      {"contact_stiffness", e.contact_stiffness},
      {"contact_damping", e.contact_damping},
      {"tangential_stiffness", e.tangential_stiffness},
      {"tangential_damping", e.tangential_damping},
      {"joint_limit", e.joint_limit},
      {"fall_height", e.fall_height},
      {"fall_pitch", e.fall_pitch},
      {"nominal_pose", e.nominal_pose},
      {"reset_joint_noise", e.reset_joint_noise},
      {"action_scale", e.action_scale},
      {"obs_joint_velocity_scale", e.obs_joint_velocity_scale},
      {"reward_scale", e.reward_scale},
      {"k_c", e.k_c},
      {"tracking_sharpness", e.tracking_sharpness},
      {"clearance_target", e.clearance_target},
      {"swing_target", e.swing_target},
      {"cmd_vx_min", e.cmd_vx_min},
      {"cmd_vx_max", e.cmd_vx_max},
      {"cmd_pitch_rate_max", e.cmd_pitch_rate_max},
      {"spawn_margin_rear", e.spawn_margin_rear},
      {"spawn_margin_front", e.spawn_margin_front},
      {"terrain",
       {{"kind", to_string(e.terrain.kind)},
        {"amplitude", e.terrain.amplitude},
        {"cell_size", e.terrain.cell_size},
        {"x_min", e.terrain.x_min},
        {"length", e.terrain.length}}},
      {"body",
       {{"torso_length", b.torso_length},
        {"torso_height", b.torso_height},
        {"torso_mass", b.torso_mass},
        {"thigh_length", b.thigh_length},
        {"thigh_mass", b.thigh_mass},
        {"shank_length", b.shank_length},
        {"shank_mass", b.shank_mass},
        {"armature", b.armature}}},
      {"rewards",
       {{"orientation", w.orientation},
        {"lin_vel", w.lin_vel},
        {"ang_vel", w.ang_vel},
        {"action_smoothness", w.action_smoothness},
        {"feet_clearance", w.feet_clearance},
        {"foot_slip", w.foot_slip},
        {"joint_position", w.joint_position},
        {"joint_velocity", w.joint_velocity},
        {"torque", w.torque},
        {"swing_duration", w.swing_duration},
        {"pronking", w.pronking}}},
  };
}

walker::EnvConfig env_from(const json& j) {
  walker::EnvConfig e;
  j.at("kp").get_to(e.kp);
  j.at("kd").get_to(e.kd);
  j.at("torque_limit").get_to(e.torque_limit);
  j.at("motor_static_friction").get_to(e.motor_static_friction);
  j.at("motor_dynamic_friction").get_to(e.motor_dynamic_friction);
  j.at("static_friction_threshold").get_to(e.static_friction_threshold);
  j.at("motor_delay").get_to(e.motor_delay);
  j.at("ground_friction").get_to(e.ground_friction);
  j.at("gravity").get_to(e.gravity);
  j.at("sim_dt").get_to(e.sim_dt);
  j.at("control_dt").get_to(e.control_dt);
  j.at("episode_length").get_to(e.episode_length);
  j.at("eval_episode_length").get_to(e.eval_episode_length);
  j.at("contact_stiffness").get_to(e.contact_stiffness);
  j.at("contact_damping").get_to(e.contact_damping);
  j.at("tangential_stiffness").get_to(e.tangential_stiffness);
  j.at("tangential_damping").get_to(e.tangential_damping);
  j.at("joint_limit").get_to(e.joint_limit);
  j.at("fall_height").get_to(e.fall_height);
  j.at("fall_pitch").get_to(e.fall_pitch);
  j.at("nominal_pose").get_to(e.nominal_pose);
  j.at("reset_joint_noise").get_to(e.reset_joint_noise);
  j.at("action_scale").get_to(e.action_scale);
  j.at("obs_joint_velocity_scale").get_to(e.obs_joint_velocity_scale);
  j.at("reward_scale").get_to(e.reward_scale);
  j.at("k_c").get_to(e.k_c);
  j.at("tracking_sharpness").get_to(e.tracking_sharpness);
  j.at("clearance_target").get_to(e.clearance_target);
  j.at("swing_target").get_to(e.swing_target);
  j.at("cmd_vx_min").get_to(e.cmd_vx_min);
  j.at("cmd_vx_max").get_to(e.cmd_vx_max);
  j.at("cmd_pitch_rate_max").get_to(e.cmd_pitch_rate_max);
  j.at("spawn_margin_rear").get_to(e.spawn_margin_rear);
  j.at("spawn_margin_front").get_to(e.spawn_margin_front);
  const json& t = j.at("terrain");
  e.terrain.kind = terrain_kind_from_string(t.at("kind").get<std::string>());
  t.at("amplitude").get_to(e.terrain.amplitude);
  t.at("cell_size").get_to(e.terrain.cell_size);
  t.at("x_min").get_to(e.terrain.x_min);
  t.at("length").get_to(e.terrain.length);
  const json& b = j.at("body");
  b.at("torso_length").get_to(e.body.torso_length);
  b.at("torso_height").get_to(e.body.torso_height);
  b.at("torso_mass").get_to(e.body.torso_mass);
  b.at("thigh_length").get_to(e.body.thigh_length);
  b.at("thigh_mass").get_to(e.body.thigh_mass);
  b.at("shank_length").get_to(e.body.shank_length);
  b.at("shank_mass").get_to(e.body.shank_mass);
  b.at("armature").get_to(e.body.armature);
  const json& w = j.at("rewards");
  w.at("orientation").get_to(e.rewards.orientation);
  w.at("lin_vel").get_to(e.rewards.lin_vel);
  w.at("ang_vel").get_to(e.rewards.ang_vel);
  w.at("action_smoothness").get_to(e.rewards.action_smoothness);
  w.at("feet_clearance").get_to(e.rewards.feet_clearance);
  w.at("foot_slip").get_to(e.rewards.foot_slip);
  w.at("joint_position").get_to(e.rewards.joint_position);
  w.at("joint_velocity").get_to(e.rewards.joint_velocity);
  w.at("torque").get_to(e.rewards.torque);
  w.at("swing_duration").get_to(e.rewards.swing_duration);
  w.at("pronking").get_to(e.rewards.pronking);
  return e;
}

std::string kind_of(const json& v) {
  if (v.is_boolean()) return "boolean";
  if (v.is_number_unsigned()) return "unsigned integer";
  if (v.is_number_integer()) return "integer";
  if (v.is_number()) return "number";
  if (v.is_string()) return "string";
  if (v.is_array()) return "array";
  if (v.is_object()) return "object";
  return "null";
}

bool compatible(const json& expected, const json& given) {
  if (expected.is_number_unsigned()) return given.is_number_unsigned();
  if (expected.is_number_integer()) return given.is_number_integer();
  if (expected.is_number()) return given.is_number();
  if (expected.is_boolean()) return given.is_boolean();
  if (expected.is_string()) return given.is_string();
  if (expected.is_array()) {
    if (!given.is_array()) return false;
    if (expected.empty()) return true;
    for (const auto& el : given)
      if (!compatible(expected.front(), el)) return false;
    return true;
  }
  return false;
}

void overlay(json& base, const json& user, const std::string& path) {
  if (!user.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + ": expected an object");
  for (const auto& [key, value] : user.items()) {
    const std::string p = path.empty() ? key : path + "." + key;
    if (!base.contains(key)) throw ConfigError("unknown key '" + p + "'");
    json& slot = base[key];
    if (slot.is_object()) {
      overlay(slot, value, p);
    } else if (!compatible(slot, value)) {
      throw ConfigError("'" + p + "': expected " + kind_of(slot) + ", got " + kind_of(value));
    } else {
      slot = value;
    }
  }
}

}  // namespace

json to_json(const ExperimentConfig& c) {
  return json{
      {"preset", c.preset},
      {"env", env_json(c.env)},
      {"ppo",
       {{"num_envs", c.ppo.num_envs},
        {"steps_per_env", c.ppo.steps_per_env},
        {"minibatch_size", c.ppo.minibatch_size},
        {"epochs", c.ppo.epochs},
        {"clip_range", c.ppo.clip_range},
        {"entropy_coef", c.ppo.entropy_coef},
        {"gamma", c.ppo.gamma},
        {"lambda", c.ppo.lambda},
        {"learning_rate", c.ppo.learning_rate},
        {"value_coef", c.ppo.value_coef},
        {"grad_norm_clip", c.ppo.grad_norm_clip},
        {"adam_beta1", c.ppo.adam_beta1},
        {"adam_beta2", c.ppo.adam_beta2},
        {"adam_eps", c.ppo.adam_eps},
        {"sigma_floor", c.ppo.sigma_floor},
        {"normalize_advantages", c.ppo.normalize_advantages},
        {"total_iterations", c.ppo.total_iterations}}},
      {"net",
       {{"hidden", c.net.hidden},
        {"rolldrop_position", c.net.rolldrop_position},
        {"rolldrop_p", c.net.rolldrop_p},
        {"train_dropout_p", c.net.train_dropout_p},
        {"sigma_init", c.net.sigma_init},
        {"policy_head_scale", c.net.policy_head_scale}}},
      {"run",
       {{"seed", c.run.seed}, {"checkpoint_every", c.run.checkpoint_every}, {"abort_after", c.run.abort_after}}},
      {"analysis",
       {{"iterations", c.analysis.iterations},
        {"bins", c.analysis.bins},
        {"joint_range", c.analysis.joint_range},
        {"action_range", c.analysis.action_range},
        {"velocity_range", c.analysis.velocity_range},
        {"channels", c.analysis.channels}}},
      {"harness",
       {{"tune_candidates", c.harness.tune_candidates},
        {"tune_iterations", c.harness.tune_iterations},
        {"tune_reward_ratio", c.harness.tune_reward_ratio},
        {"tune_sigma_margin", c.harness.tune_sigma_margin},
        {"success_distance", c.harness.success_distance},
        {"eval_rolldrop", c.harness.eval_rolldrop},
        {"eval_stochastic", c.harness.eval_stochastic},
        {"mismatch_train_kp", c.harness.mismatch_train_kp},
        {"mismatch_deploy_kp", c.harness.mismatch_deploy_kp},
        {"mismatch_episodes", c.harness.mismatch_episodes},
        {"multi_seed_rolldrop_p", c.harness.multi_seed_rolldrop_p},
        {"erfi", c.harness.erfi}}},
  };
}

ExperimentConfig config_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  std::string preset = "desk";
  if (doc.contains("preset")) {
    if (!doc["preset"].is_string()) throw ConfigError("'preset': expected string");
    preset = doc["preset"].get<std::string>();
  }
  json merged = to_json(preset_config(preset));
  overlay(merged, doc, "");

  ExperimentConfig c = preset_config(preset);
  try {
    c.env = env_from(merged.at("env"));
    const json& p = merged.at("ppo");
    p.at("num_envs").get_to(c.ppo.num_envs);
    p.at("steps_per_env").get_to(c.ppo.steps_per_env);
    p.at("minibatch_size").get_to(c.ppo.minibatch_size);
    p.at("epochs").get_to(c.ppo.epochs);
    p.at("clip_range").get_to(c.ppo.clip_range);
    p.at("entropy_coef").get_to(c.ppo.entropy_coef);
    p.at("gamma").get_to(c.ppo.gamma);
    p.at("lambda").get_to(c.ppo.lambda);
    p.at("learning_rate").get_to(c.ppo.learning_rate);
    p.at("value_coef").get_to(c.ppo.value_coef);
    p.at("grad_norm_clip").get_to(c.ppo.grad_norm_clip);
    p.at("adam_beta1").get_to(c.ppo.adam_beta1);
    p.at("adam_beta2").get_to(c.ppo.adam_beta2);
    p.at("adam_eps").get_to(c.ppo.adam_eps);
    p.at("sigma_floor").get_to(c.ppo.sigma_floor);
    p.at("normalize_advantages").get_to(c.ppo.normalize_advantages);
    p.at("total_iterations").get_to(c.ppo.total_iterations);
    const json& n = merged.at("net");
    n.at("hidden").get_to(c.net.hidden);
    n.at("rolldrop_position").get_to(c.net.rolldrop_position);
    n.at("rolldrop_p").get_to(c.net.rolldrop_p);
    n.at("train_dropout_p").get_to(c.net.train_dropout_p);
    n.at("sigma_init").get_to(c.net.sigma_init);
    n.at("policy_head_scale").get_to(c.net.policy_head_scale);
    const json& r = merged.at("run");
    r.at("seed").get_to(c.run.seed);
    r.at("checkpoint_every").get_to(c.run.checkpoint_every);
    r.at("abort_after").get_to(c.run.abort_after);
    const json& a = merged.at("analysis");
    a.at("iterations").get_to(c.analysis.iterations);
    a.at("bins").get_to(c.analysis.bins);
    a.at("joint_range").get_to(c.analysis.joint_range);
    a.at("action_range").get_to(c.analysis.action_range);
    a.at("velocity_range").get_to(c.analysis.velocity_range);
    a.at("channels").get_to(c.analysis.channels);
    const json& h = merged.at("harness");
    h.at("tune_candidates").get_to(c.harness.tune_candidates);
    h.at("tune_iterations").get_to(c.harness.tune_iterations);
    h.at("tune_reward_ratio").get_to(c.harness.tune_reward_ratio);
    h.at("tune_sigma_margin").get_to(c.harness.tune_sigma_margin);
    h.at("success_distance").get_to(c.harness.success_distance);
    h.at("eval_rolldrop").get_to(c.harness.eval_rolldrop);
    h.at("eval_stochastic").get_to(c.harness.eval_stochastic);
    h.at("mismatch_train_kp").get_to(c.harness.mismatch_train_kp);
    h.at("mismatch_deploy_kp").get_to(c.harness.mismatch_deploy_kp);
    h.at("mismatch_episodes").get_to(c.harness.mismatch_episodes);
    h.at("multi_seed_rolldrop_p").get_to(c.harness.multi_seed_rolldrop_p);
    h.at("erfi").get_to(c.harness.erfi);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  c.preset = preset;
  validate(c);
  return c;
}

void validate(const ExperimentConfig& c) {
  walker::validate(c.env);
  ppo::validate(c.ppo);
  if (c.net.hidden.empty()) throw ConfigError("net.hidden: at least one hidden layer required");
  for (auto h : c.net.hidden)
    if (h == 0) throw ConfigError("net.hidden: layer sizes must be positive");
  if (c.net.rolldrop_position < 1 || c.net.rolldrop_position > c.net.hidden.size())
    throw ConfigError("net.rolldrop_position: must index a hidden layer (1.." +
                      std::to_string(c.net.hidden.size()) + ")");
  nn::validate_probability(c.net.rolldrop_p, "net.rolldrop_p");
  nn::validate_probability(c.net.train_dropout_p, "net.train_dropout_p");
  if (!(c.net.sigma_init > 0.0)) throw ConfigError("net.sigma_init: must be positive");
  if (c.run.checkpoint_every == 0) throw ConfigError("run.checkpoint_every: must be positive");
  if (c.run.abort_after == 0) throw ConfigError("run.abort_after: must be positive");
  if (c.analysis.bins == 0) throw ConfigError("analysis.bins: must be positive");
  if (!(c.analysis.joint_range > 0.0) || !(c.analysis.action_range > 0.0) || !(c.analysis.velocity_range > 0.0))
    throw ConfigError("analysis: ranges must be positive");
  for (double p : c.harness.tune_candidates) nn::validate_probability(p, "harness.tune_candidates");
  nn::validate_probability(c.harness.multi_seed_rolldrop_p, "harness.multi_seed_rolldrop_p");
  if (!(c.harness.tune_reward_ratio > 0.0)) throw ConfigError("harness.tune_reward_ratio: must be positive");
  if (!(c.harness.mismatch_train_kp > 0.0) || !(c.harness.mismatch_deploy_kp > 0.0))
    throw ConfigError("harness: mismatch gains must be positive");
  if (c.harness.mismatch_episodes == 0) throw ConfigError("harness.mismatch_episodes: must be positive");
  if (c.harness.erfi) throw ConfigError("harness.erfi: random force injection is not implemented");
}

ExperimentConfig parse_config(const std::string& text, const std::string& source) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(source + ": malformed JSON: " + e.what());
  }
  return config_from_json(doc);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.string());
}

std::string dump_json(const json& doc) { return doc.dump(2) + "\n"; }

}  // namespace rolldrop
