#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rolldrop/nn.hpp"
#include "rolldrop/ppo.hpp"
#include "rolldrop/walker.hpp"

namespace rolldrop {

struct RunConfig {
  std::uint64_t seed = 1;
  std::size_t checkpoint_every = 100;
  std::size_t abort_after = 5;  // consecutive aborted updates before training stops
  bool operator==(const RunConfig&) const = default;
};

struct AnalysisConfig {
  std::size_t iterations = 3000;  // iterations streamed into the distribution records
  std::size_t bins = 64;
  double joint_range = 2.6;       // rad, symmetric
  double action_range = 2.6;      // symmetric
  double velocity_range = 30.0;   // rad/s, symmetric
  std::vector<std::string> channels{"q0", "q1", "q2", "q3", "a0", "a1", "a2", "a3"};
  bool operator==(const AnalysisConfig&) const = default;
};

struct HarnessConfig {
  std::vector<double> tune_candidates{0.01, 0.001, 0.0001};
  std::size_t tune_iterations = 0;  // 0: use ppo.total_iterations
  double tune_reward_ratio = 0.8;
  double tune_sigma_margin = 0.05;
  double success_distance = 1.0;    // m
  bool eval_rolldrop = false;
  bool eval_stochastic = false;
  double mismatch_train_kp = 20.0;
  double mismatch_deploy_kp = 15.0;
  std::size_t mismatch_episodes = 20;
  double multi_seed_rolldrop_p = 1e-4;
  bool erfi = false;  // reserved; no implementation
  bool operator==(const HarnessConfig&) const = default;
};

struct ExperimentConfig {
  std::string preset = "desk";
  walker::EnvConfig env;
  ppo::PpoConfig ppo;
  nn::NetSpec net;  // obs_size / action_size are fixed by the walker
  RunConfig run;
  AnalysisConfig analysis;
  HarnessConfig harness;
};

// "desk" or "paper".
ExperimentConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

nlohmann::json to_json(const ExperimentConfig& cfg);

// Overlays `doc` on the preset named by doc["preset"] (default desk). Unknown
// keys and type mismatches raise ConfigError naming the offending path.
ExperimentConfig config_from_json(const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path);
ExperimentConfig parse_config(const std::string& text, const std::string& source = "<memory>");

void validate(const ExperimentConfig& cfg);

std::string dump_json(const nlohmann::json& doc);  // 2-space indent, trailing newline

}  // namespace rolldrop
