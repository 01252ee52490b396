#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rolldrop/config.hpp"
#include "rolldrop/noise.hpp"
#include "rolldrop/rollout.hpp"
#include "rolldrop/trainer.hpp"

namespace rolldrop::harness {

struct NoiseSweepSpec {
  std::vector<double> levels{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55};
  std::size_t runs_per_level = 100;
  TerrainSpec terrain{TerrainKind::Rough, 0.02, 0.25, 0.0, 40.0};
  walker::Command command{0.5, 0.0};
  std::string policy;  // checkpoint path (CLI only)
  std::uint64_t seed = 0;
  double success_distance = 1.0;
  bool rolldrop = false;
  bool stochastic = false;
};

void validate(const NoiseSweepSpec& spec);
NoiseSweepSpec sweep_spec_from_json(const nlohmann::json& doc);  // unknown keys rejected
nlohmann::json to_json(const NoiseSweepSpec& spec);
NoiseSweepSpec load_sweep_spec(const std::filesystem::path& path);

struct LevelResult {
  double level = 0.0;
  std::size_t successes = 0;
  std::size_t fall_failures = 0;
  std::size_t distance_failures = 0;
  double success_rate = 0.0;
  bool operator==(const LevelResult&) const = default;
};

struct RunRecord {
  std::size_t level_index = 0;
  std::size_t run = 0;
  rollout::EpisodeResult result;
  bool operator==(const RunRecord&) const = default;
};

struct SweepResult {
  std::vector<LevelResult> levels;
  std::vector<RunRecord> runs;  // level-major
  bool operator==(const SweepResult&) const = default;
};

// Run r uses env id r on every stream, so all levels see the same spawn points;
// the observation-noise stream is keyed by level.
SweepResult run_noise_sweep(const nn::PolicyNet& policy, const walker::EnvConfig& env,
                            const NoiseSweepSpec& spec);
SweepResult run_noise_sweep_serial(const nn::PolicyNet& policy, const walker::EnvConfig& env,
                                   const NoiseSweepSpec& spec);

// level,runs,successes,fall_failures,distance_failures,success_rate
void write_sweep_csv(const std::filesystem::path& path, const SweepResult& r);
// level,run,success,fall,distance_m,steps,reason,spawn_x
void write_sweep_runs_csv(const std::filesystem::path& path, const SweepResult& r, const NoiseSweepSpec& spec);
std::vector<LevelResult> read_sweep_csv(const std::filesystem::path& path);

// Area under the success-rate curve (trapezoid over the levels).
double success_auc(const std::vector<LevelResult>& levels);

struct TuneEntry {
  double p = 0.0;
  double final_reward = 0.0;  // mean reward over the last 10% of iterations
  double tail_sigma = 0.0;    // mean sigma over the last 10% of iterations
  bool stable = false;
};

struct TuneReport {
  TuneEntry reference;  // p = 0
  std::vector<TuneEntry> candidates;
  std::optional<double> chosen;
};

// Stability: final reward >= ratio * reference final reward and tail sigma
// within margin of the floor.
bool is_stable(const TuneEntry& e, const TuneEntry& reference, double reward_ratio, double sigma_margin,
               double sigma_floor);
TuneEntry summarize_run(double p, const std::vector<TrainRecord>& records);

// Trains p = 0 and then each candidate (descending order is enforced) for
// harness.tune_iterations; returns the largest stable p.
TuneReport tune_dropout(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir,
                        bool verbose = false);
void write_tune_csv(const std::filesystem::path& path, const TuneReport& report);

struct MismatchRow {
  std::string policy;
  double kp = 0.0;
  std::size_t episodes = 0;
  std::size_t falls = 0;
  double fall_rate = 0.0;
  double lin_vel_rms = 0.0;
  double ang_vel_rms = 0.0;
  double mean_abs_qd = 0.0;
};

// Evaluates both policies with zero command at the deploy gain (and at the
// train gain as a sanity arm), harness.mismatch_episodes episodes each.
std::vector<MismatchRow> run_mismatch(const nn::PolicyNet& rolldrop, const nn::PolicyNet& baseline,
                                      const ExperimentConfig& cfg, std::uint64_t seed);
void write_mismatch_csv(const std::filesystem::path& path, const std::vector<MismatchRow>& rows);

struct SeedCurve {
  std::string variant;
  std::uint64_t seed = 0;
  std::vector<double> rewards;  // per iteration
  double final_reward = 0.0;    // mean over the last 10%
};

struct MultiSeedReport {
  std::vector<SeedCurve> curves;
  // Per variant: cross-seed mean/std per iteration and of the final reward.
  struct Band {
    std::string variant;
    std::vector<double> mean, std;
    double final_mean = 0.0, final_std = 0.0;
  };
  std::vector<Band> bands;
};

MultiSeedReport summarize_seeds(const std::vector<SeedCurve>& curves);

// Trains baseline (p = 0) and Roll-Drop (harness.multi_seed_rolldrop_p) on each seed.
MultiSeedReport multi_seed_report(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                  const std::filesystem::path& out_dir, bool verbose = false);
// variant,iteration,mean,std and variant,seed,final_reward
void write_multi_seed_csv(const std::filesystem::path& dir, const MultiSeedReport& report);

// Mean of x over its last ceil(10%) entries.
double tail_mean(const std::vector<double>& x);

}  // namespace rolldrop::harness
