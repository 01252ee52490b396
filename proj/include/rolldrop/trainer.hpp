#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rolldrop/config.hpp"
#include "rolldrop/ppo.hpp"
#include "rolldrop/rollout.hpp"
#include "rolldrop/walker.hpp"

namespace rolldrop {

// One row of train_record.csv. Everything here is a deterministic function of
// the manifest; wall-clock time goes to timing.csv instead.
struct TrainRecord {
  std::size_t iteration = 0;
  double mean_reward = 0.0;  // unscaled reward total, mean over the batch
  std::array<double, walker::kRewardTerms> term_means{};
  double mean_sigma = 0.0;
  double min_sigma = 0.0;
  std::size_t drop_events = 0;
  double surrogate_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  std::size_t episodes = 0;  // episodes ended inside the batch
  std::size_t falls = 0;
  std::size_t numerical_failures = 0;
  double mean_vx_error = 0.0;  // mean |vx - vx*| over the batch
  bool aborted = false;

  bool operator==(const TrainRecord&) const = default;
};

std::vector<std::string> train_record_header();
std::vector<std::string> train_record_cells(const TrainRecord& r);
std::vector<TrainRecord> read_train_records(const std::filesystem::path& path);

TrainRecord summarize_batch(const rollout::RolloutBatch& batch, const nn::PolicyNet& policy);

struct TrainOptions {
  // Empty: nothing is written to disk.
  std::filesystem::path out_dir;
  // Overrides cfg.ppo.total_iterations when set.
  std::optional<std::size_t> iterations;
  bool save_batches = false;  // batches/batch_<iter>.bin
  bool verbose = false;
  // Called after every iteration with the collected batch and its record.
  std::function<void(std::size_t, const rollout::RolloutBatch&, const TrainRecord&)> on_iteration;
  std::string command = "train";
};

struct TrainResult {
  std::vector<TrainRecord> records;
  ppo::Learner learner;
  bool terminated = false;  // stopped on repeated numerical failure
};

// Writes manifest.json first, then per iteration appends to train_record.csv,
// timing.csv and drop_events.csv, and saves checkpoints every
// run.checkpoint_every iterations plus policy.bin / value.bin at the end.
TrainResult train(const ExperimentConfig& cfg, std::uint64_t seed, const TrainOptions& opts = {});

std::string checkpoint_name(const std::string& kind, std::size_t iteration);

// Training terrain for a seed (flat unless the config asks for rough).
Terrain training_terrain(const ExperimentConfig& cfg, std::uint64_t seed);

}  // namespace rolldrop
