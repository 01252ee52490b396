#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rolldrop/config.hpp"
#include "rolldrop/rollout.hpp"

namespace rolldrop::analysis {

enum class ChannelKind { JointPos, JointVel, Action, Reward };

// q0..q3 (rad), qd0..qd3 (rad/s), a0..a3 (policy output), reward (unscaled total).
struct Channel {
  std::string name;
  ChannelKind kind = ChannelKind::JointPos;
  std::size_t index = 0;
  double lo = 0.0, hi = 0.0;  // histogram range
};

Channel parse_channel(const std::string& name, const AnalysisConfig& cfg);
// Comma-separated list; empty -> cfg.channels.
std::vector<Channel> parse_channels(const std::string& spec, const AnalysisConfig& cfg);

// Fixed-bin histogram. Samples outside [lo, hi) land in the end bins;
// non-finite samples are counted apart, so sum(counts) + nonfinite = samples.
class Histogram {
 public:
  Histogram() = default;
  Histogram(double lo, double hi, std::size_t bins);
  void add(double x);
  const std::vector<double>& edges() const { return edges_; }
  const std::vector<std::uint64_t>& counts() const { return counts_; }
  std::uint64_t samples() const { return samples_; }
  std::uint64_t nonfinite() const { return nonfinite_; }
  bool operator==(const Histogram&) const = default;

 private:
  std::vector<double> edges_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t samples_ = 0;
  std::uint64_t nonfinite_ = 0;
};

// Total variation distance between the normalised bin masses.
double total_variation(const Histogram& a, const Histogram& b);

struct DistributionRecord {
  Channel channel;
  std::size_t first_iteration = 0;
  std::size_t iterations = 0;
  Histogram hist;
  std::vector<double> running_mean;  // per iteration, over all envs and steps
};

class DistributionRecorder {
 public:
  DistributionRecorder(std::vector<Channel> channels, std::size_t bins, std::size_t max_iterations);
  // Iterations past max_iterations are ignored.
  void record(std::size_t iteration, const rollout::RolloutBatch& batch);
  const std::vector<DistributionRecord>& records() const { return records_; }
  // distributions_hist.csv: channel,bin,lo,hi,count
  // distributions_mean.csv: iteration,<channel>...
  void write(const std::filesystem::path& dir) const;

 private:
  std::size_t max_iterations_;
  std::vector<DistributionRecord> records_;
};

double channel_value(const rollout::RolloutBatch& b, const Channel& c, std::size_t i);

// Replays training from cfg/seed for `iterations` iterations and streams the
// channels into histograms and running means.
std::vector<DistributionRecord> record_distributions(const ExperimentConfig& cfg, std::uint64_t seed,
                                                     const std::vector<Channel>& channels, std::size_t iterations);

}  // namespace rolldrop::analysis
