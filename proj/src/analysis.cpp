#include "rolldrop/analysis.hpp"

#include <cctype>
#include <cmath>
#include <sstream>

#include "rolldrop/csv.hpp"
#include "rolldrop/errors.hpp"
#include "rolldrop/trainer.hpp"

namespace rolldrop::analysis {

Channel parse_channel(const std::string& name, const AnalysisConfig& cfg) {
  Channel c;
  c.name = name;
  if (name == "reward") {
    c.kind = ChannelKind::Reward;
    c.lo = -100.0;
    c.hi = 50.0;
    return c;
  }
  std::string prefix;
  std::size_t pos = 0;
  while (pos < name.size() && !std::isdigit(static_cast<unsigned char>(name[pos]))) ++pos;
  prefix = name.substr(0, pos);
  const std::string digits = name.substr(pos);
  if (digits.size() != 1 || digits[0] < '0' || digits[0] > '3')
    throw ConfigError("unknown channel '" + name + "' (expected q0-q3, qd0-qd3, a0-a3 or reward)");
  c.index = static_cast<std::size_t>(digits[0] - '0');
  if (prefix == "q") {
    c.kind = ChannelKind::JointPos;
    c.lo = -cfg.joint_range;
    c.hi = cfg.joint_range;
  } else if (prefix == "qd") {
    c.kind = ChannelKind::JointVel;
    c.lo = -cfg.velocity_range;
    c.hi = cfg.velocity_range;
  } else if (prefix == "a") {
    c.kind = ChannelKind::Action;
    c.lo = -cfg.action_range;
    c.hi = cfg.action_range;
  } else {
    throw ConfigError("unknown channel '" + name + "' (expected q0-q3, qd0-qd3, a0-a3 or reward)");
  }
  return c;
}

std::vector<Channel> parse_channels(const std::string& spec, const AnalysisConfig& cfg) {
  std::vector<Channel> out;
  if (spec.empty()) {
    for (const auto& n : cfg.channels) out.push_back(parse_channel(n, cfg));
    return out;
  }
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(parse_channel(item, cfg));
  if (out.empty()) throw ConfigError("no channels selected");
  return out;
}

Histogram::Histogram(double lo, double hi, std::size_t bins) : counts_(bins, 0) {
  if (bins == 0 || !(hi > lo)) throw ContractViolation("histogram needs bins > 0 and hi > lo");
  edges_.resize(bins + 1);
  const double w = (hi - lo) / static_cast<double>(bins);
  for (std::size_t i = 0; i <= bins; ++i) edges_[i] = lo + w * static_cast<double>(i);
  edges_.back() = hi;
}

void Histogram::add(double x) {
  ++samples_;
  if (!std::isfinite(x)) {
    ++nonfinite_;
    return;
  }
  const std::size_t bins = counts_.size();
  const double lo = edges_.front(), hi = edges_.back();
  double u = (x - lo) / (hi - lo) * static_cast<double>(bins);
  if (u < 0.0) u = 0.0;
  auto i = static_cast<std::size_t>(u);
  if (i >= bins) i = bins - 1;
  ++counts_[i];
}

double total_variation(const Histogram& a, const Histogram& b) {
  if (a.counts().size() != b.counts().size()) throw ContractViolation("histograms differ in bin count");
  double na = 0.0, nb = 0.0;
  for (auto c : a.counts()) na += static_cast<double>(c);
  for (auto c : b.counts()) nb += static_cast<double>(c);
  if (na == 0.0 || nb == 0.0) return na == nb ? 0.0 : 1.0;
  double tv = 0.0;
  for (std::size_t i = 0; i < a.counts().size(); ++i)
    tv += std::abs(static_cast<double>(a.counts()[i]) / na - static_cast<double>(b.counts()[i]) / nb);
  return 0.5 * tv;
}

double channel_value(const rollout::RolloutBatch& b, const Channel& c, std::size_t i) {
  switch (c.kind) {
    case ChannelKind::JointPos: return b.joint_pos[i * walker::kJoints + c.index];
    case ChannelKind::JointVel: return b.joint_vel[i * walker::kJoints + c.index];
    case ChannelKind::Action: return b.actions[i * b.action_size + c.index];
    case ChannelKind::Reward: return b.raw_rewards[i];
  }
  return 0.0;
}

DistributionRecorder::DistributionRecorder(std::vector<Channel> channels, std::size_t bins,
                                           std::size_t max_iterations)
    : max_iterations_(max_iterations) {
  for (auto& c : channels) {
    DistributionRecord r;
    r.hist = Histogram(c.lo, c.hi, bins);
    r.channel = std::move(c);
    records_.push_back(std::move(r));
  }
}

void DistributionRecorder::record(std::size_t iteration, const rollout::RolloutBatch& b) {
  if (iteration >= max_iterations_) return;
  const std::size_t n = b.size();
  for (auto& r : records_) {
    if (r.iterations == 0) r.first_iteration = iteration;
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = channel_value(b, r.channel, i);
      r.hist.add(v);
      sum += v;
    }
    r.running_mean.push_back(n ? sum / static_cast<double>(n) : 0.0);
    ++r.iterations;
  }
}

void DistributionRecorder::write(const std::filesystem::path& dir) const {
  {
    CsvWriter out(dir / "distributions_hist.csv", {"channel", "bin", "lo", "hi", "count"});
    for (const auto& r : records_) {
      const auto& e = r.hist.edges();
      for (std::size_t i = 0; i < r.hist.counts().size(); ++i)
        out.row_cells({r.channel.name, std::to_string(i), format_double(e[i]), format_double(e[i + 1]),
                       std::to_string(r.hist.counts()[i])});
    }
  }
  std::vector<std::string> header{"iteration"};
  for (const auto& r : records_) header.push_back(r.channel.name);
  CsvWriter out(dir / "distributions_mean.csv", header);
  const std::size_t rows = records_.empty() ? 0 : records_.front().running_mean.size();
  for (std::size_t i = 0; i < rows; ++i) {
    std::vector<double> row{static_cast<double>(records_.front().first_iteration + i)};
    for (const auto& r : records_) row.push_back(r.running_mean[i]);
    out.row(row);
  }
}

std::vector<DistributionRecord> record_distributions(const ExperimentConfig& cfg, std::uint64_t seed,
                                                     const std::vector<Channel>& channels, std::size_t iterations) {
  DistributionRecorder rec(channels, cfg.analysis.bins, iterations);
  TrainOptions o;
  o.iterations = iterations;
  o.on_iteration = [&](std::size_t it, const rollout::RolloutBatch& b, const TrainRecord&) { rec.record(it, b); };
  train(cfg, seed, o);
  return rec.records();
}

}  // namespace rolldrop::analysis
