#include "rolldrop/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "rolldrop/checkpoint.hpp"
#include "rolldrop/csv.hpp"
#include "rolldrop/errors.hpp"
#include "rolldrop/manifest.hpp"

namespace rolldrop {

std::vector<std::string> train_record_header() {
  std::vector<std::string> h = {"iteration", "mean_reward"};
  for (const char* n : walker::kRewardTermNames) h.push_back(std::string("r_") + n);
  for (const char* n : {"mean_sigma", "min_sigma", "drop_events", "surrogate_loss", "value_loss", "entropy",
                        "approx_kl", "clip_fraction", "grad_norm", "episodes", "falls", "numerical_failures",
                        "mean_vx_error", "aborted"})
    h.push_back(n);
  return h;
}

std::vector<std::string> train_record_cells(const TrainRecord& r) {
  std::vector<std::string> c = {std::to_string(r.iteration), format_double(r.mean_reward)};
  for (double v : r.term_means) c.push_back(format_double(v));
  c.push_back(format_double(r.mean_sigma));
  c.push_back(format_double(r.min_sigma));
  c.push_back(std::to_string(r.drop_events));
  c.push_back(format_double(r.surrogate_loss));
  c.push_back(format_double(r.value_loss));
  c.push_back(format_double(r.entropy));
  c.push_back(format_double(r.approx_kl));
  c.push_back(format_double(r.clip_fraction));
  c.push_back(format_double(r.grad_norm));
  c.push_back(std::to_string(r.episodes));
  c.push_back(std::to_string(r.falls));
  c.push_back(std::to_string(r.numerical_failures));
  c.push_back(format_double(r.mean_vx_error));
  c.push_back(r.aborted ? "1" : "0");
  return c;
}

std::vector<TrainRecord> read_train_records(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  t.require_columns(train_record_header());
  const auto col = [&](const std::string& n) { return t.column(n); };
  const auto it = col("iteration"), mr = col("mean_reward"), ms = col("mean_sigma"), mn = col("min_sigma"),
             de = col("drop_events"), sl = col("surrogate_loss"), vl = col("value_loss"), en = col("entropy"),
             kl = col("approx_kl"), cf = col("clip_fraction"), gn = col("grad_norm"), ep = col("episodes"),
             fa = col("falls"), nf = col("numerical_failures"), vx = col("mean_vx_error"), ab = col("aborted");
  std::vector<std::vector<double>> terms;
  for (const char* n : walker::kRewardTermNames) terms.push_back(col(std::string("r_") + n));
  std::vector<TrainRecord> out(t.rows.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    TrainRecord& r = out[i];
    r.iteration = static_cast<std::size_t>(it[i]);
    r.mean_reward = mr[i];
    for (std::size_t k = 0; k < walker::kRewardTerms; ++k) r.term_means[k] = terms[k][i];
    r.mean_sigma = ms[i];
    r.min_sigma = mn[i];
    r.drop_events = static_cast<std::size_t>(de[i]);
    r.surrogate_loss = sl[i];
    r.value_loss = vl[i];
    r.entropy = en[i];
    r.approx_kl = kl[i];
    r.clip_fraction = cf[i];
    r.grad_norm = gn[i];
    r.episodes = static_cast<std::size_t>(ep[i]);
    r.falls = static_cast<std::size_t>(fa[i]);
    r.numerical_failures = static_cast<std::size_t>(nf[i]);
    r.mean_vx_error = vx[i];
    r.aborted = ab[i] != 0.0;
  }
  return out;
}

namespace {

void fill_sigma(TrainRecord& r, const nn::PolicyNet& policy) {
  double sum = 0.0, lo = INFINITY;
  for (double ls : policy.log_std) {
    const double s = std::exp(ls);
    sum += s;
    lo = std::min(lo, s);
  }
  r.mean_sigma = sum / static_cast<double>(policy.log_std.size());
  r.min_sigma = lo;
}

}  // namespace

TrainRecord summarize_batch(const rollout::RolloutBatch& b, const nn::PolicyNet& policy) {
  TrainRecord r;
  const std::size_t n = b.size();
  double reward = 0.0, vx_err = 0.0;
  std::array<double, walker::kRewardTerms> terms{};
  for (std::size_t i = 0; i < n; ++i) {
    reward += b.raw_rewards[i];
    for (std::size_t k = 0; k < walker::kRewardTerms; ++k) terms[k] += b.terms[i * walker::kRewardTerms + k];
    vx_err += std::abs(b.base_vx[i] - b.cmd_vx[i]);
    if (b.dones[i]) {
      ++r.episodes;
      const auto reason = static_cast<walker::DoneReason>(b.reasons[i]);
      if (walker::is_fall(reason)) ++r.falls;
      if (reason == walker::DoneReason::NumericalFailure) ++r.numerical_failures;
    }
  }
  const double dn = n > 0 ? static_cast<double>(n) : 1.0;
  r.mean_reward = reward / dn;
  for (std::size_t k = 0; k < walker::kRewardTerms; ++k) r.term_means[k] = terms[k] / dn;
  r.mean_vx_error = vx_err / dn;
  r.drop_events = b.drop_events.size();
  fill_sigma(r, policy);
  return r;
}

std::string checkpoint_name(const std::string& kind, std::size_t iteration) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%06zu.bin", kind.c_str(), iteration);
  return buf;
}

Terrain training_terrain(const ExperimentConfig& cfg, std::uint64_t seed) {
  return generate_terrain(cfg.env.terrain, seed);
}

TrainResult train(const ExperimentConfig& cfg, std::uint64_t seed, const TrainOptions& opts) {
  validate(cfg);
  const std::size_t iterations = opts.iterations.value_or(cfg.ppo.total_iterations);
  const bool files = !opts.out_dir.empty();
  const auto& dir = opts.out_dir;

  if (files) {
    std::filesystem::create_directories(dir / "checkpoints");
    ExperimentConfig snapshot = cfg;
    snapshot.ppo.total_iterations = iterations;
    snapshot.run.seed = seed;
    Manifest m = make_manifest(snapshot, seed, opts.command);
    m.outputs = {{"train_record", "train_record.csv"},
                 {"timing", "timing.csv"},
                 {"drop_events", "drop_events.csv"},
                 {"checkpoints", "checkpoints"},
                 {"policy", "policy.bin"},
                 {"value", "value.bin"}};
    write_manifest(dir / "manifest.json", m);
  }

  nn::NetSpec spec = cfg.net;
  spec.obs_size = walker::kObsSize;
  spec.action_size = walker::kJoints;
  TrainResult result;
  result.learner = ppo::make_learner(spec, seed);
  ppo::Learner& learner = result.learner;
  rollout::VecEnv envs(cfg.env, training_terrain(cfg, seed), seed, cfg.ppo.num_envs);

  std::optional<CsvWriter> record_csv, timing_csv;
  if (files) {
    record_csv.emplace(dir / "train_record.csv", train_record_header());
    timing_csv.emplace(dir / "timing.csv", std::vector<std::string>{"iteration", "collect_s", "update_s"});
    rollout::write_drop_events(dir / "drop_events.csv", {});
  }

  rollout::CollectOptions copts;
  copts.gamma = cfg.ppo.gamma;
  std::size_t aborted_in_row = 0;
  using clock = std::chrono::steady_clock;
  for (std::size_t it = 0; it < iterations; ++it) {
    const auto t0 = clock::now();
    copts.iteration = it;
    const rollout::RolloutBatch batch =
        rollout::collect(learner.policy, learner.value, envs, cfg.ppo.steps_per_env, copts);
    const auto t1 = clock::now();
    TrainRecord rec = summarize_batch(batch, learner.policy);
    const ppo::Dataset data = ppo::make_dataset(batch, cfg.ppo.gamma, cfg.ppo.lambda, cfg.ppo.normalize_advantages);
    const ppo::UpdateStats st = ppo::update(learner, data, cfg.ppo);
    const auto t2 = clock::now();

    rec.iteration = it;
    rec.surrogate_loss = st.loss.surrogate;
    rec.value_loss = st.loss.value;
    rec.entropy = st.loss.entropy;
    rec.approx_kl = st.loss.approx_kl;
    rec.clip_fraction = st.loss.clip_fraction;
    rec.grad_norm = st.grad_norm;
    rec.aborted = st.aborted;
    fill_sigma(rec, learner.policy);
    result.records.push_back(rec);

    if (files) {
      record_csv->row_cells(train_record_cells(rec));
      record_csv->flush();
      timing_csv->row({static_cast<double>(it), std::chrono::duration<double>(t1 - t0).count(),
                       std::chrono::duration<double>(t2 - t1).count()});
      timing_csv->flush();
      rollout::write_drop_events(dir / "drop_events.csv", batch.drop_events, true);
      if ((it + 1) % cfg.run.checkpoint_every == 0) {
        save_net(dir / "checkpoints" / checkpoint_name("policy", it + 1), learner.policy);
        save_net(dir / "checkpoints" / checkpoint_name("value", it + 1), learner.value);
      }
      if (opts.save_batches) {
        char name[64];
        std::snprintf(name, sizeof name, "batch_%06zu.bin", it);
        rollout::save_batch(dir / "batches" / name, batch);
      }
    }
    if (opts.verbose) {
      std::cerr << "iter " << it << " reward " << rec.mean_reward << " sigma " << rec.mean_sigma << " falls "
                << rec.falls << " drops " << rec.drop_events << " vx_err " << rec.mean_vx_error << " ("
                << std::chrono::duration<double>(t2 - t0).count() << " s)\n";
    }
    if (opts.on_iteration) opts.on_iteration(it, batch, rec);

    aborted_in_row = st.aborted ? aborted_in_row + 1 : 0;
    if (aborted_in_row >= cfg.run.abort_after) {
      result.terminated = true;
      break;
    }
  }
  if (files) {
    save_net(dir / "policy.bin", learner.policy);
    save_net(dir / "value.bin", learner.value);
  }
  return result;
}

}  // namespace rolldrop
