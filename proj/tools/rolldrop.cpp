#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <omp.h>

#include <CLI11.hpp>

#include "rolldrop/analysis.hpp"
#include "rolldrop/checkpoint.hpp"
#include "rolldrop/config.hpp"
#include "rolldrop/csv.hpp"
#include "rolldrop/harness.hpp"
#include "rolldrop/manifest.hpp"
#include "rolldrop/svg.hpp"
#include "rolldrop/trainer.hpp"

namespace fs = std::filesystem;
using namespace rolldrop;

namespace {

ExperimentConfig config_or_preset(const std::string& path) {
  return path.empty() ? preset_config("desk") : load_config(path);
}

void print_paths(const std::vector<fs::path>& paths) {
  for (const auto& p : paths) std::cout << "wrote " << p.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Roll-Drop experiments on a planar walker"};
  app.set_version_flag("--version", version_string());
  int threads = 0;
  app.add_option("--threads", threads, "Cap on OpenMP threads (default: ROLLDROP_THREADS or all cores)")
      ->check(CLI::NonNegativeNumber);
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "Train a PPO policy and write a run directory");
  std::string train_config, train_out, train_manifest;
  std::uint64_t train_seed = 0;
  std::size_t train_iters = 0;
  bool train_batches = false, train_quiet = false;
  train_cmd->add_option("--config", train_config, "Experiment config JSON (default: desk preset)");
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Master seed (default: run.seed from the config)");
  train_cmd->add_option("--out", train_out, "Run directory")->required();
  train_cmd->add_option("--manifest", train_manifest, "Re-run the config and seed stored in a manifest.json")
      ->excludes("--config")
      ->excludes(seed_opt);
  train_cmd->add_option("--iterations", train_iters, "Override ppo.total_iterations");
  train_cmd->add_flag("--save-batches", train_batches, "Also dump every rollout batch to batches/");
  train_cmd->add_flag("--quiet", train_quiet, "No per-iteration log on stderr");

  // tune-dropout
  auto* tune_cmd = app.add_subcommand("tune-dropout", "Pick the largest rolldrop_p that trains stably");
  std::string tune_config, tune_out = "tune";
  std::uint64_t tune_seed = 0;
  bool tune_quiet = false;
  tune_cmd->add_option("--config", tune_config, "Experiment config JSON (default: desk preset)");
  auto* tune_seed_opt = tune_cmd->add_option("--seed", tune_seed, "Master seed (default: run.seed)");
  tune_cmd->add_option("--out", tune_out, "Output directory (tune.csv and one run per candidate)");
  tune_cmd->add_flag("--quiet", tune_quiet, "No per-iteration log on stderr");

  // eval-noise
  auto* noise_cmd = app.add_subcommand("eval-noise", "Success rate of a policy across observation-noise levels");
  std::string noise_policy, noise_spec, noise_out = "sweep.csv", noise_config;
  noise_cmd->add_option("--policy", noise_policy, "Policy checkpoint")->required()->check(CLI::ExistingFile);
  noise_cmd->add_option("--spec", noise_spec, "Sweep spec JSON (levels, runs_per_level, terrain, command, ...)");
  noise_cmd->add_option("--out", noise_out, "Per-level CSV; <stem>_runs.csv and <stem>.svg go next to it");
  noise_cmd->add_option("--config", noise_config, "Experiment config for the walker (default: desk preset)");

  // eval-mismatch
  auto* mm_cmd = app.add_subcommand("eval-mismatch", "Zero-command standing under a lowered deploy Kp");
  std::string mm_rolldrop, mm_baseline, mm_config, mm_out = "mismatch.csv";
  std::uint64_t mm_seed = 0;
  mm_cmd->add_option("--rolldrop", mm_rolldrop, "Roll-Drop policy checkpoint")->required()->check(CLI::ExistingFile);
  mm_cmd->add_option("--baseline", mm_baseline, "Baseline policy checkpoint")->required()->check(CLI::ExistingFile);
  mm_cmd->add_option("--config", mm_config, "Experiment config (harness.mismatch_* keys)");
  auto* mm_seed_opt = mm_cmd->add_option("--seed", mm_seed, "Evaluation seed (default: run.seed)");
  mm_cmd->add_option("--out", mm_out, "Output CSV");

  // multi-seed
  auto* ms_cmd = app.add_subcommand("multi-seed", "Train baseline and Roll-Drop on several seeds");
  std::string ms_config, ms_out = "multi_seed";
  std::size_t ms_seeds = 5;
  bool ms_quiet = false;
  ms_cmd->add_option("--config", ms_config, "Experiment config JSON (default: desk preset)");
  ms_cmd->add_option("--seeds", ms_seeds, "Number of seeds, starting at run.seed")->check(CLI::PositiveNumber);
  ms_cmd->add_option("--out", ms_out, "Output directory");
  ms_cmd->add_flag("--quiet", ms_quiet, "No per-iteration log on stderr");

  // analyze
  auto* an_cmd = app.add_subcommand("analyze", "Distributions and plots for a training run");
  std::string an_run, an_channels, an_out;
  std::size_t an_iters = 0;
  an_cmd->add_option("--run", an_run, "Run directory written by train")->required()->check(CLI::ExistingDirectory);
  an_cmd->add_option("--channels", an_channels, "Comma list of q0..q3, qd0..qd3, a0..a3, reward");
  an_cmd->add_option("--out", an_out, "Output directory")->required();
  an_cmd->add_option("--iterations", an_iters, "Iterations to record (default: analysis.iterations)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    // bad usage: say what went wrong, then show the command list
    const int code = app.exit(e);
    std::cerr << app.help();
    return code;
  }

  if (threads == 0)
    if (const char* env = std::getenv("ROLLDROP_THREADS")) threads = std::atoi(env);
  if (threads > 0) omp_set_num_threads(threads);

  try {
    if (*train_cmd) {
      ExperimentConfig cfg;
      std::uint64_t seed = 0;
      if (!train_manifest.empty()) {
        const Manifest m = read_manifest(train_manifest);
        cfg = m.config;
        seed = m.seed;
      } else {
        cfg = config_or_preset(train_config);
        seed = *seed_opt ? train_seed : cfg.run.seed;
      }
      TrainOptions o;
      o.out_dir = train_out;
      if (train_iters > 0) o.iterations = train_iters;
      o.save_batches = train_batches;
      o.verbose = !train_quiet;
      const TrainResult r = train(cfg, seed, o);
      std::cout << "trained " << r.records.size() << " iterations into " << train_out << "\n";
      if (r.terminated) {
        std::cerr << "training stopped after repeated non-finite updates\n";
        return 3;
      }
    } else if (*tune_cmd) {
      const ExperimentConfig cfg = config_or_preset(tune_config);
      const std::uint64_t seed = *tune_seed_opt ? tune_seed : cfg.run.seed;
      fs::create_directories(tune_out);
      const auto report = harness::tune_dropout(cfg, seed, tune_out, !tune_quiet);
      harness::write_tune_csv(fs::path(tune_out) / "tune.csv", report);
      if (report.chosen)
        std::cout << "chosen rolldrop_p " << format_double(*report.chosen) << "\n";
      else
        std::cout << "no candidate was stable\n";
    } else if (*noise_cmd) {
      const ExperimentConfig cfg = config_or_preset(noise_config);
      harness::NoiseSweepSpec spec;
      spec.success_distance = cfg.harness.success_distance;
      spec.rolldrop = cfg.harness.eval_rolldrop;
      spec.stochastic = cfg.harness.eval_stochastic;
      spec.seed = cfg.run.seed;
      if (!noise_spec.empty()) spec = harness::load_sweep_spec(noise_spec);
      const nn::PolicyNet policy = load_policy(noise_policy);
      const auto result = harness::run_noise_sweep(policy, cfg.env, spec);
      const fs::path out(noise_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      harness::write_sweep_csv(out, result);
      const fs::path runs = out.parent_path() / (out.stem().string() + "_runs.csv");
      harness::write_sweep_runs_csv(runs, result, spec);
      for (const auto& l : result.levels)
        std::cout << "n=" << format_double(l.level) << " success " << l.success_rate << "\n";
      print_paths({out, runs});
      print_paths(svg::emit_plots(out, out.parent_path().empty() ? fs::path(".") : out.parent_path()));
    } else if (*mm_cmd) {
      const ExperimentConfig cfg = config_or_preset(mm_config);
      const std::uint64_t seed = *mm_seed_opt ? mm_seed : cfg.run.seed;
      const auto rows = harness::run_mismatch(load_policy(mm_rolldrop), load_policy(mm_baseline), cfg, seed);
      const fs::path out(mm_out);
      if (out.has_parent_path()) fs::create_directories(out.parent_path());
      harness::write_mismatch_csv(out, rows);
      for (const auto& r : rows)
        std::cout << r.policy << " kp=" << r.kp << " fall_rate " << r.fall_rate << " mean|qd| " << r.mean_abs_qd
                  << "\n";
    } else if (*ms_cmd) {
      const ExperimentConfig cfg = config_or_preset(ms_config);
      std::vector<std::uint64_t> seeds;
      for (std::size_t i = 0; i < ms_seeds; ++i) seeds.push_back(cfg.run.seed + i);
      fs::create_directories(ms_out);
      const auto report = harness::multi_seed_report(cfg, seeds, ms_out, !ms_quiet);
      harness::write_multi_seed_csv(ms_out, report);
      for (const auto& b : report.bands)
        std::cout << b.variant << " final " << b.final_mean << " +/- " << b.final_std << "\n";
      print_paths(svg::emit_plots(fs::path(ms_out) / "multi_seed_curves.csv", ms_out));
    } else if (*an_cmd) {
      const fs::path run(an_run), out(an_out);
      const Manifest m = read_manifest(run / "manifest.json");
      const auto channels = analysis::parse_channels(an_channels, m.config.analysis);
      const std::size_t iters = an_iters > 0 ? an_iters : m.config.analysis.iterations;
      fs::create_directories(out);
      analysis::DistributionRecorder rec(channels, m.config.analysis.bins, iters);
      TrainOptions o;
      o.iterations = iters;
      o.on_iteration = [&](std::size_t it, const rollout::RolloutBatch& b, const TrainRecord&) { rec.record(it, b); };
      train(m.config, m.seed, o);
      rec.write(out);
      print_paths(svg::emit_plots(out / "distributions_hist.csv", out));
      print_paths(svg::emit_plots(out / "distributions_mean.csv", out));
      if (fs::exists(run / "train_record.csv")) print_paths(svg::emit_plots(run / "train_record.csv", out));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
