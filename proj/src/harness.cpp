#include "rolldrop/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <sstream>

#include "rolldrop/csv.hpp"
#include "rolldrop/errors.hpp"

namespace rolldrop::harness {

using nlohmann::json;

void validate(const NoiseSweepSpec& spec) {
  if (spec.levels.empty()) throw ConfigError("sweep: at least one noise level required");
  for (double n : spec.levels) validate_noise_level(n);
  if (spec.runs_per_level == 0) throw ConfigError("sweep: runs_per_level must be >= 1");
  if (!(spec.terrain.amplitude >= 0.0) || !(spec.terrain.cell_size > 0.0) || !(spec.terrain.length > 0.0))
    throw ConfigError("sweep: invalid terrain");
}

json to_json(const NoiseSweepSpec& s) {
  return json{{"levels", s.levels},
              {"runs_per_level", s.runs_per_level},
              {"terrain",
               {{"kind", to_string(s.terrain.kind)},
                {"amplitude", s.terrain.amplitude},
                {"cell_size", s.terrain.cell_size},
                {"x_min", s.terrain.x_min},
                {"length", s.terrain.length}}},
              {"command", {{"vx", s.command.vx}, {"pitch_rate", s.command.pitch_rate}}},
              {"policy", s.policy},
              {"seed", s.seed},
              {"success_distance", s.success_distance},
              {"rolldrop", s.rolldrop},
              {"stochastic", s.stochastic}};
}

NoiseSweepSpec sweep_spec_from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("sweep spec: expected a JSON object");
  const json defaults = to_json(NoiseSweepSpec{});
  for (const auto& [k, v] : doc.items()) {
    if (!defaults.contains(k)) throw ConfigError("sweep spec: unknown key '" + k + "'");
    if (defaults[k].is_object()) {
      if (!v.is_object()) throw ConfigError("sweep spec: '" + k + "' must be an object");
      for (const auto& [k2, v2] : v.items()) {
        (void)v2;
        if (!defaults[k].contains(k2)) throw ConfigError("sweep spec: unknown key '" + k + "." + k2 + "'");
      }
    }
  }
  NoiseSweepSpec s;
  try {
    if (doc.contains("levels")) doc["levels"].get_to(s.levels);
    if (doc.contains("runs_per_level")) doc["runs_per_level"].get_to(s.runs_per_level);
    if (doc.contains("terrain")) {
      const json& t = doc["terrain"];
      if (t.contains("kind")) s.terrain.kind = terrain_kind_from_string(t["kind"].get<std::string>());
      if (t.contains("amplitude")) t["amplitude"].get_to(s.terrain.amplitude);
      if (t.contains("cell_size")) t["cell_size"].get_to(s.terrain.cell_size);
      if (t.contains("x_min")) t["x_min"].get_to(s.terrain.x_min);
      if (t.contains("length")) t["length"].get_to(s.terrain.length);
    }
    if (doc.contains("command")) {
      const json& c = doc["command"];
      if (c.contains("vx")) c["vx"].get_to(s.command.vx);
      if (c.contains("pitch_rate")) c["pitch_rate"].get_to(s.command.pitch_rate);
    }
    if (doc.contains("policy")) doc["policy"].get_to(s.policy);
    if (doc.contains("seed")) doc["seed"].get_to(s.seed);
    if (doc.contains("success_distance")) doc["success_distance"].get_to(s.success_distance);
    if (doc.contains("rolldrop")) doc["rolldrop"].get_to(s.rolldrop);
    if (doc.contains("stochastic")) doc["stochastic"].get_to(s.stochastic);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("sweep spec: ") + e.what());
  }
  validate(s);
  return s;
}

NoiseSweepSpec load_sweep_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open sweep spec " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return sweep_spec_from_json(json::parse(ss.str()));
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": malformed JSON: " + e.what());
  }
}

namespace {

rollout::EvalOptions sweep_options(const NoiseSweepSpec& spec, std::size_t li, std::size_t run) {
  rollout::EvalOptions o;
  o.command = spec.command;
  o.noise = spec.levels[li];
  o.success_distance = spec.success_distance;
  o.rolldrop = spec.rolldrop;
  o.stochastic = spec.stochastic;
  o.seed = spec.seed;
  o.run_id = static_cast<std::uint32_t>(run);
  o.noise_key = static_cast<std::uint64_t>(li) << 40;
  return o;
}

SweepResult aggregate(const NoiseSweepSpec& spec, std::vector<RunRecord> runs) {
  SweepResult r;
  r.levels.resize(spec.levels.size());
  for (std::size_t li = 0; li < spec.levels.size(); ++li) r.levels[li].level = spec.levels[li];
  for (const RunRecord& rr : runs) {
    LevelResult& l = r.levels[rr.level_index];
    if (rr.result.success) ++l.successes;
    else if (rr.result.fall) ++l.fall_failures;
    else ++l.distance_failures;
  }
  for (auto& l : r.levels)
    l.success_rate = static_cast<double>(l.successes) / static_cast<double>(spec.runs_per_level);
  r.runs = std::move(runs);
  return r;
}

}  // namespace

SweepResult run_noise_sweep(const nn::PolicyNet& policy, const walker::EnvConfig& env,
                            const NoiseSweepSpec& spec) {
  validate(spec);
  const Terrain terrain = generate_terrain(spec.terrain, spec.seed);
  const std::size_t total = spec.levels.size() * spec.runs_per_level;
  std::vector<RunRecord> runs(total);
#pragma omp parallel for schedule(dynamic, 1)
  for (std::ptrdiff_t sk = 0; sk < static_cast<std::ptrdiff_t>(total); ++sk) {
    const auto k = static_cast<std::size_t>(sk);
    const std::size_t li = k / spec.runs_per_level, run = k % spec.runs_per_level;
    runs[k] = {li, run, rollout::evaluate_episode(policy, env, terrain, sweep_options(spec, li, run))};
  }
  return aggregate(spec, std::move(runs));
}

SweepResult run_noise_sweep_serial(const nn::PolicyNet& policy, const walker::EnvConfig& env,
                                   const NoiseSweepSpec& spec) {
  validate(spec);
  const Terrain terrain = generate_terrain(spec.terrain, spec.seed);
  std::vector<RunRecord> runs;
  for (std::size_t li = 0; li < spec.levels.size(); ++li)
    for (std::size_t run = 0; run < spec.runs_per_level; ++run)
      runs.push_back({li, run, rollout::evaluate_episode(policy, env, terrain, sweep_options(spec, li, run))});
  return aggregate(spec, std::move(runs));
}

void write_sweep_csv(const std::filesystem::path& path, const SweepResult& r) {
  CsvWriter out(path, {"level", "runs", "successes", "fall_failures", "distance_failures", "success_rate"});
  for (const auto& l : r.levels) {
    out.row({l.level, static_cast<double>(l.successes + l.fall_failures + l.distance_failures),
             static_cast<double>(l.successes), static_cast<double>(l.fall_failures),
             static_cast<double>(l.distance_failures), l.success_rate});
  }
}

void write_sweep_runs_csv(const std::filesystem::path& path, const SweepResult& r, const NoiseSweepSpec& spec) {
  CsvWriter out(path, {"level", "run", "success", "fall", "distance_m", "steps", "reason", "spawn_x"});
  for (const auto& rr : r.runs) {
    out.row_cells({format_double(spec.levels[rr.level_index]), std::to_string(rr.run),
                   rr.result.success ? "1" : "0", rr.result.fall ? "1" : "0", format_double(rr.result.distance),
                   std::to_string(rr.result.steps), walker::to_string(rr.result.reason),
                   format_double(rr.result.spawn_x)});
  }
}

std::vector<LevelResult> read_sweep_csv(const std::filesystem::path& path) {
  const CsvTable t = read_csv(path);
  t.require_columns({"level", "successes", "fall_failures", "distance_failures", "success_rate"});
  const auto lv = t.column("level"), su = t.column("successes"), ff = t.column("fall_failures"),
             df = t.column("distance_failures"), sr = t.column("success_rate");
  std::vector<LevelResult> out(lv.size());
  for (std::size_t i = 0; i < lv.size(); ++i) {
    out[i] = {lv[i], static_cast<std::size_t>(su[i]), static_cast<std::size_t>(ff[i]),
              static_cast<std::size_t>(df[i]), sr[i]};
  }
  return out;
}

double success_auc(const std::vector<LevelResult>& levels) {
  double auc = 0.0;
  for (std::size_t i = 1; i < levels.size(); ++i)
    auc += 0.5 * (levels[i].success_rate + levels[i - 1].success_rate) * (levels[i].level - levels[i - 1].level);
  return auc;
}

double tail_mean(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  const std::size_t k = std::max<std::size_t>(1, (x.size() + 9) / 10);
  double s = 0.0;
  for (std::size_t i = x.size() - k; i < x.size(); ++i) s += x[i];
  return s / static_cast<double>(k);
}

TuneEntry summarize_run(double p, const std::vector<TrainRecord>& records) {
  std::vector<double> reward, sigma;
  for (const auto& r : records) {
    reward.push_back(r.mean_reward);
    sigma.push_back(r.mean_sigma);
  }
  TuneEntry e;
  e.p = p;
  e.final_reward = tail_mean(reward);
  e.tail_sigma = tail_mean(sigma);
  return e;
}

bool is_stable(const TuneEntry& e, const TuneEntry& reference, double reward_ratio, double sigma_margin,
               double sigma_floor) {
  const double ref = reference.final_reward;
  const double needed = ref - (1.0 - reward_ratio) * std::abs(ref);
  return e.final_reward >= needed && e.tail_sigma <= sigma_floor + sigma_margin;
}

TuneReport tune_dropout(const ExperimentConfig& cfg, std::uint64_t seed, const std::filesystem::path& out_dir,
                        bool verbose) {
  validate(cfg);
  std::vector<double> candidates = cfg.harness.tune_candidates;
  std::sort(candidates.begin(), candidates.end(), std::greater<>());
  const std::size_t iters = cfg.harness.tune_iterations ? cfg.harness.tune_iterations : cfg.ppo.total_iterations;

  auto run = [&](double p) {
    ExperimentConfig c = cfg;
    c.net.rolldrop_p = p;
    TrainOptions o;
    o.iterations = iters;
    o.verbose = verbose;
    o.command = "tune-dropout";
    if (!out_dir.empty()) o.out_dir = out_dir / ("p_" + format_double(p));
    return summarize_run(p, train(c, seed, o).records);
  };

  TuneReport report;
  report.reference = run(0.0);
  report.reference.stable = true;
  for (double p : candidates) {
    TuneEntry e = p == 0.0 ? report.reference : run(p);
    e.stable = is_stable(e, report.reference, cfg.harness.tune_reward_ratio, cfg.harness.tune_sigma_margin,
                         cfg.ppo.sigma_floor);
    report.candidates.push_back(e);
    if (e.stable && !report.chosen) report.chosen = p;
  }
  return report;
}

void write_tune_csv(const std::filesystem::path& path, const TuneReport& report) {
  CsvWriter out(path, {"p", "final_reward", "tail_sigma", "stable", "chosen"});
  const auto row = [&](const TuneEntry& e, bool chosen) {
    out.row_cells({format_double(e.p), format_double(e.final_reward), format_double(e.tail_sigma),
                   e.stable ? "1" : "0", chosen ? "1" : "0"});
  };
  row(report.reference, false);
  for (const auto& e : report.candidates) row(e, report.chosen && *report.chosen == e.p);
}

std::vector<MismatchRow> run_mismatch(const nn::PolicyNet& rolldrop, const nn::PolicyNet& baseline,
                                      const ExperimentConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  const Terrain terrain = generate_terrain(cfg.env.terrain, seed);
  const std::size_t episodes = cfg.harness.mismatch_episodes;
  std::vector<MismatchRow> rows;
  const std::pair<const char*, const nn::PolicyNet*> policies[] = {{"rolldrop", &rolldrop},
                                                                     {"baseline", &baseline}};
  for (const auto& [name, policy] : policies) {
    for (double kp : {cfg.harness.mismatch_deploy_kp, cfg.harness.mismatch_train_kp}) {
      walker::EnvConfig env = cfg.env;
      env.kp = kp;
      std::vector<rollout::EpisodeResult> res(episodes);
#pragma omp parallel for schedule(dynamic, 1)
      for (std::ptrdiff_t e = 0; e < static_cast<std::ptrdiff_t>(episodes); ++e) {
        rollout::EvalOptions o;
        o.command = {0.0, 0.0};
        o.seed = seed;
        o.run_id = static_cast<std::uint32_t>(e);
        o.success_distance = 0.0;
        res[static_cast<std::size_t>(e)] = rollout::evaluate_episode(*policy, env, terrain, o);
      }
      MismatchRow row;
      row.policy = name;
      row.kp = kp;
      row.episodes = episodes;
      for (const auto& r : res) {
        if (r.fall) ++row.falls;
        row.lin_vel_rms += r.lin_vel_rms;
        row.ang_vel_rms += r.ang_vel_rms;
        row.mean_abs_qd += r.mean_abs_qd;
      }
      const double n = static_cast<double>(episodes);
      row.fall_rate = static_cast<double>(row.falls) / n;
      row.lin_vel_rms /= n;
      row.ang_vel_rms /= n;
      row.mean_abs_qd /= n;
      rows.push_back(row);
    }
  }
  return rows;
}

void write_mismatch_csv(const std::filesystem::path& path, const std::vector<MismatchRow>& rows) {
  CsvWriter out(path, {"policy", "kp", "episodes", "falls", "fall_rate", "lin_vel_rms", "ang_vel_rms",
                       "mean_abs_qd"});
  for (const auto& r : rows) {
    out.row_cells({r.policy, format_double(r.kp), std::to_string(r.episodes), std::to_string(r.falls),
                   format_double(r.fall_rate), format_double(r.lin_vel_rms), format_double(r.ang_vel_rms),
                   format_double(r.mean_abs_qd)});
  }
}

MultiSeedReport summarize_seeds(const std::vector<SeedCurve>& curves) {
  MultiSeedReport rep;
  rep.curves = curves;
  std::vector<std::string> variants;
  for (const auto& c : curves)
    if (std::find(variants.begin(), variants.end(), c.variant) == variants.end()) variants.push_back(c.variant);
  for (const auto& v : variants) {
    MultiSeedReport::Band band;
    band.variant = v;
    std::vector<const SeedCurve*> mine;
    std::size_t len = SIZE_MAX;
    for (const auto& c : curves)
      if (c.variant == v) {
        mine.push_back(&c);
        len = std::min(len, c.rewards.size());
      }
    const double n = static_cast<double>(mine.size());
    for (std::size_t i = 0; i < len; ++i) {
      double m = 0.0, s = 0.0;
      for (const auto* c : mine) m += c->rewards[i];
      m /= n;
      for (const auto* c : mine) s += (c->rewards[i] - m) * (c->rewards[i] - m);
      band.mean.push_back(m);
      band.std.push_back(std::sqrt(s / n));
    }
    double fm = 0.0, fs = 0.0;
    for (const auto* c : mine) fm += c->final_reward;
    fm /= n;
    for (const auto* c : mine) fs += (c->final_reward - fm) * (c->final_reward - fm);
    band.final_mean = fm;
    band.final_std = std::sqrt(fs / n);
    rep.bands.push_back(std::move(band));
  }
  return rep;
}

MultiSeedReport multi_seed_report(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                  const std::filesystem::path& out_dir, bool verbose) {
  validate(cfg);
  std::vector<SeedCurve> curves;
  const std::pair<const char*, double> variants[] = {{"baseline", 0.0},
                                                     {"rolldrop", cfg.harness.multi_seed_rolldrop_p}};
  for (const auto& [name, p] : variants) {
    for (std::uint64_t seed : seeds) {
      ExperimentConfig c = cfg;
      c.net.rolldrop_p = p;
      TrainOptions o;
      o.verbose = verbose;
      o.command = "multi-seed";
      if (!out_dir.empty()) o.out_dir = out_dir / name / ("seed_" + std::to_string(seed));
      const TrainResult r = train(c, seed, o);
      SeedCurve curve;
      curve.variant = name;
      curve.seed = seed;
      for (const auto& rec : r.records) curve.rewards.push_back(rec.mean_reward);
      curve.final_reward = tail_mean(curve.rewards);
      curves.push_back(std::move(curve));
    }
  }
  return summarize_seeds(curves);
}

void write_multi_seed_csv(const std::filesystem::path& dir, const MultiSeedReport& report) {
  {
    CsvWriter out(dir / "multi_seed_curves.csv", {"variant", "iteration", "mean", "std"});
    for (const auto& b : report.bands)
      for (std::size_t i = 0; i < b.mean.size(); ++i)
        out.row_cells({b.variant, std::to_string(i), format_double(b.mean[i]), format_double(b.std[i])});
  }
  CsvWriter out(dir / "multi_seed_final.csv", {"variant", "seed", "final_reward"});
  for (const auto& c : report.curves)
    out.row_cells({c.variant, std::to_string(c.seed), format_double(c.final_reward)});
}

}  // namespace rolldrop::harness
