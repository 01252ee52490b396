#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "rolldrop/analysis.hpp"
#include "rolldrop/config.hpp"
#include "rolldrop/csv.hpp"
#include "rolldrop/errors.hpp"
#include "rolldrop/manifest.hpp"
#include "rolldrop/svg.hpp"
#include "rolldrop/trainer.hpp"
#include "test_util.hpp"

using namespace rolldrop;
using namespace rolldrop::analysis;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::filesystem::path& p, const std::string& s) { std::ofstream(p, std::ios::binary) << s; }

std::size_t count(const std::string& hay, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
  return n;
}

// Tags balance and attribute values are quoted. Enough to catch broken output.
bool well_formed(const std::string& doc) {
  std::vector<std::string> stack;
  std::size_t i = 0;
  while ((i = doc.find('<', i)) != std::string::npos) {
    const std::size_t end = doc.find('>', i);
    if (end == std::string::npos) return false;
    std::string tag = doc.substr(i + 1, end - i - 1);
    i = end + 1;
    if (tag.empty()) return false;
    if (tag[0] == '?' || tag[0] == '!') continue;
    if (count(tag, "\"") % 2 != 0) return false;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
    } else if (tag.back() != '/') {
      stack.push_back(tag.substr(0, tag.find_first_of(" \t\n")));
    }
  }
  return stack.empty();
}

struct Cmd {
  int status;
  std::string out;
};

Cmd run_cli(const std::string& args) {
  const std::string cmd = std::string(ROLLDROP_CLI_PATH) + " " + args + " 2>&1";
  FILE* p = popen(cmd.c_str(), "r");
  REQUIRE(p != nullptr);
  std::string out;
  char buf[512];
  while (std::fgets(buf, sizeof buf, p)) out += buf;
  const int st = pclose(p);
  return {WIFEXITED(st) ? WEXITSTATUS(st) : -1, out};
}

}  // namespace

TEST_CASE("histogram conserves mass") {
  Histogram h(-1.0, 1.0, 8);
  RngStream rng(1, 0, StreamId::Init);
  for (int i = 0; i < 5000; ++i) h.add(rng.normal());
  h.add(NAN);
  h.add(INFINITY);
  std::uint64_t total = 0;
  for (auto c : h.counts()) total += c;
  CHECK(total + h.nonfinite() == h.samples());
  CHECK(h.samples() == 5002);
  for (std::size_t i = 1; i < h.edges().size(); ++i) CHECK(h.edges()[i] > h.edges()[i - 1]);

  Histogram c(-2.6, 2.6, 64);
  for (int i = 0; i < 100; ++i) c.add(0.3);
  std::size_t occupied = 0;
  for (auto n : c.counts()) occupied += n > 0;
  CHECK(occupied == 1);
  CHECK(total_variation(c, c) == 0.0);
  Histogram d(-2.6, 2.6, 64);
  d.add(-1.0);
  CHECK(total_variation(c, d) == 1.0);
}

TEST_CASE("channel parsing") {
  const AnalysisConfig cfg;
  CHECK(parse_channel("q2", cfg).kind == ChannelKind::JointPos);
  CHECK(parse_channel("a3", cfg).index == 3);
  CHECK(parse_channel("reward", cfg).kind == ChannelKind::Reward);
  CHECK_THROWS_AS(parse_channel("q4", cfg), ConfigError);
  CHECK_THROWS_AS(parse_channel("z", cfg), ConfigError);
  CHECK(parse_channels("", cfg).size() == cfg.channels.size());
  CHECK(parse_channels("q0,qd1,reward", cfg).size() == 3);
}

TEST_CASE("recorded distributions") {
  ExperimentConfig cfg = test::tiny_config();
  const auto channels = parse_channels("q0,a1,reward", cfg.analysis);

  // The recorder sees the same batches the trainer summarises.
  DistributionRecorder rec(channels, cfg.analysis.bins, 3);
  std::vector<double> logged;
  TrainOptions o;
  o.iterations = 3;
  o.on_iteration = [&](std::size_t it, const rollout::RolloutBatch& b, const TrainRecord& r) {
    rec.record(it, b);
    logged.push_back(r.mean_reward);
  };
  train(cfg, 9, o);
  const auto& recs = rec.records();
  REQUIRE(recs.size() == 3);
  for (const auto& r : recs) {
    CHECK(r.hist.samples() == 3 * cfg.ppo.batch_size());
    CHECK(r.iterations == 3);
  }
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(recs[2].running_mean[i] - logged[i]) <= 1e-12);

  const auto again = record_distributions(cfg, 9, channels, 3);
  for (std::size_t c = 0; c < 3; ++c) CHECK(again[c].hist == recs[c].hist);

  SUBCASE("a dropped unit moves the histograms") {
    // Three tiny iterations only nudge the trajectories, so use fine bins.
    ExperimentConfig fine = cfg;
    fine.analysis.bins = 4096;
    const auto all = parse_channels("q0,q1,q2,q3,qd0,qd1,qd2,qd3,a0,a1,a2,a3,reward", fine.analysis);
    ExperimentConfig drop = fine;
    drop.net.rolldrop_p = 0.02;
    const auto without = record_distributions(fine, 9, all, 3);
    const auto with = record_distributions(drop, 9, all, 3);
    double tv = 0.0;
    for (std::size_t c = 0; c < all.size(); ++c) tv = std::max(tv, total_variation(with[c].hist, without[c].hist));
    CHECK(tv > 0.0);
  }

  SUBCASE("csv and plots") {
    test::TempDir dir("dist");
    rec.write(dir.path());
    const CsvTable h = read_csv(dir / "distributions_hist.csv");
    CHECK(h.rows.size() == 3 * cfg.analysis.bins);
    const auto files = svg::emit_plots(dir / "distributions_hist.csv", dir.path());
    CHECK(files.size() == 3);
    for (const auto& f : files) CHECK(well_formed(slurp(f)));
    const auto mean_files = svg::emit_plots(dir / "distributions_mean.csv", dir.path());
    REQUIRE(mean_files.size() == 1);
    CHECK(well_formed(slurp(mean_files[0])));
  }
}

TEST_CASE("svg examples") {
  test::TempDir dir("svg");
  std::string csv = "level,runs,successes,fall_failures,distance_failures,success_rate\n";
  for (int i = 0; i < 12; ++i)
    csv += std::to_string(0.05 * i) + ",100," + std::to_string(100 - 8 * i) + "," + std::to_string(8 * i) + ",0," +
           std::to_string(1.0 - 0.08 * i) + "\n";
  spit(dir / "sweep.csv", csv);
  const auto files = svg::emit_plots(dir / "sweep.csv", dir.path());
  REQUIRE(files.size() == 1);
  const std::string first = slurp(files[0]);
  CHECK(count(first, "<circle") == 12);
  CHECK(well_formed(first));

  std::filesystem::create_directories(dir / "again");
  spit(dir / "again" / "sweep.csv", csv);
  const auto files2 = svg::emit_plots(dir / "again" / "sweep.csv", dir / "again");
  CHECK(slurp(files2[0]) == first);

  spit(dir / "empty.csv", "level,runs,successes,fall_failures,distance_failures,success_rate\n");
  const auto empty = svg::emit_plots(dir / "empty.csv", dir.path());
  REQUIRE(empty.size() == 1);
  const std::string e = slurp(empty[0]);
  CHECK(well_formed(e));
  CHECK(count(e, "<circle") == 0);

  spit(dir / "bad.csv", "level,runs,successes,fall_failures,distance_failures,success_rate\n0,100,1,0,0,0.01\n0.05,100,1,0,0,half\n");
  try {
    svg::emit_plots(dir / "bad.csv", dir.path());
    FAIL("expected a parse error");
  } catch (const ParseError& err) {
    CHECK(err.line() == 3);
  }

  const std::string band = svg::line_plot({"t", "x", "y"}, {{"a", {0, 1, 2}, {1, 2, 3}, {0, 1, 2}, {2, 3, 4}}});
  CHECK(well_formed(band));
  CHECK(well_formed(svg::histogram_plot({"h", "x", "n"}, {0, 1, 2}, {3, 4})));
}

TEST_CASE("config examples") {
  const ExperimentConfig desk = preset_config("desk");
  CHECK(to_json(parse_config("{}")) == to_json(desk));
  CHECK(to_json(parse_config(R"({"ppo": {"clip_range": 0.2}})")) == to_json(desk));
  try {
    parse_config(R"({"ppo": {"cliprange": 0.2}})");
    FAIL("expected a config error");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("ppo.cliprange") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config(R"({"ppo": {"clip_range": "wide"}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"ppo": {"minibatch_size": 7}})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"net": {"rolldrop_p": 1.0}})"), ConfigError);
  CHECK_THROWS_AS(parse_config("{"), ConfigError);
  CHECK(desk.ppo.batch_size() == 25600);
  CHECK(desk.net.hidden == std::vector<std::size_t>{128, 64, 64});
  CHECK(desk.ppo.total_iterations == 1500);
  CHECK(preset_config("paper").net.hidden == std::vector<std::size_t>{512, 256, 256});

  for (const auto& name : preset_names()) {
    const nlohmann::json once = to_json(preset_config(name));
    CHECK(to_json(config_from_json(once)) == once);
  }
  ExperimentConfig odd = desk;
  odd.env.kp = 20.0;
  odd.net.rolldrop_p = 1e-4;
  odd.analysis.channels = {"reward"};
  const std::string text = dump_json(to_json(odd));
  CHECK(dump_json(to_json(parse_config(text))) == text);
}

TEST_CASE("manifest is written before the first iteration") {
  test::TempDir dir("manifest");
  TrainOptions o;
  o.out_dir = dir.path();
  o.iterations = 1;
  bool seen = false;
  o.on_iteration = [&](std::size_t, const rollout::RolloutBatch&, const TrainRecord&) {
    seen = std::filesystem::exists(dir / "manifest.json");
  };
  train(test::tiny_config(), 2, o);
  CHECK(seen);
  const Manifest m = read_manifest(dir / "manifest.json");
  CHECK(m.seed == 2);
  CHECK(m.config.ppo.total_iterations == 1);
  CHECK(m.code_version == version_string());
}

TEST_CASE("command line") {
  test::TempDir dir("cli");
  SUBCASE("version and usage") {
    const Cmd v = run_cli("--version");
    CHECK(v.status == 0);
    CHECK(v.out.find(version_string()) != std::string::npos);
    const Cmd bad = run_cli("fly");
    CHECK(bad.status != 0);
    CHECK(bad.out.find("train") != std::string::npos);
    CHECK(run_cli("train --help").status == 0);
    CHECK(run_cli("train --out x --config /nonexistent.json").status != 0);
  }
  SUBCASE("train, re-run from the manifest, analyze, evaluate") {
    spit(dir / "tiny.json", dump_json(to_json(test::tiny_config())));
    const std::string a = (dir / "a").string(), b = (dir / "b").string();
    REQUIRE(run_cli("--threads 1 train --config " + (dir / "tiny.json").string() + " --seed 7 --iterations 2 --quiet --out " + a).status == 0);
    CHECK(std::filesystem::exists(dir / "a" / "manifest.json"));
    REQUIRE(run_cli("train --manifest " + a + "/manifest.json --quiet --out " + b).status == 0);
    CHECK(slurp(dir / "a" / "train_record.csv") == slurp(dir / "b" / "train_record.csv"));
    CHECK(slurp(dir / "a" / "policy.bin") == slurp(dir / "b" / "policy.bin"));

    const Cmd an = run_cli("analyze --run " + a + " --channels q0,reward --iterations 2 --out " + (dir / "an").string());
    CHECK(an.status == 0);
    CHECK(std::filesystem::exists(dir / "an" / "distributions_hist.csv"));

    spit(dir / "spec.json", R"({"levels": [0.0, 0.3], "runs_per_level": 2})");
    const Cmd ev = run_cli("eval-noise --policy " + a + "/policy.bin --spec " + (dir / "spec.json").string() +
                           " --out " + (dir / "sweep.csv").string());
    CHECK(ev.status == 0);
    CHECK(read_csv(dir / "sweep.csv").rows.size() == 2);
    CHECK(std::filesystem::exists(dir / "sweep_runs.csv"));
    CHECK(std::filesystem::exists(dir / "sweep.svg"));

    ExperimentConfig quick = test::tiny_config();
    quick.ppo.total_iterations = 1;
    quick.harness.tune_iterations = 1;
    quick.harness.mismatch_episodes = 2;
    spit(dir / "quick.json", dump_json(to_json(quick)));
    const std::string qc = " --config " + (dir / "quick.json").string();
    const Cmd mm = run_cli("eval-mismatch --rolldrop " + a + "/policy.bin --baseline " + b + "/policy.bin" + qc +
                           " --out " + (dir / "mm.csv").string());
    CHECK(mm.status == 0);
    CHECK(read_csv(dir / "mm.csv").rows.size() == 4);
    const Cmd tune = run_cli("tune-dropout --quiet" + qc + " --out " + (dir / "tune").string());
    CHECK(tune.status == 0);
    CHECK(read_csv(dir / "tune" / "tune.csv").rows.size() == 4);
    const Cmd ms = run_cli("multi-seed --quiet --seeds 2" + qc + " --out " + (dir / "ms").string());
    CHECK(ms.status == 0);
    CHECK(read_csv(dir / "ms" / "multi_seed_final.csv").rows.size() == 4);
  }
}
