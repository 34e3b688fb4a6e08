#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <fmt/format.h>
#include <gtest/gtest.h>
#include <json.hpp>

#include "bmaforge/config.hpp"
#include "bmaforge/error.hpp"
#include "bmaforge/experiments.hpp"
#include "bmaforge/results.hpp"

using namespace bmaforge;
namespace fs = std::filesystem;

namespace {

const fs::path kSmoke = fs::path(BMAFORGE_CONFIG_DIR) / "smoke";

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::path(testing::TempDir()) / "bmaforge_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream s;
  s << f.rdbuf();
  return s.str();
}

ExperimentConfig parse(const std::string& text) { return ExperimentConfig::parse(text, kSmoke); }

#ifdef BMAFORGE_CLI
int run_cli(const std::string& args) {
  const std::string cmd = fmt::format("\"{}\" {} >/dev/null 2>&1", BMAFORGE_CLI, args);
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}
#endif

}  // namespace

// ---------------------------------------------------------------------------
// Config parsing

TEST(Config, SectionsListsAndDefaults) {
  const ExperimentConfig c = parse(
      "; comment\n[run]\nexperiment = toy-bma\nseeds = 3, 4\nout = /tmp/x\n"
      "[model]\nhidden = 10, 20\nprior_scale = 0.5\nbias = true\n");
  EXPECT_EQ(c.experiment(), "toy-bma");
  EXPECT_EQ(c.seeds(), (std::vector<std::uint64_t>{3, 4}));
  EXPECT_EQ(c.get_ints("model.hidden"), (std::vector<int>{10, 20}));
  EXPECT_EQ(c.get_double("model.prior_scale"), 0.5);
  EXPECT_TRUE(c.get_bool("model.bias", false));
  EXPECT_EQ(c.get_int("model.depth", 7), 7);
  EXPECT_NO_THROW(c.check_all_used());
}

TEST(Config, UnknownKeysAreReported) {
  const ExperimentConfig c = parse("[run]\nexperiment = toy-bma\nseeds = 1\nout = o\n[model]\nhiden = 10\n");
  try {
    c.check_all_used();
    FAIL() << "unused key accepted";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("model.hiden"), std::string::npos);
  }
}

TEST(Config, RequiresExperimentAndSeeds) {
  EXPECT_THROW(parse("[run]\nseeds = 1\n"), ConfigError);
  EXPECT_THROW(parse("[run]\nexperiment = rethink\n"), ConfigError);
  EXPECT_THROW(parse("[run]\nexperiment = rethink\nseeds = -1\n"), ConfigError);
}

TEST(Config, BadValuesAreConfigErrors) {
  const ExperimentConfig c = parse("[run]\nexperiment = x\nseeds = 1\n[a]\nn = ten\nl = 1,,2\nb = maybe\n");
  EXPECT_THROW(c.get_int("a.n"), ConfigError);
  EXPECT_THROW(c.get_ints("a.l"), ConfigError);
  EXPECT_THROW(c.get_bool("a.b", false), ConfigError);
  EXPECT_THROW(c.get_double("a.missing"), ConfigError);
}

TEST(Config, PathKeysMustExist) {
  EXPECT_THROW(parse("[run]\nexperiment = x\nseeds = 1\n[data]\nimages_path = nowhere.gz\n"), ConfigError);
  const ExperimentConfig c =
      parse("[run]\nexperiment = x\nseeds = 1\n[data]\nimages_path = ../../data/mnist5k-images-idx3-ubyte.gz\n");
  EXPECT_TRUE(fs::exists(c.get_path("data.images_path")));
}

TEST(Config, OverridesReplaceSeedsAndOutput) {
  ConfigOverrides o;
  o.seed = 99;
  o.out = "/tmp/elsewhere";
  const ExperimentConfig c = ExperimentConfig::parse("[run]\nexperiment = x\nseeds = 1, 2\nout = a\n", kSmoke, o);
  EXPECT_EQ(c.seeds(), (std::vector<std::uint64_t>{99}));
  EXPECT_EQ(c.out_dir(), fs::path("/tmp/elsewhere"));
}

TEST(Config, HashIgnoresOrderCommentsAndOutput) {
  const ExperimentConfig a = parse("[run]\nexperiment = x\nseeds = 1\nout = a\n[m]\np = 1\nq = 2\n");
  const ExperimentConfig b = parse("[m]\nq = 2\n; note\np = 1\n[run]\nout = b\nseeds = 1\nexperiment = x\n");
  const ExperimentConfig c = parse("[run]\nexperiment = x\nseeds = 2\nout = a\n[m]\np = 1\nq = 2\n");
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
  EXPECT_EQ(a.hash().size(), 16u);
}

// ---------------------------------------------------------------------------
// Result staging

TEST(Results, TableRendersShortestRoundTrip) {
  Table t({"name", "value", "n"});
  t.add("a", 0.1, 3);
  t.add("b", 1.0 / 3.0, -1);
  EXPECT_EQ(t.csv(), "name,value,n\na,0.1,3\nb,0.3333333333333333,-1\n");
  EXPECT_THROW(t.push({"only"}), DimensionError);
}

TEST(Results, CommitPublishesFilesAndMetadata) {
  const fs::path dir = scratch("commit");
  ConfigOverrides o;
  o.out = dir;
  const ExperimentConfig c = ExperimentConfig::parse("[run]\nexperiment = x\nseeds = 1\n", kSmoke, o);
  {
    RunOutput out(c, "x");
    out.write_text("a.csv", "k\n1\n");
    out.append_jsonl("m.jsonl", "{\"v\":1}");
    out.commit();
  }
  EXPECT_EQ(slurp(dir / "a.csv"), "k\n1\n");
  EXPECT_EQ(slurp(dir / "m.jsonl"), "{\"v\":1}\n");
  const auto meta = nlohmann::json::parse(slurp(dir / "run_metadata.json"));
  EXPECT_EQ(meta.at("config_hash"), c.hash());
  EXPECT_FALSE(fs::exists(dir / ".staging"));
}

TEST(Results, FailedRunIsQuarantined) {
  const fs::path dir = scratch("quarantine");
  ConfigOverrides o;
  o.out = dir;
  const ExperimentConfig c = ExperimentConfig::parse("[run]\nexperiment = x\nseeds = 1\n", kSmoke, o);
  {
    RunOutput out(c, "x");
    out.write_text("partial.csv", "k\n");
    out.quarantine("stage exploded");
  }
  EXPECT_TRUE(fs::exists(dir / "quarantine" / "partial.csv"));
  EXPECT_NE(slurp(dir / "quarantine" / "error.txt").find("stage exploded"), std::string::npos);
  EXPECT_FALSE(fs::exists(dir / "partial.csv"));
}

TEST(Results, StageTagKeepsErrorType) {
  try {
    run_stage("train", [] { throw NumericalError("diverged"); });
    FAIL();
  } catch (const NumericalError& e) {
    EXPECT_EQ(std::string(e.what()), "train: diverged");
  }
}

// ---------------------------------------------------------------------------
// Experiment drivers

TEST(Experiments, DriverErrorQuarantinesAndKeepsType) {
  const fs::path dir = scratch("dd_fail");
  ConfigOverrides o;
  o.out = dir;
  std::string text = slurp(kSmoke / "double_descent.ini");
  text.replace(text.find("rank = 3"), 8, "rank = 30");
  const ExperimentConfig c = ExperimentConfig::parse(text, kSmoke, o);
  EXPECT_THROW(cmd_double_descent(c), ConfigError);
  EXPECT_TRUE(fs::exists(dir / "quarantine" / "error.txt"));
}

TEST(Experiments, RowsCarrySeedAndConfigHash) {
  const fs::path dir = scratch("prior_rows");
  ConfigOverrides o;
  o.out = dir;
  const ExperimentConfig c = ExperimentConfig::load(kSmoke / "prior_study.ini", o);
  const PriorStudySummary s = cmd_prior_study(c);
  EXPECT_EQ(s.alphas.size(), 2u);
  int tables = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    std::istringstream in(slurp(entry.path()));
    std::string header;
    std::getline(in, header);
    EXPECT_NE(header.find("seed"), std::string::npos) << entry.path();
    EXPECT_NE(header.find("config_hash"), std::string::npos) << entry.path();
    ++tables;
  }
  EXPECT_GT(tables, 0);
}

TEST(Experiments, ShiftEvalEmitsOneJsonRowPerCell) {
  const fs::path dir = scratch("shift_rows");
  ConfigOverrides o;
  o.out = dir;
  const ExperimentConfig c = ExperimentConfig::load(kSmoke / "shift_eval.ini", o);
  const ShiftEvalSummary s = cmd_shift_eval(c);
  std::istringstream in(slurp(dir / "shift_metrics.jsonl"));
  std::size_t rows = 0;
  for (std::string line; std::getline(in, line); ++rows) {
    const auto j = nlohmann::json::parse(line);
    for (const char* key : {"perturbation", "level", "method", "models", "nll", "accuracy", "ece", "seed", "config_hash"}) {
      EXPECT_TRUE(j.contains(key)) << key;
    }
  }
  EXPECT_EQ(rows, s.methods.size() * s.kinds.size() * s.levels.size() * s.counts.size() * s.seeds.size());
}

TEST(Experiments, TemperSweepUnitTemperatureMatchesBaseline) {
  const fs::path dir = scratch("temper");
  ConfigOverrides o;
  o.out = dir;
  const TemperSweepSummary s = cmd_temper_sweep(ExperimentConfig::load(kSmoke / "temper_sweep.ini", o));
  EXPECT_TRUE(s.unit_temperature_matches_baseline);
  EXPECT_TRUE(s.likelihood_equivalence_holds);
}

// ---------------------------------------------------------------------------
// Command-line exit codes

#ifdef BMAFORGE_CLI
TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("cli");
  EXPECT_EQ(run_cli(fmt::format("toy-bma {} --out {}", (kSmoke / "toy_bma.ini").string(), (dir / "ok").string())), 0);
  EXPECT_TRUE(fs::exists(dir / "ok" / "run_metadata.json"));
  EXPECT_EQ(run_cli("no-such-command x.ini"), 2);
  EXPECT_EQ(run_cli(fmt::format("rethink {}", (kSmoke / "toy_bma.ini").string())), 2);
  EXPECT_EQ(run_cli(fmt::format("toy-bma {}", (dir / "missing.ini").string())), 4);

  std::ofstream bad(dir / "unknown_key.ini");
  bad << slurp(kSmoke / "toy_bma.ini") << "\n[extra]\nlearning_rate = 3\n";
  bad.close();
  EXPECT_EQ(run_cli(fmt::format("toy-bma {} --out {}", (dir / "unknown_key.ini").string(), (dir / "bad").string())), 2);
}
#endif
