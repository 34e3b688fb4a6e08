// bma-forge: command-line harness for the experiment drivers.
//
//   bma-forge <subcommand> <config.ini> [--seed N] [--out DIR]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure,
// 4 I/O or parse error.

#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "bmaforge/config.hpp"
#include "bmaforge/error.hpp"
#include "bmaforge/experiments.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

int report(int code, const std::string& kind, const std::exception& e) {
  fmt::print(stderr, "bma-forge: {}: {}\n", kind, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  using namespace bmaforge;
  const std::map<std::string, std::function<void(const ExperimentConfig&)>> commands{
      {"toy-bma", [](const ExperimentConfig& c) { cmd_toy_bma(c); }},
      {"prior-study", [](const ExperimentConfig& c) { cmd_prior_study(c); }},
      {"rethink", [](const ExperimentConfig& c) { cmd_rethink(c); }},
      {"double-descent", [](const ExperimentConfig& c) { cmd_double_descent(c); }},
      {"temper-sweep", [](const ExperimentConfig& c) { cmd_temper_sweep(c); }},
      {"shift-eval", [](const ExperimentConfig& c) { cmd_shift_eval(c); }},
  };

  CLI::App app{"Desk-scale Bayesian model averaging experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  for (const auto& [name, fn] : commands) {
    CLI::App* sub = app.add_subcommand(name, fmt::format("run the {} experiment", name));
    sub->add_option("config", config_path, "experiment config (INI)")->required();
    sub->add_option("--seed", seed, "replace the config's seed list with one seed");
    sub->add_option("--out", out, "output directory (overrides [run] out)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  try {
    ConfigOverrides overrides;
    overrides.seed = seed;
    if (out) overrides.out = *out;
    const ExperimentConfig config = ExperimentConfig::load(config_path, overrides);
    if (config.experiment() != name) {
      throw ConfigError(fmt::format("config is for '{}', not '{}'", config.experiment(), name));
    }
    commands.at(name)(config);
    fmt::print("bma-forge {}: results in {}\n", name, config.out_dir().string());
    return kOk;
  } catch (const ConfigError& e) {
    return report(kConfig, "configuration error", e);
  } catch (const DimensionError& e) {
    return report(kConfig, "configuration error", e);
  } catch (const NumericalError& e) {
    return report(kNumerical, "numerical failure", e);
  } catch (const DegenerateError& e) {
    return report(kNumerical, "numerical failure", e);
  } catch (const IoError& e) {
    return report(kIo, "I/O error", e);
  } catch (const ParseError& e) {
    return report(kIo, "parse error", e);
  } catch (const std::exception& e) {
    return report(kIo, "error", e);
  }
}
