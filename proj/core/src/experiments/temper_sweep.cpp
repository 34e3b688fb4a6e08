#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "bmaforge/experiments.hpp"
#include "bmaforge/metrics.hpp"
#include "bmaforge/results.hpp"
#include "common.hpp"

namespace bmaforge {

namespace {

struct MethodRunner {
  std::string name;
  NetworkSpec spec;
  PriorSpec prior;
  TrainConfig train;
  int samples = 0;  // sgld draws, or SWAG draws per model
  int models = 0;
  int rank = kDefaultSwagRank;
  int collect_start = 0;

  std::vector<ParamVector> run(const Dataset& data, const LikelihoodSpec& lik, Temperature t,
                               std::uint64_t seed) const {
    TrainConfig c = train;
    c.temperature = t;
    c.seed = seed;
    if (name == "sgld") return run_sgld(spec, data, lik, prior, c, samples, seed).members;
    if (name == "multiswag") return multi_swag(spec, data, lik, prior, c, models, samples, rank, collect_start).samples.members;
    return deep_ensemble(spec, data, lik, prior, c, models).members;
  }
};

double max_abs_diff(const std::vector<ParamVector>& a, const std::vector<ParamVector>& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!(a[i].layout() == b[i].layout())) return std::numeric_limits<double>::infinity();
    d = std::max(d, (a[i].values() - b[i].values()).cwiseAbs().maxCoeff());
  }
  return d;
}

}  // namespace

TemperSweepSummary cmd_temper_sweep(const ExperimentConfig& cfg) {
  RunOutput out(cfg, "temper-sweep");
  try {
    const Dataset all = run_stage("data", [&] { return detail::load_images(cfg); });
    const std::vector<int> classes = cfg.get_ints("data.classes", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const int train_per_class = cfg.get_int("data.train_per_class", 20);
    const int test_per_class = cfg.get_int("data.test_per_class", 20);
    std::vector<double> temps = cfg.get_doubles("temper.temperatures", {0.1, 0.5, 1.0, 2.0, 10.0});
    MethodRunner m;
    m.name = cfg.get_string("method.name", "sgld");
    if (m.name != "sgld" && m.name != "multiswag" && m.name != "deep_ensemble") {
      throw ConfigError("method.name must be sgld, multiswag or deep_ensemble, got " + m.name);
    }
    TrainConfig defaults;
    if (m.name == "sgld") defaults.schedule = LrSchedule::Cosine;
    m.train = detail::train_config(cfg, "train", defaults);
    if (cfg.has("train.temperature")) throw ConfigError("train.temperature is set by temper.temperatures");
    m.samples = cfg.get_int("method.samples", m.name == "sgld" ? 10 : kDefaultSwagSamples);
    m.models = cfg.get_int("method.models", m.name == "sgld" ? 1 : 5);
    m.rank = cfg.get_int("method.rank", kDefaultSwagRank);
    m.collect_start = cfg.get_int("method.collect_start", m.name == "multiswag" ? m.train.epochs / 2 : 0);
    m.spec = detail::network(static_cast<int>(all.dim()), cfg.get_ints("model.hidden", {100}),
                             static_cast<int>(classes.size()));
    m.prior = PriorSpec::isotropic(m.spec, cfg.get_double("model.prior_scale", 1.0));
    cfg.check_all_used();
    std::sort(temps.begin(), temps.end());
    if (std::find(temps.begin(), temps.end(), 1.0) == temps.end()) {
      throw ConfigError("temper.temperatures must include 1");
    }
    const LikelihoodSpec lik = LikelihoodSpec::categorical(static_cast<int>(classes.size()));

    TemperSweepSummary summary;
    summary.temperatures = temps;
    summary.seeds = cfg.seeds();
    summary.unit_temperature_matches_baseline = true;
    summary.likelihood_equivalence_holds = true;
    Table sweep({"temperature", "test_nll", "test_accuracy", "draws", "seed", "method", "config_hash"});
    Table checks({"check", "temperature", "max_abs_param_diff", "holds", "seed", "method", "config_hash"});

    for (std::uint64_t seed : cfg.seeds()) {
      const auto split = detail::class_split(all, classes, train_per_class, test_per_class, seed);
      const Dataset& train = split.first;
      const Dataset& test = split.second;
      const auto baseline = run_stage("baseline", [&] { return m.run(train, lik, Temperature{}, seed); });
      std::vector<double> nll_row, acc_row;
      for (double t : temps) {
        const auto draws = run_stage(fmt::format("T={}", t), [&] { return m.run(train, lik, Temperature(t), seed); });
        const PredictiveSamples pred = predictive_from_draws(m.spec, draws, test.inputs, lik, m.name);
        const double n = nll(pred, test.targets), a = accuracy(pred, test.targets);
        nll_row.push_back(n);
        acc_row.push_back(a);
        sweep.add(t, n, a, static_cast<int>(draws.size()), seed, m.name, out.config_hash());
        out.append_jsonl("metrics.jsonl", to_json({"test_nll", n, static_cast<int>(draws.size()),
                                                   fmt::format("{}@T{}", m.name, t), seed, out.config_hash()}));
        if (t == 1.0) {
          const double d = max_abs_diff(draws, baseline);
          summary.unit_temperature_matches_baseline &= d == 0.0;
          checks.add("unit_temperature_equals_baseline", t, d, d == 0.0 ? "pass" : "fail", seed, m.name,
                     out.config_hash());
        } else if (seed == cfg.seeds().front()) {
          // Temperature T against the likelihood raised to 1/T at T = 1.
          const auto powered = run_stage(fmt::format("powered likelihood T={}", t), [&] {
            return m.run(train, lik.powered(1.0 / t), Temperature{}, seed);
          });
          const double d = max_abs_diff(draws, powered);
          summary.likelihood_equivalence_holds &= d == 0.0;
          checks.add("likelihood_equivalence", t, d, d == 0.0 ? "pass" : "fail", seed, m.name, out.config_hash());
        }
      }
      summary.nll.push_back(nll_row);
      summary.acc.push_back(acc_row);
    }
    out.write_table("temper_sweep.csv", sweep);
    out.write_table("temper_checks.csv", checks);
    out.commit({{"temperature", "likelihood term scaled by 1/T, prior untempered"},
                {"likelihood_equivalence", "checked on the first seed for every T != 1"}});
    return summary;
  } catch (const std::exception& e) {
    out.quarantine(e.what());
    throw;
  }
}

}  // namespace bmaforge
