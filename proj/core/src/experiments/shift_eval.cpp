#include <variant>

#include <json.hpp>

#include <fmt/format.h>

#include "bmaforge/experiments.hpp"
#include "bmaforge/metrics.hpp"
#include "bmaforge/results.hpp"
#include "common.hpp"

namespace bmaforge {

ShiftEvalSummary cmd_shift_eval(const ExperimentConfig& cfg) {
  RunOutput out(cfg, "shift-eval");
  try {
    const Dataset all = run_stage("data", [&] { return detail::load_images(cfg); });
    const std::vector<int> classes = cfg.get_ints("data.classes", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const int train_per_class = cfg.get_int("data.train_per_class", 50);
    const int test_per_class = cfg.get_int("data.test_per_class", 50);
    const NetworkSpec spec = detail::network(static_cast<int>(all.dim()), cfg.get_ints("model.hidden", {100}),
                                             static_cast<int>(classes.size()));
    const PriorSpec prior = PriorSpec::isotropic(spec, cfg.get_double("model.prior_scale", 1.0));
    const TrainConfig train_cfg = detail::train_config(cfg, "train");
    const TrainConfig swag_cfg = detail::train_config(cfg, "swag", train_cfg);
    const int collect_start = cfg.get_int("swag.collect_start");
    const int rank = cfg.get_int("swag.rank", kDefaultSwagRank);
    const int samples_per = cfg.get_int("swag.samples_per_model", kDefaultSwagSamples);
    const int models = cfg.get_int("ensemble.models", 5);
    const std::vector<std::string> kind_names = cfg.get_strings("shift.kinds", {"gaussian_noise", "translate"});
    const std::vector<int> levels = cfg.get_ints("shift.levels", {0, 1, 2, 3, 4, 5});
    const int ece_bins = cfg.get_int("metrics.ece_bins", 10);
    cfg.check_all_used();
    if (models < 1) throw ConfigError("ensemble.models must be at least 1");
    std::vector<Perturbation> kinds;
    for (const std::string& k : kind_names) kinds.push_back(parse_perturbation(k));
    const LikelihoodSpec lik = LikelihoodSpec::categorical(static_cast<int>(classes.size()));

    ShiftEvalSummary summary;
    summary.methods = {"deep_ensemble", "multiswa", "multiswag"};
    summary.kinds = kind_names;
    summary.levels = levels;
    summary.seeds = cfg.seeds();
    for (int c = 1; c <= models; ++c) summary.counts.push_back(c);
    summary.nll.assign(summary.methods.size(),
                       std::vector(kinds.size(), std::vector(levels.size(), std::vector(summary.counts.size(),
                                                                                         std::vector<double>{}))));
    Table table({"perturbation", "level", "method", "models", "nll", "accuracy", "ece", "seed", "config_hash"});

    for (std::uint64_t seed : cfg.seeds()) {
      const auto split = detail::class_split(all, classes, train_per_class, test_per_class, seed);
      const Dataset& train = split.first;
      const Dataset& test = split.second;
      TrainConfig t = train_cfg;
      t.seed = seed;
      const DiracEnsemble ensemble =
          run_stage("deep ensemble", [&] { return deep_ensemble(spec, train, lik, prior, t, models); });
      TrainConfig ts = swag_cfg;
      ts.seed = seed;
      const MultiSwagResult ms = run_stage("multiswag", [&] {
        return multi_swag(spec, train, lik, prior, ts, models, samples_per, rank, collect_start);
      });
      // MultiSWA uses the SWA mean of each SWAG run.
      std::vector<ParamVector> swa;
      for (const MixtureComponent& c : ms.mixture.components) swa.push_back(std::get<SwagGaussian>(c).mean);
      const std::vector<std::pair<const std::vector<ParamVector>*, int>> draws{
          {&ensemble.members, 1}, {&swa, 1}, {&ms.samples.members, samples_per}};

      const ImageSet clean = images_of(test, 28, 28);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (std::size_t l = 0; l < levels.size(); ++l) {
          const ImageSet shifted =
              perturb(clean, kinds[k], levels[l], derive_seed(seed, 500 + 10 * k + static_cast<std::uint64_t>(levels[l])));
          for (std::size_t m = 0; m < summary.methods.size(); ++m) {
            const auto& [members, per_model] = draws[m];
            const PredictiveSamples pred =
                predictive_from_draws(spec, *members, shifted.pixels, lik, summary.methods[m]);
            for (int c = 1; c <= models; ++c) {
              const PredictiveSamples sub = pred.first(c * per_model);
              const double n = nll(sub, test.targets);
              const double a = accuracy(sub, test.targets);
              const double e = ece(sub, test.targets, ece_bins);
              summary.nll[m][k][l][static_cast<std::size_t>(c - 1)].push_back(n);
              table.add(kind_names[k], levels[l], summary.methods[m], c, n, a, e, seed, out.config_hash());
              nlohmann::ordered_json row{{"perturbation", kind_names[k]}, {"level", levels[l]},
                                 {"method", summary.methods[m]},  {"models", c},
                                 {"draws", c * per_model},        {"nll", n},
                                 {"accuracy", a},                 {"ece", e},
                                 {"seed", seed},                  {"config_hash", out.config_hash()}};
              out.append_jsonl("shift_metrics.jsonl", row.dump());
            }
          }
        }
      }
    }
    out.write_table("shift_eval.csv", table);
    out.commit({{"multiswa", "SWA means of the MultiSWAG runs"},
                {"deep_ensemble", "final SGD iterates, member j trained with seed + j"}});
    return summary;
  } catch (const std::exception& e) {
    out.quarantine(e.what());
    throw;
  }
}

}  // namespace bmaforge
