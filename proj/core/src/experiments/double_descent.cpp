#include <algorithm>

#include <fmt/format.h>

#include "bmaforge/experiments.hpp"
#include "bmaforge/metrics.hpp"
#include "bmaforge/results.hpp"
#include "common.hpp"

namespace bmaforge {

DoubleDescentSummary cmd_double_descent(const ExperimentConfig& cfg) {
  RunOutput out(cfg, "double-descent");
  try {
    const Dataset all = run_stage("data", [&] { return detail::load_images(cfg); });
    const std::vector<int> classes = cfg.get_ints("data.classes", {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    const int train_per_class = cfg.get_int("data.train_per_class", 50);
    const int test_per_class = cfg.get_int("data.test_per_class", 50);
    const double corruption = cfg.get_double("data.corruption", 0.2);
    const std::vector<int> base_hidden = cfg.get_ints("model.base_hidden", {4});
    const std::vector<int> multipliers = cfg.get_ints("model.multipliers", {1, 2, 4, 8, 16, 32});
    const double prior_scale = cfg.get_double("model.prior_scale", 1.0);
    const TrainConfig sgd = detail::train_config(cfg, "sgd");
    const int collect_start = cfg.get_int("swag.collect_start");
    const int rank = cfg.get_int("swag.rank", kDefaultSwagRank);
    const int samples_per = cfg.get_int("swag.samples_per_model", kDefaultSwagSamples);
    std::vector<int> model_counts = cfg.get_ints("multiswag.models", {1, 3, 5, 10});
    cfg.check_all_used();
    std::sort(model_counts.begin(), model_counts.end());
    const int max_models = model_counts.back();

    const NetworkSpec base = detail::network(static_cast<int>(all.dim()), base_hidden, static_cast<int>(classes.size()));
    const std::vector<NetworkSpec> specs = width_sweep(base, multipliers);
    const LikelihoodSpec lik = LikelihoodSpec::categorical(static_cast<int>(classes.size()));

    DoubleDescentSummary summary;
    summary.seeds = cfg.seeds();
    summary.multiswag_models = max_models;
    for (const NetworkSpec& s : specs) summary.widths.push_back(s.layer_sizes[1]);

    Table table({"width", "params", "method", "models", "test_nll", "test_error", "train_error", "seed", "config_hash"});
    for (std::uint64_t seed : cfg.seeds()) {
      auto split = detail::class_split(all, classes, train_per_class, test_per_class, seed);
      const Dataset train = corrupt_labels(split.first, corruption, derive_seed(seed, 5));
      const Dataset& test = split.second;
      std::vector<double> sgd_nll, swag_nll, ms_nll, sgd_err, swag_err, ms_err;
      for (const NetworkSpec& spec : specs) {
        const int width = spec.layer_sizes[1];
        const PriorSpec prior = PriorSpec::isotropic(spec, prior_scale);
        TrainConfig t = sgd;
        t.seed = seed;
        const std::string stage = fmt::format("width {}", width);
        // Run 0 of MultiSWAG follows the same trajectory as the SGD baseline.
        const TrainResult map = run_stage(stage + " sgd", [&] { return train_map(spec, train, lik, prior, t); });
        const MultiSwagResult ms = run_stage(stage + " multiswag", [&] {
          return multi_swag(spec, train, lik, prior, t, max_models, samples_per, rank, collect_start);
        });
        auto evaluate = [&](std::span<const ParamVector> draws, const std::string& method, int models) {
          const PredictiveSamples pt = predictive_from_draws(spec, draws, test.inputs, lik, method);
          const PredictiveSamples pr = predictive_from_draws(spec, draws, train.inputs, lik, method);
          const double nll_v = nll(pt, test.targets);
          const double err = 1.0 - accuracy(pt, test.targets);
          table.add(width, static_cast<std::int64_t>(count_params(spec)), method, models, nll_v, err,
                    1.0 - accuracy(pr, train.targets), seed, out.config_hash());
          out.append_jsonl("metrics.jsonl", to_json({"test_nll", nll_v, static_cast<int>(draws.size()),
                                                     fmt::format("{}@width{}", method, width), seed,
                                                     out.config_hash()}));
          return std::pair{nll_v, err};
        };
        const std::vector<ParamVector> point{map.params};
        const auto [n_sgd, e_sgd] = evaluate(point, "sgd", 1);
        std::pair<double, double> swag{}, multi{};
        for (int m : model_counts) {
          const std::span<const ParamVector> draws(ms.samples.members.data(),
                                                   static_cast<std::size_t>(m * samples_per));
          const auto r = evaluate(draws, m == 1 ? "swag" : "multiswag", m);
          if (m == 1) swag = r;
          if (m == max_models) multi = r;
        }
        if (model_counts.front() != 1) {
          const std::span<const ParamVector> draws(ms.samples.members.data(), static_cast<std::size_t>(samples_per));
          swag = evaluate(draws, "swag", 1);
        }
        sgd_nll.push_back(n_sgd);
        sgd_err.push_back(e_sgd);
        swag_nll.push_back(swag.first);
        swag_err.push_back(swag.second);
        ms_nll.push_back(multi.first);
        ms_err.push_back(multi.second);
      }
      summary.sgd_nll.push_back(sgd_nll);
      summary.swag_nll.push_back(swag_nll);
      summary.multiswag_nll.push_back(ms_nll);
      summary.sgd_err.push_back(sgd_err);
      summary.swag_err.push_back(swag_err);
      summary.multiswag_err.push_back(ms_err);
    }
    out.write_table("double_descent.csv", table);
    out.commit({{"architecture", "fully connected ReLU network, hidden widths scaled by the multipliers"},
                {"corruption", fmt::format("{} of training labels relabeled uniformly", corruption)}});
    return summary;
  } catch (const std::exception& e) {
    out.quarantine(e.what());
    throw;
  }
}

}  // namespace bmaforge
