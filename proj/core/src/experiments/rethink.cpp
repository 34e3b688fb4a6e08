#include <fmt/format.h>

#include "bmaforge/experiments.hpp"
#include "bmaforge/gp.hpp"
#include "bmaforge/metrics.hpp"
#include "bmaforge/results.hpp"
#include "common.hpp"

namespace bmaforge {

namespace {

Curvature parse_curvature(const std::string& s) {
  if (s == "empirical_fisher") return Curvature::EmpiricalFisher;
  if (s == "fisher") return Curvature::Fisher;
  throw ConfigError("bnn.curvature must be empirical_fisher or fisher, got " + s);
}

}  // namespace

RethinkSummary cmd_rethink(const ExperimentConfig& cfg) {
  RunOutput out(cfg, "rethink");
  try {
    const Dataset all = run_stage("data", [&] { return detail::load_images(cfg); });
    const std::vector<int> classes = cfg.get_ints("data.classes", {0, 1});
    if (classes.size() != 2) throw ConfigError("data.classes must name exactly two classes");
    const int train_per_class = cfg.get_int("data.train_per_class", 100);
    const int test_per_class = cfg.get_int("data.test_per_class", 100);
    const std::vector<double> fractions = cfg.get_doubles("data.fractions", {0.0, 0.25, 0.5, 0.75, 1.0});

    RbfKernel kernel;
    kernel.signal_variance = cfg.get_double("gp.signal_variance", 1.0);
    kernel.input_scale = cfg.get_double("gp.input_scale", 1.0);
    const double fixed_lengthscale = cfg.get_double("gp.lengthscale", 0.0);  // 0: median distance
    const double small_lengthscale = cfg.get_double("gp.small_lengthscale");
    GpClassifyConfig gp_cfg;
    gp_cfg.max_iters = cfg.get_int("gp.max_iters", gp_cfg.max_iters);

    const std::vector<int> hidden = cfg.get_ints("bnn.hidden", {100});
    const double prior_scale = cfg.get_double("bnn.prior_scale", 1.0);
    LaplaceOptions laplace;
    laplace.curvature = parse_curvature(cfg.get_string("bnn.curvature", "empirical_fisher"));
    const TrainConfig bnn_train = detail::train_config(cfg, "bnn_sgd");
    cfg.check_all_used();

    RethinkSummary summary;
    summary.seeds = cfg.seeds();
    summary.fractions = fractions;
    summary.test_size = 2 * test_per_class;
    Table gp_table({"fraction", "train_acc", "test_acc", "evidence_estimate", "seed", "method", "lengthscale",
                    "config_hash"});
    Table bnn_table({"fraction", "train_acc", "test_acc", "evidence_estimate", "seed", "method", "config_hash"});
    Table memo_table({"fraction", "train_acc", "test_acc", "evidence_estimate", "seed", "method", "lengthscale",
                      "config_hash"});

    for (std::uint64_t seed : cfg.seeds()) {
      const auto [train, test] = detail::class_split(all, classes, train_per_class, test_per_class, seed);
      RbfKernel k = kernel;
      k.lengthscale = fixed_lengthscale > 0.0 ? fixed_lengthscale : median_pairwise_distance(train.inputs / kernel.input_scale);

      const auto gp_rows = run_stage("gp sweep", [&] { return corruption_sweep(train, test, k, fractions, seed, gp_cfg); });
      std::vector<double> elbo;
      for (const CorruptionRow& r : gp_rows) {
        elbo.push_back(r.evidence_estimate);
        gp_table.add(r.fraction, r.train_acc, r.test_acc, r.evidence_estimate, seed, "gp", k.lengthscale,
                     out.config_hash());
      }
      summary.gp_elbo.push_back(elbo);

      RbfKernel small = kernel;
      small.lengthscale = small_lengthscale;
      const std::vector<double> full{0.0, 1.0};
      const auto memo = run_stage("gp memorization", [&] { return corruption_sweep(train, test, small, full, seed, gp_cfg); });
      for (const CorruptionRow& r : memo) {
        memo_table.add(r.fraction, r.train_acc, r.test_acc, r.evidence_estimate, seed, "gp", small.lengthscale,
                       out.config_hash());
      }
      summary.memorize_train_acc.push_back(memo.back().train_acc);
      summary.memorize_test_acc.push_back(memo.back().test_acc);

      const NetworkSpec spec = detail::network(static_cast<int>(train.dim()), hidden, 2);
      const PriorSpec prior = PriorSpec::isotropic(spec, prior_scale);
      const LikelihoodSpec lik = LikelihoodSpec::categorical(2);
      std::vector<double> evidence;
      for (double f : fractions) {
        const Dataset noisy = corrupt_labels(train, f, seed);
        TrainConfig t = bnn_train;
        t.seed = seed;
        const TrainResult map = run_stage(fmt::format("bnn fraction {}", f), [&] {
          return train_map(spec, noisy, lik, prior, t);
        });
        const LaplaceResult lap = run_stage(fmt::format("laplace fraction {}", f), [&] {
          return laplace_log_marginal(spec, map.params, noisy, lik, prior, laplace);
        });
        const std::vector<ParamVector> point{map.params};
        const double train_acc = accuracy(predictive_from_draws(spec, point, noisy.inputs, lik, "map"), noisy.targets);
        const double test_acc = accuracy(predictive_from_draws(spec, point, test.inputs, lik, "map"), test.targets);
        evidence.push_back(lap.log_marginal);
        bnn_table.add(f, train_acc, test_acc, lap.log_marginal, seed, "bnn_laplace", out.config_hash());
      }
      summary.laplace_evidence.push_back(evidence);
    }
    out.write_table("gp_corruption.csv", gp_table);
    out.write_table("gp_memorization.csv", memo_table);
    out.write_table("bnn_laplace_corruption.csv", bnn_table);
    out.commit({{"gp_kernel", "RBF, s2 from config, lengthscale = median pairwise distance unless set"},
                {"gp_evidence", "variational ELBO"},
                {"bnn_evidence", "diagonal Laplace"},
                {"corruption", "uniform relabeling over both classes"}});
    return summary;
  } catch (const std::exception& e) {
    out.quarantine(e.what());
    throw;
  }
}

}  // namespace bmaforge
