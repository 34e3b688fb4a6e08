#include <algorithm>

#include <fmt/format.h>

#include "bmaforge/data.hpp"
#include "bmaforge/experiments.hpp"
#include "bmaforge/metrics.hpp"
#include "bmaforge/parallel.hpp"
#include "bmaforge/results.hpp"
#include "common.hpp"

namespace bmaforge {

namespace {

using detail::join;

struct ToySetup {
  ToyRegression data;
  NetworkSpec spec;
  LikelihoodSpec likelihood = LikelihoodSpec::gaussian(1.0);
  PriorSpec prior;
};

void write_band(RunOutput& out, const std::string& name, const PredictiveSamples& pred,
                const Eigen::VectorXd& x, const std::string& method, std::uint64_t seed) {
  const Band band = predictive_band(pred);
  Table t({"x", "mean", "lower_3sd", "upper_3sd", "seed", "method", "config_hash"});
  for (Index i = 0; i < x.size(); ++i) {
    t.add(x[i], band.mean[i], band.lower[i], band.upper[i], seed, method, out.config_hash());
  }
  out.write_table(name, t);
}

void write_curve(RunOutput& out, const std::string& name, const W1Result& w1, const Eigen::VectorXd& x,
                 const std::string& method, std::uint64_t seed) {
  Table t({"x", "w1", "seed", "method", "config_hash"});
  for (Index i = 0; i < x.size(); ++i) t.add(x[i], w1.per_location[i], seed, method, out.config_hash());
  out.write_table(name, t);
}

}  // namespace

ToyBmaSummary cmd_toy_bma(const ExperimentConfig& cfg) {
  RunOutput out(cfg, "toy-bma");
  try {
    ToySetup s;
    ToyRegressionOptions opt;
    opt.points_per_cluster = cfg.get_int("data.points_per_cluster", opt.points_per_cluster);
    opt.noise_std = cfg.get_double("data.noise_std", opt.noise_std);
    opt.grid_points = cfg.get_int("data.grid_points", opt.grid_points);
    opt.grid_min = cfg.get_double("data.grid_min", opt.grid_min);
    opt.grid_max = cfg.get_double("data.grid_max", opt.grid_max);
    const auto data_seed = static_cast<std::uint64_t>(cfg.get_int("data.seed", 0));
    s.data = run_stage("data", [&] { return gen_toy_regression(data_seed, opt); });
    s.spec = detail::network(2, cfg.get_ints("model.hidden", {10, 10, 10}), 1);
    s.likelihood = LikelihoodSpec::gaussian(cfg.get_double("model.noise_variance", 0.02 * 0.02));
    s.prior = PriorSpec::isotropic(s.spec, cfg.get_double("model.prior_scale", 10.0));

    const TrainConfig sgd = detail::train_config(cfg, "sgd");
    const TrainConfig swag_train = detail::train_config(cfg, "swag", sgd);
    const int swag_collect = cfg.get_int("swag.collect_start");
    const int swag_rank = cfg.get_int("swag.rank", kDefaultSwagRank);
    const int swag_samples = cfg.get_int("swag.samples_per_model", kDefaultSwagSamples);
    const std::vector<int> budgets = cfg.get_ints("ensemble.budgets", {1, 2, 5, 10});
    const std::vector<int> svi_budgets = cfg.get_ints("svi.budgets", {1, 10});
    const std::vector<int> model_counts = cfg.get_ints("multiswag.models", {1, 2, 3});
    SviConfig svi;
    svi.steps = cfg.get_int("svi.steps", svi.steps);
    svi.lr = cfg.get_double("svi.lr", svi.lr);
    svi.mc_samples = cfg.get_int("svi.mc_samples", svi.mc_samples);
    svi.init_std = cfg.get_double("svi.init_std", svi.init_std);
    svi.final_lr_ratio = cfg.get_double("svi.final_lr_ratio", svi.final_lr_ratio);
    HmcConfig hmc;
    hmc.n_chains = cfg.get_int("hmc.chains", 200);
    hmc.burn_in = cfg.get_int("hmc.burn_in", hmc.burn_in);
    hmc.n_samples = cfg.get_int("hmc.samples_per_chain", hmc.n_samples);
    hmc.thin = cfg.get_int("hmc.thin", hmc.thin);
    hmc.step_size = cfg.get_double("hmc.step_size", hmc.step_size);
    hmc.leapfrog_steps = cfg.get_int("hmc.leapfrog_steps", hmc.leapfrog_steps);
    hmc.target_accept = cfg.get_double("hmc.target_accept", hmc.target_accept);
    hmc.seed = static_cast<std::uint64_t>(cfg.get_int("hmc.seed", 0));
    const TrainConfig pretrain = detail::train_config(cfg, "hmc_pretrain", sgd);
    cfg.check_all_used();

    if (*std::max_element(model_counts.begin(), model_counts.end()) >
        *std::max_element(budgets.begin(), budgets.end())) {
      throw ConfigError("multiswag.models may not exceed the largest ensemble budget");
    }

    write_dataset_csv(s.data.train, out.path("train.csv").string());
    const Eigen::MatrixXd& grid = s.data.test_grid.inputs;
    const Eigen::VectorXd& gx = s.data.grid_x;

    // Reference predictive: HMC chains started from SGD solutions.
    const NetworkHmcResult reference = run_stage("hmc", [&] {
      std::vector<ParamVector> inits = parallel_map(static_cast<std::size_t>(hmc.n_chains), [&](std::size_t c) {
        TrainConfig t = pretrain;
        t.seed = derive_seed(hmc.seed, 1000 + c);
        return train_map(s.spec, s.data.train, s.likelihood, s.prior, t).params;
      });
      return run_hmc(s.spec, s.data.train, s.likelihood, s.prior, hmc, inits);
    });
    const PredictiveSamples ref =
        predictive_from_draws(s.spec, reference.ensemble.members, grid, s.likelihood, "hmc");
    write_band(out, "predictive_hmc.csv", ref, gx, "hmc", hmc.seed);
    {
      Table t({"chain", "burn_in_accept", "sample_accept", "step_size", "seed", "config_hash"});
      for (std::size_t c = 0; c < reference.chains.size(); ++c) {
        const ChainStats& st = reference.chains[c];
        t.add(static_cast<int>(c), st.burn_in_accept, st.sample_accept, st.step_size, hmc.seed, out.config_hash());
      }
      out.write_table("hmc_chains.csv", t);
    }

    ToyBmaSummary summary;
    summary.seeds = cfg.seeds();
    summary.ensemble_budgets = budgets;
    summary.svi_budgets = svi_budgets;
    summary.model_counts = model_counts;
    summary.reference_chains = hmc.n_chains;
    summary.reference_samples = static_cast<int>(reference.ensemble.members.size());
    summary.min_reference_accept = 1.0;
    for (const ChainStats& st : reference.chains) {
      summary.min_reference_accept = std::min(summary.min_reference_accept, st.sample_accept);
    }

    Table budget_table({"method", "J", "w1", "seed", "config_hash"});
    Table model_table({"method", "models", "J", "w1", "seed", "config_hash"});
    const int max_members = *std::max_element(budgets.begin(), budgets.end());
    const int max_models = *std::max_element(model_counts.begin(), model_counts.end());
    for (std::uint64_t seed : cfg.seeds()) {
      const std::string tag = fmt::format("seed{}", seed);
      auto record = [&](const std::string& metric, double value, int j, const std::string& method) {
        out.append_jsonl("metrics.jsonl", to_json({metric, value, j, method, seed, out.config_hash()}));
      };

      TrainConfig sgd_s = sgd;
      sgd_s.seed = seed;
      const DiracEnsemble ensemble = run_stage("deep ensemble", [&] {
        return deep_ensemble(s.spec, s.data.train, s.likelihood, s.prior, sgd_s, max_members);
      });
      const PredictiveSamples ens_pred =
          predictive_from_draws(s.spec, ensemble.members, grid, s.likelihood, "deep_ensemble");
      std::vector<double> ens_w1;
      for (int j : budgets) {
        const W1Result w = wasserstein1_predictive(ens_pred.first(j), ref);
        ens_w1.push_back(w.mean);
        budget_table.add("deep_ensemble", j, w.mean, seed, out.config_hash());
        record("w1", w.mean, j, "deep_ensemble");
        if (j == max_members) write_curve(out, fmt::format("w1_curve_deep_ensemble_{}.csv", tag), w, gx, "deep_ensemble", seed);
      }
      write_band(out, fmt::format("predictive_deep_ensemble_{}.csv", tag), ens_pred, gx, "deep_ensemble", seed);

      // SVI starts from the first ensemble member, an SGD solution.
      SviConfig svi_s = svi;
      svi_s.seed = seed;
      const SviResult q = run_stage("svi", [&] {
        return fit_svi(s.spec, s.data.train, s.likelihood, s.prior, svi_s, ensemble.members.front());
      });
      std::vector<double> svi_w1;
      const int max_svi = *std::max_element(svi_budgets.begin(), svi_budgets.end());
      const PredictiveSamples svi_pred =
          predictive_samples(s.spec, q.q, grid, max_svi, derive_seed(seed, 77), s.likelihood);
      for (int j : svi_budgets) {
        const W1Result w = wasserstein1_predictive(svi_pred.first(j), ref);
        svi_w1.push_back(w.mean);
        budget_table.add("svi", j, w.mean, seed, out.config_hash());
        record("w1", w.mean, j, "svi");
        if (j == max_svi) write_curve(out, fmt::format("w1_curve_svi_{}.csv", tag), w, gx, "svi", seed);
      }
      write_band(out, fmt::format("predictive_svi_{}.csv", tag), svi_pred, gx, "svi", seed);

      TrainConfig swag_s = swag_train;
      swag_s.seed = seed;
      const MultiSwagResult ms = run_stage("multiswag", [&] {
        return multi_swag(s.spec, s.data.train, s.likelihood, s.prior, swag_s, max_models, swag_samples,
                          swag_rank, swag_collect);
      });
      std::vector<double> ms_w1, de_w1;
      for (int m : model_counts) {
        const std::span<const ParamVector> draws(ms.samples.members.data(),
                                                 static_cast<std::size_t>(m * swag_samples));
        const PredictiveSamples mp = predictive_from_draws(s.spec, draws, grid, s.likelihood, "multiswag");
        const W1Result w_ms = wasserstein1_predictive(mp, ref);
        const W1Result w_de = wasserstein1_predictive(ens_pred.first(m), ref);
        ms_w1.push_back(w_ms.mean);
        de_w1.push_back(w_de.mean);
        model_table.add("multiswag", m, m * swag_samples, w_ms.mean, seed, out.config_hash());
        model_table.add("deep_ensemble", m, m, w_de.mean, seed, out.config_hash());
        record("w1", w_ms.mean, m * swag_samples, "multiswag");
        if (m == max_models) {
          write_band(out, fmt::format("predictive_multiswag_{}.csv", tag), mp, gx, "multiswag", seed);
          write_curve(out, fmt::format("w1_curve_multiswag_{}.csv", tag), w_ms, gx, "multiswag", seed);
        }
      }
      summary.ensemble_w1.push_back(std::move(ens_w1));
      summary.svi_w1.push_back(std::move(svi_w1));
      summary.multiswag_w1.push_back(std::move(ms_w1));
      summary.ensemble_w1_by_m.push_back(std::move(de_w1));
    }
    out.write_table("w1_vs_budget.csv", budget_table);
    out.write_table("w1_vs_models.csv", model_table);
    out.commit({{"w1", "empirical 1-D W1 between sampled network outputs, averaged over the test grid"},
                {"reference", fmt::format("{} HMC chains, {} samples", hmc.n_chains,
                                          reference.ensemble.members.size())},
                {"toy_clusters", "[-4,-2], [-0.5,0.5], [2,4]"}});
    return summary;
  } catch (const std::exception& e) {
    out.quarantine(e.what());
    throw;
  }
}

}  // namespace bmaforge
