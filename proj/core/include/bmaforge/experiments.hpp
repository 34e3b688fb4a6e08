#pragma once

// Experiment drivers behind the command-line subcommands. Each reads its
// settings from an ExperimentConfig, writes CSV/JSON results into the
// configured output directory and returns the headline numbers.
//
// On any error the partial outputs are moved to `<out>/quarantine/` and the
// error is rethrown with the failing stage in its message.

#include <cstdint>
#include <string>
#include <vector>

#include "bmaforge/config.hpp"

namespace bmaforge {

struct ToyBmaSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<int> ensemble_budgets;             // J for deep ensembles
  std::vector<std::vector<double>> ensemble_w1;  // [seed][budget]
  std::vector<int> svi_budgets;
  std::vector<std::vector<double>> svi_w1;  // [seed][budget]
  std::vector<int> model_counts;            // M for the MultiSWAG comparison
  std::vector<std::vector<double>> multiswag_w1;      // [seed][M]
  std::vector<std::vector<double>> ensemble_w1_by_m;  // [seed][M]
  int reference_chains = 0;
  int reference_samples = 0;  // total
  double min_reference_accept = 0.0;
};

struct PriorStudySummary {
  std::vector<double> alphas;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> within;  // [alpha][seed]
  std::vector<std::vector<double>> cross;   // [alpha][seed]
};

struct RethinkSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<double> fractions;
  std::vector<std::vector<double>> gp_elbo;         // [seed][fraction]
  std::vector<std::vector<double>> laplace_evidence;  // [seed][fraction]
  std::vector<double> memorize_train_acc;  // small lengthscale, fraction 1, per seed
  std::vector<double> memorize_test_acc;
  int test_size = 0;
};

struct DoubleDescentSummary {
  std::vector<std::uint64_t> seeds;
  std::vector<int> widths;                      // first hidden width per point of the sweep
  std::vector<std::vector<double>> sgd_nll;     // [seed][width]
  std::vector<std::vector<double>> swag_nll;
  std::vector<std::vector<double>> multiswag_nll;  // M = largest configured count
  std::vector<std::vector<double>> sgd_err, swag_err, multiswag_err;
  int multiswag_models = 0;
};

struct TemperSweepSummary {
  std::vector<double> temperatures;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<double>> nll;  // [seed][T]
  std::vector<std::vector<double>> acc;
  bool unit_temperature_matches_baseline = false;
  bool likelihood_equivalence_holds = false;
};

struct ShiftEvalSummary {
  std::vector<std::string> methods;
  std::vector<std::string> kinds;
  std::vector<int> levels;
  std::vector<int> counts;
  std::vector<std::uint64_t> seeds;
  // nll[method][kind][level][count][seed]
  std::vector<std::vector<std::vector<std::vector<std::vector<double>>>>> nll;
};

ToyBmaSummary cmd_toy_bma(const ExperimentConfig& config);
PriorStudySummary cmd_prior_study(const ExperimentConfig& config);
RethinkSummary cmd_rethink(const ExperimentConfig& config);
DoubleDescentSummary cmd_double_descent(const ExperimentConfig& config);
TemperSweepSummary cmd_temper_sweep(const ExperimentConfig& config);
ShiftEvalSummary cmd_shift_eval(const ExperimentConfig& config);

}  // namespace bmaforge
