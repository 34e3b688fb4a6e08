#pragma once

// Posterior approximations for dense networks: SGD/MAP training, SWA and
// SWAG, deep ensembles, MultiSWA / MultiSWAG, mean-field variational
// inference, HMC, SGLD and the diagonal Laplace evidence.

#include <cstdint>
#include <functional>
#include <span>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "bmaforge/data.hpp"
#include "bmaforge/model.hpp"
#include "bmaforge/random.hpp"

namespace bmaforge {

enum class LrSchedule { ConstantThenDecay, Cosine };

/// SGD with momentum on the (tempered) negative log posterior divided by the
/// number of training points.
struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;  // 0 or >= N means full batch
  double lr = 0.05;
  double momentum = 0.9;
  LrSchedule schedule = LrSchedule::ConstantThenDecay;
  /// ConstantThenDecay: lr for the first 50% of training, linear decay to
  /// final_lr_ratio * lr over the next 40%, then constant.
  double final_lr_ratio = 0.01;
  /// Rescale the step gradient (loss / N) to at most this norm; 0 disables.
  double clip_norm = 0.0;
  Temperature temperature;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Learning rate after `progress` (fraction of all steps, in [0, 1]).
double learning_rate(const TrainConfig& config, double progress);

struct TrainResult {
  ParamVector params;
  std::vector<double> loss_trace;  // mean minibatch loss / N per epoch
};

/// Called at the end of every epoch with (epoch, iterate).
using EpochHook = std::function<void(int, const ParamVector&)>;

/// SGD from `init`. Throws NumericalError on divergence.
TrainResult train_sgd(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config, const ParamVector& init,
                      const EpochHook& hook = {});

/// SGD from a seeded He initialization; the point estimate p(w|D) ~ delta(w - w_hat).
TrainResult train_map(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config);

// ---------------------------------------------------------------------------
// Posterior representations

struct DiracEnsemble {
  std::vector<ParamVector> members;
};

struct FactorizedGaussian {
  ParamVector mean;
  Eigen::VectorXd log_std;
};

/// N(mean, diag(diag_variance)/2 + D D^T / (2 (K - 1))), D = deviations (d x K).
struct SwagGaussian {
  ParamVector mean;
  Eigen::VectorXd diag_variance;
  Eigen::MatrixXd deviations;

  int rank() const { return static_cast<int>(deviations.cols()); }
  /// Dense covariance; for tests and small models only.
  Eigen::MatrixXd covariance() const;
};

using MixtureComponent = std::variant<DiracEnsemble, FactorizedGaussian, SwagGaussian>;

/// Uniform mixture of non-mixture components.
struct Mixture {
  std::vector<MixtureComponent> components;
};

using PosteriorApprox = std::variant<DiracEnsemble, FactorizedGaussian, SwagGaussian, Mixture>;

std::string posterior_tag(const PosteriorApprox& posterior);

// ---------------------------------------------------------------------------
// SWA / SWAG

/// Running mean of collected iterates.
class SwaAccumulator {
 public:
  void add(const Eigen::VectorXd& iterate);
  int count() const { return count_; }
  const Eigen::VectorXd& mean() const { return mean_; }

 private:
  Eigen::VectorXd mean_;
  int count_ = 0;
};

/// Running first and second moments plus the last `rank` deviations
/// (iterate minus the running mean after including that iterate).
class SwagAccumulator {
 public:
  explicit SwagAccumulator(int rank);

  void add(const Eigen::VectorXd& iterate);
  int count() const { return swa_.count(); }
  int rank() const { return rank_; }

  /// Throws ConfigError unless at least rank + 1 iterates were collected.
  SwagGaussian finalize(const ParamLayout& layout) const;

 private:
  int rank_;
  SwaAccumulator swa_;
  Eigen::VectorXd second_moment_;
  std::vector<Eigen::VectorXd> deviations_;  // ring buffer, oldest first after finalize
  std::size_t next_slot_ = 0;
};

/// Average of end-of-epoch iterates from epoch `collect_start` (0-based) on.
ParamVector train_swa(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config, int collect_start);

constexpr int kDefaultSwagRank = 20;
constexpr int kDefaultSwagSamples = 20;

SwagGaussian fit_swag(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config, int collect_start,
                      int rank = kDefaultSwagRank);

/// mean + sigma_diag .* z1 / sqrt(2) + D z2 / sqrt(2 (K - 1)).
ParamVector sample_swag(const SwagGaussian& swag, std::uint64_t seed);

ParamVector sample_factorized(const FactorizedGaussian& q, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Ensembles

/// Member j is trained with seed config.seed + j.
DiracEnsemble deep_ensemble(const NetworkSpec& spec, const Dataset& data,
                            const LikelihoodSpec& likelihood, const PriorSpec& prior,
                            const TrainConfig& config, int members);

struct MultiSwagResult {
  Mixture mixture;        // one SwagGaussian per independent run
  DiracEnsemble samples;  // samples_per draws from each component, component-major
};

MultiSwagResult multi_swag(const NetworkSpec& spec, const Dataset& data,
                           const LikelihoodSpec& likelihood, const PriorSpec& prior,
                           const TrainConfig& config, int models, int samples_per, int rank,
                           int collect_start);

/// Draw s of component m uses seed derive_seed(config.seed + m, s).
DiracEnsemble draw_from_swag_mixture(const Mixture& mixture, int samples_per, std::uint64_t seed);

DiracEnsemble multi_swa(const NetworkSpec& spec, const Dataset& data,
                        const LikelihoodSpec& likelihood, const PriorSpec& prior,
                        const TrainConfig& config, int models, int collect_start);

// ---------------------------------------------------------------------------
// Mean-field variational inference

struct SviConfig {
  int steps = 5000;
  int batch_size = 0;  // 0 means full batch
  double lr = 1e-2;    // Adam step size at the start
  double final_lr_ratio = 0.01;  // linear decay of the Adam step size
  int mc_samples = 1;
  double init_std = 1e-3;  // initial posterior std when starting from a point
  Temperature temperature;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SviResult {
  FactorizedGaussian q;
  std::vector<double> elbo_trace;  // stochastic ELBO estimate per step
};

/// KL(q || prior) in closed form. Clamped biases must have zero mean and are
/// skipped.
double kl_to_prior(const FactorizedGaussian& q, const PriorSpec& prior);

/// Monte Carlo ELBO E_q[log p^(1/T)(D|w)] - KL(q || prior) with `samples`
/// draws.
double estimate_elbo(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                     const PriorSpec& prior, const FactorizedGaussian& q, Temperature temperature,
                     int samples, std::uint64_t seed);

/// Reparameterized stochastic-gradient ascent (Adam) on the ELBO, starting
/// from a point estimate with std config.init_std.
SviResult fit_svi(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                  const PriorSpec& prior, const SviConfig& config, const ParamVector& init);

/// Same, starting from an explicit variational distribution.
SviResult fit_svi(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                  const PriorSpec& prior, const SviConfig& config, FactorizedGaussian init);

// ---------------------------------------------------------------------------
// Hamiltonian Monte Carlo

/// Potential energy U(q) = -log target(q) up to a constant; writes dU/dq.
using Potential = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct HmcConfig {
  int n_chains = 1;
  int burn_in = 500;
  int n_samples = 1000;  // kept per chain
  int thin = 1;          // transitions per kept sample
  double step_size = 1e-3;
  int leapfrog_steps = 50;
  bool adapt_step_size = true;  // dual averaging during burn-in
  double target_accept = 0.7;
  double step_jitter = 0.1;  // step drawn uniformly in step * [1 - j, 1 + j]
  std::uint64_t seed = 0;

  void validate() const;
};

struct ChainStats {
  double burn_in_accept = 0.0;
  double sample_accept = 0.0;
  double step_size = 0.0;  // after adaptation
};

struct HmcResult {
  std::vector<Eigen::VectorXd> samples;  // chain-major
  std::vector<ChainStats> chains;
};

struct LeapfrogState {
  Eigen::VectorXd position;
  Eigen::VectorXd momentum;
  double potential = 0.0;
  Eigen::VectorXd grad;
};

double hamiltonian(const LeapfrogState& s);

/// `steps` leapfrog steps with unit mass matrix. A non-finite potential
/// stops the trajectory and leaves potential = +inf.
LeapfrogState leapfrog(const Potential& potential, LeapfrogState state, double step_size, int steps);

/// Chain c starts at inits[c] and uses seed derive_seed(config.seed, c).
/// Throws NumericalError if a chain accepts fewer than 1% of its burn-in
/// proposals.
HmcResult hmc_sample(const Potential& potential, std::span<const Eigen::VectorXd> inits,
                     const HmcConfig& config);

/// Full-batch tempered negative log posterior of a network as a Potential.
Potential network_potential(const NetworkSpec& spec, const Dataset& data,
                            const LikelihoodSpec& likelihood, const PriorSpec& prior,
                            Temperature temperature = Temperature{});

struct NetworkHmcResult {
  DiracEnsemble ensemble;
  std::vector<ChainStats> chains;
};

/// One chain per initial network (typically SGD-pretrained).
NetworkHmcResult run_hmc(const NetworkSpec& spec, const Dataset& data,
                         const LikelihoodSpec& likelihood, const PriorSpec& prior,
                         const HmcConfig& config, std::span<const ParamVector> inits,
                         Temperature temperature = Temperature{});

// ---------------------------------------------------------------------------
// Stochastic gradient Langevin dynamics

/// Minibatch estimate of the potential; may draw from `rng`.
using StochasticPotential =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&, Rng&)>;

/// w <- w - (lr_t / 2) grad U(w) + sqrt(lr_t) xi with a cosine schedule over
/// `steps` steps, restarted from `init` for every sample; keeps only the
/// final iterate of each run. Run s uses seed derive_seed(seed, s).
std::vector<Eigen::VectorXd> sgld_final_iterates(const StochasticPotential& potential,
                                                 const std::function<Eigen::VectorXd(std::uint64_t)>& init,
                                                 int steps, double lr, int n_samples,
                                                 std::uint64_t seed);

/// SGLD on a network. `config.schedule` must be Cosine; every restart runs
/// config.epochs epochs from a fresh He initialization. `config.lr` is the
/// initial step size of the unnormalized posterior dynamics.
DiracEnsemble run_sgld(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                       const PriorSpec& prior, const TrainConfig& config, int n_samples,
                       std::uint64_t seed);

// ---------------------------------------------------------------------------
// Diagonal Laplace evidence

enum class Curvature {
  EmpiricalFisher,  // sum_n (d/dw log p(y_n | x_n, w))^2
  Fisher,           // expectation of the same over y ~ p(y | x_n, w)
};

struct LaplaceOptions {
  Curvature curvature = Curvature::EmpiricalFisher;
  double epsilon = 1e-8;  // floor on each curvature entry
  Index fisher_batch = 0;  // 0: every training point
  std::uint64_t seed = 0;  // minibatch selection when fisher_batch > 0
};

struct LaplaceResult {
  double log_marginal = 0.0;
  double log_likelihood = 0.0;
  double log_prior = 0.0;
  Eigen::VectorXd curvature;  // per free parameter, prior precision included
  Index dim = 0;              // free parameters
  bool exact_fisher = true;   // false when the curvature used a minibatch
};

/// log p(D|w) + log p(w) + (d/2) log 2pi - 1/2 sum log h_i at a mode w.
LaplaceResult laplace_log_marginal(const NetworkSpec& spec, const ParamVector& mode,
                                   const Dataset& data, const LikelihoodSpec& likelihood,
                                   const PriorSpec& prior, const LaplaceOptions& options = {});

}  // namespace bmaforge
