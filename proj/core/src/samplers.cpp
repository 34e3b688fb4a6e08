#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/parallel.hpp"

namespace bmaforge {

void HmcConfig::validate() const {
  if (n_chains < 1) throw ConfigError("HMC needs at least one chain");
  if (burn_in < 0 || n_samples < 1 || thin < 1) {
    throw ConfigError("HMC needs burn_in >= 0, n_samples >= 1, thin >= 1");
  }
  if (!(step_size > 0.0)) throw ConfigError(fmt::format("HMC step size must be positive, got {}", step_size));
  if (leapfrog_steps < 1) throw ConfigError("HMC needs at least one leapfrog step");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ConfigError("target acceptance must lie in (0, 1)");
  if (!(step_jitter >= 0.0 && step_jitter < 1.0)) throw ConfigError("step jitter must lie in [0, 1)");
}

double hamiltonian(const LeapfrogState& s) { return s.potential + 0.5 * s.momentum.squaredNorm(); }

LeapfrogState leapfrog(const Potential& potential, LeapfrogState s, double step_size, int steps) {
  auto evaluate = [&] {
    try {
      s.potential = potential(s.position, s.grad);
    } catch (const NumericalError&) {
      s.potential = std::numeric_limits<double>::infinity();
    }
    return std::isfinite(s.potential) && s.grad.allFinite();
  };
  s.momentum -= 0.5 * step_size * s.grad;
  for (int i = 1; i <= steps; ++i) {
    s.position += step_size * s.momentum;
    if (!evaluate()) {
      s.potential = std::numeric_limits<double>::infinity();
      return s;
    }
    s.momentum -= (i == steps ? 0.5 : 1.0) * step_size * s.grad;
  }
  return s;
}

namespace {

/// Nesterov dual averaging of log step size (Hoffman & Gelman defaults).
class DualAveraging {
 public:
  DualAveraging(double step, double target) : mu_(std::log(10.0 * step)), target_(target) {}

  double update(double accept_prob) {
    ++t_;
    const double t = static_cast<double>(t_);
    h_bar_ = (1.0 - 1.0 / (t + kT0)) * h_bar_ + (target_ - accept_prob) / (t + kT0);
    const double log_step = mu_ - std::sqrt(t) / kGamma * h_bar_;
    const double eta = std::pow(t, -kKappa);
    log_step_bar_ = eta * log_step + (1.0 - eta) * log_step_bar_;
    return std::exp(log_step);
  }

  double final_step() const { return std::exp(log_step_bar_); }

 private:
  static constexpr double kGamma = 0.05;
  static constexpr double kT0 = 10.0;
  static constexpr double kKappa = 0.75;
  double mu_;
  double target_;
  double h_bar_ = 0.0;
  double log_step_bar_ = 0.0;
  long t_ = 0;
};

struct ChainOutput {
  std::vector<Eigen::VectorXd> samples;
  ChainStats stats;
};

ChainOutput run_chain(const Potential& potential, const Eigen::VectorXd& init,
                      const HmcConfig& config, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  LeapfrogState state;
  state.position = init;
  state.grad.resize(init.size());
  state.potential = potential(state.position, state.grad);
  if (!std::isfinite(state.potential)) throw NumericalError("HMC initial state has non-finite energy");

  double step = config.step_size;
  DualAveraging adapt(step, config.target_accept);
  ChainOutput out;
  out.samples.reserve(static_cast<std::size_t>(config.n_samples));
  long accepted_burn = 0, accepted = 0;
  const long total = config.burn_in + static_cast<long>(config.n_samples) * config.thin;
  for (long it = 0; it < total; ++it) {
    const bool burning = it < config.burn_in;
    state.momentum = standard_normal(init.size(), rng);
    const double jitter = 1.0 + config.step_jitter * (2.0 * uniform(rng) - 1.0);
    const double h0 = hamiltonian(state);
    LeapfrogState proposal = leapfrog(potential, state, step * jitter, config.leapfrog_steps);
    const double h1 = hamiltonian(proposal);
    const double accept_prob = std::isfinite(h1) ? std::min(1.0, std::exp(h0 - h1)) : 0.0;
    if (uniform(rng) < accept_prob) {
      state = std::move(proposal);
      (burning ? accepted_burn : accepted) += 1;
    }
    if (burning && config.adapt_step_size) {
      step = adapt.update(accept_prob);
      if (it + 1 == config.burn_in) step = adapt.final_step();
    }
    if (!burning && (it - config.burn_in + 1) % config.thin == 0) {
      out.samples.push_back(state.position);
    }
  }
  out.stats.step_size = step;
  if (config.burn_in > 0) {
    out.stats.burn_in_accept = static_cast<double>(accepted_burn) / config.burn_in;
    if (out.stats.burn_in_accept < 0.01) {
      throw NumericalError(fmt::format(
          "HMC accepted {:.2f}% of burn-in proposals; step size {} is too large",
          100.0 * out.stats.burn_in_accept, step));
    }
  }
  out.stats.sample_accept =
      static_cast<double>(accepted) / (static_cast<double>(config.n_samples) * config.thin);
  return out;
}

}  // namespace

HmcResult hmc_sample(const Potential& potential, std::span<const Eigen::VectorXd> inits,
                     const HmcConfig& config) {
  config.validate();
  if (inits.size() != static_cast<std::size_t>(config.n_chains)) {
    throw ConfigError(fmt::format("{} initial states for {} chains", inits.size(), config.n_chains));
  }
  auto chains = parallel_map(inits.size(), [&](std::size_t c) {
    return run_chain(potential, inits[c], config, derive_seed(config.seed, c));
  });
  HmcResult result;
  for (auto& c : chains) {
    result.chains.push_back(c.stats);
    for (auto& s : c.samples) result.samples.push_back(std::move(s));
  }
  return result;
}

namespace {

void reject_clamped_biases(const NetworkSpec& spec, const PriorSpec& prior) {
  prior.check_compatible(spec);
  for (int l = 0; l < spec.num_layers(); ++l) {
    if (spec.use_bias[static_cast<std::size_t>(l)] && prior.bias_scales[static_cast<std::size_t>(l)] == 0.0) {
      throw ConfigError("samplers need a positive bias scale on every layer with biases");
    }
  }
}

}  // namespace

Potential network_potential(const NetworkSpec& spec, const Dataset& data,
                            const LikelihoodSpec& likelihood, const PriorSpec& prior,
                            Temperature temperature) {
  reject_clamped_biases(spec, prior);
  data.validate();
  const ParamLayout layout(spec);
  return [&spec, &data, likelihood, prior, temperature, layout](const Eigen::VectorXd& w,
                                                               Eigen::VectorXd& grad) {
    LossResult r = loss_and_grad(spec, ParamVector(layout, w), data.inputs, data.targets,
                                 likelihood, prior, temperature);
    grad = std::move(r.grad);
    return r.value;
  };
}

NetworkHmcResult run_hmc(const NetworkSpec& spec, const Dataset& data,
                         const LikelihoodSpec& likelihood, const PriorSpec& prior,
                         const HmcConfig& config, std::span<const ParamVector> inits,
                         Temperature temperature) {
  const Potential potential = network_potential(spec, data, likelihood, prior, temperature);
  std::vector<Eigen::VectorXd> starts;
  for (const ParamVector& p : inits) {
    if (!p.matches(spec)) throw DimensionError("HMC initial network does not match the network layout");
    starts.push_back(p.values());
  }
  HmcResult raw = hmc_sample(potential, starts, config);
  NetworkHmcResult out;
  out.chains = std::move(raw.chains);
  const ParamLayout layout(spec);
  for (auto& s : raw.samples) out.ensemble.members.emplace_back(layout, std::move(s));
  return out;
}

// ---------------------------------------------------------------------------

std::vector<Eigen::VectorXd> sgld_final_iterates(
    const StochasticPotential& potential,
    const std::function<Eigen::VectorXd(std::uint64_t)>& init, int steps, double lr,
    int n_samples, std::uint64_t seed) {
  if (steps < 1 || n_samples < 1) throw ConfigError("SGLD needs steps >= 1 and n_samples >= 1");
  if (!(lr >= 0.0)) throw ConfigError("SGLD step size must be non-negative");
  return parallel_map(static_cast<std::size_t>(n_samples), [&](std::size_t s) {
    const std::uint64_t run_seed = derive_seed(seed, s);
    Rng rng(derive_seed(run_seed, 1));
    Eigen::VectorXd w = init(run_seed);
    Eigen::VectorXd grad(w.size());
    for (int t = 0; t < steps; ++t) {
      const double eta =
          lr * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(t) / steps));
      const double u = potential(w, grad, rng);
      if (!std::isfinite(u) || !grad.allFinite()) {
        throw NumericalError(fmt::format("SGLD diverged at step {} of run {}", t, s));
      }
      w -= 0.5 * eta * grad;
      if (eta > 0.0) w += std::sqrt(eta) * standard_normal(w.size(), rng);
    }
    return w;
  });
}

DiracEnsemble run_sgld(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                       const PriorSpec& prior, const TrainConfig& config, int n_samples,
                       std::uint64_t seed) {
  config.validate();
  if (config.schedule != LrSchedule::Cosine) throw ConfigError("SGLD requires the cosine schedule");
  reject_clamped_biases(spec, prior);
  data.validate();
  const Index n = data.size();
  const Index batch = (config.batch_size <= 0 || config.batch_size >= n) ? n : config.batch_size;
  const int steps = config.epochs * static_cast<int>((n + batch - 1) / batch);
  const ParamLayout layout(spec);

  StochasticPotential potential = [&](const Eigen::VectorXd& w, Eigen::VectorXd& grad, Rng& rng) {
    const ParamVector params(layout, w);
    LossResult r;
    if (batch == n) {
      r = loss_and_grad(spec, params, data.inputs, data.targets, likelihood, prior,
                        config.temperature);
    } else {
      std::vector<Index> pick(static_cast<std::size_t>(n));
      std::iota(pick.begin(), pick.end(), Index{0});
      for (Index k = 0; k < batch; ++k) {
        std::uniform_int_distribution<Index> d(k, n - 1);
        std::swap(pick[static_cast<std::size_t>(k)], pick[static_cast<std::size_t>(d(rng))]);
      }
      pick.resize(static_cast<std::size_t>(batch));
      const Dataset mb = data.rows(pick);
      r = loss_and_grad(spec, params, mb.inputs, mb.targets, likelihood, prior, config.temperature,
                        static_cast<double>(n) / static_cast<double>(batch));
    }
    grad = std::move(r.grad);
    return r.value;
  };
  auto finals = sgld_final_iterates(
      potential, [&](std::uint64_t s) { return init_params(spec, s).values(); }, steps, config.lr,
      n_samples, seed);
  DiracEnsemble out;
  for (auto& w : finals) out.members.emplace_back(layout, std::move(w));
  return out;
}

}  // namespace bmaforge
