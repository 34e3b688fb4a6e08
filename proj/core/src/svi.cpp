#include <cmath>
#include <numeric>

#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/priors.hpp"

namespace bmaforge {

void SviConfig::validate() const {
  if (steps < 1) throw ConfigError("SVI needs at least one step");
  if (batch_size < 0) throw ConfigError("SVI batch size must be non-negative");
  if (!(lr > 0.0)) throw ConfigError(fmt::format("SVI step size must be positive, got {}", lr));
  if (!(final_lr_ratio > 0.0 && final_lr_ratio <= 1.0)) {
    throw ConfigError("SVI final_lr_ratio must lie in (0, 1]");
  }
  if (mc_samples < 1) throw ConfigError("SVI needs at least one Monte Carlo sample");
  if (!(init_std > 0.0)) throw ConfigError("SVI init_std must be positive");
}

namespace {

Eigen::VectorXd draw(const FactorizedGaussian& q, const Eigen::VectorXd& eps,
                     const Eigen::VectorXd& mask) {
  return q.mean.values() + (mask.array() * q.log_std.array().exp() * eps.array()).matrix();
}

void check_q(const FactorizedGaussian& q, const Eigen::VectorXd& prior_std) {
  if (q.log_std.size() != q.mean.size() || prior_std.size() != q.mean.size()) {
    throw DimensionError("variational mean, log-std and prior sizes differ");
  }
  for (Index i = 0; i < prior_std.size(); ++i) {
    if (prior_std[i] == 0.0 && q.mean.values()[i] != 0.0) {
      throw DegenerateError("a clamped bias has nonzero variational mean");
    }
  }
}

class Adam {
 public:
  explicit Adam(Index n) : m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

  void step(Eigen::VectorXd& x, const Eigen::VectorXd& g, double lr) {
    ++t_;
    m_ = kBeta1 * m_ + (1.0 - kBeta1) * g;
    v_ = kBeta2 * v_ + (1.0 - kBeta2) * g.cwiseAbs2();
    const double c1 = 1.0 - std::pow(kBeta1, t_);
    const double c2 = 1.0 - std::pow(kBeta2, t_);
    x.array() -= lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + kEps);
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  Eigen::VectorXd m_, v_;
  int t_ = 0;
};

}  // namespace

double kl_to_prior(const FactorizedGaussian& q, const PriorSpec& prior) {
  const Eigen::VectorXd s = prior_std_vector(prior, q.mean.layout());
  check_q(q, s);
  double kl = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    if (s[i] == 0.0) continue;
    const double var = std::exp(2.0 * q.log_std[i]);
    const double mu = q.mean.values()[i];
    kl += std::log(s[i]) - q.log_std[i] + (var + mu * mu) / (2.0 * s[i] * s[i]) - 0.5;
  }
  return kl;
}

double estimate_elbo(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                     const PriorSpec& prior, const FactorizedGaussian& q, Temperature temperature,
                     int samples, std::uint64_t seed) {
  if (samples < 1) throw ConfigError("ELBO estimate needs at least one sample");
  if (!q.mean.matches(spec)) throw DimensionError("variational mean does not match the network layout");
  const Eigen::VectorXd mask = free_parameter_mask(prior, q.mean.layout());
  Rng rng(seed);
  double expected = 0.0;
  for (int s = 0; s < samples; ++s) {
    const Eigen::VectorXd eps = standard_normal(q.mean.size(), rng);
    const ParamVector w(q.mean.layout(), draw(q, eps, mask));
    expected += data_loss_and_grad(spec, w, data.inputs, data.targets, likelihood,
                                   1.0 / temperature.value())
                    .value;
  }
  return -expected / samples - kl_to_prior(q, prior);
}

SviResult fit_svi(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                  const PriorSpec& prior, const SviConfig& config, const ParamVector& init) {
  if (!init.matches(spec)) throw DimensionError("SVI initial network does not match the network layout");
  FactorizedGaussian q{init, Eigen::VectorXd::Constant(init.size(), std::log(config.init_std))};
  const Eigen::VectorXd mask = free_parameter_mask(prior, init.layout());
  q.mean.values().array() *= mask.array();
  return fit_svi(spec, data, likelihood, prior, config, std::move(q));
}

SviResult fit_svi(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                  const PriorSpec& prior, const SviConfig& config, FactorizedGaussian q) {
  config.validate();
  data.validate();
  if (!q.mean.matches(spec)) throw DimensionError("variational mean does not match the network layout");
  const Eigen::VectorXd prior_std = prior_std_vector(prior, q.mean.layout());
  check_q(q, prior_std);
  const Eigen::VectorXd mask = free_parameter_mask(prior, q.mean.layout());
  Eigen::VectorXd prior_prec = Eigen::VectorXd::Zero(prior_std.size());
  for (Index i = 0; i < prior_std.size(); ++i) {
    if (prior_std[i] > 0.0) prior_prec[i] = 1.0 / (prior_std[i] * prior_std[i]);
  }

  const Index n = data.size();
  const Index batch = (config.batch_size <= 0 || config.batch_size >= n) ? n : config.batch_size;
  const double data_weight =
      static_cast<double>(n) / static_cast<double>(batch) / config.temperature.value();
  Rng rng(config.seed);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});

  Adam adam_mean(q.mean.size()), adam_log_std(q.mean.size());
  SviResult result;
  result.elbo_trace.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    const Dataset* batch_data = &data;
    Dataset mb;
    if (batch < n) {
      for (Index k = 0; k < batch; ++k) {
        std::uniform_int_distribution<Index> d(k, n - 1);
        std::swap(order[static_cast<std::size_t>(k)], order[static_cast<std::size_t>(d(rng))]);
      }
      mb = data.rows(std::span<const Index>(order.data(), static_cast<std::size_t>(batch)));
      batch_data = &mb;
    }
    const Eigen::VectorXd sigma = q.log_std.array().exp();
    Eigen::VectorXd g_mean = Eigen::VectorXd::Zero(q.mean.size());
    Eigen::VectorXd g_log_std = Eigen::VectorXd::Zero(q.mean.size());
    double expected = 0.0;
    for (int s = 0; s < config.mc_samples; ++s) {
      const Eigen::VectorXd eps = standard_normal(q.mean.size(), rng);
      const ParamVector w(q.mean.layout(), draw(q, eps, mask));
      const LossResult r = data_loss_and_grad(spec, w, batch_data->inputs, batch_data->targets,
                                              likelihood, data_weight);
      expected += r.value;
      g_mean += r.grad;
      g_log_std.array() += r.grad.array() * sigma.array() * eps.array();
    }
    const double inv = 1.0 / config.mc_samples;
    g_mean *= inv;
    g_log_std *= inv;
    // Analytic KL gradients.
    g_mean.array() += q.mean.values().array() * prior_prec.array();
    g_log_std.array() += (sigma.array().square() * prior_prec.array() - 1.0);
    g_mean.array() *= mask.array();
    g_log_std.array() *= mask.array();

    const double elbo = -expected * inv - kl_to_prior(q, prior);
    if (!std::isfinite(elbo) || !g_mean.allFinite() || !g_log_std.allFinite()) {
      throw NumericalError(fmt::format("SVI diverged at step {}", step));
    }
    result.elbo_trace.push_back(elbo);
    const double progress = static_cast<double>(step) / config.steps;
    const double lr = config.lr * (1.0 - (1.0 - config.final_lr_ratio) * progress);
    adam_mean.step(q.mean.values(), g_mean, lr);
    adam_log_std.step(q.log_std, g_log_std, lr);
  }
  result.q = std::move(q);
  return result;
}

}  // namespace bmaforge
