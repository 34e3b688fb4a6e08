#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/parallel.hpp"

namespace bmaforge {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError(fmt::format("epochs must be >= 1, got {}", epochs));
  if (!(lr > 0.0)) throw ConfigError(fmt::format("learning rate must be positive, got {}", lr));
  if (batch_size < 0) throw ConfigError("batch size must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (!(final_lr_ratio > 0.0 && final_lr_ratio <= 1.0)) {
    throw ConfigError("final_lr_ratio must lie in (0, 1]");
  }
  if (!(clip_norm >= 0.0)) throw ConfigError("clip_norm must be non-negative");
}

double learning_rate(const TrainConfig& config, double progress) {
  const double p = std::clamp(progress, 0.0, 1.0);
  switch (config.schedule) {
    case LrSchedule::ConstantThenDecay:
      if (p < 0.5) return config.lr;
      if (p < 0.9) return config.lr * (1.0 - (1.0 - config.final_lr_ratio) * (p - 0.5) / 0.4);
      return config.lr * config.final_lr_ratio;
    case LrSchedule::Cosine:
      return config.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
  }
  return config.lr;
}

namespace {

/// Row-gathering minibatch iterator over a shuffled epoch order.
class Batcher {
 public:
  Batcher(const Dataset& data, int batch_size, std::uint64_t seed)
      : data_(data), rng_(seed), order_(static_cast<std::size_t>(data.size())) {
    const Index n = data.size();
    batch_ = (batch_size <= 0 || batch_size >= n) ? n : batch_size;
    std::iota(order_.begin(), order_.end(), Index{0});
  }

  Index batch_size() const { return batch_; }
  bool full_batch() const { return batch_ == data_.size(); }
  Index batches_per_epoch() const { return (data_.size() + batch_ - 1) / batch_; }

  void shuffle() {
    if (!full_batch()) std::shuffle(order_.begin(), order_.end(), rng_);
  }

  /// Fills `x`, `y` with batch `b` of the current epoch order.
  void gather(Index b, Eigen::MatrixXd& x, Eigen::VectorXd& y) const {
    const Index start = b * batch_;
    const Index len = std::min(batch_, data_.size() - start);
    x.resize(len, data_.dim());
    y.resize(len);
    for (Index k = 0; k < len; ++k) {
      const Index i = order_[static_cast<std::size_t>(start + k)];
      x.row(k) = data_.inputs.row(i);
      y[k] = data_.targets[i];
    }
  }

 private:
  const Dataset& data_;
  Rng rng_;
  std::vector<Index> order_;
  Index batch_ = 1;
};

}  // namespace

TrainResult train_sgd(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config, const ParamVector& init,
                      const EpochHook& hook) {
  config.validate();
  data.validate();
  if (!init.matches(spec)) throw DimensionError("initial parameters do not match the network");

  const double n = static_cast<double>(data.size());
  Batcher batcher(data, config.batch_size, derive_seed(config.seed, 7));
  const Index per_epoch = batcher.batches_per_epoch();
  const double total_steps = static_cast<double>(per_epoch) * config.epochs;

  TrainResult result;
  result.params = init;
  Eigen::VectorXd velocity = Eigen::VectorXd::Zero(init.size());
  Eigen::MatrixXd xb;
  Eigen::VectorXd yb;
  Index step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    batcher.shuffle();
    double epoch_loss = 0.0;
    for (Index b = 0; b < per_epoch; ++b, ++step) {
      LossResult lr;
      try {
        if (batcher.full_batch()) {
          lr = loss_and_grad(spec, result.params, data.inputs, data.targets, likelihood, prior,
                             config.temperature);
        } else {
          batcher.gather(b, xb, yb);
          lr = loss_and_grad(spec, result.params, xb, yb, likelihood, prior, config.temperature,
                             n / static_cast<double>(xb.rows()));
        }
      } catch (const NumericalError& e) {
        throw NumericalError(fmt::format("SGD diverged at epoch {}: {}", epoch, e.what()));
      }
      const double eta = learning_rate(config, static_cast<double>(step) / total_steps);
      Eigen::VectorXd& g = lr.grad;
      g /= n;
      if (config.clip_norm > 0.0) {
        const double norm = g.norm();
        if (norm > config.clip_norm) g *= config.clip_norm / norm;
      }
      velocity = config.momentum * velocity - eta * g;
      result.params.values() += velocity;
      epoch_loss += lr.value / n;
    }
    if (!result.params.values().allFinite()) {
      throw NumericalError(fmt::format("SGD diverged at epoch {}", epoch));
    }
    result.loss_trace.push_back(epoch_loss / static_cast<double>(per_epoch));
    if (hook) hook(epoch, result.params);
  }
  return result;
}

TrainResult train_map(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config) {
  return train_sgd(spec, data, likelihood, prior, config, init_params(spec, config.seed));
}

DiracEnsemble deep_ensemble(const NetworkSpec& spec, const Dataset& data,
                            const LikelihoodSpec& likelihood, const PriorSpec& prior,
                            const TrainConfig& config, int members) {
  if (members < 1) throw ConfigError("an ensemble needs at least one member");
  DiracEnsemble ensemble;
  ensemble.members = parallel_map(static_cast<std::size_t>(members), [&](std::size_t j) {
    TrainConfig c = config;
    c.seed = member_seed(config.seed, j);
    return train_map(spec, data, likelihood, prior, c).params;
  });
  return ensemble;
}

std::string posterior_tag(const PosteriorApprox& posterior) {
  struct Visitor {
    std::string operator()(const DiracEnsemble& e) const {
      return fmt::format("dirac-ensemble[{}]", e.members.size());
    }
    std::string operator()(const FactorizedGaussian&) const { return "factorized-gaussian"; }
    std::string operator()(const SwagGaussian& s) const { return fmt::format("swag[K={}]", s.rank()); }
    std::string operator()(const Mixture& m) const {
      return fmt::format("mixture[{}]", m.components.size());
    }
  };
  return std::visit(Visitor{}, posterior);
}

}  // namespace bmaforge
