#include <cmath>

#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/parallel.hpp"

namespace bmaforge {

void SwaAccumulator::add(const Eigen::VectorXd& iterate) {
  if (count_ == 0) {
    mean_ = iterate;
  } else {
    if (iterate.size() != mean_.size()) throw DimensionError("iterate size changed");
    mean_ += (iterate - mean_) / static_cast<double>(count_ + 1);
  }
  ++count_;
}

SwagAccumulator::SwagAccumulator(int rank) : rank_(rank) {
  if (rank < 1) throw ConfigError(fmt::format("SWAG rank must be >= 1, got {}", rank));
}

void SwagAccumulator::add(const Eigen::VectorXd& iterate) {
  const Eigen::VectorXd sq = iterate.array().square();
  if (swa_.count() == 0) {
    second_moment_ = sq;
  } else {
    second_moment_ += (sq - second_moment_) / static_cast<double>(swa_.count() + 1);
  }
  swa_.add(iterate);
  Eigen::VectorXd dev = iterate - swa_.mean();
  if (deviations_.size() < static_cast<std::size_t>(rank_)) {
    deviations_.push_back(std::move(dev));
  } else {
    deviations_[next_slot_] = std::move(dev);
    next_slot_ = (next_slot_ + 1) % deviations_.size();
  }
}

SwagGaussian SwagAccumulator::finalize(const ParamLayout& layout) const {
  if (count() < rank_ + 1) {
    throw ConfigError(fmt::format("SWAG rank {} needs at least {} collected iterates, got {}",
                                  rank_, rank_ + 1, count()));
  }
  SwagGaussian g;
  g.mean = ParamVector(layout, swa_.mean());
  g.diag_variance = (second_moment_ - swa_.mean().cwiseAbs2()).cwiseMax(0.0);
  g.deviations.resize(swa_.mean().size(), rank_);
  for (int k = 0; k < rank_; ++k) {
    const std::size_t slot = (next_slot_ + static_cast<std::size_t>(k)) % deviations_.size();
    g.deviations.col(k) = deviations_[slot];
  }
  return g;
}

Eigen::MatrixXd SwagGaussian::covariance() const {
  Eigen::MatrixXd cov = 0.5 * Eigen::MatrixXd(diag_variance.asDiagonal());
  if (rank() >= 2) cov += deviations * deviations.transpose() / (2.0 * (rank() - 1));
  return cov;
}

namespace {

void check_collect_start(const TrainConfig& config, int collect_start) {
  if (collect_start < 0 || collect_start >= config.epochs) {
    throw ConfigError(fmt::format("collection start {} must lie in [0, epochs = {})", collect_start,
                                  config.epochs));
  }
}

}  // namespace

ParamVector train_swa(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config, int collect_start) {
  check_collect_start(config, collect_start);
  SwaAccumulator swa;
  train_sgd(spec, data, likelihood, prior, config, init_params(spec, config.seed),
            [&](int epoch, const ParamVector& w) {
              if (epoch >= collect_start) swa.add(w.values());
            });
  return ParamVector(ParamLayout(spec), swa.mean());
}

SwagGaussian fit_swag(const NetworkSpec& spec, const Dataset& data, const LikelihoodSpec& likelihood,
                      const PriorSpec& prior, const TrainConfig& config, int collect_start,
                      int rank) {
  check_collect_start(config, collect_start);
  if (config.epochs - collect_start < rank + 1) {
    throw ConfigError(fmt::format("{} collection epochs cannot support SWAG rank {}",
                                  config.epochs - collect_start, rank));
  }
  SwagAccumulator acc(rank);
  train_sgd(spec, data, likelihood, prior, config, init_params(spec, config.seed),
            [&](int epoch, const ParamVector& w) {
              if (epoch >= collect_start) acc.add(w.values());
            });
  return acc.finalize(ParamLayout(spec));
}

ParamVector sample_swag(const SwagGaussian& swag, std::uint64_t seed) {
  const int k = swag.rank();
  if (k < 2) throw ConfigError(fmt::format("sampling SWAG needs rank >= 2, got {}", k));
  Rng rng(seed);
  const Eigen::VectorXd z1 = standard_normal(swag.mean.size(), rng);
  const Eigen::VectorXd z2 = standard_normal(k, rng);
  Eigen::VectorXd w = swag.mean.values() +
                      std::sqrt(0.5) * swag.diag_variance.cwiseSqrt().cwiseProduct(z1) +
                      swag.deviations * z2 / std::sqrt(2.0 * (k - 1));
  return ParamVector(swag.mean.layout(), std::move(w));
}

ParamVector sample_factorized(const FactorizedGaussian& q, std::uint64_t seed) {
  Rng rng(seed);
  const Eigen::VectorXd z = standard_normal(q.mean.size(), rng);
  return ParamVector(q.mean.layout(),
                     q.mean.values() + q.log_std.array().exp().matrix().cwiseProduct(z));
}

DiracEnsemble draw_from_swag_mixture(const Mixture& mixture, int samples_per, std::uint64_t seed) {
  if (samples_per < 1) throw ConfigError("samples per SWAG model must be >= 1");
  DiracEnsemble out;
  for (std::size_t m = 0; m < mixture.components.size(); ++m) {
    const auto* swag = std::get_if<SwagGaussian>(&mixture.components[m]);
    if (swag == nullptr) throw ConfigError("mixture component is not a SWAG Gaussian");
    for (int s = 0; s < samples_per; ++s) {
      out.members.push_back(
          sample_swag(*swag, derive_seed(member_seed(seed, m), static_cast<std::uint64_t>(s))));
    }
  }
  return out;
}

MultiSwagResult multi_swag(const NetworkSpec& spec, const Dataset& data,
                           const LikelihoodSpec& likelihood, const PriorSpec& prior,
                           const TrainConfig& config, int models, int samples_per, int rank,
                           int collect_start) {
  if (models < 1) throw ConfigError("MultiSWAG needs at least one model");
  auto fits = parallel_map(static_cast<std::size_t>(models), [&](std::size_t m) {
    TrainConfig c = config;
    c.seed = member_seed(config.seed, m);
    return fit_swag(spec, data, likelihood, prior, c, collect_start, rank);
  });
  MultiSwagResult result;
  for (auto& f : fits) result.mixture.components.emplace_back(std::move(f));
  result.samples = draw_from_swag_mixture(result.mixture, samples_per, config.seed);
  return result;
}

DiracEnsemble multi_swa(const NetworkSpec& spec, const Dataset& data,
                        const LikelihoodSpec& likelihood, const PriorSpec& prior,
                        const TrainConfig& config, int models, int collect_start) {
  if (models < 1) throw ConfigError("MultiSWA needs at least one model");
  DiracEnsemble out;
  out.members = parallel_map(static_cast<std::size_t>(models), [&](std::size_t m) {
    TrainConfig c = config;
    c.seed = member_seed(config.seed, m);
    return train_swa(spec, data, likelihood, prior, c, collect_start);
  });
  return out;
}

}  // namespace bmaforge
