#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/priors.hpp"

namespace bmaforge {

namespace {

/// Adds sum_n (per-example gradient)^2 for the rows of `trace` given the
/// per-example output gradients, using (dZ o dZ)^T (A o A) per layer.
void accumulate_squared_grads(const ParamVector& params, const ForwardTrace& trace,
                              Eigen::MatrixXd d_output, double scale, Eigen::VectorXd& acc) {
  const ParamLayout& layout = params.layout();
  reverse_sweep(params, trace, std::move(d_output),
                [&](int l, const Eigen::MatrixXd& dz, const Eigen::MatrixXd& a) {
                  const LayerSlot& s = layout.layer(l);
                  const Eigen::MatrixXd dz2 = dz.cwiseAbs2();
                  const RowMatrix w2 = dz2.transpose() * a.cwiseAbs2();
                  acc.segment(s.weight_offset, s.weight_count()) +=
                      scale * Eigen::Map<const Eigen::VectorXd>(w2.data(), s.weight_count());
                  if (s.has_bias) acc.segment(s.bias_offset, s.out) += scale * dz2.colwise().sum().transpose();
                });
}

}  // namespace

LaplaceResult laplace_log_marginal(const NetworkSpec& spec, const ParamVector& mode,
                                   const Dataset& data, const LikelihoodSpec& likelihood,
                                   const PriorSpec& prior, const LaplaceOptions& options) {
  spec.validate();
  prior.check_compatible(spec);
  likelihood.check_compatible(spec);
  data.validate();
  if (!mode.matches(spec)) throw DimensionError("Laplace mode does not match the network layout");
  if (!(options.epsilon >= 0.0)) throw ConfigError("Laplace epsilon must be non-negative");
  if (options.fisher_batch < 0) throw ConfigError("Laplace fisher_batch must be non-negative");

  const Index n = data.size();
  const double kappa = likelihood.exponent();
  LaplaceResult result;

  const ForwardTrace full = forward_trace(spec, mode, data.inputs);
  result.log_likelihood = -kappa * output_loss(likelihood, full.output(), data.targets).per_example.sum();
  result.log_prior = log_prior_density(prior, mode);

  // Curvature rows: all points, or a seeded subset rescaled to N.
  const ForwardTrace* trace = &full;
  const Eigen::VectorXd* targets = &data.targets;
  ForwardTrace sub;
  Dataset sub_data;
  double scale = kappa;
  if (options.fisher_batch > 0 && options.fisher_batch < n) {
    std::vector<Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Index{0});
    Rng rng(options.seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(static_cast<std::size_t>(options.fisher_batch));
    sub_data = data.rows(order);
    sub = forward_trace(spec, mode, sub_data.inputs);
    trace = &sub;
    targets = &sub_data.targets;
    scale *= static_cast<double>(n) / static_cast<double>(options.fisher_batch);
    result.exact_fisher = false;
  }

  Eigen::VectorXd curv = Eigen::VectorXd::Zero(mode.size());
  const Index rows = trace->output().rows();
  if (options.curvature == Curvature::EmpiricalFisher) {
    accumulate_squared_grads(mode, *trace, output_loss(likelihood, trace->output(), *targets).d_output,
                             scale, curv);
  } else if (likelihood.is_regression()) {
    // E[(r / s^2)^2] = 1 / s^2, so the expected gradient is J / s.
    accumulate_squared_grads(mode, *trace,
                             Eigen::MatrixXd::Constant(rows, 1, 1.0 / std::sqrt(likelihood.noise_variance())),
                             scale, curv);
  } else {
    const Eigen::MatrixXd p = softmax_rows(trace->output());
    for (int c = 0; c < likelihood.num_classes(); ++c) {
      Eigen::MatrixXd d = p;
      d.col(c).array() -= 1.0;
      d.array().colwise() *= p.col(c).array().sqrt();
      accumulate_squared_grads(mode, *trace, std::move(d), scale, curv);
    }
  }

  const Eigen::VectorXd prior_std = prior_std_vector(prior, mode.layout());
  Index dim = 0;
  double log_det = 0.0;
  std::vector<double> kept;
  for (Index i = 0; i < mode.size(); ++i) {
    if (prior_std[i] == 0.0) continue;
    const double h = std::max(curv[i], options.epsilon) + 1.0 / (prior_std[i] * prior_std[i]);
    kept.push_back(h);
    log_det += std::log(h);
    ++dim;
  }
  result.dim = dim;
  result.curvature = Eigen::Map<const Eigen::VectorXd>(kept.data(), static_cast<Index>(kept.size()));
  result.log_marginal = result.log_likelihood + result.log_prior +
                        0.5 * static_cast<double>(dim) * std::log(2.0 * std::numbers::pi) -
                        0.5 * log_det;
  if (!std::isfinite(result.log_marginal)) throw NumericalError("non-finite Laplace evidence");
  return result;
}

}  // namespace bmaforge
