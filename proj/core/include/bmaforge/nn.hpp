#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "bmaforge/model.hpp"

namespace bmaforge {

/// Outputs f(x; w) for every row of `inputs` (n x input_dim). Hidden layers
/// use ReLU; the output layer is linear.
Eigen::MatrixXd forward(const NetworkSpec& spec, const ParamVector& params,
                        const Eigen::MatrixXd& inputs);

/// Layer activations kept for a reverse sweep. activations[0] is the input,
/// activations[l] the post-ReLU output of hidden layer l, and the last entry
/// the network output.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations;

  const Eigen::MatrixXd& output() const { return activations.back(); }
};

ForwardTrace forward_trace(const NetworkSpec& spec, const ParamVector& params,
                           const Eigen::MatrixXd& inputs);

/// Visitor for reverse_sweep: (layer, dL/dZ for that layer, layer input).
using LayerGradientVisitor =
    std::function<void(int, const Eigen::MatrixXd&, const Eigen::MatrixXd&)>;

/// Backpropagates `d_output` (n x out) from the last layer to the first,
/// handing each layer's pre-activation gradient and input to `visit`.
void reverse_sweep(const ParamVector& params, const ForwardTrace& trace,
                   Eigen::MatrixXd d_output, const LayerGradientVisitor& visit);

/// Gradient of sum_rows <d_output, f(x)> with respect to the parameters.
Eigen::VectorXd backward(const ParamVector& params, const ForwardTrace& trace,
                         const Eigen::MatrixXd& d_output);

/// Per-row negative log-likelihood -log p(y | f) (exponent not applied) and
/// its derivative with respect to f.
struct OutputLoss {
  Eigen::VectorXd per_example;
  Eigen::MatrixXd d_output;
};

OutputLoss output_loss(const LikelihoodSpec& likelihood, const Eigen::MatrixXd& outputs,
                       const Eigen::VectorXd& targets);

struct LossResult {
  double value = 0.0;       // tempered negative log posterior (unnormalized)
  double data_term = 0.0;   // -log p^exponent(batch | w), scaled by data_scale
  double prior_term = 0.0;  // -log p(w)
  Eigen::VectorXd grad;
};

/// L(w) = (1/T) * data_scale * (-log p^exponent(batch | w)) - log p(w) and
/// its gradient. `data_scale` rescales a minibatch to the full data set
/// (N / batch size). Throws NumericalError when the loss is not finite.
LossResult loss_and_grad(const NetworkSpec& spec, const ParamVector& params,
                         const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                         const LikelihoodSpec& likelihood, const PriorSpec& prior,
                         Temperature temperature, double data_scale = 1.0);

/// Data part only: weight * sum_i -exponent * log p(y_i | x_i, w).
LossResult data_loss_and_grad(const NetworkSpec& spec, const ParamVector& params,
                              const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                              const LikelihoodSpec& likelihood, double weight);

/// He-style fan-in initialization, N(0, 2 / fan_in) weights and zero biases.
ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed);

/// Row-wise softmax.
Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits);

}  // namespace bmaforge
