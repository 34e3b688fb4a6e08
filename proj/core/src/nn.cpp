#include "bmaforge/nn.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/priors.hpp"
#include "bmaforge/random.hpp"

namespace bmaforge {

// ---------------------------------------------------------------------------
// Model value types

NetworkSpec NetworkSpec::mlp(std::vector<int> sizes, bool bias) {
  NetworkSpec spec;
  spec.layer_sizes = std::move(sizes);
  const auto layers = spec.layer_sizes.empty() ? 0 : spec.layer_sizes.size() - 1;
  spec.use_bias.assign(layers, bias);
  return spec;
}

bool NetworkSpec::has_any_bias() const {
  for (bool b : use_bias) {
    if (b) return true;
  }
  return false;
}

void NetworkSpec::validate() const {
  if (layer_sizes.size() < 2) {
    throw DimensionError("network needs at least an input and an output layer");
  }
  for (int s : layer_sizes) {
    if (s < 1) throw DimensionError(fmt::format("layer size {} is not positive", s));
  }
  if (use_bias.size() != layer_sizes.size() - 1) {
    throw DimensionError(fmt::format("use_bias has {} entries, expected {}", use_bias.size(),
                                     layer_sizes.size() - 1));
  }
}

Index count_params(const NetworkSpec& spec) {
  spec.validate();
  Index total = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    const Index in = spec.layer_sizes[l];
    const Index out = spec.layer_sizes[l + 1];
    total += in * out + (spec.use_bias[l] ? out : 0);
  }
  return total;
}

ParamLayout::ParamLayout(const NetworkSpec& spec) {
  spec.validate();
  Index offset = 0;
  for (int l = 0; l < spec.num_layers(); ++l) {
    LayerSlot slot;
    slot.in = spec.layer_sizes[l];
    slot.out = spec.layer_sizes[l + 1];
    slot.has_bias = spec.use_bias[l];
    slot.weight_offset = offset;
    offset += slot.weight_count();
    slot.bias_offset = offset;
    if (slot.has_bias) offset += slot.out;
    layers_.push_back(slot);
  }
  size_ = offset;
}

ParamVector::ParamVector(const NetworkSpec& spec)
    : layout_(spec), values_(Eigen::VectorXd::Zero(layout_.size())) {}

ParamVector::ParamVector(const NetworkSpec& spec, Eigen::VectorXd values)
    : ParamVector(ParamLayout(spec), std::move(values)) {}

ParamVector::ParamVector(ParamLayout layout, Eigen::VectorXd values)
    : layout_(std::move(layout)), values_(std::move(values)) {
  if (values_.size() != layout_.size()) {
    throw DimensionError(fmt::format("parameter vector has {} values, layout needs {}",
                                     values_.size(), layout_.size()));
  }
}

ParamVector::WeightMap ParamVector::weight(int l) {
  const auto& s = layout_.layer(l);
  return WeightMap(values_.data() + s.weight_offset, s.out, s.in);
}

ParamVector::ConstWeightMap ParamVector::weight(int l) const {
  const auto& s = layout_.layer(l);
  return ConstWeightMap(values_.data() + s.weight_offset, s.out, s.in);
}

ParamVector::BiasMap ParamVector::bias(int l) {
  const auto& s = layout_.layer(l);
  return BiasMap(values_.data() + s.bias_offset, s.has_bias ? s.out : 0);
}

ParamVector::ConstBiasMap ParamVector::bias(int l) const {
  const auto& s = layout_.layer(l);
  return ConstBiasMap(values_.data() + s.bias_offset, s.has_bias ? s.out : 0);
}

bool ParamVector::matches(const NetworkSpec& spec) const {
  return layout_ == ParamLayout(spec) && values_.size() == layout_.size();
}

LikelihoodSpec::LikelihoodSpec(LikelihoodKind kind, double noise_variance, int num_classes)
    : kind_(kind), noise_variance_(noise_variance), num_classes_(num_classes) {}

LikelihoodSpec LikelihoodSpec::gaussian(double noise_variance) {
  if (!(noise_variance > 0.0) || !std::isfinite(noise_variance)) {
    throw ConfigError(fmt::format("noise variance must be positive, got {}", noise_variance));
  }
  return LikelihoodSpec(LikelihoodKind::GaussianRegression, noise_variance, 0);
}

LikelihoodSpec LikelihoodSpec::categorical(int num_classes) {
  if (num_classes < 2) {
    throw ConfigError(fmt::format("categorical likelihood needs >= 2 classes, got {}", num_classes));
  }
  return LikelihoodSpec(LikelihoodKind::Categorical, 0.0, num_classes);
}

LikelihoodSpec LikelihoodSpec::powered(double exponent) const {
  if (!(exponent > 0.0) || !std::isfinite(exponent)) {
    throw ConfigError(fmt::format("likelihood exponent must be positive, got {}", exponent));
  }
  LikelihoodSpec out = *this;
  out.exponent_ = exponent_ * exponent;
  return out;
}

void LikelihoodSpec::check_compatible(const NetworkSpec& spec) const {
  if (spec.output_dim() != output_dim()) {
    throw DimensionError(fmt::format("likelihood expects output dim {}, network produces {}",
                                     output_dim(), spec.output_dim()));
  }
}

Temperature::Temperature(double t) : t_(t) {
  if (!(t > 0.0) || !std::isfinite(t)) {
    throw ConfigError(fmt::format("temperature must be positive, got {}", t));
  }
}

PriorSpec PriorSpec::isotropic(const NetworkSpec& spec, double alpha) {
  PriorSpec prior;
  prior.weight_scales.assign(static_cast<std::size_t>(spec.num_layers()), alpha);
  prior.bias_scales.assign(static_cast<std::size_t>(spec.num_layers()), alpha);
  return prior;
}

PriorSpec PriorSpec::geometric(const PriorSpec& base, double gamma) {
  PriorSpec prior = base;
  double power = 1.0;
  for (std::size_t l = 0; l < prior.weight_scales.size(); ++l) {
    power *= gamma;
    prior.weight_scales[l] *= gamma;
    prior.bias_scales[l] *= power;
  }
  return prior;
}

void PriorSpec::check_compatible(const NetworkSpec& spec) const {
  if (num_layers() != spec.num_layers() ||
      bias_scales.size() != weight_scales.size()) {
    throw DimensionError(fmt::format("prior has {} layers, network has {}", num_layers(),
                                     spec.num_layers()));
  }
  for (std::size_t l = 0; l < weight_scales.size(); ++l) {
    if (!(weight_scales[l] > 0.0)) {
      throw ConfigError(fmt::format("weight scale of layer {} must be positive", l));
    }
    if (!(bias_scales[l] >= 0.0)) {
      throw ConfigError(fmt::format("bias scale of layer {} must be non-negative", l));
    }
  }
}

// ---------------------------------------------------------------------------
// Forward / reverse passes

namespace {

void check_inputs(const NetworkSpec& spec, const ParamVector& params,
                  const Eigen::MatrixXd& inputs) {
  if (!params.matches(spec)) {
    throw DimensionError(fmt::format("parameter vector of size {} does not match the network ({})",
                                     params.size(), count_params(spec)));
  }
  if (inputs.cols() != spec.input_dim()) {
    throw DimensionError(fmt::format("inputs have {} columns, network expects {}", inputs.cols(),
                                     spec.input_dim()));
  }
}

Eigen::MatrixXd affine(const ParamVector& params, int l, const Eigen::MatrixXd& a) {
  Eigen::MatrixXd z = a * params.weight(l).transpose();
  if (params.layout().layer(l).has_bias) z.rowwise() += params.bias(l).transpose();
  return z;
}

}  // namespace

Eigen::MatrixXd forward(const NetworkSpec& spec, const ParamVector& params,
                        const Eigen::MatrixXd& inputs) {
  check_inputs(spec, params, inputs);
  Eigen::MatrixXd a = inputs;
  const int last = spec.num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    a = affine(params, l, a);
    if (l < last) a = a.cwiseMax(0.0);
  }
  return a;
}

ForwardTrace forward_trace(const NetworkSpec& spec, const ParamVector& params,
                           const Eigen::MatrixXd& inputs) {
  check_inputs(spec, params, inputs);
  ForwardTrace trace;
  trace.activations.reserve(static_cast<std::size_t>(spec.num_layers()) + 1);
  trace.activations.push_back(inputs);
  const int last = spec.num_layers() - 1;
  for (int l = 0; l <= last; ++l) {
    Eigen::MatrixXd z = affine(params, l, trace.activations.back());
    if (l < last) z = z.cwiseMax(0.0);
    trace.activations.push_back(std::move(z));
  }
  return trace;
}

void reverse_sweep(const ParamVector& params, const ForwardTrace& trace,
                   Eigen::MatrixXd d_output, const LayerGradientVisitor& visit) {
  Eigen::MatrixXd dz = std::move(d_output);
  for (int l = params.layout().num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& input = trace.activations[static_cast<std::size_t>(l)];
    visit(l, dz, input);
    if (l == 0) break;
    Eigen::MatrixXd da = dz * params.weight(l);
    // ReLU mask: the stored post-activation is positive exactly where the
    // pre-activation was.
    dz = (input.array() > 0.0).select(da, 0.0);
  }
}

Eigen::VectorXd backward(const ParamVector& params, const ForwardTrace& trace,
                         const Eigen::MatrixXd& d_output) {
  Eigen::VectorXd grad = Eigen::VectorXd::Zero(params.size());
  const ParamLayout& layout = params.layout();
  reverse_sweep(params, trace, d_output,
                [&](int l, const Eigen::MatrixXd& dz, const Eigen::MatrixXd& input) {
                  const LayerSlot& s = layout.layer(l);
                  Eigen::Map<RowMatrix>(grad.data() + s.weight_offset, s.out, s.in).noalias() =
                      dz.transpose() * input;
                  if (s.has_bias) {
                    grad.segment(s.bias_offset, s.out) = dz.colwise().sum().transpose();
                  }
                });
  return grad;
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& logits) {
  Eigen::MatrixXd p = logits;
  for (Index i = 0; i < p.rows(); ++i) {
    const double m = p.row(i).maxCoeff();
    p.row(i) = (p.row(i).array() - m).exp();
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

OutputLoss output_loss(const LikelihoodSpec& likelihood, const Eigen::MatrixXd& outputs,
                       const Eigen::VectorXd& targets) {
  if (outputs.rows() != targets.size()) {
    throw DimensionError(fmt::format("{} outputs but {} targets", outputs.rows(), targets.size()));
  }
  if (outputs.cols() != likelihood.output_dim()) {
    throw DimensionError(fmt::format("outputs have {} columns, likelihood expects {}",
                                     outputs.cols(), likelihood.output_dim()));
  }
  const Index n = outputs.rows();
  OutputLoss out;
  out.per_example.resize(n);
  out.d_output.resize(n, outputs.cols());
  if (likelihood.is_regression()) {
    const double var = likelihood.noise_variance();
    const double log_norm = 0.5 * std::log(2.0 * std::numbers::pi * var);
    for (Index i = 0; i < n; ++i) {
      const double r = outputs(i, 0) - targets[i];
      out.per_example[i] = log_norm + 0.5 * r * r / var;
      out.d_output(i, 0) = r / var;
    }
  } else {
    const int classes = likelihood.num_classes();
    for (Index i = 0; i < n; ++i) {
      const double t = targets[i];
      const int y = static_cast<int>(t);
      if (t != static_cast<double>(y) || y < 0 || y >= classes) {
        throw DimensionError(fmt::format("label {} outside [0, {})", t, classes));
      }
      const double m = outputs.row(i).maxCoeff();
      const Eigen::RowVectorXd e = (outputs.row(i).array() - m).exp();
      const double s = e.sum();
      out.per_example[i] = m + std::log(s) - outputs(i, y);
      out.d_output.row(i) = e / s;
      out.d_output(i, y) -= 1.0;
    }
  }
  return out;
}

LossResult data_loss_and_grad(const NetworkSpec& spec, const ParamVector& params,
                              const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                              const LikelihoodSpec& likelihood, double weight) {
  likelihood.check_compatible(spec);
  if (inputs.rows() == 0) throw DimensionError("empty batch");
  const ForwardTrace trace = forward_trace(spec, params, inputs);
  const OutputLoss loss = output_loss(likelihood, trace.output(), targets);
  const double coef = likelihood.exponent() * weight;
  LossResult r;
  r.data_term = coef * loss.per_example.sum();
  r.value = r.data_term;
  r.grad = backward(params, trace, coef * loss.d_output);
  if (!std::isfinite(r.value) || !r.grad.allFinite()) {
    throw NumericalError("non-finite data loss or gradient");
  }
  return r;
}

LossResult loss_and_grad(const NetworkSpec& spec, const ParamVector& params,
                         const Eigen::MatrixXd& inputs, const Eigen::VectorXd& targets,
                         const LikelihoodSpec& likelihood, const PriorSpec& prior,
                         Temperature temperature, double data_scale) {
  prior.check_compatible(spec);
  likelihood.check_compatible(spec);
  if (inputs.rows() == 0) throw DimensionError("empty batch");
  const ForwardTrace trace = forward_trace(spec, params, inputs);
  const OutputLoss loss = output_loss(likelihood, trace.output(), targets);

  // One coefficient carries exponent, temperature and minibatch scaling so
  // that (p, T) and (p^(1/T), 1) take the identical arithmetic path.
  const double coef = likelihood.exponent() / temperature.value() * data_scale;
  LossResult r;
  const double nll = loss.per_example.sum();
  r.data_term = likelihood.exponent() * data_scale * nll;
  const PriorTerm pt = prior_neg_log_density_and_grad(prior, params);
  r.prior_term = pt.value;
  r.value = coef * nll + pt.value;
  r.grad = backward(params, trace, coef * loss.d_output);
  r.grad += pt.grad;
  for (int l = 0; l < params.layout().num_layers(); ++l) {
    const LayerSlot& s = params.layout().layer(l);
    if (s.has_bias && prior.bias_scales[static_cast<std::size_t>(l)] == 0.0) {
      r.grad.segment(s.bias_offset, s.out).setZero();
    }
  }
  if (!std::isfinite(r.value) || !r.grad.allFinite()) {
    throw NumericalError(fmt::format("non-finite loss ({}) at temperature {}", r.value,
                                     temperature.value()));
  }
  return r;
}

ParamVector init_params(const NetworkSpec& spec, std::uint64_t seed) {
  ParamVector params(spec);
  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < params.layout().num_layers(); ++l) {
    const LayerSlot& s = params.layout().layer(l);
    const double scale = std::sqrt(2.0 / s.in);
    auto w = params.weight(l);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = scale * normal(rng);
  }
  return params;
}

}  // namespace bmaforge
