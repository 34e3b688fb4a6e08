#pragma once

// Value types shared by every module: network architecture, flattened
// parameters with their layer layout, likelihood, prior scales, temperature.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace bmaforge {

using Index = Eigen::Index;
using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Activation { ReLU };

/// Fully connected architecture. `layer_sizes` = {input, hidden..., output};
/// `use_bias[l]` applies to weight layer l (there are layer_sizes.size()-1).
/// A spec with no hidden layer is a plain linear model.
struct NetworkSpec {
  std::vector<int> layer_sizes;
  Activation activation = Activation::ReLU;
  std::vector<bool> use_bias;

  static NetworkSpec mlp(std::vector<int> sizes, bool bias = true);

  int num_layers() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  bool has_any_bias() const;

  /// Throws DimensionError on an ill-formed spec.
  void validate() const;

  bool operator==(const NetworkSpec&) const = default;
};

Index count_params(const NetworkSpec& spec);

struct LayerSlot {
  int in = 0;
  int out = 0;
  Index weight_offset = 0;
  Index bias_offset = 0;  // meaningful only when has_bias
  bool has_bias = false;

  Index weight_count() const { return Index{in} * out; }
  bool operator==(const LayerSlot&) const = default;
};

/// Offsets of each layer's weight matrix (row-major, out x in) followed by
/// its bias vector inside the flat parameter array.
class ParamLayout {
 public:
  ParamLayout() = default;
  explicit ParamLayout(const NetworkSpec& spec);

  Index size() const { return size_; }
  int num_layers() const { return static_cast<int>(layers_.size()); }
  const LayerSlot& layer(int l) const { return layers_[static_cast<std::size_t>(l)]; }
  const std::vector<LayerSlot>& layers() const { return layers_; }

  bool operator==(const ParamLayout&) const = default;

 private:
  std::vector<LayerSlot> layers_;
  Index size_ = 0;
};

/// Flattened network weights together with the layout that gives them
/// structure.
class ParamVector {
 public:
  using WeightMap = Eigen::Map<RowMatrix>;
  using ConstWeightMap = Eigen::Map<const RowMatrix>;
  using BiasMap = Eigen::Map<Eigen::VectorXd>;
  using ConstBiasMap = Eigen::Map<const Eigen::VectorXd>;

  ParamVector() = default;
  explicit ParamVector(const NetworkSpec& spec);
  ParamVector(const NetworkSpec& spec, Eigen::VectorXd values);
  ParamVector(ParamLayout layout, Eigen::VectorXd values);

  const ParamLayout& layout() const { return layout_; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  Index size() const { return values_.size(); }

  WeightMap weight(int l);
  ConstWeightMap weight(int l) const;
  BiasMap bias(int l);
  ConstBiasMap bias(int l) const;

  bool matches(const NetworkSpec& spec) const;

 private:
  ParamLayout layout_;
  Eigen::VectorXd values_;
};

enum class LikelihoodKind { GaussianRegression, Categorical };

/// Observation model p(y | f(x; w)), optionally raised to a power.
/// `exponent` != 1 gives the likelihood p^exponent; with exponent 1/T it
/// reproduces a temperature-T posterior as an ordinary (T = 1) posterior.
class LikelihoodSpec {
 public:
  static LikelihoodSpec gaussian(double noise_variance);
  static LikelihoodSpec categorical(int num_classes);

  /// Same observation model with its density raised to `exponent`.
  LikelihoodSpec powered(double exponent) const;

  LikelihoodKind kind() const { return kind_; }
  bool is_regression() const { return kind_ == LikelihoodKind::GaussianRegression; }
  double noise_variance() const { return noise_variance_; }
  int num_classes() const { return num_classes_; }
  double exponent() const { return exponent_; }
  int output_dim() const { return is_regression() ? 1 : num_classes_; }

  void check_compatible(const NetworkSpec& spec) const;

 private:
  LikelihoodSpec(LikelihoodKind kind, double noise_variance, int num_classes);

  LikelihoodKind kind_;
  double noise_variance_ = 0.0;
  int num_classes_ = 0;
  double exponent_ = 1.0;
};

class Temperature {
 public:
  Temperature() = default;
  explicit Temperature(double t);
  double value() const { return t_; }

 private:
  double t_ = 1.0;
};

/// Per-layer isotropic Gaussian prior: W_l ~ N(0, weight_scales[l]^2 I),
/// b_l ~ N(0, bias_scales[l]^2 I). A zero bias scale clamps that layer's
/// biases to zero.
struct PriorSpec {
  std::vector<double> weight_scales;
  std::vector<double> bias_scales;

  /// alpha for every weight and every bias.
  static PriorSpec isotropic(const NetworkSpec& spec, double alpha);
  /// alpha_l = gamma * base_alpha_l, beta_l = gamma^(l+1) * base_beta_l.
  static PriorSpec geometric(const PriorSpec& base, double gamma);

  int num_layers() const { return static_cast<int>(weight_scales.size()); }
  void check_compatible(const NetworkSpec& spec) const;
};

}  // namespace bmaforge
