#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmaforge/data.hpp"
#include "bmaforge/model.hpp"

namespace bmaforge {

struct PriorTerm {
  double value = 0.0;  // -log p(w)
  Eigen::VectorXd grad;
};

/// -log p(w) and its gradient. Layers with a zero bias scale treat their
/// biases as clamped at zero: they contribute nothing and get zero gradient.
/// Throws DegenerateError when such a clamped bias is nonzero.
PriorTerm prior_neg_log_density_and_grad(const PriorSpec& prior, const ParamVector& params);

/// Exact Gaussian log density summed over layers.
double log_prior_density(const PriorSpec& prior, const ParamVector& params);

/// 0/1 mask of the parameters that are free under `prior` (clamped biases
/// are 0).
Eigen::VectorXd free_parameter_mask(const PriorSpec& prior, const ParamLayout& layout);

/// Prior standard deviation of every parameter (0 for clamped biases).
Eigen::VectorXd prior_std_vector(const PriorSpec& prior, const ParamLayout& layout);

/// E_l, eps_l ~ N(0, I) for every weight and bias.
ParamVector sample_standard_noise(const NetworkSpec& spec, std::uint64_t seed);

/// W_l = alpha_l * E_l, b_l = beta_l * eps_l.
ParamVector scale_noise(const ParamVector& noise, const PriorSpec& prior);

/// Seeded draw from the prior. Zero scales are allowed here and give zeros.
ParamVector sample_params(const NetworkSpec& spec, const PriorSpec& prior, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Output-scale identities for positively homogeneous networks

struct ScalingReport {
  double factor = 1.0;             // predicted output ratio
  double max_rel_deviation = 0.0;  // max over outputs of |lhs - factor*rhs| / |factor*rhs|
};

/// Bias-free network: outputs under weight scales {alpha_l} against
/// (prod alpha_l) times the unit-scale outputs, with shared noise.
ScalingReport verify_output_scaling(const NetworkSpec& spec, std::span<const double> scales,
                                    std::uint64_t seed, int num_inputs = 16);

/// Outputs under {gamma * base_alpha_l, gamma^l * base_beta_l} against
/// gamma^n times the outputs under the base prior, with shared noise.
ScalingReport verify_geometric_scaling(const NetworkSpec& spec, const PriorSpec& base,
                                       double gamma, std::uint64_t seed, int num_inputs = 16);

// ---------------------------------------------------------------------------
// Function-space correlations induced by the prior

/// Logit `class_index` for every input (columns) under S prior draws (rows).
/// Draw s uses seed derive_seed(seed, s).
Eigen::MatrixXd prior_logit_samples(const NetworkSpec& spec, const PriorSpec& prior,
                                    const Eigen::MatrixXd& inputs, int class_index, int samples,
                                    std::uint64_t seed);

/// Pearson correlations between the columns of `samples`. Throws
/// DegenerateError when a column has zero variance.
Eigen::MatrixXd correlation_from_samples(const Eigen::MatrixXd& samples);

struct CorrelationDiagram {
  Eigen::MatrixXd corr;
  std::vector<int> labels;
  std::vector<int> classes;   // distinct labels, in order of first appearance
  Eigen::MatrixXd block_means;  // classes x classes; diagonal blocks exclude self-pairs
  int samples = 0;

  double within_class_mean() const;
  double cross_class_mean() const;
  /// Mean over all distinct pairs.
  double mean_offdiagonal() const;
};

CorrelationDiagram prior_logit_correlation(const NetworkSpec& spec, const PriorSpec& prior,
                                           const Eigen::MatrixXd& inputs,
                                           std::span<const int> labels, int class_index,
                                           int samples, std::uint64_t seed);

CorrelationDiagram make_correlation_diagram(Eigen::MatrixXd corr, std::span<const int> labels,
                                            int samples);

/// `<stem>_matrix.csv` (row, col, label_row, label_col, corr) and `<stem>_blocks.csv`
/// (class_a, class_b, mean_corr).
void write_correlation_csv(const CorrelationDiagram& diagram, const std::string& matrix_path,
                           const std::string& blocks_path);

struct PriorPredictiveSummary {
  Eigen::MatrixXd per_sample;  // S x C, softmax averaged over the inputs
  Eigen::VectorXd average;     // mean of the rows of per_sample
};

PriorPredictiveSummary prior_predictive_summary(const NetworkSpec& spec, const PriorSpec& prior,
                                                const Eigen::MatrixXd& inputs, int samples,
                                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Correlation decay under input perturbations

enum class ReferenceModel { BNN, Linear, RBF };

struct CorrelationModel {
  ReferenceModel kind = ReferenceModel::BNN;
  NetworkSpec spec;      // BNN only
  PriorSpec prior;       // BNN only
  int class_index = 0;   // BNN only
  double lengthscale = 1.0;  // RBF only
};

struct DecayPoint {
  int level = 0;
  double mean = 0.0;
  double stddev = 0.0;  // across images
};

/// Mean (and spread over images) of corr(f(x), f(x~)) for each intensity.
/// Levels must be ascending; level 0 is the unperturbed image.
std::vector<DecayPoint> perturbation_correlation_decay(const CorrelationModel& model,
                                                       const ImageSet& images,
                                                       Perturbation perturbation,
                                                       std::span<const int> levels, int samples,
                                                       std::uint64_t seed);

/// Mean RBF correlation exp(-|x-y|^2 / 2l^2) over distinct row pairs.
double mean_rbf_correlation(double lengthscale, const Eigen::MatrixXd& points);

/// Bisection on log l until the mean pairwise RBF correlation of `points`
/// matches `target` to 1e-4.
double calibrate_rbf_lengthscale(double target, const Eigen::MatrixXd& points);

}  // namespace bmaforge
