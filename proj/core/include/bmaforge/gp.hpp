#pragma once

// Zero-mean Gaussian processes with an RBF kernel: exact regression, prior
// sampling and variational binary classification over the latent values at
// the training inputs.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmaforge/data.hpp"
#include "bmaforge/model.hpp"

namespace bmaforge {

/// k(x, x') = s^2 exp(-|x/c - x'/c|^2 / (2 l^2)) with c = input_scale.
struct RbfKernel {
  double lengthscale = 1.0;
  double signal_variance = 1.0;
  double input_scale = 1.0;

  void validate() const;
};

Eigen::MatrixXd kernel_matrix(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

/// Median Euclidean distance over distinct row pairs (raw inputs).
double median_pairwise_distance(const Eigen::MatrixXd& x);

struct JitteredCholesky {
  Eigen::MatrixXd lower;
  double jitter = 0.0;  // added to the diagonal on top of the input matrix
};

/// Cholesky of `a`, retrying with jitter 1e-10 * scale, escalated by 10x up
/// to 1e-4 * scale. Throws NumericalError after that.
JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& a, double scale);

struct GPRegressor {
  RbfKernel kernel;
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
  double noise_variance = 0.0;
  double jitter = 0.0;
  Eigen::MatrixXd chol;   // lower factor of K + (noise + jitter) I
  Eigen::VectorXd alpha;  // (K + (noise + jitter) I)^-1 y
};

GPRegressor gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RbfKernel& kernel,
                   double noise_variance);

struct GpPrediction {
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;  // latent f, clamped at 0
  Index clamped = 0;
};

GpPrediction gp_predict(const GPRegressor& model, const Eigen::MatrixXd& x);

double gp_log_marginal(const GPRegressor& model);

/// d log p(y) / d lengthscale.
double gp_log_marginal_grad_lengthscale(const GPRegressor& model);

/// n_functions x n draws from N(0, K + jitter I).
Eigen::MatrixXd gp_sample_prior(const RbfKernel& kernel, const Eigen::MatrixXd& x, int n_functions,
                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// Variational binary classification

/// Gauss-Hermite rule for integrals against exp(-x^2).
struct GaussHermite {
  Eigen::VectorXd nodes, weights;
};

GaussHermite gauss_hermite(int n);

struct GpClassifyConfig {
  int max_iters = 500;
  double tolerance = 1e-9;  // relative ELBO change that stops the ascent
  int quadrature_nodes = 20;
};

/// q(f) = prod_i N(mean_i, var_i) over the latent values at the training
/// inputs, fit to a Bernoulli-logit likelihood.
struct GpClassifier {
  RbfKernel kernel;
  Eigen::MatrixXd inputs;
  Eigen::VectorXd mean;
  Eigen::VectorXd variance;
  Eigen::VectorXd weights;  // K^-1 mean, for the conditional mean at new inputs
  double jitter = 0.0;
  double elbo = 0.0;
  std::vector<double> elbo_trace;
  int iterations = 0;
};

/// Labels must be 0/1 with both classes present (DegenerateError otherwise).
/// Coordinate ascent on the ELBO: damped Newton steps on the means and a
/// fixed point on the variances, each accepted only if the ELBO increases.
GpClassifier gp_classify_binary(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels,
                                const RbfKernel& kernel, const GpClassifyConfig& config = {});

/// sigmoid of the conditional mean of f at `x` given the fitted means.
Eigen::VectorXd gp_classify_predict(const GpClassifier& model, const Eigen::MatrixXd& x);

/// Fraction of points where the predicted class (p >= 0.5) equals the label.
double binary_accuracy(const Eigen::VectorXd& prob, const Eigen::VectorXd& labels);

struct CorruptionRow {
  double fraction = 0.0;
  double train_acc = 0.0;
  double test_acc = 0.0;
  double evidence_estimate = 0.0;
  std::uint64_t seed = 0;
};

/// For each fraction: corrupt that fraction of the training labels, fit the
/// classifier, record accuracies and the final ELBO.
std::vector<CorruptionRow> corruption_sweep(const Dataset& train, const Dataset& test,
                                            const RbfKernel& kernel,
                                            std::span<const double> fractions, std::uint64_t seed,
                                            const GpClassifyConfig& config = {});

/// Columns fraction, train_acc, test_acc, evidence_estimate, seed.
void write_corruption_csv(std::span<const CorruptionRow> rows, const std::string& path);

}  // namespace bmaforge
