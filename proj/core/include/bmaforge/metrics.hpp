#pragma once

// Monte Carlo Bayesian model average and evaluation metrics.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmaforge/inference.hpp"
#include "bmaforge/model.hpp"

namespace bmaforge {

/// J sampled predictions at every test input. Regression keeps the network
/// outputs f(x; w_j) (n x J) together with the observation noise variance;
/// classification keeps one n x C softmax matrix per draw.
struct PredictiveSamples {
  Eigen::MatrixXd inputs;
  bool regression = true;
  Eigen::MatrixXd outputs;               // regression: n x J
  double noise_variance = 0.0;           // regression
  std::vector<Eigen::MatrixXd> probs;    // classification: J entries, n x C
  std::string posterior_tag;

  Index size() const { return inputs.rows(); }
  int draws() const {
    return regression ? static_cast<int>(outputs.cols()) : static_cast<int>(probs.size());
  }
  /// Throws DimensionError on inconsistent shapes or rows not summing to 1.
  void validate() const;
  /// Predictive from draws [0, j) only.
  PredictiveSamples first(int j) const;
};

/// Parameter draws: the members of a DiracEnsemble (J ignored), J seeded
/// samples of a Gaussian, or, for a mixture, draw j from component j mod M
/// (Dirac components cycle through their members).
std::vector<ParamVector> posterior_draws(const PosteriorApprox& posterior, int draws,
                                         std::uint64_t seed);

/// Throws ConfigError for an empty posterior or J < 1.
PredictiveSamples predictive_samples(const NetworkSpec& spec, const PosteriorApprox& posterior,
                                     const Eigen::MatrixXd& inputs, int draws, std::uint64_t seed,
                                     const LikelihoodSpec& likelihood);

/// Predictive from explicit parameter draws.
PredictiveSamples predictive_from_draws(const NetworkSpec& spec, std::span<const ParamVector> draws,
                                        const Eigen::MatrixXd& inputs,
                                        const LikelihoodSpec& likelihood, std::string tag);

/// Mean predictive: n x 1 (regression mean) or n x C.
Eigen::MatrixXd predictive_mean(const PredictiveSamples& pred);

struct NllReport {
  double value = 0.0;
  Index clamped = 0;  // points whose predictive density fell below 1e-12
};

/// Mean over points of -log((1/J) sum_j p(y | x, w_j)), averaging in
/// probability space with log-sum-exp.
NllReport nll_report(const PredictiveSamples& pred, const Eigen::VectorXd& targets);
double nll(const PredictiveSamples& pred, const Eigen::VectorXd& targets);

/// Argmax of the mean predictive against the labels; ties go to the lowest
/// class index.
double accuracy(const PredictiveSamples& pred, const Eigen::VectorXd& targets);

/// Expected calibration error over equal-width confidence bins.
double ece(const PredictiveSamples& pred, const Eigen::VectorXd& targets, int n_bins = 10);

/// 1-D W1 between two empirical distributions: integral of |F_a - F_b|.
double wasserstein1(std::span<const double> a, std::span<const double> b);

struct W1Result {
  double mean = 0.0;
  Eigen::VectorXd per_location;
};

/// W1 between the sampled network outputs at each input, averaged over
/// inputs. Throws DimensionError if the input grids differ.
W1Result wasserstein1_predictive(const PredictiveSamples& a, const PredictiveSamples& b);

enum class BandMode { Sigma, Quantile };

struct BandOptions {
  BandMode mode = BandMode::Sigma;
  double k = 3.0;            // Sigma: mean +- k * std of the Gaussian mixture
  bool include_noise = true;  // Sigma: add the observation noise variance
  double lower_q = 0.025;    // Quantile
  double upper_q = 0.975;
};

struct Band {
  Eigen::VectorXd mean, lower, upper;
};

/// Regression only. Quantiles are empirical (inverse CDF) over the sampled
/// outputs.
Band predictive_band(const PredictiveSamples& pred, const BandOptions& options = {});

/// Empirical p-quantile: the smallest sample x with F(x) >= p.
double empirical_quantile(std::vector<double> values, double p);

/// Median (mean of the two middle values for even sizes).
double median(std::vector<double> values);
/// Sample standard deviation over sqrt(n); 0 when n < 2.
double standard_error(std::span<const double> values);

// ---------------------------------------------------------------------------
// Records

struct MetricRecord {
  std::string metric;
  double value = 0.0;
  int draws = 0;
  std::string posterior_tag;
  std::uint64_t seed = 0;
  std::string config_hash;  // emitted only when nonempty
};

/// One-line JSON object {"metric", "value", "J", "posterior_tag", "seed"},
/// plus "config_hash" when set.
std::string to_json(const MetricRecord& record);

/// CSV with columns x, w1.
void write_w1_csv(const Eigen::VectorXd& x, const Eigen::VectorXd& w1, const std::string& path);

}  // namespace bmaforge
