#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "bmaforge/error.hpp"
#include "bmaforge/metrics.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/random.hpp"

using namespace bmaforge;

namespace {

PredictiveSamples classifier(std::vector<Eigen::MatrixXd> probs) {
  PredictiveSamples p;
  p.regression = false;
  p.inputs = Eigen::MatrixXd::Zero(probs.front().rows(), 1);
  p.probs = std::move(probs);
  return p;
}

PredictiveSamples regressor(Eigen::MatrixXd outputs, double noise) {
  PredictiveSamples p;
  p.inputs = Eigen::MatrixXd::Zero(outputs.rows(), 1);
  p.outputs = std::move(outputs);
  p.noise_variance = noise;
  return p;
}

double normal_pdf(double x, double mu, double var) {
  return std::exp(-0.5 * (x - mu) * (x - mu) / var) / std::sqrt(2.0 * std::numbers::pi * var);
}

}  // namespace

// ---------------------------------------------------------------------------
// Predictive sampling

TEST(Predictive, SingleDiracRepeatsForwardPass) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 4, 1});
  const ParamVector w = init_params(spec, 3);
  Rng rng(1);
  Eigen::MatrixXd x(6, 2);
  x.reshaped() = standard_normal(12, rng);
  const PredictiveSamples p =
      predictive_samples(spec, DiracEnsemble{{w}}, x, 5, 0, LikelihoodSpec::gaussian(0.1));
  const Eigen::MatrixXd f = forward(spec, w, x);
  ASSERT_EQ(p.draws(), 1);
  EXPECT_EQ(p.outputs.col(0), f.col(0));
}

TEST(Predictive, MixtureOfDiracsAlternatesComponents) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1});
  ParamVector a(spec), b(spec);
  a.values() << 1.0, 0.0;
  b.values() << -1.0, 0.0;
  const Mixture mix{{DiracEnsemble{{a}}, DiracEnsemble{{b}}}};
  const std::vector<ParamVector> draws = posterior_draws(mix, 6, 0);
  ASSERT_EQ(draws.size(), 6u);
  int from_a = 0;
  for (const auto& d : draws) from_a += d.values() == a.values();
  EXPECT_EQ(from_a, 3);
}

TEST(Predictive, DiracMeanIsMemberAverage) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 5, 4});
  DiracEnsemble e;
  for (std::uint64_t s = 0; s < 4; ++s) e.members.push_back(init_params(spec, s));
  Rng rng(2);
  Eigen::MatrixXd x(7, 3);
  x.reshaped() = standard_normal(21, rng);
  const PredictiveSamples p = predictive_samples(spec, e, x, 4, 0, LikelihoodSpec::categorical(4));
  Eigen::MatrixXd direct = Eigen::MatrixXd::Zero(7, 4);
  for (const auto& m : e.members) direct += softmax_rows(forward(spec, m, x));
  direct /= 4.0;
  EXPECT_LE((predictive_mean(p) - direct).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Predictive, EmptyPosteriorRejected) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1});
  EXPECT_THROW(predictive_samples(spec, DiracEnsemble{}, Eigen::MatrixXd::Zero(2, 1), 3, 0,
                                  LikelihoodSpec::gaussian(1.0)),
               ConfigError);
}

TEST(Predictive, RowsMustBeNormalized) {
  PredictiveSamples p = classifier({Eigen::MatrixXd::Constant(2, 3, 0.5)});
  EXPECT_THROW(p.validate(), DimensionError);
}

// ---------------------------------------------------------------------------
// NLL

TEST(Nll, OneHotOnTruthIsZero) {
  Eigen::MatrixXd probs = Eigen::MatrixXd::Zero(3, 3);
  probs(0, 2) = probs(1, 0) = probs(2, 1) = 1.0;
  Eigen::VectorXd y(3);
  y << 2, 0, 1;
  EXPECT_NEAR(nll(classifier({probs}), y), 0.0, 1.2e-11);
}

TEST(Nll, UniformTenClass) {
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(10, 0, 9);
  EXPECT_NEAR(nll(classifier({Eigen::MatrixXd::Constant(10, 10, 0.1)}), y), std::log(10.0), 1e-12);
  EXPECT_NEAR(std::log(10.0), 2.302585, 1e-6);
}

TEST(Nll, GaussianMixtureByHand) {
  Eigen::MatrixXd f(1, 2);
  f << 0.0, 1.0;
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(1, 0.3);
  const double expected = -std::log(0.5 * normal_pdf(0.3, 0.0, 0.5) + 0.5 * normal_pdf(0.3, 1.0, 0.5));
  EXPECT_NEAR(nll(regressor(f, 0.5), y), expected, 1e-12);
}

TEST(Nll, AveragesInProbabilitySpace) {
  Eigen::MatrixXd a(1, 2), b(1, 2);
  a << 0.9, 0.1;
  b << 0.1, 0.9;
  const Eigen::VectorXd y = Eigen::VectorXd::Zero(1);
  EXPECT_NEAR(nll(classifier({a, b}), y), std::log(2.0), 1e-12);
}

TEST(Nll, ZeroProbabilityIsClampedAndCounted) {
  Eigen::MatrixXd p(2, 2);
  p << 1.0, 0.0, 0.5, 0.5;
  Eigen::VectorXd y(2);
  y << 1, 0;
  const NllReport r = nll_report(classifier({p}), y);
  EXPECT_EQ(r.clamped, 1);
  EXPECT_TRUE(std::isfinite(r.value));
}

// ---------------------------------------------------------------------------
// Accuracy and calibration

TEST(Accuracy, PerfectAndAdversarial) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(4, 2);
  p(0, 0) = p(1, 1) = p(2, 0) = p(3, 1) = 1.0;
  Eigen::VectorXd y(4);
  y << 0, 1, 0, 1;
  EXPECT_EQ(accuracy(classifier({p}), y), 1.0);
  EXPECT_EQ(accuracy(classifier({p}), (1.0 - y.array()).matrix()), 0.0);
}

TEST(Accuracy, MatchesPerPointRecount) {
  Rng rng(5);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const int n = 200, c = 5;
  Eigen::MatrixXd p(n, c);
  for (Index i = 0; i < p.size(); ++i) p.data()[i] = u(rng);
  p = p.array().colwise() / p.rowwise().sum().array();
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y[i] = static_cast<double>(std::uniform_int_distribution<int>(0, c - 1)(rng));
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    Index best = 0;
    for (Index k = 1; k < c; ++k)
      if (p(i, k) > p(i, best)) best = k;
    hits += best == static_cast<Index>(y[i]);
  }
  EXPECT_DOUBLE_EQ(accuracy(classifier({p}), y), hits / static_cast<double>(n));
}

TEST(Ece, CalibratedOneHotIsZero) {
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(3, 2);
  p(0, 0) = p(1, 1) = p(2, 1) = 1.0;
  Eigen::VectorXd y(3);
  y << 0, 1, 1;
  EXPECT_NEAR(ece(classifier({p}), y), 0.0, 1e-15);
}

TEST(Ece, TwoPointsOneCorrect) {
  Eigen::MatrixXd p(2, 2);
  p << 0.9, 0.1, 0.9, 0.1;
  Eigen::VectorXd y(2);
  y << 0, 1;
  EXPECT_NEAR(ece(classifier({p}), y), 0.4, 1e-12);
}

TEST(Ece, SingleBinIsAccuracyMinusConfidence) {
  Eigen::MatrixXd p(3, 2);
  p << 0.6, 0.4, 0.2, 0.8, 0.7, 0.3;
  Eigen::VectorXd y(3);
  y << 0, 0, 0;
  const double acc = 2.0 / 3.0, conf = (0.6 + 0.8 + 0.7) / 3.0;
  EXPECT_NEAR(ece(classifier({p}), y, 1), std::abs(acc - conf), 1e-12);
}

// ---------------------------------------------------------------------------
// Wasserstein

TEST(Wasserstein, IdenticalSamplesAreZero) {
  const std::vector<double> a{0.3, -1.2, 4.0};
  EXPECT_EQ(wasserstein1(a, a), 0.0);
}

TEST(Wasserstein, PointMasses) {
  const std::vector<double> a{2.0}, b{5.0};
  EXPECT_DOUBLE_EQ(wasserstein1(a, b), 3.0);
}

TEST(Wasserstein, MatchesExhaustiveAssignment) {
  Rng rng(7);
  std::normal_distribution<double> n(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> a(5), b(5);
    for (auto& v : a) v = n(rng);
    for (auto& v : b) v = 2.0 * n(rng) + 0.5;
    std::vector<int> perm(5);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
      double cost = 0.0;
      for (int i = 0; i < 5; ++i) cost += std::abs(a[i] - b[perm[i]]);
      best = std::min(best, cost / 5.0);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_NEAR(wasserstein1(a, b), best, 1e-9);
  }
}

TEST(Wasserstein, UnequalSizes) {
  // CDF gap 1/2 on [0, 1], then 0.
  const std::vector<double> a{0.0, 1.0}, b{1.0};
  EXPECT_NEAR(wasserstein1(a, b), 0.5, 1e-15);
}

TEST(Wasserstein, PredictiveGridsMustMatch) {
  PredictiveSamples a = regressor(Eigen::MatrixXd::Zero(3, 2), 0.1);
  PredictiveSamples b = regressor(Eigen::MatrixXd::Zero(3, 2), 0.1);
  b.inputs(1, 0) = 1.0;
  EXPECT_THROW(wasserstein1_predictive(a, b), DimensionError);
}

// ---------------------------------------------------------------------------
// Bands and summaries

TEST(Band, SingleDiracHasZeroWidthWithoutNoise) {
  Eigen::MatrixXd f(2, 1);
  f << 0.4, -1.0;
  BandOptions o;
  o.include_noise = false;
  const Band b = predictive_band(regressor(f, 0.3), o);
  EXPECT_EQ(b.lower, b.upper);
  EXPECT_EQ(b.mean, f.col(0));
  o.include_noise = true;
  const Band wide = predictive_band(regressor(f, 0.3), o);
  EXPECT_NEAR(wide.upper[0] - wide.lower[0], 6.0 * std::sqrt(0.3), 1e-12);
}

TEST(Band, MixtureSigmaFromTotalVariance) {
  Eigen::MatrixXd f(1, 3);
  f << 1.0, 2.0, 6.0;
  const double mean = 3.0, spread = (4.0 + 1.0 + 9.0) / 3.0;
  BandOptions o;
  o.k = 2.0;
  const Band b = predictive_band(regressor(f, 0.5), o);
  EXPECT_NEAR(b.upper[0], mean + 2.0 * std::sqrt(spread + 0.5), 1e-12);
}

TEST(Band, SymmetricQuantiles) {
  Eigen::MatrixXd f(1, 2);
  f << -1.0, 1.0;
  BandOptions o;
  o.mode = BandMode::Quantile;
  o.lower_q = 0.25;
  o.upper_q = 0.75;
  const Band b = predictive_band(regressor(f, 0.1), o);
  EXPECT_EQ(b.lower[0], -1.0);
  EXPECT_EQ(b.upper[0], 1.0);
}

TEST(Summary, MedianAndStandardError) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  const std::vector<double> v{1.0, 2.0, 3.0, 4.0};
  EXPECT_NEAR(standard_error(v), std::sqrt(5.0 / 3.0 / 4.0), 1e-15);
  EXPECT_EQ(standard_error(std::vector<double>{7.0}), 0.0);
  EXPECT_THROW(median({}), ConfigError);
}

TEST(Records, JsonFieldsAndOptionalHash) {
  MetricRecord r{"nll", 0.25, 10, "multiswag", 3, ""};
  const auto j = nlohmann::json::parse(to_json(r));
  EXPECT_EQ(j.at("metric"), "nll");
  EXPECT_EQ(j.at("J"), 10);
  EXPECT_EQ(j.at("seed"), 3);
  EXPECT_FALSE(j.contains("config_hash"));
  r.config_hash = "00ff";
  EXPECT_EQ(nlohmann::json::parse(to_json(r)).at("config_hash"), "00ff");
}
