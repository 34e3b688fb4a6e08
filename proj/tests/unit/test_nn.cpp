#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "bmaforge/error.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/priors.hpp"
#include "bmaforge/random.hpp"

using namespace bmaforge;

namespace {

Eigen::MatrixXd gaussian_matrix(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd m(r, c);
  m.reshaped() = standard_normal(r * c, rng);
  return m;
}

}  // namespace

TEST(ParamCount, SingleUnitWithBias) { EXPECT_EQ(count_params(NetworkSpec::mlp({1, 1})), 2); }

TEST(ParamCount, ThreeHiddenLayers) {
  // 2*10+10 + 10*10+10 + 10*10+10 + 10*1+1
  EXPECT_EQ(count_params(NetworkSpec::mlp({2, 10, 10, 10, 1})), 261);
}

TEST(ParamCount, BiasFree) { EXPECT_EQ(count_params(NetworkSpec::mlp({3, 4}, false)), 12); }

TEST(NetworkSpec, RejectsDegenerateShapes) {
  EXPECT_THROW(NetworkSpec::mlp({3}).validate(), DimensionError);
  EXPECT_THROW(NetworkSpec::mlp({3, 0, 1}).validate(), DimensionError);
}

TEST(ParamLayout, WeightsThenBiasPerLayer) {
  const ParamLayout layout(NetworkSpec::mlp({3, 4, 2}));
  ASSERT_EQ(layout.num_layers(), 2);
  EXPECT_EQ(layout.layer(0).weight_offset, 0);
  EXPECT_EQ(layout.layer(0).bias_offset, 12);
  EXPECT_EQ(layout.layer(1).weight_offset, 16);
  EXPECT_EQ(layout.layer(1).bias_offset, 24);
  EXPECT_EQ(layout.size(), 26);
}

TEST(Forward, ZeroNetworkGivesZeroOutput) {
  const NetworkSpec spec = NetworkSpec::mlp({4, 7, 3});
  const ParamVector w(spec);
  const Eigen::MatrixXd out = forward(spec, w, gaussian_matrix(5, 4, 1));
  EXPECT_TRUE(out.isZero(0.0));
}

TEST(Forward, SingleLinearLayerByHand) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1});
  ParamVector w(spec);
  w.weight(0)(0, 0) = 2.0;
  w.bias(0)[0] = 1.0;
  Eigen::MatrixXd x(1, 1);
  x << 3.0;
  EXPECT_EQ(forward(spec, w, x)(0, 0), 7.0);
}

TEST(Forward, ReluClipsHiddenUnits) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 2, 1}, false);
  ParamVector w(spec);
  w.weight(0) << 1.0, -1.0;
  w.weight(1) << 1.0, 1.0;
  Eigen::MatrixXd x(2, 1);
  x << 2.0, -3.0;
  const Eigen::MatrixXd out = forward(spec, w, x);
  EXPECT_EQ(out(0, 0), 2.0);
  EXPECT_EQ(out(1, 0), 3.0);
}

TEST(Forward, BiasFreeLayerScalesMultiply) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 6, 2}, false);
  const ParamVector noise = sample_standard_noise(spec, 11);
  PriorSpec unit = PriorSpec::isotropic(spec, 1.0), scaled = unit;
  scaled.weight_scales = {2.0, 3.0};
  const Eigen::MatrixXd x = gaussian_matrix(9, 3, 2);
  const Eigen::MatrixXd a = forward(spec, scale_noise(noise, scaled), x);
  const Eigen::MatrixXd b = forward(spec, scale_noise(noise, unit), x);
  EXPECT_LE((a - 6.0 * b).cwiseAbs().maxCoeff(), 1e-12 * b.cwiseAbs().maxCoeff());
}

TEST(Forward, InputWidthMismatchThrows) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 2});
  EXPECT_THROW(forward(spec, ParamVector(spec), gaussian_matrix(2, 4, 3)), DimensionError);
}

TEST(Softmax, RowsSumToOneAndSurviveLargeLogits) {
  Eigen::MatrixXd logits(2, 3);
  logits << 1000.0, 999.0, -1000.0, 0.0, 0.0, 0.0;
  const Eigen::MatrixXd p = softmax_rows(logits);
  EXPECT_NEAR(p.row(0).sum(), 1.0, 1e-15);
  EXPECT_NEAR(p(1, 2), 1.0 / 3.0, 1e-15);
  EXPECT_TRUE(p.allFinite());
}

TEST(Loss, UnitTemperatureIsUntemperedPosterior) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 5, 1});
  const ParamVector w = init_params(spec, 4);
  const Eigen::MatrixXd x = gaussian_matrix(7, 2, 5);
  const Eigen::VectorXd y = gaussian_matrix(7, 1, 6).col(0);
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.3);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.5);
  const LossResult r = loss_and_grad(spec, w, x, y, lik, prior, Temperature(1.0));
  const double nll = output_loss(lik, forward(spec, w, x), y).per_example.sum();
  EXPECT_EQ(r.data_term, nll);
  EXPECT_DOUBLE_EQ(r.value, nll - log_prior_density(prior, w));
}

TEST(Loss, ExactFitLeavesGaussianNormalizer) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1});
  ParamVector w(spec);
  w.weight(0)(0, 0) = 0.5;
  Eigen::MatrixXd x(1, 1);
  x << 4.0;
  Eigen::VectorXd y(1);
  y << 2.0;
  const double s2 = 0.7;
  const LossResult r = data_loss_and_grad(spec, w, x, y, LikelihoodSpec::gaussian(s2), 1.0);
  EXPECT_NEAR(r.value, 0.5 * std::log(2.0 * std::numbers::pi * s2), 1e-15);
}

TEST(Loss, CategoricalUniformLogitsGiveLogC) {
  const LikelihoodSpec lik = LikelihoodSpec::categorical(4);
  const Eigen::MatrixXd f = Eigen::MatrixXd::Constant(3, 4, 0.25);
  Eigen::VectorXd y(3);
  y << 0, 2, 3;
  const OutputLoss out = output_loss(lik, f, y);
  for (Index i = 0; i < 3; ++i) EXPECT_NEAR(out.per_example[i], std::log(4.0), 1e-15);
  // d/df of -log softmax: p - onehot
  EXPECT_NEAR(out.d_output(1, 2), 0.25 - 1.0, 1e-15);
  EXPECT_NEAR(out.d_output(1, 0), 0.25, 1e-15);
}

TEST(Loss, PoweredLikelihoodScalesDataTerm) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 3, 3});
  const ParamVector w = init_params(spec, 8);
  const Eigen::MatrixXd x = gaussian_matrix(5, 2, 9);
  Eigen::VectorXd y(5);
  y << 0, 1, 2, 1, 0;
  const LikelihoodSpec lik = LikelihoodSpec::categorical(3);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.0);
  const LossResult a = loss_and_grad(spec, w, x, y, lik, prior, Temperature{});
  const LossResult b = loss_and_grad(spec, w, x, y, lik.powered(0.25), prior, Temperature{});
  EXPECT_NEAR(b.data_term, 0.25 * a.data_term, 1e-13);
}

TEST(Loss, TemperatureAndPoweredLikelihoodAgree) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 4, 4, 1});
  const ParamVector w = init_params(spec, 12);
  const Eigen::MatrixXd x = gaussian_matrix(6, 3, 13);
  const Eigen::VectorXd y = gaussian_matrix(6, 1, 14).col(0);
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.5);
  const PriorSpec prior = PriorSpec::isotropic(spec, 0.8);
  for (double t : {0.1, 0.5, 2.0, 10.0}) {
    const LossResult a = loss_and_grad(spec, w, x, y, lik, prior, Temperature(t));
    const LossResult b = loss_and_grad(spec, w, x, y, lik.powered(1.0 / t), prior, Temperature{});
    EXPECT_NEAR(a.value, b.value, 1e-12 * std::max(1.0, std::abs(b.value)));
    EXPECT_LE((a.grad - b.grad).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, b.grad.cwiseAbs().maxCoeff()));
  }
}

TEST(Loss, GradientMatchesFiniteDifferences) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 6, 5, 1});
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.4);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.3);
  const Eigen::MatrixXd x = gaussian_matrix(8, 3, 20);
  const Eigen::VectorXd y = gaussian_matrix(8, 1, 21).col(0);
  const double h = 1e-5;
  for (std::uint64_t draw = 0; draw < 50; ++draw) {
    ParamVector w = sample_params(spec, prior, 100 + draw);
    const LossResult r = loss_and_grad(spec, w, x, y, lik, prior, Temperature(0.7), 1.5);
    Eigen::VectorXd fd(w.size());
    for (Index i = 0; i < w.size(); ++i) {
      ParamVector p = w, m = w;
      p.values()[i] += h;
      m.values()[i] -= h;
      fd[i] = (loss_and_grad(spec, p, x, y, lik, prior, Temperature(0.7), 1.5).value -
               loss_and_grad(spec, m, x, y, lik, prior, Temperature(0.7), 1.5).value) / (2 * h);
    }
    EXPECT_LT((r.grad - fd).norm() / std::max(fd.norm(), 1e-12), 1e-5) << "draw " << draw;
  }
}

TEST(Loss, NonFiniteInputThrowsNumericalError) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1});
  ParamVector w(spec);
  w.values().setConstant(std::numeric_limits<double>::infinity());
  Eigen::MatrixXd x(1, 1);
  x << 1.0;
  Eigen::VectorXd y(1);
  y << 0.0;
  EXPECT_THROW(loss_and_grad(spec, w, x, y, LikelihoodSpec::gaussian(1.0),
                             PriorSpec::isotropic(spec, 1.0), Temperature{}),
               NumericalError);
}

TEST(Temperature, RejectsNonPositive) {
  EXPECT_THROW(Temperature(0.0), ConfigError);
  EXPECT_THROW(Temperature(-1.0), ConfigError);
}

TEST(Init, SeededAndFanInScaled) {
  const NetworkSpec spec = NetworkSpec::mlp({400, 300, 1});
  const ParamVector a = init_params(spec, 3), b = init_params(spec, 3);
  EXPECT_EQ(a.values(), b.values());
  const auto w0 = a.weight(0);
  const double var = w0.array().square().mean();
  EXPECT_NEAR(var, 2.0 / 400.0, 3.0 * std::sqrt(2.0 / w0.size()) * (2.0 / 400.0));
  EXPECT_TRUE(a.bias(0).isZero(0.0));
}
