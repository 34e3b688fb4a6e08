#include <cmath>
#include <numbers>
#include <vector>

#include <Eigen/Dense>
#include <gtest/gtest.h>

#include "bmaforge/data.hpp"
#include "bmaforge/error.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/posterior_io.hpp"
#include "bmaforge/priors.hpp"
#include "bmaforge/random.hpp"

using namespace bmaforge;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

Dataset linear_data(Index n, Index d, double noise_std, std::uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.inputs.resize(n, d);
  ds.inputs.reshaped() = standard_normal(n * d, rng);
  const Eigen::VectorXd w = standard_normal(d, rng);
  ds.targets = ds.inputs * w + noise_std * standard_normal(n, rng);
  return ds;
}

struct ConjugatePosterior {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;
  double log_evidence = 0.0;
};

// y = X w + e, e ~ N(0, s2 I), w ~ N(0, a2 I).
ConjugatePosterior conjugate(const Dataset& ds, double s2, double a2) {
  const Eigen::MatrixXd& x = ds.inputs;
  const Index n = x.rows(), d = x.cols();
  ConjugatePosterior p;
  p.precision = x.transpose() * x / s2 + Eigen::MatrixXd::Identity(d, d) / a2;
  p.mean = p.precision.ldlt().solve(x.transpose() * ds.targets / s2);
  const Eigen::MatrixXd cov = s2 * Eigen::MatrixXd::Identity(n, n) + a2 * x * x.transpose();
  const Eigen::LLT<Eigen::MatrixXd> llt(cov);
  const double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  p.log_evidence = -0.5 * ds.targets.dot(llt.solve(ds.targets)) - 0.5 * logdet - 0.5 * n * kLog2Pi;
  return p;
}

TrainConfig small_sgd(std::uint64_t seed) {
  TrainConfig c;
  c.epochs = 30;
  c.batch_size = 10;
  c.lr = 0.005;
  c.seed = seed;
  return c;
}

SwagGaussian hand_swag(int d, int k, std::uint64_t seed) {
  Rng rng(seed);
  SwagGaussian g;
  g.mean = ParamVector(NetworkSpec::mlp({d, 1}, false), standard_normal(d, rng));
  g.diag_variance = standard_normal(d, rng).cwiseAbs();
  g.deviations.resize(d, k);
  g.deviations.reshaped() = standard_normal(d * k, rng);
  return g;
}

}  // namespace

// ---------------------------------------------------------------------------
// SGD

TEST(Sgd, LinearModelReachesRidgeSolution) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1}, false);
  const Dataset ds = linear_data(40, 1, 0.3, 1);
  const double s2 = 0.2, a2 = 0.5;
  TrainConfig c;
  c.epochs = 400;
  c.batch_size = 0;
  c.lr = 0.1;
  c.final_lr_ratio = 0.1;
  const TrainResult r = train_map(spec, ds, LikelihoodSpec::gaussian(s2), PriorSpec::isotropic(spec, std::sqrt(a2)), c);
  EXPECT_NEAR(r.params.values()[0], conjugate(ds, s2, a2).mean[0], 1e-4);
}

TEST(Sgd, ZeroEpochsRejected) {
  TrainConfig c;
  c.epochs = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Sgd, ScheduleShape) {
  TrainConfig c;
  c.lr = 0.1;
  c.final_lr_ratio = 0.01;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0.25), 0.1);
  EXPECT_NEAR(learning_rate(c, 0.7), 0.1 * (1.0 - 0.5 * 0.99), 1e-12);
  EXPECT_DOUBLE_EQ(learning_rate(c, 0.95), 0.001);
  c.schedule = LrSchedule::Cosine;
  EXPECT_DOUBLE_EQ(learning_rate(c, 0.0), 0.1);
  EXPECT_NEAR(learning_rate(c, 1.0), 0.0, 1e-15);
}

TEST(Sgd, IndependentRunsFindDistinctSolutions) {
  ToyRegressionOptions o;
  o.points_per_cluster = 10;
  const ToyRegression toy = gen_toy_regression(3, o);
  const NetworkSpec spec = NetworkSpec::mlp({2, 10, 10, 1});
  const DiracEnsemble e = deep_ensemble(spec, toy.train, LikelihoodSpec::gaussian(0.01),
                                        PriorSpec::isotropic(spec, 10.0), small_sgd(5), 4);
  ASSERT_EQ(e.members.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = i + 1; j < 4; ++j) {
      EXPECT_GT((e.members[i].values() - e.members[j].values()).norm(), 0.0);
    }
  }
}

TEST(DeepEnsemble, SingleMemberIsMapSolution) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 6, 1});
  const Dataset ds = linear_data(30, 3, 0.1, 2);
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.05);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.0);
  const DiracEnsemble e = deep_ensemble(spec, ds, lik, prior, small_sgd(11), 1);
  ASSERT_EQ(e.members.size(), 1u);
  EXPECT_EQ(e.members[0].values(), train_map(spec, ds, lik, prior, small_sgd(11)).params.values());
}

// ---------------------------------------------------------------------------
// SWA / SWAG

TEST(Swa, SingleIterateIsItself) {
  SwaAccumulator swa;
  const Eigen::Vector3d w(1.5, -2.0, 0.25);
  swa.add(w);
  EXPECT_EQ(swa.mean(), Eigen::VectorXd(w));
}

TEST(Swa, OpposedIteratesAverageToZero) {
  SwaAccumulator swa;
  const Eigen::Vector3d w(1.5, -2.0, 0.25);
  swa.add(w);
  swa.add(-w);
  EXPECT_TRUE(swa.mean().isZero(0.0));
}

TEST(Swa, MatchesOfflineMeanOfRecordedTrace) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 5, 1});
  const Dataset ds = linear_data(30, 3, 0.1, 3);
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.05);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.0);
  const TrainConfig c = small_sgd(4);
  std::vector<Eigen::VectorXd> trace;
  train_sgd(spec, ds, lik, prior, c, init_params(spec, c.seed),
            [&](int epoch, const ParamVector& w) {
              if (epoch >= 10) trace.push_back(w.values());
            });
  Eigen::VectorXd offline = Eigen::VectorXd::Zero(trace.front().size());
  for (const auto& w : trace) offline += w;
  offline /= static_cast<double>(trace.size());
  const ParamVector swa = train_swa(spec, ds, lik, prior, c, 10);
  EXPECT_LE((swa.values() - offline).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Swag, ConstantIteratesHaveNoSpread) {
  SwagAccumulator acc(2);
  const Eigen::Vector2d w(0.3, -0.7);
  for (int i = 0; i < 3; ++i) acc.add(w);
  const SwagGaussian g = acc.finalize(ParamLayout(NetworkSpec::mlp({2, 1}, false)));
  EXPECT_EQ(g.mean.values(), Eigen::VectorXd(w));
  EXPECT_TRUE(g.diag_variance.isZero(1e-15));
  EXPECT_TRUE(g.deviations.isZero(1e-15));
}

TEST(Swag, ThreeIteratesByHand) {
  // Iterates (1,2), (3,0), (2,5). Running means (1,2), (2,1), (2,7/3); the
  // last two deviations are (1,-1) and (0,8/3).
  SwagAccumulator acc(2);
  acc.add(Eigen::Vector2d(1, 2));
  acc.add(Eigen::Vector2d(3, 0));
  acc.add(Eigen::Vector2d(2, 5));
  const SwagGaussian g = acc.finalize(ParamLayout(NetworkSpec::mlp({2, 1}, false)));
  EXPECT_NEAR(g.mean.values()[0], 2.0, 1e-15);
  EXPECT_NEAR(g.mean.values()[1], 7.0 / 3.0, 1e-15);
  EXPECT_NEAR(g.diag_variance[0], 14.0 / 3.0 - 4.0, 1e-14);
  EXPECT_NEAR(g.diag_variance[1], 29.0 / 3.0 - 49.0 / 9.0, 1e-14);
  EXPECT_NEAR(g.deviations(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(g.deviations(1, 0), -1.0, 1e-15);
  EXPECT_NEAR(g.deviations(0, 1), 0.0, 1e-15);
  EXPECT_NEAR(g.deviations(1, 1), 8.0 / 3.0, 1e-14);
}

TEST(Swag, TooFewIteratesForRank) {
  SwagAccumulator acc(3);
  for (int i = 0; i < 3; ++i) acc.add(Eigen::Vector2d(i, 1));
  EXPECT_THROW(acc.finalize(ParamLayout(NetworkSpec::mlp({2, 1}, false))), ConfigError);
}

TEST(Swag, DefaultRankIsTwenty) { EXPECT_EQ(kDefaultSwagRank, 20); }

TEST(Swag, ZeroCovarianceSamplesTheMean) {
  SwagGaussian g = hand_swag(5, 3, 1);
  g.diag_variance.setZero();
  g.deviations.setZero();
  EXPECT_EQ(sample_swag(g, 42).values(), g.mean.values());
}

TEST(Swag, SeededSamples) {
  const SwagGaussian g = hand_swag(5, 3, 2);
  EXPECT_EQ(sample_swag(g, 7).values(), sample_swag(g, 7).values());
  EXPECT_NE(sample_swag(g, 7).values(), sample_swag(g, 8).values());
}

TEST(Swag, CovarianceCalibratedAcrossEntries) {
  // Aggregate check: standardized covariance errors have mean square ~1.
  const int d = 8, k = 5, n = 40000;
  const SwagGaussian g = hand_swag(d, k, 3);
  const Eigen::MatrixXd sigma = g.covariance();
  Eigen::MatrixXd draws(n, d);
  for (int s = 0; s < n; ++s) draws.row(s) = sample_swag(g, derive_seed(77, s)).values().transpose();
  const Eigen::MatrixXd c = draws.rowwise() - draws.colwise().mean();
  const Eigen::MatrixXd emp = c.transpose() * c / (n - 1.0);
  double z2 = 0.0;
  int count = 0;
  for (int i = 0; i < d; ++i) {
    for (int j = i; j < d; ++j) {
      const double se = std::sqrt((sigma(i, i) * sigma(j, j) + sigma(i, j) * sigma(i, j)) / n);
      z2 += std::pow((emp(i, j) - sigma(i, j)) / se, 2);
      ++count;
    }
  }
  // Mean of 36 roughly chi-square(1) variables: s.d. ~ sqrt(2/36) ~ 0.24.
  EXPECT_LT(z2 / count, 2.0);
}

TEST(MultiSwag, SingleModelIsSwag) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 5, 1});
  const Dataset ds = linear_data(30, 3, 0.1, 5);
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.05);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.0);
  const TrainConfig c = small_sgd(9);
  const MultiSwagResult r = multi_swag(spec, ds, lik, prior, c, 1, 4, 3, 20);
  const SwagGaussian ref = fit_swag(spec, ds, lik, prior, c, 20, 3);
  ASSERT_EQ(r.mixture.components.size(), 1u);
  const auto& g = std::get<SwagGaussian>(r.mixture.components[0]);
  EXPECT_EQ(g.mean.values(), ref.mean.values());
  EXPECT_EQ(g.deviations, ref.deviations);
  ASSERT_EQ(r.samples.members.size(), 4u);
  EXPECT_EQ(r.samples.members[0].values(), sample_swag(ref, derive_seed(9, 0)).values());
}

TEST(MultiSwag, DegenerateComponentsCollapseToSwa) {
  SwagGaussian g = hand_swag(4, 2, 6);
  g.diag_variance.setZero();
  g.deviations.setZero();
  const DiracEnsemble e = draw_from_swag_mixture(Mixture{{g}}, 1, 3);
  ASSERT_EQ(e.members.size(), 1u);
  EXPECT_EQ(e.members[0].values(), g.mean.values());
}

TEST(MultiSwa, MembersAreSwagMeans) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 5, 1});
  const Dataset ds = linear_data(30, 3, 0.1, 6);
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(0.05);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.0);
  const TrainConfig c = small_sgd(20);
  const DiracEnsemble e = multi_swa(spec, ds, lik, prior, c, 3, 15);
  ASSERT_EQ(e.members.size(), 3u);
  for (int m = 0; m < 3; ++m) {
    TrainConfig cm = c;
    cm.seed = member_seed(c.seed, static_cast<std::uint64_t>(m));
    const SwagGaussian g = fit_swag(spec, ds, lik, prior, cm, 15, 2);
    EXPECT_LE((e.members[static_cast<std::size_t>(m)].values() - g.mean.values()).cwiseAbs().maxCoeff(), 1e-12);
  }
}

// ---------------------------------------------------------------------------
// Variational inference

TEST(Svi, PriorAsPosteriorHasZeroKl) {
  const NetworkSpec spec = NetworkSpec::mlp({3, 4, 2});
  const PriorSpec prior = PriorSpec::isotropic(spec, 0.7);
  FactorizedGaussian q{ParamVector(spec), Eigen::VectorXd::Constant(count_params(spec), std::log(0.7))};
  EXPECT_NEAR(kl_to_prior(q, prior), 0.0, 1e-12);
  q.mean.values()[0] = 0.7;
  EXPECT_NEAR(kl_to_prior(q, prior), 0.5, 1e-12);
}

TEST(Svi, ConjugateLinearModel) {
  const int d = 3;
  const NetworkSpec spec = NetworkSpec::mlp({d, 1}, false);
  const Dataset ds = linear_data(30, d, 0.5, 8);
  const double s2 = 0.25, a2 = 1.0;
  const LikelihoodSpec lik = LikelihoodSpec::gaussian(s2);
  const PriorSpec prior = PriorSpec::isotropic(spec, std::sqrt(a2));
  const ConjugatePosterior exact = conjugate(ds, s2, a2);
  SviConfig c;
  c.steps = 10000;
  c.lr = 1e-3;
  c.final_lr_ratio = 1e-2;
  c.mc_samples = 32;
  c.init_std = 0.1;
  c.seed = 3;
  const SviResult r = fit_svi(spec, ds, lik, prior, c, ParamVector(spec));
  // Mean-field optimum: exact mean, variances 1 / diag(precision).
  EXPECT_LT((r.q.mean.values() - exact.mean).cwiseAbs().maxCoeff(), 1e-3);
  for (int i = 0; i < d; ++i) {
    const double var = std::exp(2.0 * r.q.log_std[i]);
    EXPECT_NEAR(var * exact.precision(i, i), 1.0, 0.1) << "coordinate " << i;
  }
  const double elbo = estimate_elbo(spec, ds, lik, prior, r.q, Temperature{}, 20000, 4);
  EXPECT_LE(elbo, exact.log_evidence);
}

TEST(Svi, ElboTrendRisesAtTheEnd) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 1}, false);
  const Dataset ds = linear_data(20, 2, 0.5, 9);
  SviConfig c;
  c.steps = 4000;
  c.mc_samples = 4;
  c.seed = 1;
  const SviResult r = fit_svi(spec, ds, LikelihoodSpec::gaussian(0.25), PriorSpec::isotropic(spec, 1.0), c,
                              ParamVector(spec));
  ASSERT_EQ(r.elbo_trace.size(), 4000u);
  const auto mean_of = [&](std::size_t lo, std::size_t hi) {
    double s = 0.0;
    for (std::size_t i = lo; i < hi; ++i) s += r.elbo_trace[i];
    return s / static_cast<double>(hi - lo);
  };
  EXPECT_GT(mean_of(3000, 4000), mean_of(0, 400));
}

// ---------------------------------------------------------------------------
// HMC

TEST(Hmc, LeapfrogDriftVanishesWithStep) {
  const Potential u = [](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g = q;
    return 0.5 * q.squaredNorm();
  };
  LeapfrogState s;
  s.position = Eigen::Vector3d(1.0, -0.5, 0.3);
  s.momentum = Eigen::Vector3d(0.2, 0.7, -1.1);
  s.potential = u(s.position, s.grad);
  const double h0 = hamiltonian(s);
  double prev = std::numeric_limits<double>::infinity();
  for (double eps : {0.1, 0.05, 0.025, 0.0125}) {
    const int steps = static_cast<int>(std::lround(1.0 / eps));
    const double drift = std::abs(hamiltonian(leapfrog(u, s, eps, steps)) - h0);
    EXPECT_LT(drift, prev);
    prev = drift;
  }
  EXPECT_LT(prev, 1e-3);
}

TEST(Hmc, CorrelatedGaussianMoments) {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.6, 0.6, 2.0;
  const Eigen::Matrix2d prec = cov.inverse();
  const Potential u = [&](const Eigen::VectorXd& q, Eigen::VectorXd& g) {
    g = prec * q;
    return 0.5 * q.dot(g);
  };
  HmcConfig c;
  c.n_chains = 4;
  c.burn_in = 300;
  c.n_samples = 2000;
  c.step_size = 0.2;
  c.leapfrog_steps = 10;
  c.seed = 5;
  const std::vector<Eigen::VectorXd> inits(4, Eigen::VectorXd::Zero(2));
  const HmcResult r = hmc_sample(u, inits, c);
  ASSERT_EQ(r.samples.size(), 8000u);
  Eigen::MatrixXd x(8000, 2);
  for (Index i = 0; i < 8000; ++i) x.row(i) = r.samples[static_cast<std::size_t>(i)].transpose();
  const Eigen::MatrixXd c0 = x.rowwise() - x.colwise().mean();
  const Eigen::Matrix2d emp = c0.transpose() * c0 / 7999.0;
  EXPECT_NEAR(emp(0, 0), 1.0, 0.15);
  EXPECT_NEAR(emp(1, 1), 2.0, 0.3);
  EXPECT_NEAR(emp(0, 1), 0.6, 0.15);
  for (const ChainStats& s : r.chains) {
    EXPECT_GT(s.sample_accept, 0.5);
    EXPECT_LT(s.sample_accept, 0.99);
  }
}

// ---------------------------------------------------------------------------
// SGLD

TEST(Sgld, ZeroStepKeepsStart) {
  const StochasticPotential flat = [](const Eigen::VectorXd& w, Eigen::VectorXd& g, Rng&) {
    g = Eigen::VectorXd::Zero(w.size());
    return 0.0;
  };
  const auto out = sgld_final_iterates(flat, [](std::uint64_t) { return Eigen::Vector2d(0.5, -1.0).eval(); },
                                       50, 0.0, 3, 1);
  for (const auto& w : out) EXPECT_EQ(w, Eigen::VectorXd(Eigen::Vector2d(0.5, -1.0)));
}

TEST(Sgld, OneDimensionalGaussianMoments) {
  const double mu = 1.0, s2 = 0.25;
  const StochasticPotential u = [&](const Eigen::VectorXd& w, Eigen::VectorXd& g, Rng&) {
    g = (w.array() - mu).matrix() / s2;
    return 0.5 * (w.array() - mu).square().sum() / s2;
  };
  const int n = 4000;
  const auto out = sgld_final_iterates(u, [](std::uint64_t) { return Eigen::VectorXd::Zero(1).eval(); },
                                       2000, 0.005, n, 2);
  double m = 0.0, v = 0.0;
  for (const auto& w : out) m += w[0];
  m /= n;
  for (const auto& w : out) v += (w[0] - m) * (w[0] - m);
  v /= n - 1;
  EXPECT_NEAR(m, mu, 3.0 * std::sqrt(s2 / n));
  EXPECT_NEAR(v, s2, 3.0 * std::sqrt(2.0 / n) * s2);
}

// ---------------------------------------------------------------------------
// Laplace evidence

TEST(Laplace, ExactOnConjugateOneDimensionalModel) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1}, false);
  const Dataset ds = linear_data(25, 1, 0.4, 12);
  const double s2 = 0.16, a2 = 2.0;
  const ConjugatePosterior exact = conjugate(ds, s2, a2);
  ParamVector mode(spec);
  mode.values()[0] = exact.mean[0];
  LaplaceOptions o;
  o.curvature = Curvature::Fisher;
  o.epsilon = 0.0;
  const LaplaceResult r =
      laplace_log_marginal(spec, mode, ds, LikelihoodSpec::gaussian(s2), PriorSpec::isotropic(spec, std::sqrt(a2)), o);
  EXPECT_NEAR(r.log_marginal, exact.log_evidence, 1e-8);
  EXPECT_EQ(r.dim, 1);
}

TEST(Laplace, SingleWeightSinglePointByHand) {
  const NetworkSpec spec = NetworkSpec::mlp({1, 1}, false);
  Dataset ds;
  ds.inputs = Eigen::MatrixXd::Constant(1, 1, 2.0);
  ds.targets = Eigen::VectorXd::Constant(1, 1.0);
  ParamVector w(spec);
  w.values()[0] = 0.3;
  const double s2 = 0.5;
  // residual 0.4, empirical Fisher (0.4 * 2 / 0.5)^2 = 2.56, prior precision 1
  const double ll = -0.5 * std::log(2.0 * std::numbers::pi * s2) - 0.16 / (2.0 * s2);
  const double lp = -0.5 * kLog2Pi - 0.045;
  const double expected = ll + lp + 0.5 * kLog2Pi - 0.5 * std::log(3.56);
  const LaplaceResult r =
      laplace_log_marginal(spec, w, ds, LikelihoodSpec::gaussian(s2), PriorSpec::isotropic(spec, 1.0));
  EXPECT_NEAR(r.log_marginal, expected, 1e-12);
  EXPECT_NEAR(r.curvature[0], 3.56, 1e-12);
}

TEST(Laplace, MinibatchFisherIsFlagged) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 3, 1});
  const Dataset ds = linear_data(20, 2, 0.1, 13);
  LaplaceOptions o;
  o.fisher_batch = 5;
  const LaplaceResult r = laplace_log_marginal(spec, init_params(spec, 1), ds, LikelihoodSpec::gaussian(0.1),
                                               PriorSpec::isotropic(spec, 1.0), o);
  EXPECT_FALSE(r.exact_fisher);
  EXPECT_TRUE(std::isfinite(r.log_marginal));
}

// ---------------------------------------------------------------------------
// Posterior files

TEST(PosteriorIo, RoundTripEveryKind) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 3, 1}, true);
  const Index d = count_params(spec);
  Rng rng(4);
  const auto vec = [&] { return ParamVector(spec, standard_normal(d, rng)); };
  SwagGaussian g;
  g.mean = vec();
  g.diag_variance = standard_normal(d, rng).cwiseAbs();
  g.deviations.resize(d, 3);
  g.deviations.reshaped() = standard_normal(3 * d, rng);
  const FactorizedGaussian q{vec(), standard_normal(d, rng)};
  const DiracEnsemble e{{vec(), vec()}};
  const std::vector<PosteriorApprox> cases{e, q, g, Mixture{{e, q, g}}};
  for (const PosteriorApprox& p : cases) {
    const StoredPosterior back = deserialize_posterior(serialize_posterior(spec, p));
    EXPECT_EQ(back.spec, spec);
    ASSERT_EQ(back.posterior.index(), p.index());
    EXPECT_EQ(serialize_posterior(back.spec, back.posterior), serialize_posterior(spec, p));
  }
}

TEST(PosteriorIo, RejectsCorruptBytes) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 1});
  std::vector<std::uint8_t> bytes = serialize_posterior(spec, DiracEnsemble{{ParamVector(spec)}});
  std::vector<std::uint8_t> bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_posterior(bad_magic), ParseError);
  bytes.pop_back();
  EXPECT_THROW(deserialize_posterior(bytes), ParseError);
}
