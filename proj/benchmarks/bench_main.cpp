#include <vector>

#include <benchmark/benchmark.h>

#include "bmaforge/gp.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/metrics.hpp"
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

// MNIST-shaped classifier with a configurable hidden width.
void BM_Forward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const NetworkSpec spec = NetworkSpec::mlp({784, width, 10});
  const ParamVector w = init_params(spec, 1);
  const Eigen::MatrixXd x = gaussian_matrix(128, 784, 2);
  for (auto _ : state) benchmark::DoNotOptimize(forward(spec, w, x));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_Forward)->Arg(16)->Arg(100)->Arg(400);

void BM_LossAndGrad(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  const NetworkSpec spec = NetworkSpec::mlp({784, width, 10});
  const ParamVector w = init_params(spec, 1);
  const Eigen::MatrixXd x = gaussian_matrix(128, 784, 2);
  Eigen::VectorXd y(128);
  for (Index i = 0; i < 128; ++i) y[i] = static_cast<double>(i % 10);
  const LikelihoodSpec lik = LikelihoodSpec::categorical(10);
  const PriorSpec prior = PriorSpec::isotropic(spec, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(loss_and_grad(spec, w, x, y, lik, prior, Temperature{}));
  state.SetItemsProcessed(state.iterations() * x.rows());
}
BENCHMARK(BM_LossAndGrad)->Arg(16)->Arg(100)->Arg(400);

// One HMC transition (10 leapfrog steps) on the toy-regression network.
void BM_HmcTransition(benchmark::State& state) {
  const NetworkSpec spec = NetworkSpec::mlp({2, 10, 10, 10, 1});
  Dataset data;
  data.inputs = gaussian_matrix(120, 2, 3);
  data.targets = gaussian_matrix(120, 1, 4).col(0);
  const Potential u = network_potential(spec, data, LikelihoodSpec::gaussian(4e-4), PriorSpec::isotropic(spec, 10.0));
  HmcConfig c;
  c.burn_in = 0;
  c.n_samples = 1;
  c.leapfrog_steps = 10;
  c.step_size = 1e-4;
  c.adapt_step_size = false;
  const std::vector<Eigen::VectorXd> init{init_params(spec, 5).values()};
  for (auto _ : state) benchmark::DoNotOptimize(hmc_sample(u, init, c));
}
BENCHMARK(BM_HmcTransition);

void BM_GpFit(benchmark::State& state) {
  const Index n = state.range(0);
  const Eigen::MatrixXd x = gaussian_matrix(n, 20, 6);
  const Eigen::VectorXd y = gaussian_matrix(n, 1, 7).col(0);
  for (auto _ : state) benchmark::DoNotOptimize(gp_fit(x, y, RbfKernel{3.0, 1.0, 1.0}, 0.1));
  state.SetComplexityN(n);
}
BENCHMARK(BM_GpFit)->RangeMultiplier(2)->Range(64, 1024)->Complexity(benchmark::oNCubed);

void BM_Wasserstein1(benchmark::State& state) {
  const Index n = state.range(0);
  const Eigen::VectorXd a = gaussian_matrix(n, 1, 8).col(0), b = gaussian_matrix(n, 1, 9).col(0);
  const std::vector<double> va(a.data(), a.data() + n), vb(b.data(), b.data() + n);
  for (auto _ : state) benchmark::DoNotOptimize(wasserstein1(va, vb));
  state.SetComplexityN(n);
}
BENCHMARK(BM_Wasserstein1)->RangeMultiplier(4)->Range(64, 65536)->Complexity(benchmark::oNLogN);

void BM_SwagSample(benchmark::State& state) {
  const Index d = state.range(0);
  SwagGaussian g;
  g.mean = ParamVector(NetworkSpec::mlp({static_cast<int>(d), 1}, false), Eigen::VectorXd::Zero(d));
  g.diag_variance = Eigen::VectorXd::Ones(d);
  g.deviations = gaussian_matrix(d, 20, 10);
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(sample_swag(g, seed++));
}
BENCHMARK(BM_SwagSample)->Arg(1000)->Arg(80000);

}  // namespace

BENCHMARK_MAIN();
