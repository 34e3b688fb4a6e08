#include "bmaforge/gp.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Cholesky>
#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/random.hpp"

namespace bmaforge {

void RbfKernel::validate() const {
  if (!(lengthscale > 0.0) || !(signal_variance > 0.0) || !(input_scale > 0.0)) {
    throw ConfigError(fmt::format("RBF kernel needs positive hyperparameters (l={}, s2={}, scale={})",
                                  lengthscale, signal_variance, input_scale));
  }
}

namespace {

Eigen::MatrixXd squared_distances(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  Eigen::MatrixXd d(a.rows(), b.rows());
  for (Index j = 0; j < b.rows(); ++j) {
    d.col(j) = (a.rowwise() - b.row(j)).rowwise().squaredNorm();
  }
  return d;
}

}  // namespace

Eigen::MatrixXd kernel_matrix(const RbfKernel& k, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  k.validate();
  if (a.cols() != b.cols()) throw DimensionError("kernel inputs have different dimensions");
  const double c = 1.0 / k.input_scale;
  const Eigen::MatrixXd d2 = squared_distances(a * c, b * c);
  return k.signal_variance * (-d2.array() / (2.0 * k.lengthscale * k.lengthscale)).exp().matrix();
}

double median_pairwise_distance(const Eigen::MatrixXd& x) {
  if (x.rows() < 2) throw DegenerateError("median distance needs at least two points");
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(x.rows() * (x.rows() - 1) / 2));
  for (Index i = 0; i < x.rows(); ++i) {
    for (Index j = i + 1; j < x.rows(); ++j) d.push_back((x.row(i) - x.row(j)).norm());
  }
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  if (d.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(d.begin(), mid);
  return 0.5 * (lower + upper);
}

JitteredCholesky jittered_cholesky(const Eigen::MatrixXd& a, double scale) {
  if (a.rows() != a.cols()) throw DimensionError("Cholesky needs a square matrix");
  const Index n = a.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() == Eigen::Success) return {llt.matrixL(), 0.0};
  for (double jitter = 1e-10 * scale; jitter <= 1e-4 * scale * (1.0 + 1e-9); jitter *= 10.0) {
    llt.compute(a + jitter * Eigen::MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
  }
  throw NumericalError(fmt::format("Cholesky failed with jitter up to {}", 1e-4 * scale));
}

GPRegressor gp_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const RbfKernel& kernel,
                   double noise_variance) {
  kernel.validate();
  if (x.rows() < 1) throw ConfigError("GP fit needs at least one point");
  if (y.size() != x.rows()) throw DimensionError("GP targets do not match the inputs");
  if (!(noise_variance >= 0.0)) throw ConfigError("GP noise variance must be non-negative");
  GPRegressor m;
  m.kernel = kernel;
  m.inputs = x;
  m.targets = y;
  m.noise_variance = noise_variance;
  Eigen::MatrixXd k = kernel_matrix(kernel, x, x);
  k.diagonal().array() += noise_variance;
  JitteredCholesky c = jittered_cholesky(k, kernel.signal_variance);
  m.jitter = c.jitter;
  m.chol = std::move(c.lower);
  const auto l = m.chol.triangularView<Eigen::Lower>();
  m.alpha = m.chol.transpose().triangularView<Eigen::Upper>().solve(l.solve(y));
  return m;
}

GpPrediction gp_predict(const GPRegressor& model, const Eigen::MatrixXd& x) {
  const Eigen::MatrixXd ks = kernel_matrix(model.kernel, model.inputs, x);  // n x m
  GpPrediction p;
  p.mean = ks.transpose() * model.alpha;
  const Eigen::MatrixXd v = model.chol.triangularView<Eigen::Lower>().solve(ks);
  p.variance = (model.kernel.signal_variance - v.colwise().squaredNorm().array()).matrix().transpose();
  for (Index i = 0; i < p.variance.size(); ++i) {
    if (p.variance[i] < 0.0) {
      p.variance[i] = 0.0;
      ++p.clamped;
    }
  }
  return p;
}

double gp_log_marginal(const GPRegressor& model) {
  const double n = static_cast<double>(model.targets.size());
  return -0.5 * model.targets.dot(model.alpha) - model.chol.diagonal().array().log().sum() -
         0.5 * n * std::log(2.0 * std::numbers::pi);
}

double gp_log_marginal_grad_lengthscale(const GPRegressor& model) {
  const RbfKernel& k = model.kernel;
  const double c = 1.0 / k.input_scale;
  const Eigen::MatrixXd d2 = squared_distances(model.inputs * c, model.inputs * c);
  const Eigen::MatrixXd kx = kernel_matrix(k, model.inputs, model.inputs);
  const Eigen::MatrixXd dk =
      (kx.array() * d2.array() / (k.lengthscale * k.lengthscale * k.lengthscale)).matrix();
  const Index n = model.inputs.rows();
  const Eigen::MatrixXd l_inv =
      model.chol.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd kinv = l_inv.transpose() * l_inv;
  const Eigen::MatrixXd inner = model.alpha * model.alpha.transpose() - kinv;
  return 0.5 * (inner.array() * dk.array()).sum();
}

Eigen::MatrixXd gp_sample_prior(const RbfKernel& kernel, const Eigen::MatrixXd& x, int n_functions,
                                std::uint64_t seed) {
  if (x.rows() < 1) throw ConfigError("GP prior sampling needs at least one input");
  if (n_functions < 1) throw ConfigError("need at least one function draw");
  const Eigen::MatrixXd k = kernel_matrix(kernel, x, x);
  // Prior samples always carry a floor jitter: K is often numerically singular.
  Eigen::MatrixXd kj = k;
  kj.diagonal().array() += 1e-10 * kernel.signal_variance;
  const JitteredCholesky c = jittered_cholesky(kj, kernel.signal_variance);
  Rng rng(seed);
  Eigen::MatrixXd z(x.rows(), n_functions);
  for (int f = 0; f < n_functions; ++f) z.col(f) = standard_normal(x.rows(), rng);
  return (c.lower * z).transpose();
}

}  // namespace bmaforge
