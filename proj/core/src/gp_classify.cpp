#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/gp.hpp"

namespace bmaforge {

GaussHermite gauss_hermite(int n) {
  if (n < 1) throw ConfigError("Gauss-Hermite needs at least one node");
  // Golub-Welsch: eigen-decomposition of the Jacobi matrix of the Hermite
  // recurrence.
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
  for (int k = 1; k < n; ++k) {
    jacobi(k, k - 1) = jacobi(k - 1, k) = std::sqrt(0.5 * k);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(jacobi);
  GaussHermite gh;
  gh.nodes = eig.eigenvalues();
  gh.weights = std::sqrt(std::numbers::pi) * eig.eigenvectors().row(0).array().square().transpose();
  return gh;
}

namespace {

double log_sigmoid(double z) { return z >= 0.0 ? -std::log1p(std::exp(-z)) : z - std::log1p(std::exp(z)); }
double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

/// Everything about the prior N(0, K) needed by the ELBO.
struct PriorFactors {
  Eigen::MatrixXd k;
  Eigen::MatrixXd l_inv;  // inverse of the lower Cholesky factor
  Eigen::VectorXd diag_k_inv;
  double log_det = 0.0;
  double jitter = 0.0;
};

class Objective {
 public:
  Objective(const PriorFactors& prior, const Eigen::VectorXd& sign, const GaussHermite& gh)
      : prior_(prior), sign_(sign), nodes_(gh.nodes * std::sqrt(2.0)),
        weights_(gh.weights / std::sqrt(std::numbers::pi)) {}

  double elbo(const Eigen::VectorXd& m, const Eigen::VectorXd& v) const {
    double ell = 0.0;
    for (Index i = 0; i < m.size(); ++i) {
      const double s = std::sqrt(v[i]);
      for (Index q = 0; q < nodes_.size(); ++q) {
        ell += weights_[q] * log_sigmoid(sign_[i] * (m[i] + s * nodes_[q]));
      }
    }
    const Eigen::VectorXd a = prior_.l_inv * m;
    const double kl = 0.5 * (prior_.diag_k_inv.dot(v) + a.squaredNorm() - static_cast<double>(m.size()) +
                             prior_.log_det - v.array().log().sum());
    return ell - kl;
  }

  /// E_q[d/df log p(y|f)] and E_q[d2/df2 log p(y|f)].
  void moments(const Eigen::VectorXd& m, const Eigen::VectorXd& v, Eigen::VectorXd& d1,
               Eigen::VectorXd& d2) const {
    d1.setZero(m.size());
    d2.setZero(m.size());
    for (Index i = 0; i < m.size(); ++i) {
      const double s = std::sqrt(v[i]);
      for (Index q = 0; q < nodes_.size(); ++q) {
        const double f = m[i] + s * nodes_[q];
        const double p = sigmoid(f);
        d1[i] += weights_[q] * sign_[i] * sigmoid(-sign_[i] * f);
        d2[i] -= weights_[q] * p * (1.0 - p);
      }
    }
  }

 private:
  const PriorFactors& prior_;
  const Eigen::VectorXd& sign_;
  Eigen::VectorXd nodes_, weights_;
};

/// Halves `step` until f(step) >= current. Returns 0 when no step helps.
template <class F>
double backtrack(F&& value_at, double current, double& value) {
  for (double step = 1.0; step > 1e-10; step *= 0.5) {
    const double v = value_at(step);
    if (std::isfinite(v) && v >= current) {
      value = v;
      return step;
    }
  }
  value = current;
  return 0.0;
}

}  // namespace

GpClassifier gp_classify_binary(const Eigen::MatrixXd& x, const Eigen::VectorXd& labels,
                                const RbfKernel& kernel, const GpClassifyConfig& config) {
  kernel.validate();
  if (x.rows() != labels.size()) throw DimensionError("GP labels do not match the inputs");
  if (config.max_iters < 1 || !(config.tolerance >= 0.0)) throw ConfigError("invalid GP classifier settings");
  const Index n = x.rows();
  bool has0 = false, has1 = false;
  for (Index i = 0; i < n; ++i) {
    if (labels[i] == 0.0) has0 = true;
    else if (labels[i] == 1.0) has1 = true;
    else throw ConfigError(fmt::format("binary labels must be 0 or 1, got {}", labels[i]));
  }
  if (!has0 || !has1) throw DegenerateError("GP classification needs both classes present");
  const Eigen::VectorXd sign = 2.0 * labels.array() - 1.0;

  PriorFactors prior;
  prior.k = kernel_matrix(kernel, x, x);
  JitteredCholesky c = jittered_cholesky(prior.k, kernel.signal_variance);
  prior.jitter = c.jitter;
  prior.k.diagonal().array() += c.jitter;
  prior.l_inv = c.lower.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n, n));
  prior.diag_k_inv = prior.l_inv.colwise().squaredNorm().transpose();
  prior.log_det = 2.0 * c.lower.diagonal().array().log().sum();

  const Objective objective(prior, sign, gauss_hermite(config.quadrature_nodes));
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd v = prior.k.diagonal();
  double elbo = objective.elbo(m, v);
  if (!std::isfinite(elbo)) throw NumericalError("GP classifier ELBO is not finite at the start");

  GpClassifier out;
  out.elbo_trace.push_back(elbo);
  Eigen::VectorXd d1, d2;
  int it = 0;
  for (; it < config.max_iters; ++it) {
    const double before = elbo;

    // Newton direction on the means: (K^-1 + W)^-1 grad, through
    // B = I + W^1/2 K W^1/2.
    objective.moments(m, v, d1, d2);
    const Eigen::VectorXd w = (-d2).cwiseMax(1e-12);
    const Eigen::VectorXd sw = w.array().sqrt();
    Eigen::MatrixXd b = sw.asDiagonal() * prior.k * sw.asDiagonal();
    b.diagonal().array() += 1.0;
    const Eigen::LLT<Eigen::MatrixXd> llt_b(b);
    if (llt_b.info() != Eigen::Success) throw NumericalError("GP classifier Newton system is singular");
    const Eigen::VectorXd kg = prior.k * d1 - m;
    const Eigen::VectorXd dir =
        kg - prior.k * (sw.asDiagonal() * llt_b.solve((sw.asDiagonal() * kg).eval()));
    {
      double accepted = elbo;
      const double s = backtrack([&](double t) { return objective.elbo(m + t * dir, v); }, elbo, accepted);
      if (s > 0.0) m += s * dir;
      elbo = accepted;
    }

    // Fixed point for the variances, damped in log space.
    objective.moments(m, v, d1, d2);
    const Eigen::VectorXd target = (prior.diag_k_inv.array() + (-d2).array().max(0.0)).inverse().matrix();
    const Eigen::VectorXd log_step = (target.array().log() - v.array().log()).matrix();
    double accepted = elbo;
    const double s = backtrack(
        [&](double t) { return objective.elbo(m, (v.array().log() + t * log_step.array()).exp().matrix()); },
        elbo, accepted);
    if (s > 0.0) v = (v.array().log() + s * log_step.array()).exp().matrix();
    elbo = accepted;

    if (!std::isfinite(elbo)) throw NumericalError(fmt::format("GP classifier ELBO diverged at iteration {}", it));
    out.elbo_trace.push_back(elbo);
    if (elbo - before <= config.tolerance * (1.0 + std::abs(elbo))) {
      ++it;
      break;
    }
  }
  out.kernel = kernel;
  out.inputs = x;
  out.mean = m;
  out.variance = v;
  out.jitter = prior.jitter;
  out.weights = prior.l_inv.transpose() * (prior.l_inv * m);
  out.elbo = elbo;
  out.iterations = it;
  return out;
}

Eigen::VectorXd gp_classify_predict(const GpClassifier& model, const Eigen::MatrixXd& x) {
  const Eigen::VectorXd f = kernel_matrix(model.kernel, x, model.inputs) * model.weights;
  return f.unaryExpr([](double z) { return sigmoid(z); });
}

double binary_accuracy(const Eigen::VectorXd& prob, const Eigen::VectorXd& labels) {
  if (prob.size() != labels.size() || prob.size() == 0) throw DimensionError("accuracy inputs differ in length");
  Index correct = 0;
  for (Index i = 0; i < prob.size(); ++i) {
    if ((prob[i] >= 0.5 ? 1.0 : 0.0) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(prob.size());
}

std::vector<CorruptionRow> corruption_sweep(const Dataset& train, const Dataset& test,
                                            const RbfKernel& kernel,
                                            std::span<const double> fractions, std::uint64_t seed,
                                            const GpClassifyConfig& config) {
  if (fractions.empty() || std::find(fractions.begin(), fractions.end(), 0.0) == fractions.end()) {
    throw ConfigError("corruption fractions must include 0");
  }
  if (train.num_classes != 2 || test.num_classes != 2) throw ConfigError("corruption sweep needs binary data");
  std::vector<CorruptionRow> rows;
  for (double f : fractions) {
    const Dataset noisy = corrupt_labels(train, f, seed);
    const GpClassifier model = gp_classify_binary(noisy.inputs, noisy.targets, kernel, config);
    CorruptionRow row;
    row.fraction = f;
    row.train_acc = binary_accuracy(gp_classify_predict(model, noisy.inputs), noisy.targets);
    row.test_acc = binary_accuracy(gp_classify_predict(model, test.inputs), test.targets);
    row.evidence_estimate = model.elbo;
    row.seed = seed;
    rows.push_back(row);
  }
  return rows;
}

void write_corruption_csv(std::span<const CorruptionRow> rows, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path));
  f << "fraction,train_acc,test_acc,evidence_estimate,seed\n";
  for (const CorruptionRow& r : rows) {
    f << fmt::format("{},{},{},{},{}\n", r.fraction, r.train_acc, r.test_acc, r.evidence_estimate, r.seed);
  }
  if (!f) throw IoError(fmt::format("failed writing {}", path));
}

}  // namespace bmaforge
