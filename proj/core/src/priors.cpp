#include "bmaforge/priors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <fmt/format.h>

#include "bmaforge/error.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/parallel.hpp"
#include "bmaforge/random.hpp"

namespace bmaforge {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_layers(const PriorSpec& prior, const ParamLayout& layout) {
  if (prior.num_layers() != layout.num_layers() ||
      prior.bias_scales.size() != prior.weight_scales.size()) {
    throw DimensionError(fmt::format("prior has {} layers, parameters have {}", prior.num_layers(),
                                     layout.num_layers()));
  }
}

}  // namespace

PriorTerm prior_neg_log_density_and_grad(const PriorSpec& prior, const ParamVector& params) {
  const ParamLayout& layout = params.layout();
  check_layers(prior, layout);
  PriorTerm t;
  t.grad = Eigen::VectorXd::Zero(params.size());
  const Eigen::VectorXd& w = params.values();
  for (int l = 0; l < layout.num_layers(); ++l) {
    const LayerSlot& s = layout.layer(l);
    const double alpha = prior.weight_scales[static_cast<std::size_t>(l)];
    if (!(alpha > 0.0)) throw ConfigError(fmt::format("weight scale of layer {} must be positive", l));
    const auto wl = w.segment(s.weight_offset, s.weight_count());
    const double inv_var = 1.0 / (alpha * alpha);
    t.value += 0.5 * inv_var * wl.squaredNorm() +
               static_cast<double>(s.weight_count()) * (std::log(alpha) + kHalfLog2Pi);
    t.grad.segment(s.weight_offset, s.weight_count()) = inv_var * wl;
    if (!s.has_bias) continue;
    const double beta = prior.bias_scales[static_cast<std::size_t>(l)];
    const auto bl = w.segment(s.bias_offset, s.out);
    if (beta == 0.0) {
      if (bl.cwiseAbs().maxCoeff() != 0.0) {
        throw DegenerateError(fmt::format("layer {} has zero bias scale but nonzero biases", l));
      }
      continue;
    }
    if (!(beta > 0.0)) throw ConfigError(fmt::format("bias scale of layer {} is negative", l));
    const double inv_bvar = 1.0 / (beta * beta);
    t.value += 0.5 * inv_bvar * bl.squaredNorm() + s.out * (std::log(beta) + kHalfLog2Pi);
    t.grad.segment(s.bias_offset, s.out) = inv_bvar * bl;
  }
  return t;
}

double log_prior_density(const PriorSpec& prior, const ParamVector& params) {
  return -prior_neg_log_density_and_grad(prior, params).value;
}

Eigen::VectorXd free_parameter_mask(const PriorSpec& prior, const ParamLayout& layout) {
  check_layers(prior, layout);
  Eigen::VectorXd mask = Eigen::VectorXd::Ones(layout.size());
  for (int l = 0; l < layout.num_layers(); ++l) {
    const LayerSlot& s = layout.layer(l);
    if (s.has_bias && prior.bias_scales[static_cast<std::size_t>(l)] == 0.0) {
      mask.segment(s.bias_offset, s.out).setZero();
    }
  }
  return mask;
}

Eigen::VectorXd prior_std_vector(const PriorSpec& prior, const ParamLayout& layout) {
  check_layers(prior, layout);
  Eigen::VectorXd stds(layout.size());
  for (int l = 0; l < layout.num_layers(); ++l) {
    const LayerSlot& s = layout.layer(l);
    stds.segment(s.weight_offset, s.weight_count())
        .setConstant(prior.weight_scales[static_cast<std::size_t>(l)]);
    if (s.has_bias) {
      stds.segment(s.bias_offset, s.out).setConstant(prior.bias_scales[static_cast<std::size_t>(l)]);
    }
  }
  return stds;
}

ParamVector sample_standard_noise(const NetworkSpec& spec, std::uint64_t seed) {
  ParamLayout layout(spec);
  Rng rng(seed);
  return ParamVector(std::move(layout), standard_normal(count_params(spec), rng));
}

ParamVector scale_noise(const ParamVector& noise, const PriorSpec& prior) {
  const ParamLayout& layout = noise.layout();
  check_layers(prior, layout);
  ParamVector out = noise;
  for (int l = 0; l < layout.num_layers(); ++l) {
    const double alpha = prior.weight_scales[static_cast<std::size_t>(l)];
    const double beta = prior.bias_scales[static_cast<std::size_t>(l)];
    if (alpha < 0.0 || beta < 0.0) throw ConfigError("prior scales must be non-negative");
    out.weight(l) *= alpha;
    if (layout.layer(l).has_bias) out.bias(l) *= beta;
  }
  return out;
}

ParamVector sample_params(const NetworkSpec& spec, const PriorSpec& prior, std::uint64_t seed) {
  if (prior.num_layers() != spec.num_layers()) {
    throw DimensionError(fmt::format("prior has {} layers, network has {}", prior.num_layers(),
                                     spec.num_layers()));
  }
  return scale_noise(sample_standard_noise(spec, seed), prior);
}

// ---------------------------------------------------------------------------

namespace {

ScalingReport compare_scaled(const NetworkSpec& spec, const ParamVector& noise,
                             const PriorSpec& scaled, const PriorSpec& reference, double factor,
                             const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd lhs = forward(spec, scale_noise(noise, scaled), inputs);
  const Eigen::MatrixXd rhs = factor * forward(spec, scale_noise(noise, reference), inputs);
  const double floor = 1e-12 * rhs.cwiseAbs().maxCoeff();
  ScalingReport report;
  report.factor = factor;
  for (Index i = 0; i < lhs.size(); ++i) {
    const double denom = std::max(std::abs(rhs.data()[i]), floor);
    if (denom == 0.0) continue;
    report.max_rel_deviation =
        std::max(report.max_rel_deviation, std::abs(lhs.data()[i] - rhs.data()[i]) / denom);
  }
  return report;
}

Eigen::MatrixXd random_inputs(const NetworkSpec& spec, int n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xC0FFEE));
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd x(n, spec.input_dim());
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

}  // namespace

ScalingReport verify_output_scaling(const NetworkSpec& spec, std::span<const double> scales,
                                    std::uint64_t seed, int num_inputs) {
  spec.validate();
  if (spec.has_any_bias()) throw ConfigError("output-scale identity needs a bias-free network");
  if (static_cast<int>(scales.size()) != spec.num_layers()) {
    throw DimensionError(fmt::format("{} scales for {} layers", scales.size(), spec.num_layers()));
  }
  PriorSpec scaled, unit;
  double factor = 1.0;
  for (double a : scales) {
    if (!(a > 0.0)) throw ConfigError("weight scales must be positive");
    scaled.weight_scales.push_back(a);
    scaled.bias_scales.push_back(0.0);
    unit.weight_scales.push_back(1.0);
    unit.bias_scales.push_back(0.0);
    factor *= a;
  }
  const ParamVector noise = sample_standard_noise(spec, seed);
  return compare_scaled(spec, noise, scaled, unit, factor, random_inputs(spec, num_inputs, seed));
}

ScalingReport verify_geometric_scaling(const NetworkSpec& spec, const PriorSpec& base,
                                       double gamma, std::uint64_t seed, int num_inputs) {
  spec.validate();
  if (!(gamma > 0.0)) throw ConfigError("gamma must be positive");
  if (base.num_layers() != spec.num_layers()) {
    throw DimensionError("base prior does not match the network");
  }
  const ParamVector noise = sample_standard_noise(spec, seed);
  const double factor = std::pow(gamma, spec.num_layers());
  return compare_scaled(spec, noise, PriorSpec::geometric(base, gamma), base, factor,
                        random_inputs(spec, num_inputs, seed));
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd prior_logit_samples(const NetworkSpec& spec, const PriorSpec& prior,
                                    const Eigen::MatrixXd& inputs, int class_index, int samples,
                                    std::uint64_t seed) {
  if (samples < 1) throw ConfigError("need at least one prior sample");
  if (class_index < 0 || class_index >= spec.output_dim()) {
    throw DimensionError(fmt::format("class index {} outside [0, {})", class_index, spec.output_dim()));
  }
  auto rows = parallel_map(static_cast<std::size_t>(samples), [&](std::size_t s) {
    const ParamVector w = sample_params(spec, prior, derive_seed(seed, s));
    return Eigen::VectorXd(forward(spec, w, inputs).col(class_index));
  });
  Eigen::MatrixXd out(samples, inputs.rows());
  for (int s = 0; s < samples; ++s) out.row(s) = rows[static_cast<std::size_t>(s)].transpose();
  return out;
}

Eigen::MatrixXd correlation_from_samples(const Eigen::MatrixXd& samples) {
  if (samples.rows() < 2) throw ConfigError("correlations need at least two samples");
  const Eigen::MatrixXd centered = samples.rowwise() - samples.colwise().mean();
  const Eigen::MatrixXd cov = centered.transpose() * centered;
  const Eigen::VectorXd sd = cov.diagonal().cwiseSqrt();
  for (Index i = 0; i < sd.size(); ++i) {
    if (!(sd[i] > 0.0)) {
      throw DegenerateError(fmt::format("input {} has zero variance across samples", i));
    }
  }
  Eigen::MatrixXd corr = cov.array() / (sd * sd.transpose()).array();
  for (Index i = 0; i < corr.rows(); ++i) {
    corr(i, i) = 1.0;
    for (Index j = 0; j < i; ++j) {
      const double v = std::clamp(0.5 * (corr(i, j) + corr(j, i)), -1.0, 1.0);
      corr(i, j) = corr(j, i) = v;
    }
  }
  return corr;
}

CorrelationDiagram make_correlation_diagram(Eigen::MatrixXd corr, std::span<const int> labels,
                                            int samples) {
  if (corr.rows() != static_cast<Index>(labels.size()) || corr.cols() != corr.rows()) {
    throw DimensionError("correlation matrix and labels disagree");
  }
  CorrelationDiagram d;
  d.corr = std::move(corr);
  d.labels.assign(labels.begin(), labels.end());
  d.samples = samples;
  std::vector<int> class_of(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = std::find(d.classes.begin(), d.classes.end(), labels[i]);
    if (it == d.classes.end()) {
      d.classes.push_back(labels[i]);
      it = d.classes.end() - 1;
    }
    class_of[i] = static_cast<int>(it - d.classes.begin());
  }
  const Index c = static_cast<Index>(d.classes.size());
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(c, c), count = Eigen::MatrixXd::Zero(c, c);
  for (Index i = 0; i < d.corr.rows(); ++i) {
    for (Index j = 0; j < d.corr.cols(); ++j) {
      if (i == j) continue;
      sum(class_of[i], class_of[j]) += d.corr(i, j);
      count(class_of[i], class_of[j]) += 1.0;
    }
  }
  d.block_means = (count.array() > 0.0).select(sum.array() / count.array(), 1.0);
  return d;
}

double CorrelationDiagram::within_class_mean() const {
  double sum = 0.0;
  double n = 0.0;
  for (Index i = 0; i < corr.rows(); ++i) {
    for (Index j = 0; j < corr.cols(); ++j) {
      if (i != j && labels[i] == labels[j]) {
        sum += corr(i, j);
        n += 1.0;
      }
    }
  }
  return n > 0.0 ? sum / n : 1.0;
}

double CorrelationDiagram::cross_class_mean() const {
  double sum = 0.0;
  double n = 0.0;
  for (Index i = 0; i < corr.rows(); ++i) {
    for (Index j = 0; j < corr.cols(); ++j) {
      if (labels[i] != labels[j]) {
        sum += corr(i, j);
        n += 1.0;
      }
    }
  }
  return n > 0.0 ? sum / n : 0.0;
}

double CorrelationDiagram::mean_offdiagonal() const {
  const double n = static_cast<double>(corr.rows());
  if (n < 2) return 1.0;
  return (corr.sum() - corr.trace()) / (n * (n - 1.0));
}

CorrelationDiagram prior_logit_correlation(const NetworkSpec& spec, const PriorSpec& prior,
                                           const Eigen::MatrixXd& inputs,
                                           std::span<const int> labels, int class_index,
                                           int samples, std::uint64_t seed) {
  if (samples < 2) throw ConfigError("prior correlations need S >= 2");
  if (inputs.rows() == 0) throw DimensionError("no inputs");
  const Eigen::MatrixXd logits =
      prior_logit_samples(spec, prior, inputs, class_index, samples, seed);
  return make_correlation_diagram(correlation_from_samples(logits), labels, samples);
}

void write_correlation_csv(const CorrelationDiagram& d, const std::string& matrix_path,
                           const std::string& blocks_path) {
  std::ofstream m(matrix_path);
  if (!m) throw IoError(fmt::format("cannot open {}", matrix_path));
  m << "row,col,label_row,label_col,corr\n";
  for (Index i = 0; i < d.corr.rows(); ++i) {
    for (Index j = 0; j < d.corr.cols(); ++j) {
      m << fmt::format("{},{},{},{},{}\n", i, j, d.labels[i], d.labels[j], d.corr(i, j));
    }
  }
  std::ofstream b(blocks_path);
  if (!b) throw IoError(fmt::format("cannot open {}", blocks_path));
  b << "class_a,class_b,mean_corr\n";
  for (std::size_t a = 0; a < d.classes.size(); ++a) {
    for (std::size_t c = 0; c < d.classes.size(); ++c) {
      b << fmt::format("{},{},{}\n", d.classes[a], d.classes[c],
                       d.block_means(static_cast<Index>(a), static_cast<Index>(c)));
    }
  }
  if (!m || !b) throw IoError("failed writing correlation diagram");
}

PriorPredictiveSummary prior_predictive_summary(const NetworkSpec& spec, const PriorSpec& prior,
                                                const Eigen::MatrixXd& inputs, int samples,
                                                std::uint64_t seed) {
  if (samples < 1) throw ConfigError("need at least one prior sample");
  if (spec.output_dim() < 2) throw DimensionError("prior predictive needs class logits");
  auto rows = parallel_map(static_cast<std::size_t>(samples), [&](std::size_t s) {
    const ParamVector w = sample_params(spec, prior, derive_seed(seed, s));
    return Eigen::VectorXd(softmax_rows(forward(spec, w, inputs)).colwise().mean().transpose());
  });
  PriorPredictiveSummary out;
  out.per_sample.resize(samples, spec.output_dim());
  for (int s = 0; s < samples; ++s) out.per_sample.row(s) = rows[static_cast<std::size_t>(s)].transpose();
  out.average = out.per_sample.colwise().mean().transpose();
  return out;
}

// ---------------------------------------------------------------------------

namespace {

/// Correlation between each clean image and its perturbed copy, one column
/// per level. BNN logits for every level come from the same weight draws.
Eigen::MatrixXd pair_correlations(const CorrelationModel& model, const Eigen::MatrixXd& x,
                                  const std::vector<Eigen::MatrixXd>& shifted, int samples,
                                  std::uint64_t seed) {
  const Index n = x.rows();
  const Index levels = static_cast<Index>(shifted.size());
  Eigen::MatrixXd corr(n, levels);
  switch (model.kind) {
    case ReferenceModel::BNN: {
      Eigen::MatrixXd all((levels + 1) * n, x.cols());
      all.topRows(n) = x;
      for (Index k = 0; k < levels; ++k) all.middleRows((k + 1) * n, n) = shifted[static_cast<std::size_t>(k)];
      const Eigen::MatrixXd f = prior_logit_samples(model.spec, model.prior, all, model.class_index, samples, seed);
      const Eigen::MatrixXd c = f.rowwise() - f.colwise().mean();
      for (Index k = 0; k < levels; ++k) {
        for (Index i = 0; i < n; ++i) {
          const Index j = (k + 1) * n + i;
          const double va = c.col(i).squaredNorm();
          const double vb = c.col(j).squaredNorm();
          if (!(va > 0.0) || !(vb > 0.0)) {
            throw DegenerateError(fmt::format("image {} has a zero-variance logit", i));
          }
          corr(i, k) = std::clamp(c.col(i).dot(c.col(j)) / std::sqrt(va * vb), -1.0, 1.0);
        }
      }
      break;
    }
    case ReferenceModel::Linear:
      for (Index k = 0; k < levels; ++k) {
        const Eigen::MatrixXd& xt = shifted[static_cast<std::size_t>(k)];
        for (Index i = 0; i < n; ++i) {
          const double na = x.row(i).norm(), nb = xt.row(i).norm();
          if (!(na > 0.0) || !(nb > 0.0)) {
            throw DegenerateError(fmt::format("image {} has zero norm", i));
          }
          corr(i, k) = std::clamp(x.row(i).dot(xt.row(i)) / (na * nb), -1.0, 1.0);
        }
      }
      break;
    case ReferenceModel::RBF: {
      if (!(model.lengthscale > 0.0)) throw ConfigError("RBF lengthscale must be positive");
      const double l2 = model.lengthscale * model.lengthscale;
      for (Index k = 0; k < levels; ++k) {
        const Eigen::MatrixXd& xt = shifted[static_cast<std::size_t>(k)];
        for (Index i = 0; i < n; ++i) corr(i, k) = std::exp(-(x.row(i) - xt.row(i)).squaredNorm() / (2.0 * l2));
      }
      break;
    }
  }
  return corr;
}

}  // namespace

std::vector<DecayPoint> perturbation_correlation_decay(const CorrelationModel& model,
                                                       const ImageSet& images,
                                                       Perturbation perturbation,
                                                       std::span<const int> levels, int samples,
                                                       std::uint64_t seed) {
  if (images.size() == 0) throw DimensionError("no images");
  if (model.kind == ReferenceModel::BNN && samples < 2) {
    throw ConfigError("BNN correlations need S >= 2");
  }
  std::vector<Eigen::MatrixXd> shifted;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    if (k > 0 && levels[k] <= levels[k - 1]) throw ConfigError("intensities must be ascending");
    const int level = levels[k];
    shifted.push_back(
        perturb(images, perturbation, level, derive_seed(seed, 1000 + static_cast<std::uint64_t>(level))).pixels);
  }
  const Eigen::MatrixXd corr = pair_correlations(model, images.pixels, shifted, samples, seed);
  std::vector<DecayPoint> curve;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    const Eigen::VectorXd c = corr.col(static_cast<Index>(k));
    DecayPoint p;
    p.level = levels[k];
    p.mean = c.mean();
    p.stddev = c.size() > 1 ? std::sqrt((c.array() - p.mean).square().sum() / (c.size() - 1)) : 0.0;
    curve.push_back(p);
  }
  return curve;
}

double mean_rbf_correlation(double lengthscale, const Eigen::MatrixXd& points) {
  const Index n = points.rows();
  if (n < 2) throw DimensionError("need at least two points");
  const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) sum += std::exp(-(points.row(i) - points.row(j)).squaredNorm() * inv);
  }
  return sum / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

double calibrate_rbf_lengthscale(double target, const Eigen::MatrixXd& points) {
  const Index n = points.rows();
  if (n < 2) throw DimensionError("need at least two points");
  double dmin = std::numeric_limits<double>::infinity(), dmax = 0.0;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double d = (points.row(i) - points.row(j)).norm();
      dmax = std::max(dmax, d);
      if (d > 0.0) dmin = std::min(dmin, d);
    }
  }
  if (dmax == 0.0) {
    throw DegenerateError("all points coincide: every lengthscale gives correlation 1");
  }
  if (!(target > 0.0 && target < 1.0)) {
    throw DegenerateError(fmt::format("target correlation {} is not reachable in (0, 1)", target));
  }
  double lo = std::log(1e-3 * dmin), hi = std::log(1e3 * dmax);
  if (mean_rbf_correlation(std::exp(lo), points) > target ||
      mean_rbf_correlation(std::exp(hi), points) < target) {
    throw DegenerateError(fmt::format("target correlation {} is outside the search bracket", target));
  }
  double mid = 0.5 * (lo + hi);
  for (int it = 0; it < 200; ++it) {
    mid = 0.5 * (lo + hi);
    const double m = mean_rbf_correlation(std::exp(mid), points);
    if (std::abs(m - target) < 1e-4) break;
    (m < target ? lo : hi) = mid;
  }
  return std::exp(mid);
}

}  // namespace bmaforge
