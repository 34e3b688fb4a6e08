#include "bmaforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include <fmt/format.h>
#include <json.hpp>

#include "bmaforge/error.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/parallel.hpp"

namespace bmaforge {

namespace {

constexpr double kMinDensity = 1e-12;

const ParamVector& any_member(const MixtureComponent& c) {
  if (const auto* d = std::get_if<DiracEnsemble>(&c)) {
    if (d->members.empty()) throw ConfigError("empty posterior ensemble");
    return d->members.front();
  }
  if (const auto* q = std::get_if<FactorizedGaussian>(&c)) return q->mean;
  return std::get<SwagGaussian>(c).mean;
}

ParamVector draw_component(const MixtureComponent& c, int k, std::uint64_t seed) {
  if (const auto* d = std::get_if<DiracEnsemble>(&c)) {
    if (d->members.empty()) throw ConfigError("empty posterior ensemble");
    return d->members[static_cast<std::size_t>(k) % d->members.size()];
  }
  if (const auto* q = std::get_if<FactorizedGaussian>(&c)) return sample_factorized(*q, seed);
  return sample_swag(std::get<SwagGaussian>(c), seed);
}

double log_normal_pdf(double y, double mean, double var) {
  const double r = y - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * r * r / var;
}

}  // namespace

void PredictiveSamples::validate() const {
  if (regression) {
    if (outputs.rows() != size() || outputs.cols() < 1) {
      throw DimensionError("regression predictive needs an n x J output matrix with J >= 1");
    }
    if (!(noise_variance > 0.0)) throw ConfigError("regression predictive needs a positive noise variance");
    return;
  }
  if (probs.empty()) throw DimensionError("classification predictive has no draws");
  for (const Eigen::MatrixXd& p : probs) {
    if (p.rows() != size() || p.cols() != probs.front().cols()) {
      throw DimensionError("class-probability draws have inconsistent shapes");
    }
    for (Index i = 0; i < p.rows(); ++i) {
      if (std::abs(p.row(i).sum() - 1.0) > 1e-9) throw DimensionError("class probabilities do not sum to 1");
    }
  }
}

PredictiveSamples PredictiveSamples::first(int j) const {
  if (j < 1 || j > draws()) throw ConfigError(fmt::format("cannot take {} of {} draws", j, draws()));
  PredictiveSamples out = *this;
  if (regression) {
    out.outputs = outputs.leftCols(j);
  } else {
    out.probs.resize(static_cast<std::size_t>(j));
  }
  return out;
}

std::vector<ParamVector> posterior_draws(const PosteriorApprox& posterior, int draws,
                                         std::uint64_t seed) {
  if (const auto* d = std::get_if<DiracEnsemble>(&posterior)) {
    if (d->members.empty()) throw ConfigError("empty posterior ensemble");
    return d->members;
  }
  if (draws < 1) throw ConfigError("need at least one posterior draw");
  std::vector<ParamVector> out;
  out.reserve(static_cast<std::size_t>(draws));
  if (const auto* m = std::get_if<Mixture>(&posterior)) {
    if (m->components.empty()) throw ConfigError("empty posterior mixture");
    const int comps = static_cast<int>(m->components.size());
    for (const auto& c : m->components) (void)any_member(c);
    for (int j = 0; j < draws; ++j) {
      out.push_back(draw_component(m->components[static_cast<std::size_t>(j % comps)], j / comps,
                                   derive_seed(seed, static_cast<std::uint64_t>(j))));
    }
    return out;
  }
  const MixtureComponent single = std::visit(
      [](const auto& p) -> MixtureComponent {
        if constexpr (std::is_same_v<std::decay_t<decltype(p)>, Mixture>) {
          throw Error("unreachable");
        } else {
          return p;
        }
      },
      posterior);
  for (int j = 0; j < draws; ++j) {
    out.push_back(draw_component(single, j, derive_seed(seed, static_cast<std::uint64_t>(j))));
  }
  return out;
}

PredictiveSamples predictive_from_draws(const NetworkSpec& spec, std::span<const ParamVector> draws,
                                        const Eigen::MatrixXd& inputs,
                                        const LikelihoodSpec& likelihood, std::string tag) {
  if (draws.empty()) throw ConfigError("empty posterior");
  likelihood.check_compatible(spec);
  if (inputs.cols() != spec.input_dim()) throw DimensionError("test inputs do not match the network");
  auto outs = parallel_map(draws.size(), [&](std::size_t j) {
    if (!draws[j].matches(spec)) throw DimensionError("posterior draw does not match the network layout");
    return forward(spec, draws[j], inputs);
  });
  PredictiveSamples pred;
  pred.inputs = inputs;
  pred.regression = likelihood.is_regression();
  pred.posterior_tag = std::move(tag);
  if (pred.regression) {
    pred.noise_variance = likelihood.noise_variance();
    pred.outputs.resize(inputs.rows(), static_cast<Index>(draws.size()));
    for (std::size_t j = 0; j < outs.size(); ++j) pred.outputs.col(static_cast<Index>(j)) = outs[j].col(0);
  } else {
    pred.probs.reserve(outs.size());
    for (const auto& o : outs) pred.probs.push_back(softmax_rows(o));
  }
  return pred;
}

PredictiveSamples predictive_samples(const NetworkSpec& spec, const PosteriorApprox& posterior,
                                     const Eigen::MatrixXd& inputs, int draws, std::uint64_t seed,
                                     const LikelihoodSpec& likelihood) {
  const std::vector<ParamVector> w = posterior_draws(posterior, draws, seed);
  return predictive_from_draws(spec, w, inputs, likelihood, posterior_tag(posterior));
}

Eigen::MatrixXd predictive_mean(const PredictiveSamples& pred) {
  pred.validate();
  if (pred.regression) return pred.outputs.rowwise().mean();
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(pred.size(), pred.probs.front().cols());
  for (const auto& p : pred.probs) mean += p;
  return mean / static_cast<double>(pred.probs.size());
}

NllReport nll_report(const PredictiveSamples& pred, const Eigen::VectorXd& targets) {
  pred.validate();
  if (targets.size() != pred.size()) throw DimensionError("targets do not align with the predictive");
  const int J = pred.draws();
  const double log_j = std::log(static_cast<double>(J));
  const double log_floor = std::log(kMinDensity);
  NllReport report;
  double total = 0.0;
  std::vector<double> terms(static_cast<std::size_t>(J));
  for (Index i = 0; i < pred.size(); ++i) {
    double log_p;
    if (pred.regression) {
      for (int j = 0; j < J; ++j) {
        terms[static_cast<std::size_t>(j)] = log_normal_pdf(targets[i], pred.outputs(i, j), pred.noise_variance);
      }
      const double mx = *std::max_element(terms.begin(), terms.end());
      double s = 0.0;
      for (double t : terms) s += std::exp(t - mx);
      log_p = mx + std::log(s) - log_j;
    } else {
      const Index y = static_cast<Index>(targets[i]);
      if (y < 0 || y >= pred.probs.front().cols() || static_cast<double>(y) != targets[i]) {
        throw ConfigError(fmt::format("label {} at row {} is not a valid class", targets[i], i));
      }
      double s = 0.0;
      for (const auto& p : pred.probs) s += p(i, y);
      log_p = std::log(s / J);
    }
    if (!(log_p >= log_floor)) {
      log_p = log_floor;
      ++report.clamped;
    }
    total -= log_p;
  }
  report.value = total / static_cast<double>(pred.size());
  return report;
}

double nll(const PredictiveSamples& pred, const Eigen::VectorXd& targets) {
  return nll_report(pred, targets).value;
}

double accuracy(const PredictiveSamples& pred, const Eigen::VectorXd& targets) {
  if (pred.regression) throw ConfigError("accuracy needs a classification predictive");
  if (targets.size() != pred.size()) throw DimensionError("targets do not align with the predictive");
  const Eigen::MatrixXd mean = predictive_mean(pred);
  Index correct = 0;
  for (Index i = 0; i < mean.rows(); ++i) {
    Index arg = 0;
    mean.row(i).maxCoeff(&arg);  // first maximum
    if (static_cast<double>(arg) == targets[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(mean.rows());
}

double ece(const PredictiveSamples& pred, const Eigen::VectorXd& targets, int n_bins) {
  if (n_bins < 1) throw ConfigError("ECE needs at least one bin");
  if (pred.regression) throw ConfigError("ECE needs a classification predictive");
  if (targets.size() != pred.size()) throw DimensionError("targets do not align with the predictive");
  const Eigen::MatrixXd mean = predictive_mean(pred);
  std::vector<double> conf_sum(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<double> correct(static_cast<std::size_t>(n_bins), 0.0);
  std::vector<Index> count(static_cast<std::size_t>(n_bins), 0);
  for (Index i = 0; i < mean.rows(); ++i) {
    Index arg = 0;
    const double conf = mean.row(i).maxCoeff(&arg);
    const auto b = static_cast<std::size_t>(
        std::clamp(static_cast<int>(std::floor(conf * n_bins)), 0, n_bins - 1));
    conf_sum[b] += conf;
    correct[b] += static_cast<double>(arg) == targets[i] ? 1.0 : 0.0;
    ++count[b];
  }
  double total = 0.0;
  for (std::size_t b = 0; b < conf_sum.size(); ++b) {
    if (count[b] == 0) continue;
    total += std::abs(correct[b] - conf_sum[b]);  // |B| * |acc - conf|
  }
  return total / static_cast<double>(mean.rows());
}

double wasserstein1(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw ConfigError("W1 needs nonempty sample sets");
  std::vector<double> sa(a.begin(), a.end()), sb(b.begin(), b.end());
  std::sort(sa.begin(), sa.end());
  std::sort(sb.begin(), sb.end());
  if (sa.size() == sb.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < sa.size(); ++i) s += std::abs(sa[i] - sb[i]);
    return s / static_cast<double>(sa.size());
  }
  // Integral of |F_a - F_b| over the merged breakpoints.
  const double na = static_cast<double>(sa.size()), nb = static_cast<double>(sb.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(sa.front(), sb.front());
  double total = 0.0;
  while (i < sa.size() || j < sb.size()) {
    const double next = (j == sb.size() || (i < sa.size() && sa[i] <= sb[j])) ? sa[i] : sb[j];
    total += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    while (i < sa.size() && sa[i] == next) ++i;
    while (j < sb.size() && sb[j] == next) ++j;
    prev = next;
  }
  return total;
}

W1Result wasserstein1_predictive(const PredictiveSamples& a, const PredictiveSamples& b) {
  if (!a.regression || !b.regression) throw ConfigError("W1 comparison needs regression predictives");
  a.validate();
  b.validate();
  if (a.inputs.rows() != b.inputs.rows() || a.inputs.cols() != b.inputs.cols() || a.inputs != b.inputs) {
    throw DimensionError("predictives are evaluated on different input grids");
  }
  W1Result r;
  r.per_location.resize(a.size());
  for (Index i = 0; i < a.size(); ++i) {
    const Eigen::RowVectorXd ra = a.outputs.row(i), rb = b.outputs.row(i);
    r.per_location[i] = wasserstein1({ra.data(), static_cast<std::size_t>(ra.size())},
                                     {rb.data(), static_cast<std::size_t>(rb.size())});
  }
  r.mean = r.per_location.mean();
  return r;
}

double empirical_quantile(std::vector<double> values, double p) {
  if (values.empty()) throw ConfigError("quantile of an empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(fmt::format("quantile level {} outside [0, 1]", p));
  std::sort(values.begin(), values.end());
  const double pos = std::ceil(p * static_cast<double>(values.size()));
  const auto k = static_cast<std::size_t>(std::clamp(pos - 1.0, 0.0, static_cast<double>(values.size() - 1)));
  return values[k];
}

Band predictive_band(const PredictiveSamples& pred, const BandOptions& options) {
  if (!pred.regression) throw ConfigError("predictive band needs a regression predictive");
  pred.validate();
  Band band;
  band.mean = pred.outputs.rowwise().mean();
  band.lower.resize(pred.size());
  band.upper.resize(pred.size());
  for (Index i = 0; i < pred.size(); ++i) {
    if (options.mode == BandMode::Sigma) {
      // Law of total variance over the equally weighted Gaussian components.
      double var = (pred.outputs.row(i).array() - band.mean[i]).square().mean();
      if (options.include_noise) var += pred.noise_variance;
      const double sd = std::sqrt(var);
      band.lower[i] = band.mean[i] - options.k * sd;
      band.upper[i] = band.mean[i] + options.k * sd;
    } else {
      std::vector<double> row(static_cast<std::size_t>(pred.draws()));
      for (int j = 0; j < pred.draws(); ++j) row[static_cast<std::size_t>(j)] = pred.outputs(i, j);
      band.lower[i] = empirical_quantile(row, options.lower_q);
      band.upper[i] = empirical_quantile(std::move(row), options.upper_q);
    }
  }
  return band;
}

double median(std::vector<double> values) {
  if (values.empty()) throw ConfigError("median of an empty sample");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

double standard_error(std::span<const double> values) {
  const std::size_t n = values.size();
  if (n < 2) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / static_cast<double>(n - 1) / static_cast<double>(n));
}

std::string to_json(const MetricRecord& record) {
  nlohmann::ordered_json j;
  j["metric"] = record.metric;
  j["value"] = record.value;
  j["J"] = record.draws;
  j["posterior_tag"] = record.posterior_tag;
  j["seed"] = record.seed;
  if (!record.config_hash.empty()) j["config_hash"] = record.config_hash;
  return j.dump();
}

void write_w1_csv(const Eigen::VectorXd& x, const Eigen::VectorXd& w1, const std::string& path) {
  if (x.size() != w1.size()) throw DimensionError("x and w1 lengths differ");
  std::ofstream f(path);
  if (!f) throw IoError(fmt::format("cannot open {} for writing", path));
  f << "x,w1\n";
  for (Index i = 0; i < x.size(); ++i) f << fmt::format("{},{}\n", x[i], w1[i]);
  if (!f) throw IoError(fmt::format("failed writing {}", path));
}

}  // namespace bmaforge
