#include <fmt/format.h>

#include "bmaforge/experiments.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/priors.hpp"
#include "bmaforge/results.hpp"
#include "common.hpp"

namespace bmaforge {

namespace {

/// Logit `class_index` of `functions` prior draws along the path
/// x(t) = t x0 + (1 - t) x1 with every point rescaled to the norm of x0.
Table path_samples(const NetworkSpec& spec, const PriorSpec& prior, const Eigen::VectorXd& x0,
                   const Eigen::VectorXd& x1, int points, int functions, int class_index,
                   std::uint64_t seed, double alpha, const std::string& hash) {
  Eigen::MatrixXd path(points, x0.size());
  Eigen::VectorXd ts(points);
  for (int i = 0; i < points; ++i) {
    const double t = points == 1 ? 0.0 : static_cast<double>(i) / (points - 1);
    ts[i] = t;
    const Eigen::VectorXd x = t * x0 + (1.0 - t) * x1;
    const double norm = x.norm();
    if (!(norm > 0.0)) throw DegenerateError("interpolation path passes through the zero image");
    path.row(i) = (x * (x0.norm() / norm)).transpose();
  }
  const Eigen::MatrixXd f = prior_logit_samples(spec, prior, path, class_index, functions, seed);
  Table t({"alpha", "function", "t", "logit", "seed", "config_hash"});
  for (int s = 0; s < functions; ++s) {
    for (int i = 0; i < points; ++i) t.add(alpha, s, ts[i], f(s, i), seed, hash);
  }
  return t;
}

}  // namespace

PriorStudySummary cmd_prior_study(const ExperimentConfig& cfg) {
  RunOutput out(cfg, "prior-study");
  try {
    const Dataset all = run_stage("data", [&] { return detail::load_images(cfg); });
    const std::vector<int> classes = cfg.get_ints("data.classes", {0, 1, 2, 4, 7});
    const int per_class = cfg.get_int("data.per_class", 20);
    const std::vector<int> hidden = cfg.get_ints("model.hidden", {256, 256});
    const bool bias = cfg.get_bool("model.bias", true);
    const int class_index = cfg.get_int("model.class_index", 0);
    const std::vector<double> alphas = cfg.get_doubles("prior.alphas", {0.02, 0.1, 1.0});
    const int samples = cfg.get_int("prior.samples", 500);
    const int predictive_samples = cfg.get_int("predictive.samples", 200);
    const int path_points = cfg.get_int("path.points", 51);
    const int path_functions = cfg.get_int("path.functions", 10);
    const std::vector<int> levels = cfg.get_ints("decay.levels", {0, 1, 2, 3, 4, 5});
    const int decay_images = cfg.get_int("decay.images", 20);
    const int decay_samples = cfg.get_int("decay.samples", 200);
    const double decay_alpha = cfg.get_double("decay.alpha", 1.0);
    cfg.check_all_used();

    const NetworkSpec spec = detail::network(static_cast<int>(all.dim()), hidden, 10, bias);
    PriorStudySummary summary;
    summary.alphas = alphas;
    summary.seeds = cfg.seeds();
    summary.within.assign(alphas.size(), {});
    summary.cross.assign(alphas.size(), {});

    Table class_table({"alpha", "within_class", "cross_class", "within_exceeds_cross", "samples", "seed",
                       "config_hash"});
    Table predictive_table({"alpha", "class", "mean_prob", "mean_max_prob", "seed", "config_hash"});
    Table decay_table({"model", "perturbation", "level", "mean_corr", "std_corr", "seed", "config_hash"});
    Table matrix_table({"alpha", "row", "col", "label_row", "label_col", "corr", "seed", "config_hash"});
    Table blocks_table({"alpha", "class_a", "class_b", "mean_corr", "seed", "config_hash"});
    for (std::uint64_t seed : cfg.seeds()) {
      const Dataset images = subsample(all, per_class, classes, seed);
      std::vector<int> labels(static_cast<std::size_t>(images.size()));
      for (Index i = 0; i < images.size(); ++i) labels[static_cast<std::size_t>(i)] = images.label(i);

      for (std::size_t a = 0; a < alphas.size(); ++a) {
        const PriorSpec prior = PriorSpec::isotropic(spec, alphas[a]);
        const std::uint64_t draw_seed = derive_seed(seed, a);
        const CorrelationDiagram diagram = run_stage(fmt::format("correlation alpha={}", alphas[a]), [&] {
          return prior_logit_correlation(spec, prior, images.inputs, labels, class_index, samples, draw_seed);
        });
        for (Index i = 0; i < diagram.corr.rows(); ++i) {
          for (Index j = 0; j < diagram.corr.cols(); ++j) {
            matrix_table.add(alphas[a], static_cast<long>(i), static_cast<long>(j), labels[static_cast<std::size_t>(i)],
                             labels[static_cast<std::size_t>(j)], diagram.corr(i, j), seed, out.config_hash());
          }
        }
        for (std::size_t ca = 0; ca < diagram.classes.size(); ++ca) {
          for (std::size_t cb = 0; cb < diagram.classes.size(); ++cb) {
            blocks_table.add(alphas[a], diagram.classes[ca], diagram.classes[cb],
                             diagram.block_means(static_cast<Index>(ca), static_cast<Index>(cb)), seed,
                             out.config_hash());
          }
        }
        const double within = diagram.within_class_mean(), cross = diagram.cross_class_mean();
        summary.within[a].push_back(within);
        summary.cross[a].push_back(cross);
        class_table.add(alphas[a], within, cross, within > cross ? "pass" : "fail", samples, seed,
                        out.config_hash());

        const PriorPredictiveSummary pp =
            prior_predictive_summary(spec, prior, images.inputs, predictive_samples, derive_seed(draw_seed, 1));
        const double max_prob = pp.per_sample.rowwise().maxCoeff().mean();
        for (Index c = 0; c < pp.average.size(); ++c) {
          predictive_table.add(alphas[a], static_cast<int>(c), pp.average[c], max_prob, seed, out.config_hash());
        }

        // Path between the first images of the first two classes.
        const Eigen::VectorXd x0 = images.inputs.row(0).transpose();
        const Eigen::VectorXd x1 = images.inputs.row(per_class).transpose();
        out.write_table(fmt::format("path_alpha{}_seed{}.csv", alphas[a], seed),
                        path_samples(spec, prior, x0, x1, path_points, path_functions, class_index,
                                     derive_seed(draw_seed, 2), alphas[a], out.config_hash()));
      }

      // Correlation between clean and perturbed images for the network, a
      // linear model and an RBF kernel matched on the clean images.
      run_stage("perturbation decay", [&] {
        std::vector<Index> first(static_cast<std::size_t>(std::min<Index>(decay_images, images.size())));
        for (std::size_t i = 0; i < first.size(); ++i) {
          first[i] = static_cast<Index>(i) * images.size() / static_cast<Index>(first.size());
        }
        const Dataset subset = images.rows(first);
        const ImageSet picture = images_of(subset, 28, 28);
        CorrelationModel bnn{ReferenceModel::BNN, spec, PriorSpec::isotropic(spec, decay_alpha), class_index, 1.0};
        const double bnn_mean =
            prior_logit_correlation(spec, bnn.prior, subset.inputs, std::vector<int>(first.size(), 0), class_index,
                                    decay_samples, derive_seed(seed, 99))
                .mean_offdiagonal();
        CorrelationModel linear{ReferenceModel::Linear, spec, bnn.prior, class_index, 1.0};
        CorrelationModel rbf{ReferenceModel::RBF, spec, bnn.prior, class_index,
                             calibrate_rbf_lengthscale(bnn_mean, subset.inputs)};
        for (Perturbation kind : {Perturbation::GaussianNoise, Perturbation::Translate}) {
          for (const auto& [name, model] : {std::pair{"bnn", bnn}, std::pair{"linear", linear}, std::pair{"rbf", rbf}}) {
            const auto points =
                perturbation_correlation_decay(model, picture, kind, levels, decay_samples, derive_seed(seed, 100));
            for (const DecayPoint& p : points) {
              decay_table.add(name, to_string(kind), p.level, p.mean, p.stddev, seed, out.config_hash());
            }
          }
        }
        return 0;
      });
    }
    out.write_table("class_correlation.csv", class_table);
    out.write_table("correlation_matrix.csv", matrix_table);
    out.write_table("correlation_blocks.csv", blocks_table);
    out.write_table("prior_predictive.csv", predictive_table);
    out.write_table("correlation_decay.csv", decay_table);
    out.commit({{"network", "fully connected ReLU network on flattened 28x28 images"},
                {"logit", fmt::format("class {}", class_index)}});
    return summary;
  } catch (const std::exception& e) {
    out.quarantine(e.what());
    throw;
  }
}

}  // namespace bmaforge
