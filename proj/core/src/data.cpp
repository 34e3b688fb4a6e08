#include "bmaforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

#include "bmaforge/error.hpp"
#include "bmaforge/nn.hpp"
#include "bmaforge/priors.hpp"
#include "bmaforge/random.hpp"

namespace bmaforge {

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

void Dataset::validate() const {
  if (inputs.rows() == 0) throw DimensionError("dataset is empty");
  if (targets.size() != inputs.rows()) {
    throw DimensionError(
        fmt::format("{} inputs but {} targets", inputs.rows(), targets.size()));
  }
  if (!inputs.allFinite()) throw ConfigError("dataset inputs contain non-finite values");
  if (is_classification()) {
    for (Index i = 0; i < targets.size(); ++i) {
      const double t = targets[i];
      if (t != std::floor(t) || t < 0 || t >= num_classes) {
        throw ConfigError(fmt::format("label {} at row {} outside [0, {})", t, i, num_classes));
      }
    }
  }
}

Dataset Dataset::rows(std::span<const Index> indices) const {
  Dataset out;
  out.inputs.resize(static_cast<Index>(indices.size()), inputs.cols());
  out.targets.resize(static_cast<Index>(indices.size()));
  for (std::size_t k = 0; k < indices.size(); ++k) {
    out.inputs.row(static_cast<Index>(k)) = inputs.row(indices[k]);
    out.targets[static_cast<Index>(k)] = targets[indices[k]];
  }
  out.num_classes = num_classes;
  out.split = split;
  out.meta = meta;
  return out;
}

ImageSet images_of(const Dataset& ds, int rows, int cols) {
  if (Index{rows} * cols != ds.dim()) {
    throw DimensionError(fmt::format("{}x{} images do not match input dim {}", rows, cols, ds.dim()));
  }
  ImageSet images;
  images.rows = rows;
  images.cols = cols;
  images.pixels = ds.inputs;
  if (ds.is_classification()) {
    for (Index i = 0; i < ds.size(); ++i) images.labels.push_back(ds.label(i));
  }
  return images;
}

Dataset to_dataset(const ImageSet& images, int num_classes, Split split) {
  if (images.labels.size() != static_cast<std::size_t>(images.size())) {
    throw DimensionError("image set has no labels for every image");
  }
  Dataset ds;
  ds.inputs = images.pixels;
  ds.targets.resize(images.size());
  for (Index i = 0; i < images.size(); ++i) ds.targets[i] = images.labels[static_cast<std::size_t>(i)];
  ds.num_classes = num_classes;
  ds.split = split;
  ds.meta.generator = "image-set";
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------

Eigen::MatrixXd toy_features(const Eigen::VectorXd& x) {
  Eigen::MatrixXd f(x.size(), 2);
  f.col(0) = x;
  f.col(1) = x.array().square();
  return f;
}

ToyRegression gen_toy_regression(std::uint64_t seed, const ToyRegressionOptions& options) {
  if (options.clusters.empty() || options.points_per_cluster < 1 || options.grid_points < 2) {
    throw ConfigError("toy regression needs clusters, points and a grid");
  }
  ToyRegression toy;
  std::vector<int> sizes{2};
  sizes.insert(sizes.end(), options.hidden.begin(), options.hidden.end());
  sizes.push_back(1);
  toy.generator = NetworkSpec::mlp(sizes, true);
  toy.generator_params = sample_params(
      toy.generator, PriorSpec::isotropic(toy.generator, options.weight_std), seed);

  Rng rng(derive_seed(seed, 1));
  const Index n = static_cast<Index>(options.clusters.size()) * options.points_per_cluster;
  Eigen::VectorXd x(n);
  Index k = 0;
  for (const Interval& c : options.clusters) {
    std::uniform_real_distribution<double> u(c.lo, c.hi);
    for (int i = 0; i < options.points_per_cluster; ++i) x[k++] = u(rng);
  }
  std::normal_distribution<double> noise(0.0, 1.0);
  Eigen::MatrixXd features = toy_features(x);
  Eigen::VectorXd y = forward(toy.generator, toy.generator_params, features).col(0);
  for (Index i = 0; i < n; ++i) y[i] += options.noise_std * noise(rng);

  toy.train.inputs = std::move(features);
  toy.train.targets = std::move(y);
  toy.train.split = Split::Train;
  toy.train.meta.generator = "toy-regression";
  toy.train.meta.seed = seed;

  toy.grid_x = Eigen::VectorXd::LinSpaced(options.grid_points, options.grid_min, options.grid_max);
  toy.test_grid.inputs = toy_features(toy.grid_x);
  toy.test_grid.targets = forward(toy.generator, toy.generator_params, toy.test_grid.inputs).col(0);
  toy.test_grid.split = Split::Test;
  toy.test_grid.meta.generator = "toy-regression-grid";
  toy.test_grid.meta.seed = seed;
  return toy;
}

// ---------------------------------------------------------------------------

Dataset corrupt_labels(const Dataset& ds, double fraction, std::uint64_t seed) {
  if (!ds.is_classification()) throw ConfigError("label corruption needs a classification dataset");
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw ConfigError(fmt::format("corruption fraction {} outside [0, 1]", fraction));
  }
  Dataset out = ds;
  const Index n = ds.size();
  const Index k = std::lround(fraction * static_cast<double>(n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  std::uniform_int_distribution<int> label(0, ds.num_classes - 1);
  for (Index i : order) out.targets[i] = label(rng);
  out.meta.corruption_fraction = fraction;
  out.meta.corrupted_indices = std::move(order);
  out.meta.notes["corruption_seed"] = std::to_string(seed);
  return out;
}

Dataset subsample(const Dataset& ds, int per_class, std::span<const int> classes,
                  std::uint64_t seed) {
  if (!ds.is_classification()) throw ConfigError("stratified subsample needs class labels");
  if (per_class < 1) throw ConfigError("per_class must be positive");
  Rng rng(seed);
  std::vector<Index> chosen;
  for (int c : classes) {
    std::vector<Index> members;
    for (Index i = 0; i < ds.size(); ++i) {
      if (ds.label(i) == c) members.push_back(i);
    }
    if (members.size() < static_cast<std::size_t>(per_class)) {
      throw ConfigError(fmt::format("class {} has {} examples, {} requested", c, members.size(),
                                    per_class));
    }
    std::shuffle(members.begin(), members.end(), rng);
    chosen.insert(chosen.end(), members.begin(), members.begin() + per_class);
  }
  Dataset out = ds.rows(chosen);
  out.meta.seed = seed;
  out.meta.notes["subsample_per_class"] = std::to_string(per_class);
  return out;
}

// ---------------------------------------------------------------------------

Perturbation parse_perturbation(const std::string& name) {
  if (name == "gaussian_noise" || name == "GaussianNoise") return Perturbation::GaussianNoise;
  if (name == "translate" || name == "Translate") return Perturbation::Translate;
  throw ConfigError(fmt::format("unknown perturbation '{}'", name));
}

std::string to_string(Perturbation kind) {
  return kind == Perturbation::GaussianNoise ? "gaussian_noise" : "translate";
}

ImageSet perturb(const ImageSet& images, Perturbation kind, int level, std::uint64_t seed,
                 const PerturbOptions& options) {
  if (level < 0 || level > 5) throw ConfigError(fmt::format("perturbation level {} outside 0..5", level));
  if (level == 0) return images;
  ImageSet out = images;
  Rng rng(seed);
  switch (kind) {
    case Perturbation::GaussianNoise: {
      const double sigma = options.noise_step * level;
      if (sigma == 0.0) return out;
      std::normal_distribution<double> normal(0.0, sigma);
      for (Index i = 0; i < out.pixels.size(); ++i) {
        out.pixels.data()[i] = std::clamp(out.pixels.data()[i] + normal(rng), 0.0, 1.0);
      }
      break;
    }
    case Perturbation::Translate: {
      const int pad = 2 * level;
      std::uniform_int_distribution<int> offset(0, 2 * pad);
      const int h = images.rows, w = images.cols, ch = images.channels;
      for (Index n = 0; n < images.size(); ++n) {
        // Crop origin inside the padded canvas; (pad, pad) is the identity.
        const int dy = offset(rng) - pad;
        const int dx = offset(rng) - pad;
        for (int r = 0; r < h; ++r) {
          for (int c = 0; c < w; ++c) {
            const int sr = r + dy, sc = c + dx;
            const bool inside = sr >= 0 && sr < h && sc >= 0 && sc < w;
            for (int k = 0; k < ch; ++k) {
              out.pixels(n, (r * w + c) * ch + k) =
                  inside ? images.pixels(n, (sr * w + sc) * ch + k) : 0.0;
            }
          }
        }
      }
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

std::vector<NetworkSpec> width_sweep(const NetworkSpec& base, std::span<const int> multipliers) {
  base.validate();
  if (multipliers.empty()) throw ConfigError("width sweep needs at least one multiplier");
  std::vector<NetworkSpec> specs;
  for (std::size_t i = 0; i < multipliers.size(); ++i) {
    const int m = multipliers[i];
    if (m < 1) throw ConfigError(fmt::format("width multiplier {} is not positive", m));
    if (i > 0 && m == multipliers[i - 1]) throw ConfigError(fmt::format("duplicate multiplier {}", m));
    if (i > 0 && m < multipliers[i - 1]) throw ConfigError("width multipliers must be ascending");
    NetworkSpec spec = base;
    for (std::size_t l = 1; l + 1 < spec.layer_sizes.size(); ++l) spec.layer_sizes[l] *= m;
    specs.push_back(std::move(spec));
  }
  return specs;
}

// ---------------------------------------------------------------------------

void write_dataset_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError(fmt::format("cannot open {} for writing", path));
  for (Index j = 0; j < ds.dim(); ++j) out << 'x' << j << ',';
  out << "y\n";
  for (Index i = 0; i < ds.size(); ++i) {
    for (Index j = 0; j < ds.dim(); ++j) out << fmt::format("{},", ds.inputs(i, j));
    out << fmt::format("{}\n", ds.targets[i]);
  }
  if (!out) throw IoError(fmt::format("failed writing {}", path));

  nlohmann::ordered_json meta;
  meta["generator"] = ds.meta.generator;
  meta["seed"] = ds.meta.seed;
  meta["split"] = to_string(ds.split);
  meta["rows"] = ds.size();
  meta["num_classes"] = ds.num_classes;
  meta["corruption_fraction"] = ds.meta.corruption_fraction;
  meta["corrupted_indices"] = ds.meta.corrupted_indices;
  meta["notes"] = ds.meta.notes;
  std::ofstream side(path + ".meta.json");
  if (!side) throw IoError(fmt::format("cannot open {}.meta.json", path));
  side << meta.dump(2) << '\n';
}

}  // namespace bmaforge
