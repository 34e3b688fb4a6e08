#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bmaforge/model.hpp"

namespace bmaforge {

enum class Split { Train, Test };

std::string to_string(Split split);

/// Where a data set came from. Serialized into the JSON sidecar that
/// accompanies every written data file.
struct Provenance {
  std::string generator;
  std::uint64_t seed = 0;
  double corruption_fraction = 0.0;
  std::vector<Index> corrupted_indices;
  std::map<std::string, std::string> notes;
};

/// Inputs (n x d) with real-valued targets (regression, num_classes == 0) or
/// class labels stored as exact integers in [0, num_classes).
struct Dataset {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd targets;
  int num_classes = 0;
  Split split = Split::Train;
  Provenance meta;

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }
  bool is_classification() const { return num_classes > 0; }
  int label(Index i) const { return static_cast<int>(targets[i]); }

  /// Throws DimensionError / ConfigError when an invariant is broken.
  void validate() const;

  /// Rows `indices`, in that order. Metadata is copied.
  Dataset rows(std::span<const Index> indices) const;
};

/// Images flattened row-major into `pixels` (n x rows*cols*channels), values
/// in [0, 1].
struct ImageSet {
  int rows = 0;
  int cols = 0;
  int channels = 1;
  Eigen::MatrixXd pixels;
  std::vector<int> labels;

  Index size() const { return pixels.rows(); }
  int pixel_count() const { return rows * cols * channels; }
};

ImageSet images_of(const Dataset& ds, int rows, int cols);
Dataset to_dataset(const ImageSet& images, int num_classes, Split split = Split::Train);

// ---------------------------------------------------------------------------
// Toy regression

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

struct ToyRegressionOptions {
  std::vector<Interval> clusters{{-4.0, -2.0}, {-0.5, 0.5}, {2.0, 4.0}};
  int points_per_cluster = 40;
  std::vector<int> hidden{10, 10, 10};
  double weight_std = 0.1;
  double noise_std = 0.1;
  double grid_min = -6.0;
  double grid_max = 6.0;
  int grid_points = 121;
};

struct ToyRegression {
  Dataset train;
  Dataset test_grid;        // targets hold the noise-free generator output
  Eigen::VectorXd grid_x;   // raw x of the test grid
  NetworkSpec generator;
  ParamVector generator_params;
};

/// Two input features (x, x^2) per scalar location.
Eigen::MatrixXd toy_features(const Eigen::VectorXd& x);

/// Targets from a randomly drawn ReLU network on clustered inputs.
ToyRegression gen_toy_regression(std::uint64_t seed, const ToyRegressionOptions& options = {});

// ---------------------------------------------------------------------------
// Classification data

/// round(fraction * n) distinct points get labels redrawn uniformly over all
/// classes (the redraw may reproduce the original label). The chosen indices
/// are recorded in meta.corrupted_indices.
Dataset corrupt_labels(const Dataset& ds, double fraction, std::uint64_t seed);

/// Seeded stratified sample: `per_class` examples of each class in
/// `classes`, grouped by class in the order given. Labels are kept as-is.
Dataset subsample(const Dataset& ds, int per_class, std::span<const int> classes,
                  std::uint64_t seed);

// ---------------------------------------------------------------------------
// IDX files (optionally gzip-compressed)

/// Image file (magic 0x00000803). Pixels are scaled to [0, 1]; labels empty.
ImageSet load_idx(const std::string& path);
/// Label file (magic 0x00000801).
std::vector<int> load_idx_labels(const std::string& path);
/// Images plus their labels.
ImageSet load_idx(const std::string& image_path, const std::string& label_path);

/// Pixels are quantized back to bytes. A ".gz" suffix selects compression.
void write_idx_images(const ImageSet& images, const std::string& path);
void write_idx_labels(std::span<const int> labels, const std::string& path);

// ---------------------------------------------------------------------------
// Perturbations

enum class Perturbation { GaussianNoise, Translate };

Perturbation parse_perturbation(const std::string& name);
std::string to_string(Perturbation kind);

struct PerturbOptions {
  double noise_step = 0.04;  // noise std per intensity level
};

/// Level 0 is the identity; levels 1..5 increase intensity. GaussianNoise
/// adds N(0, (noise_step * level)^2) per pixel and clips to [0, 1];
/// Translate zero-pads 2 * level pixels per side and crops a random window
/// of the original size.
ImageSet perturb(const ImageSet& images, Perturbation kind, int level, std::uint64_t seed,
                 const PerturbOptions& options = {});

// ---------------------------------------------------------------------------
// Architectures

/// Hidden widths multiplied by each multiplier (ascending, unique, >= 1).
std::vector<NetworkSpec> width_sweep(const NetworkSpec& base, std::span<const int> multipliers);

// ---------------------------------------------------------------------------
// CSV output

/// Header row "x0,...,x{d-1},y" then one row per point, plus a
/// `<path>.meta.json` provenance sidecar.
void write_dataset_csv(const Dataset& ds, const std::string& path);

}  // namespace bmaforge
