#pragma once

#include <algorithm>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "bmaforge/config.hpp"
#include "bmaforge/data.hpp"
#include "bmaforge/error.hpp"
#include "bmaforge/inference.hpp"
#include "bmaforge/model.hpp"
#include "bmaforge/random.hpp"

namespace bmaforge::detail {

/// SGD settings from `<section>.epochs`, `batch_size`, `lr`, `momentum`,
/// `schedule` (constant_then_decay | cosine), `final_lr_ratio`, `clip_norm`,
/// `temperature`.
inline TrainConfig train_config(const ExperimentConfig& cfg, const std::string& section,
                                TrainConfig defaults = {}) {
  TrainConfig t = defaults;
  t.epochs = cfg.get_int(section + ".epochs", t.epochs);
  t.batch_size = cfg.get_int(section + ".batch_size", t.batch_size);
  t.lr = cfg.get_double(section + ".lr", t.lr);
  t.momentum = cfg.get_double(section + ".momentum", t.momentum);
  t.final_lr_ratio = cfg.get_double(section + ".final_lr_ratio", t.final_lr_ratio);
  t.clip_norm = cfg.get_double(section + ".clip_norm", t.clip_norm);
  const std::string schedule =
      cfg.get_string(section + ".schedule", t.schedule == LrSchedule::Cosine ? "cosine" : "constant_then_decay");
  if (schedule == "cosine") {
    t.schedule = LrSchedule::Cosine;
  } else if (schedule == "constant_then_decay") {
    t.schedule = LrSchedule::ConstantThenDecay;
  } else {
    throw ConfigError(section + ".schedule must be cosine or constant_then_decay, got " + schedule);
  }
  t.temperature = Temperature(cfg.get_double(section + ".temperature", t.temperature.value()));
  t.validate();
  return t;
}

inline NetworkSpec network(int input, const std::vector<int>& hidden, int output, bool bias = true) {
  std::vector<int> sizes{input};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(output);
  return NetworkSpec::mlp(std::move(sizes), bias);
}

template <class T>
std::string join(const std::vector<T>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt::format("{}", v[i]);
  return s;
}

/// The 10-class image set named by `data.images_path` and `data.labels_path`.
inline Dataset load_images(const ExperimentConfig& cfg) {
  const ImageSet images =
      load_idx(cfg.get_path("data.images_path").string(), cfg.get_path("data.labels_path").string());
  Dataset ds = to_dataset(images, 10);
  ds.meta.generator = "idx:" + cfg.get_string("data.images_path");
  return ds;
}

/// Disjoint seeded train/test samples with `train_per_class` and
/// `test_per_class` examples of each class. Labels become positions in
/// `classes`.
inline std::pair<Dataset, Dataset> class_split(const Dataset& ds, std::span<const int> classes,
                                               int train_per_class, int test_per_class,
                                               std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Index> train_idx, test_idx;
  for (int c : classes) {
    std::vector<Index> members;
    for (Index i = 0; i < ds.size(); ++i) {
      if (ds.label(i) == c) members.push_back(i);
    }
    if (members.size() < static_cast<std::size_t>(train_per_class + test_per_class)) {
      throw ConfigError(fmt::format("class {} has {} examples, {} requested", c, members.size(),
                                    train_per_class + test_per_class));
    }
    std::shuffle(members.begin(), members.end(), rng);
    train_idx.insert(train_idx.end(), members.begin(), members.begin() + train_per_class);
    test_idx.insert(test_idx.end(), members.begin() + train_per_class,
                    members.begin() + train_per_class + test_per_class);
  }
  auto relabel = [&](Dataset d, Split split) {
    for (Index i = 0; i < d.size(); ++i) {
      const auto pos = std::find(classes.begin(), classes.end(), d.label(i)) - classes.begin();
      d.targets[i] = static_cast<double>(pos);
    }
    d.num_classes = static_cast<int>(classes.size());
    d.split = split;
    d.meta.seed = seed;
    return d;
  };
  return {relabel(ds.rows(train_idx), Split::Train), relabel(ds.rows(test_idx), Split::Test)};
}

}  // namespace bmaforge::detail
