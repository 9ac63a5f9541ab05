#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace scm {

using ClassId = int;
using FeatureVector = std::vector<double>;

struct LabeledInstance {
  FeatureVector features;
  ClassId class_id = 0;

  bool operator==(const LabeledInstance &) const = default;
};

/// Base/novel feature dataset. Class ids are dense: base classes occupy
/// 0..|C_b|-1 and novel classes follow.
struct FewShotDataset {
  std::size_t d = 0;
  std::size_t k_shot = 0;
  std::vector<ClassId> base_classes;
  std::vector<ClassId> novel_classes;
  std::vector<LabeledInstance> train_base;
  std::vector<LabeledInstance> finetune_set;
  std::vector<LabeledInstance> test_set;

  std::size_t num_base() const { return base_classes.size(); }
  std::size_t num_novel() const { return novel_classes.size(); }
  std::size_t num_classes() const { return base_classes.size() + novel_classes.size(); }
  bool is_base(ClassId c) const { return c >= 0 && static_cast<std::size_t>(c) < num_base(); }
  bool is_novel(ClassId c) const {
    return static_cast<std::size_t>(c) >= num_base() && static_cast<std::size_t>(c) < num_classes();
  }

  /// Throws ConfigError if the partition, dimension or K-shot invariants fail.
  void validate() const;

  bool operator==(const FewShotDataset &) const = default;
};

struct SyntheticSpec {
  std::size_t n_base = 20;
  std::size_t n_novel = 10;
  std::size_t d = 32;
  std::size_t samples_per_base_class = 200;
  std::size_t k_shot = 10;
  std::size_t test_per_class = 50;
  /// Test instances per base class. 0 means "same as test_per_class".
  std::size_t base_test_per_class = 0;
  std::size_t relatedness_degree = 2;
  double cluster_noise = 1.0;
  /// Standard deviation of the isotropic offset added to each novel center
  /// after mixing.
  double center_noise = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Ground-truth structure behind a generated dataset.
struct SyntheticTruth {
  std::vector<FeatureVector> base_centers;
  std::vector<FeatureVector> novel_centers;
  /// Base class ids mixed into each novel center, ascending.
  std::vector<std::vector<ClassId>> novel_mixing;
};

FewShotDataset generate_synthetic(const SyntheticSpec &spec);
SyntheticTruth synthetic_truth(const SyntheticSpec &spec);

/// Exactly K instances per class present in `pool`, sampled without
/// replacement. The result is grouped by class id, each group in pool order.
std::vector<LabeledInstance> sample_k_shot(std::span<const LabeledInstance> pool, std::size_t k,
                                           std::uint64_t seed);

/// Instances of `pool` whose class id is `c`.
std::vector<LabeledInstance> instances_of(std::span<const LabeledInstance> pool, ClassId c);

/// Writes `<dir>/dataset.json` plus one feature CSV per split.
void save_features(const FewShotDataset &data, const std::filesystem::path &dir);

/// Reads a dataset from a manifest file, or from a directory containing
/// `dataset.json`.
FewShotDataset load_features(const std::filesystem::path &path);

/// Parses one feature CSV. `expected_d` of 0 infers the dimension from the
/// header.
std::vector<LabeledInstance> read_feature_csv(const std::filesystem::path &file,
                                              std::size_t expected_d, std::size_t num_classes);
void write_feature_csv(const std::filesystem::path &file, std::span<const LabeledInstance> rows,
                       std::size_t d);

} // namespace scm
