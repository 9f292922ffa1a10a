#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctxforest/distance.hpp"
#include "ctxforest/features.hpp"
#include "ctxforest/rng.hpp"

namespace ctxforest {

struct ForestConfig {
  std::size_t num_trees = 60;
  int max_depth = 18;
  /// Candidate (feature, threshold) pairs per node = pool_size * thresholds_per_feature.
  std::size_t thresholds_per_feature = 10;
  std::size_t min_samples_leaf = 5;
  double bagging_fraction = 0.66;
  bool bootstrap = true;
  /// Laplace pseudo-count added to every class of a leaf histogram.
  double leaf_smoothing = 1.0;
  FeatureConfig features;

  friend bool operator==(const ForestConfig&, const ForestConfig&) = default;
};

/// Internal nodes route value < threshold to `left`. Leaves have left == -1
/// and a normalized posterior.
struct TreeNode {
  FeatureDescriptor feature;
  double threshold = 0.0;
  std::int32_t left = -1;
  std::int32_t right = -1;
  std::vector<double> posterior;

  bool is_leaf() const { return left < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int depth() const;
  std::size_t internal_count() const;
  const TreeNode& leaf_for(std::size_t linear, const FeatureContext& ctx) const;
  friend bool operator==(const Tree&, const Tree&) = default;
};

struct TrainingSample {
  std::uint32_t volume = 0;  // index into the context list
  std::uint32_t voxel = 0;   // linear index
  std::uint8_t label = 0;
  friend bool operator==(const TrainingSample&, const TrainingSample&) = default;
};

class RandomForest {
 public:
  RandomForest() = default;
  RandomForest(std::vector<Tree> trees, int num_classes, int pass_index, ForestConfig config);

  const std::vector<Tree>& trees() const { return trees_; }
  int num_classes() const { return num_classes_; }
  int pass_index() const { return pass_index_; }
  const ForestConfig& config() const { return config_; }

  friend bool operator==(const RandomForest&, const RandomForest&) = default;

 private:
  std::vector<Tree> trees_;
  int num_classes_ = 0;
  int pass_index_ = 1;
  ForestConfig config_;
};

/// Landmark counts per bone, read from the first context.
std::vector<std::size_t> landmark_counts(const FeatureContext& ctx);

Tree train_tree(std::span<const TrainingSample> samples, std::span<const FeatureContext> contexts,
                const ForestConfig& cfg, int pass_index, int num_classes, Rng& rng);

/// Trees are trained on bootstrap resamples, each from its own stream
/// derive_seed(seed, "tree", pass_index, t).
RandomForest train_forest(std::span<const TrainingSample> samples, std::span<const FeatureContext> contexts,
                          const ForestConfig& cfg, int pass_index, int num_classes, std::uint64_t seed);

std::vector<double> predict_posterior(const RandomForest& forest, std::size_t linear, const FeatureContext& ctx);
std::vector<double> predict_posterior(const RandomForest& forest, VoxelIndex i, const FeatureContext& ctx);

/// Cartilage probability maps (classes 1..3) over the band; zero elsewhere.
ProbMaps predict_volume(const RandomForest& forest, const FeatureContext& ctx, const Band& band);

// "SCFMODEL" container, little-endian.
std::string serialize_forest(const RandomForest& forest);
RandomForest deserialize_forest(std::string_view bytes);
void save_forest(const RandomForest& forest, const std::filesystem::path& path);
RandomForest load_forest(const std::filesystem::path& path);

}  // namespace ctxforest
