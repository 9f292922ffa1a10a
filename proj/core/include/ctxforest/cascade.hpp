#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ctxforest/forest.hpp"

namespace ctxforest {

struct CascadeConfig {
  int num_passes = 2;
  std::size_t samples_per_class_per_volume = 4000;
  /// Produce training-set context maps by 2-fold cross-prediction instead
  /// of resubstitution.
  bool cross_context = false;
  ForestConfig forest;

  friend bool operator==(const CascadeConfig&, const CascadeConfig&) = default;
};

struct TrainingCase {
  std::string name;
  Volume intensity;
  LabelVolume bone_mask;
  std::vector<LandmarkSet> landmarks;
  LabelVolume ground_truth;
};

struct CascadeModel {
  CascadeConfig config;
  std::vector<RandomForest> passes;
  Palette palette = cartilage_palette();
  Vec3 train_spacing{1.0, 1.0, 1.0};

  friend bool operator==(const CascadeModel&, const CascadeModel&) = default;
};

/// Band from the context's bone distances using the configured thresholds.
Band band_for(const FeatureContext& ctx, const FeatureConfig& cfg);

/// Class-balanced samples: at most `cap` voxels per class per volume drawn
/// uniformly from the band.
std::vector<TrainingSample> draw_training_samples(std::span<const Band> bands,
                                                  std::span<const LabelVolume> ground_truth, std::size_t cap,
                                                  std::uint64_t seed);

CascadeModel train_cascade(std::span<const TrainingCase> cases, const CascadeConfig& cfg, std::uint64_t seed);

/// Maps of every pass, in order; the last entry is the cascade output.
std::vector<ProbMaps> infer_cascade_passes(const CascadeModel& model, const FeatureContext& base, const Band& band);
ProbMaps infer_cascade(const CascadeModel& model, const Volume& intensity, const LabelVolume& bone_mask,
                       const std::vector<LandmarkSet>& landmarks);

/// The first `passes` forests of a model, as a standalone cascade.
CascadeModel truncate_cascade(const CascadeModel& model, int passes);

using FeatureCounts = std::map<FeatureKind, std::size_t>;
/// Internal-node descriptor counts by kind, one map per pass.
std::vector<FeatureCounts> feature_frequency(const CascadeModel& model);

// "SCFCASC" container embedding one SCFMODEL blob per pass.
std::string serialize_cascade(const CascadeModel& model);
CascadeModel deserialize_cascade(std::string_view bytes);
void save_cascade(const CascadeModel& model, const std::filesystem::path& path);
CascadeModel load_cascade(const std::filesystem::path& path);

}  // namespace ctxforest
