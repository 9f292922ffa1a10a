#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ctxforest/cascade.hpp"
#include "ctxforest/config.hpp"
#include "ctxforest/phantom.hpp"

namespace ctxforest {

/// 2|A and B| / (|A| + |B|) for one label; 1 when both sets are empty.
double dsc(const LabelVolume& pred, const LabelVolume& gt, std::uint8_t label);

/// Subject-grouped folds: every volume of a subject lands in the same fold.
struct FoldPlan {
  std::vector<std::vector<int>> folds;

  int fold_of(int subject) const;
  std::uint64_t hash() const;
};

/// Shuffles subjects with `seed` and deals them into k folds; when k does
/// not divide the count the larger folds come first.
FoldPlan make_fold_plan(std::vector<int> subjects, int k, std::uint64_t seed);

struct EvalCase {
  int subject = 0;
  int volume = 0;  // visit index within the subject
  TrainingCase data;
};

std::vector<EvalCase> load_dataset(const Manifest& manifest);
std::vector<EvalCase> phantom_dataset(const PhantomSpec& spec, int n_subjects, int volumes_per_subject = 2);

struct DscRow {
  int fold = 0;
  int subject = 0;
  int volume = 0;
  std::uint8_t label = 0;
  double dsc = 0.0;
};

struct ClassStats {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

struct EvalReport {
  std::string name;
  std::uint64_t config_hash = 0;
  std::uint64_t fold_hash = 0;
  int num_folds = 0;
  std::vector<DscRow> rows;
  /// Summed over folds, one map per pass.
  std::vector<FeatureCounts> feature_frequency;
  /// One trace per refined volume (empty when refinement is off).
  std::vector<std::vector<double>> energy_traces;

  /// Population statistics; fold < 0 means all folds.
  ClassStats stats(std::uint8_t label, int fold = -1) const;
  /// Mean of the three per-class means.
  double mean_dsc() const;
};

/// One pipeline configuration of the comparison study.
struct PipelineVariant {
  std::string name;
  int passes = 2;
  bool landmark_features = true;
  bool graph_cut = false;
};

/// The six configurations: {1,2}-pass without landmark features,
/// {1,2,3}-pass with them, and 2-pass with graph cuts.
std::vector<PipelineVariant> ablation_variants();

/// Evaluates every variant on identical folds. Variants that share the
/// landmark setting share one cascade trained to the largest pass count;
/// shorter variants use its prefix, which is the same model a shorter
/// training run produces.
std::vector<EvalReport> evaluate_variants(std::span<const EvalCase> cases, const RunConfig& cfg,
                                          std::span<const PipelineVariant> variants, int k, std::uint64_t seed);

/// k-fold grouped cross-validation of the pipeline described by cfg.
EvalReport cross_validate(std::span<const EvalCase> cases, const RunConfig& cfg, int k, std::uint64_t seed);

std::vector<EvalReport> ablation(std::span<const EvalCase> cases, const RunConfig& cfg, int k, std::uint64_t seed);

// Columns: fold,subject,volume,class,dsc,config_hash
void write_csv(std::span<const EvalReport> reports, const std::filesystem::path& path);
std::string format_report(const EvalReport& report);
std::string format_comparison(std::span<const EvalReport> reports);
/// Writes .dat/.gp pairs for the feature-frequency and comparison plots.
void write_gnuplot(std::span<const EvalReport> reports, const std::filesystem::path& dir);

}  // namespace ctxforest
