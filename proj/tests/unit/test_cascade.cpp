#include <gtest/gtest.h>

#include <filesystem>

#include "ctxforest/cascade.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/graphcut.hpp"
#include "fixtures.hpp"

using namespace ctxforest;

namespace {

std::vector<TrainingCase> cases(int n, std::uint64_t seed = 1) {
  std::vector<TrainingCase> out;
  const PhantomSpec spec = fixture::small_spec(40, seed);
  for (int s = 0; s < n; ++s) {
    Phantom p = generate_phantom(spec, s);
    out.push_back({"s" + std::to_string(s), p.intensity, p.bone_mask, p.landmarks, p.ground_truth});
  }
  return out;
}

CascadeConfig small_config(int passes) {
  CascadeConfig cfg;
  cfg.num_passes = passes;
  cfg.samples_per_class_per_volume = 300;
  cfg.forest.num_trees = 4;
  cfg.forest.max_depth = 10;
  cfg.forest.features.pool_size = 30;
  return cfg;
}

const std::vector<TrainingCase>& training() {
  static const auto c = cases(3);
  return c;
}

const CascadeModel& two_pass() {
  static const CascadeModel m = train_cascade(training(), small_config(2), 5);
  return m;
}

bool any_probability_feature(const RandomForest& f) {
  for (const Tree& t : f.trees())
    for (const TreeNode& n : t.nodes)
      if (!n.is_leaf() && needs_probabilities(n.feature.kind)) return true;
  return false;
}

double band_accuracy(const ProbMaps& probs, const Band& band, const LabelVolume& gt) {
  const LabelVolume arg = argmax_labeling(probs, band);
  std::size_t agree = 0;
  for (std::uint32_t v : band.voxels()) agree += arg[v] == gt[v];
  return static_cast<double>(agree) / static_cast<double>(band.size());
}

}  // namespace

TEST(Cascade, PassLegality) {
  const CascadeModel one = train_cascade(training(), small_config(1), 5);
  EXPECT_FALSE(any_probability_feature(one.passes[0]));
  EXPECT_FALSE(any_probability_feature(two_pass().passes[0]));
  EXPECT_TRUE(any_probability_feature(two_pass().passes[1]));
}

TEST(Cascade, TruncationEqualsShorterTraining) {
  const CascadeModel one = train_cascade(training(), small_config(1), 5);
  EXPECT_EQ(truncate_cascade(two_pass(), 1), one);
  EXPECT_THROW(truncate_cascade(two_pass(), 3), ValidationError);
}

TEST(Cascade, OnePassInferenceIsPlainForestPrediction) {
  const CascadeModel one = truncate_cascade(two_pass(), 1);
  const auto test = cases(1, 9).front();
  const FeatureContext ctx = precompute_context(test.intensity, test.bone_mask, test.landmarks);
  const Band band = band_for(ctx, one.config.forest.features);
  EXPECT_EQ(infer_cascade(one, test.intensity, test.bone_mask, test.landmarks),
            predict_volume(one.passes[0], ctx, band));
}

TEST(Cascade, InferenceIsDeterministic) {
  const auto test = cases(1, 9).front();
  EXPECT_EQ(infer_cascade(two_pass(), test.intensity, test.bone_mask, test.landmarks),
            infer_cascade(two_pass(), test.intensity, test.bone_mask, test.landmarks));
}

TEST(Cascade, FirstPassSeparatesFemoralCartilage) {
  const auto test = cases(1, 9).front();
  const FeatureContext ctx = precompute_context(test.intensity, test.bone_mask, test.landmarks);
  const Band band = band_for(ctx, two_pass().config.forest.features);
  const ProbMaps p = infer_cascade_passes(two_pass(), ctx, band).front();
  double in = 0, out = 0;
  std::size_t n_in = 0, n_out = 0;
  for (std::uint32_t v : band.voxels()) {
    if (test.ground_truth[v] == kFemoralCartilage) {
      in += p[0][v];
      ++n_in;
    } else if (test.ground_truth[v] == kBackground) {
      out += p[0][v];
      ++n_out;
    }
  }
  ASSERT_GT(n_in, 0u);
  EXPECT_GT(in / n_in, out / n_out);
}

TEST(Cascade, SecondPassImprovesHeldOutAccuracy) {
  const auto test = cases(1, 9).front();
  const FeatureContext ctx = precompute_context(test.intensity, test.bone_mask, test.landmarks);
  const Band band = band_for(ctx, two_pass().config.forest.features);
  const auto maps = infer_cascade_passes(two_pass(), ctx, band);
  EXPECT_GE(band_accuracy(maps[1], band, test.ground_truth), band_accuracy(maps[0], band, test.ground_truth));
}

TEST(Cascade, FeatureFrequencyPartitionsInternalNodes) {
  const auto freq = feature_frequency(two_pass());
  ASSERT_EQ(freq.size(), 2u);
  for (std::size_t p = 0; p < 2; ++p) {
    std::size_t internal = 0, counted = 0;
    for (const Tree& t : two_pass().passes[p].trees()) internal += t.internal_count();
    for (const auto& [kind, n] : freq[p]) counted += n;
    EXPECT_EQ(counted, internal);
    EXPECT_EQ(freq[p].size(), kNumFeatureKinds);
  }
  for (auto kind : {FeatureKind::ProbF, FeatureKind::ProbT, FeatureKind::ProbP, FeatureKind::RSPD_F,
                    FeatureKind::RSPD_T, FeatureKind::RSPD_P}) {
    EXPECT_EQ(freq[0].at(kind), 0u);
  }
}

TEST(Cascade, DepthZeroTreesHaveNoFeatures) {
  CascadeModel m;
  Tree t;
  TreeNode leaf;
  leaf.posterior = {0.25, 0.25, 0.25, 0.25};
  t.nodes.push_back(leaf);
  m.passes.emplace_back(std::vector<Tree>{t, t}, 4, 1, ForestConfig{});
  const auto freq = feature_frequency(m);
  for (const auto& [kind, n] : freq.front()) EXPECT_EQ(n, 0u);
}

TEST(Cascade, SerializationRoundTrip) {
  const auto path = std::filesystem::temp_directory_path() / "ctxforest_unit_cascade.scf";
  save_cascade(two_pass(), path);
  const CascadeModel back = load_cascade(path);
  EXPECT_EQ(back, two_pass());
  EXPECT_EQ(serialize_cascade(back), serialize_cascade(two_pass()));
  EXPECT_THROW(deserialize_cascade("SCFCASC"), IoError);
}

TEST(Cascade, RecordsTrainingSpacing) { EXPECT_EQ(two_pass().train_spacing, (Vec3{1, 1, 1})); }

TEST(Cascade, CrossContextTrainsAndDiffers) {
  CascadeConfig cfg = small_config(2);
  cfg.cross_context = true;
  const CascadeModel m = train_cascade(training(), cfg, 5);
  EXPECT_EQ(m.passes[0], two_pass().passes[0]);
  EXPECT_NE(m.passes[1], two_pass().passes[1]);
}

TEST(Samples, CappedPerClassSortedAndDeterministic) {
  const auto& c = training();
  std::vector<Band> bands;
  std::vector<LabelVolume> gt;
  for (const auto& t : c) {
    bands.push_back(band_for(precompute_context(t.intensity, t.bone_mask, t.landmarks), FeatureConfig{}));
    gt.push_back(t.ground_truth);
  }
  const auto a = draw_training_samples(bands, gt, 100, 3);
  EXPECT_EQ(a, draw_training_samples(bands, gt, 100, 3));
  std::map<std::pair<std::uint32_t, int>, int> per;
  for (const auto& s : a) {
    ++per[{s.volume, s.label}];
    EXPECT_TRUE(bands[s.volume].contains(s.voxel));
    EXPECT_EQ(gt[s.volume][s.voxel], s.label);
  }
  for (const auto& [key, n] : per) EXPECT_LE(n, 100);
  EXPECT_EQ(per.size(), 12u);
}

TEST(Cascade, EmptyBandIsAnError) {
  auto c = cases(1);
  CascadeConfig cfg = small_config(1);
  cfg.forest.features.band_tau_in_mm = 0.0;
  cfg.forest.features.band_tau_out_mm = 0.0;
  EXPECT_THROW(train_cascade(c, cfg, 1), ValidationError);
}
