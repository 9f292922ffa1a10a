#include <gtest/gtest.h>

#include <algorithm>

#include "ctxforest/config.hpp"
#include "ctxforest/error.hpp"

using namespace ctxforest;

TEST(Config, JsonRoundTrip) {
  RunConfig cfg;
  cfg.seed = 123;
  cfg.cascade.num_passes = 3;
  cfg.cascade.forest.features.kinds = {FeatureKind::Intensity, FeatureKind::RSPD_T};
  cfg.energy.paper_literal_smoothness = true;
  cfg.energy.lambda = 0.1 + 0.2;
  EXPECT_EQ(config_from_json(config_to_json(cfg)), cfg);
  EXPECT_EQ(config_from_json(config_to_json(RunConfig{})), RunConfig{});
}

TEST(Config, UnknownKeysAndBadValues) {
  EXPECT_THROW(config_from_json(R"({"num_trees": 5, "num_tres": 6})"), UsageError);
  EXPECT_THROW(config_from_json(R"({"num_trees": "many"})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"lambda": -1})"), ValidationError);
  EXPECT_THROW(config_from_json(R"({"feature_kinds": ["Bogus"]})"), ValidationError);
  EXPECT_THROW(config_from_json("[1, 2]"), ValidationError);
  EXPECT_THROW(config_from_json("{"), ValidationError);
  EXPECT_THROW(load_config("/nonexistent/cfg.json"), IoError);
}

TEST(Config, ValuesAndLists) {
  const RunConfig cfg = config_from_json(
      R"({"num_trees": 7, "cross_context": true, "feature_kinds": ["Intensity", "DistLandmark"], "sigma": 12.5})");
  EXPECT_EQ(cfg.cascade.forest.num_trees, 7u);
  EXPECT_TRUE(cfg.cascade.cross_context);
  EXPECT_EQ(cfg.cascade.forest.features.kinds,
            (std::vector<FeatureKind>{FeatureKind::Intensity, FeatureKind::DistLandmark}));
  EXPECT_EQ(cfg.energy.sigma, 12.5);
}

TEST(Config, KeysCoverEveryField) {
  const auto& keys = config_keys();
  for (const char* k : {"seed", "num_passes", "samples_per_class_per_volume", "cross_context", "pool_size", "r_max_mm",
                        "band_tau_in_mm", "band_tau_out_mm", "lambda", "sigma", "p_floor", "paper_literal_smoothness",
                        "threads"}) {
    EXPECT_NE(std::find(keys.begin(), keys.end(), k), keys.end()) << k;
  }
  RunConfig cfg;
  for (const auto& k : keys) EXPECT_NO_THROW(apply_config_value(cfg, k, k == "feature_kinds" ? "" : "1")) << k;
}

TEST(Config, HashIgnoresThreadsOnly) {
  RunConfig a, b;
  b.threads = 8;
  EXPECT_EQ(config_hash(a), config_hash(b));
  b.seed = 8;
  EXPECT_NE(config_hash(a), config_hash(b));
}
