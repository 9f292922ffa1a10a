#include <cmath>

#include "binary_io.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/forest.hpp"
#include "forest_io.hpp"

namespace ctxforest {

namespace {

constexpr std::string_view kMagic = "SCFMODEL";
constexpr std::uint32_t kVersion = 1;

}  // namespace

namespace detail {

void write_forest_config(ByteWriter& w, const ForestConfig& cfg) {
  w.put<std::uint64_t>(cfg.num_trees);
  w.put<std::int32_t>(cfg.max_depth);
  w.put<std::uint64_t>(cfg.thresholds_per_feature);
  w.put<std::uint64_t>(cfg.min_samples_leaf);
  w.put<double>(cfg.bagging_fraction);
  w.put<std::uint8_t>(cfg.bootstrap ? 1 : 0);
  w.put<double>(cfg.leaf_smoothing);
  const FeatureConfig& f = cfg.features;
  w.put<std::uint64_t>(f.pool_size);
  w.put<double>(f.r_max_mm);
  w.put<double>(f.band_tau_in_mm);
  w.put<double>(f.band_tau_out_mm);
  w.put<std::uint8_t>(f.use_landmark_features ? 1 : 0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(f.kinds.size()));
  for (FeatureKind k : f.kinds) w.put<std::uint8_t>(static_cast<std::uint8_t>(k));
}

FeatureKind read_kind(ByteReader& r) {
  const auto k = r.get<std::uint8_t>();
  if (k >= kNumFeatureKinds) throw IoError("model contains unknown feature kind " + std::to_string(k));
  return static_cast<FeatureKind>(k);
}

ForestConfig read_forest_config(ByteReader& r) {
  ForestConfig cfg;
  cfg.num_trees = r.get<std::uint64_t>();
  cfg.max_depth = r.get<std::int32_t>();
  cfg.thresholds_per_feature = r.get<std::uint64_t>();
  cfg.min_samples_leaf = r.get<std::uint64_t>();
  cfg.bagging_fraction = r.get<double>();
  cfg.bootstrap = r.get<std::uint8_t>() != 0;
  cfg.leaf_smoothing = r.get<double>();
  FeatureConfig& f = cfg.features;
  f.pool_size = r.get<std::uint64_t>();
  f.r_max_mm = r.get<double>();
  f.band_tau_in_mm = r.get<double>();
  f.band_tau_out_mm = r.get<double>();
  f.use_landmark_features = r.get<std::uint8_t>() != 0;
  const auto n = r.get<std::uint32_t>();
  if (n > kNumFeatureKinds) throw IoError("model config lists too many feature kinds");
  for (std::uint32_t i = 0; i < n; ++i) f.kinds.push_back(read_kind(r));
  return cfg;
}

}  // namespace detail

std::string serialize_forest(const RandomForest& forest) {
  detail::ByteWriter w;
  w.put_bytes(kMagic);
  w.put<std::uint32_t>(kVersion);
  detail::write_forest_config(w, forest.config());
  w.put<std::int32_t>(forest.num_classes());
  w.put<std::int32_t>(forest.pass_index());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(forest.trees().size()));
  for (const Tree& t : forest.trees()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.nodes.size()));
    for (const TreeNode& n : t.nodes) {
      w.put<std::uint8_t>(n.is_leaf() ? 1 : 0);
      if (n.is_leaf()) {
        for (double p : n.posterior) w.put<double>(p);
      } else {
        w.put<std::uint8_t>(static_cast<std::uint8_t>(n.feature.kind));
        w.put<double>(n.feature.offset_mm.x);
        w.put<double>(n.feature.offset_mm.y);
        w.put<double>(n.feature.offset_mm.z);
        w.put<std::uint8_t>(n.feature.bone);
        w.put<std::uint32_t>(n.feature.landmark);
        w.put<double>(n.threshold);
        w.put<std::int32_t>(n.left);
        w.put<std::int32_t>(n.right);
      }
    }
  }
  return w.take();
}

RandomForest deserialize_forest(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic) {
    throw IoError("not a forest model (missing SCFMODEL magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kVersion) throw IoError("unsupported model version " + std::to_string(version));
  ForestConfig cfg = detail::read_forest_config(r);
  const auto num_classes = r.get<std::int32_t>();
  const auto pass_index = r.get<std::int32_t>();
  if (num_classes < 1 || num_classes > 255) throw IoError("model has invalid class count");
  const auto num_trees = r.get<std::uint32_t>();
  std::vector<Tree> trees(num_trees);
  for (Tree& t : trees) {
    const auto count = r.get<std::uint32_t>();
    if (count == 0) throw IoError("model contains an empty tree");
    t.nodes.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
      TreeNode& n = t.nodes[i];
      if (r.get<std::uint8_t>() != 0) {
        n.posterior.resize(static_cast<std::size_t>(num_classes));
        double sum = 0.0;
        for (double& p : n.posterior) {
          p = r.get<double>();
          if (!(p >= 0.0 && p <= 1.0)) throw IoError("model leaf posterior outside [0, 1]");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw IoError("model leaf posterior does not sum to 1");
      } else {
        n.feature.kind = detail::read_kind(r);
        n.feature.offset_mm.x = r.get<double>();
        n.feature.offset_mm.y = r.get<double>();
        n.feature.offset_mm.z = r.get<double>();
        n.feature.bone = r.get<std::uint8_t>();
        n.feature.landmark = r.get<std::uint32_t>();
        n.threshold = r.get<double>();
        n.left = r.get<std::int32_t>();
        n.right = r.get<std::int32_t>();
        // Children always follow their parent in storage order.
        if (n.left <= static_cast<std::int32_t>(i) || n.right <= static_cast<std::int32_t>(i) ||
            n.left >= static_cast<std::int32_t>(count) || n.right >= static_cast<std::int32_t>(count)) {
          throw IoError("model tree has invalid child indices");
        }
      }
    }
  }
  if (!r.done()) throw IoError("trailing bytes after forest model");
  try {
    return RandomForest(std::move(trees), num_classes, pass_index, std::move(cfg));
  } catch (const ValidationError& e) {
    throw IoError(std::string("invalid forest model: ") + e.what());
  }
}

void save_forest(const RandomForest& forest, const std::filesystem::path& path) {
  detail::write_file(path.string(), serialize_forest(forest));
}

RandomForest load_forest(const std::filesystem::path& path) { return deserialize_forest(detail::read_file(path.string())); }

}  // namespace ctxforest
