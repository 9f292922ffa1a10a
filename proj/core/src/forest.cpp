#include "ctxforest/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxforest/error.hpp"
#include "ctxforest/parallel.hpp"

namespace ctxforest {

namespace {

constexpr double kMinGain = 1e-12;

double entropy(std::span<const double> counts, double total) {
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double c : counts) {
    if (c > 0.0) {
      const double p = c / total;
      h -= p * std::log2(p);
    }
  }
  return h;
}

class TreeBuilder {
 public:
  TreeBuilder(std::span<const TrainingSample> samples, std::span<const FeatureContext> contexts,
              const ForestConfig& cfg, int pass, int num_classes, Rng& rng)
      : samples_(samples),
        contexts_(contexts),
        cfg_(cfg),
        classes_(static_cast<std::size_t>(num_classes)),
        rng_(rng),
        landmarks_(landmark_counts(contexts.front())),
        kinds_(legal_kinds(cfg.features, pass)) {
    if (std::all_of(landmarks_.begin(), landmarks_.end(), [](std::size_t c) { return c == 0; })) {
      std::erase(kinds_, FeatureKind::DistLandmark);
    }
  }

  Tree build(std::vector<std::uint32_t> order) {
    order_ = std::move(order);
    values_.resize(order_.size());
    best_values_.resize(order_.size());
    grow(0, order_.size(), 0);
    return std::move(tree_);
  }

 private:
  double value(const FeatureDescriptor& f, std::uint32_t sample) const {
    const TrainingSample& s = samples_[sample];
    return evaluate_feature(f, s.voxel, contexts_[s.volume]);
  }

  std::int32_t make_leaf(std::span<const double> counts, double n) {
    TreeNode leaf;
    leaf.posterior.resize(classes_);
    const double denom = n + cfg_.leaf_smoothing * static_cast<double>(classes_);
    for (std::size_t c = 0; c < classes_; ++c) leaf.posterior[c] = (counts[c] + cfg_.leaf_smoothing) / denom;
    tree_.nodes.push_back(std::move(leaf));
    return static_cast<std::int32_t>(tree_.nodes.size() - 1);
  }

  std::int32_t grow(std::size_t begin, std::size_t end, int depth) {
    const std::size_t n = end - begin;
    std::vector<double> counts(classes_, 0.0);
    for (std::size_t i = begin; i < end; ++i) counts[samples_[order_[i]].label] += 1.0;
    const auto nonzero = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; });
    if (depth >= cfg_.max_depth || nonzero <= 1 || n < 2 * cfg_.min_samples_leaf) {
      return make_leaf(counts, static_cast<double>(n));
    }

    const double parent_entropy = entropy(counts, static_cast<double>(n));
    const std::size_t num_thresholds = std::max<std::size_t>(1, cfg_.thresholds_per_feature);
    double best_gain = kMinGain;
    FeatureDescriptor best_feature;
    double best_threshold = 0.0;
    bool found = false;

    std::vector<std::pair<double, std::size_t>> thresholds(num_thresholds);
    std::vector<double> bins((num_thresholds + 1) * classes_);
    std::vector<double> left(classes_);
    std::vector<double> right(classes_);
    std::vector<double> left_by_draw(num_thresholds * classes_);

    for (std::size_t cand = 0; cand < cfg_.features.pool_size; ++cand) {
      const FeatureDescriptor f = sample_feature(rng_, cfg_.features, kinds_, landmarks_);
      double lo = std::numeric_limits<double>::infinity();
      double hi = -lo;
      for (std::size_t i = begin; i < end; ++i) {
        const double v = value(f, order_[i]);
        values_[i] = v;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
      for (std::size_t t = 0; t < num_thresholds; ++t) thresholds[t] = {rng_.uniform(lo, hi), t};
      if (!(hi > lo)) continue;

      // value < threshold goes left. Bin each sample by the number of
      // (sorted) thresholds <= value, then accumulate.
      auto sorted = thresholds;
      std::sort(sorted.begin(), sorted.end());
      std::fill(bins.begin(), bins.end(), 0.0);
      for (std::size_t i = begin; i < end; ++i) {
        const auto b = static_cast<std::size_t>(
            std::upper_bound(sorted.begin(), sorted.end(), values_[i],
                             [](double v, const std::pair<double, std::size_t>& t) { return v < t.first; }) -
            sorted.begin());
        bins[b * classes_ + samples_[order_[i]].label] += 1.0;
      }
      std::fill(left.begin(), left.end(), 0.0);
      for (std::size_t j = 0; j < num_thresholds; ++j) {
        for (std::size_t c = 0; c < classes_; ++c) left[c] += bins[j * classes_ + c];
        std::copy(left.begin(), left.end(), left_by_draw.begin() + static_cast<std::ptrdiff_t>(sorted[j].second * classes_));
      }

      for (std::size_t t = 0; t < num_thresholds; ++t) {
        const std::span<const double> l(left_by_draw.data() + t * classes_, classes_);
        double nl = 0.0;
        for (std::size_t c = 0; c < classes_; ++c) {
          nl += l[c];
          right[c] = counts[c] - l[c];
        }
        const double nr = static_cast<double>(n) - nl;
        if (nl < static_cast<double>(cfg_.min_samples_leaf) || nr < static_cast<double>(cfg_.min_samples_leaf)) continue;
        const double gain =
            parent_entropy - (nl * entropy(l, nl) + nr * entropy(right, nr)) / static_cast<double>(n);
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = f;
          best_threshold = thresholds[t].first;
          found = true;
          std::copy(values_.begin() + static_cast<std::ptrdiff_t>(begin),
                    values_.begin() + static_cast<std::ptrdiff_t>(end),
                    best_values_.begin() + static_cast<std::ptrdiff_t>(begin));
        }
      }
    }

    if (!found) return make_leaf(counts, static_cast<double>(n));

    // Stable partition of [begin, end) by the winning split.
    std::size_t mid = begin;
    right_.clear();
    for (std::size_t i = begin; i < end; ++i) {
      if (best_values_[i] < best_threshold) {
        order_[mid++] = order_[i];
      } else {
        right_.push_back(order_[i]);
      }
    }
    std::copy(right_.begin(), right_.end(), order_.begin() + static_cast<std::ptrdiff_t>(mid));
    return split_node(begin, mid, end, depth, best_feature, best_threshold);
  }

  std::int32_t split_node(std::size_t begin, std::size_t mid, std::size_t end, int depth, const FeatureDescriptor& f,
                          double threshold) {
    const auto self = static_cast<std::int32_t>(tree_.nodes.size());
    TreeNode node;
    node.feature = f;
    node.threshold = threshold;
    tree_.nodes.push_back(std::move(node));
    const std::int32_t l = grow(begin, mid, depth + 1);
    const std::int32_t r = grow(mid, end, depth + 1);
    tree_.nodes[static_cast<std::size_t>(self)].left = l;
    tree_.nodes[static_cast<std::size_t>(self)].right = r;
    return self;
  }

  std::span<const TrainingSample> samples_;
  std::span<const FeatureContext> contexts_;
  const ForestConfig& cfg_;
  std::size_t classes_;
  Rng& rng_;
  std::vector<std::size_t> landmarks_;
  std::vector<FeatureKind> kinds_;
  std::vector<std::uint32_t> order_;
  std::vector<double> values_;
  std::vector<double> best_values_;
  std::vector<std::uint32_t> right_;
  Tree tree_;
};

}  // namespace

int Tree::depth() const {
  if (nodes.empty()) return 0;
  int deepest = 0;
  std::vector<std::pair<std::int32_t, int>> stack{{0, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    deepest = std::max(deepest, d);
    const TreeNode& node = nodes[static_cast<std::size_t>(id)];
    if (!node.is_leaf()) {
      stack.emplace_back(node.left, d + 1);
      stack.emplace_back(node.right, d + 1);
    }
  }
  return deepest;
}

std::size_t Tree::internal_count() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return !n.is_leaf(); }));
}

const TreeNode& Tree::leaf_for(std::size_t linear, const FeatureContext& ctx) const {
  const TreeNode* node = &nodes.front();
  while (!node->is_leaf()) {
    const double v = evaluate_feature(node->feature, linear, ctx);
    node = &nodes[static_cast<std::size_t>(v < node->threshold ? node->left : node->right)];
  }
  return *node;
}

RandomForest::RandomForest(std::vector<Tree> trees, int num_classes, int pass_index, ForestConfig config)
    : trees_(std::move(trees)), num_classes_(num_classes), pass_index_(pass_index), config_(std::move(config)) {
  if (num_classes_ < 1) throw ValidationError("forest needs at least one class");
  if (pass_index_ < 1) throw ValidationError("pass index must be >= 1");
  for (const Tree& t : trees_) {
    if (t.nodes.empty()) throw ValidationError("empty tree");
    const auto count = static_cast<std::int32_t>(t.nodes.size());
    for (std::int32_t k = 0; k < count; ++k) {
      const TreeNode& n = t.nodes[static_cast<std::size_t>(k)];
      if (n.is_leaf()) {
        if (n.posterior.size() != static_cast<std::size_t>(num_classes_)) {
          throw ValidationError("leaf posterior has wrong class count");
        }
        double sum = 0.0;
        for (double p : n.posterior) {
          if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("leaf posterior outside [0, 1]");
          sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-6) throw ValidationError("leaf posterior does not sum to 1");
        continue;
      }
      // Children always follow their parent, which also rules out cycles.
      if (n.left <= k || n.right <= k || n.left >= count || n.right >= count) {
        throw ValidationError("tree node has invalid child index");
      }
      if (pass_index_ == 1 && needs_probabilities(n.feature.kind)) {
        throw ValidationError("pass-1 forest references a probability feature");
      }
    }
  }
}

std::vector<std::size_t> landmark_counts(const FeatureContext& ctx) {
  return {ctx.landmarks(kFemur).points.size(), ctx.landmarks(kTibia).points.size(),
          ctx.landmarks(kPatella).points.size()};
}

namespace {

void validate_training_inputs(std::span<const TrainingSample> samples, std::span<const FeatureContext> contexts,
                              const ForestConfig& cfg, int pass_index, int num_classes) {
  if (samples.empty()) throw ValidationError("empty sample set");
  if (contexts.empty()) throw ValidationError("no feature contexts");
  if (cfg.max_depth < 1) throw ValidationError("max_depth must be >= 1");
  if (cfg.features.pool_size == 0) throw ValidationError("pool_size must be >= 1");
  if (num_classes < 1) throw ValidationError("num_classes must be >= 1");
  for (const auto& s : samples) {
    if (s.label >= num_classes) throw ValidationError("sample label out of range");
    if (s.volume >= contexts.size()) throw ValidationError("sample references a missing volume");
    if (s.voxel >= contexts[s.volume].geometry().size()) throw ValidationError("sample voxel outside its volume");
  }
  if (pass_index >= 2) {
    for (const auto& c : contexts) {
      if (!c.has_probabilities()) throw ValidationError("pass >= 2 training needs probability maps in every context");
    }
  }
}

}  // namespace

Tree train_tree(std::span<const TrainingSample> samples, std::span<const FeatureContext> contexts,
                const ForestConfig& cfg, int pass_index, int num_classes, Rng& rng) {
  validate_training_inputs(samples, contexts, cfg, pass_index, num_classes);
  std::vector<std::uint32_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0U);
  return TreeBuilder(samples, contexts, cfg, pass_index, num_classes, rng).build(std::move(order));
}

RandomForest train_forest(std::span<const TrainingSample> samples, std::span<const FeatureContext> contexts,
                          const ForestConfig& cfg, int pass_index, int num_classes, std::uint64_t seed) {
  validate_training_inputs(samples, contexts, cfg, pass_index, num_classes);
  if (cfg.num_trees == 0) throw ValidationError("num_trees must be >= 1");
  if (!(cfg.bagging_fraction > 0.0)) throw ValidationError("bagging_fraction must be positive");
  std::vector<Tree> trees(cfg.num_trees);
  parallel_for(cfg.num_trees, [&](std::size_t t) {
    Rng rng(derive_seed(seed, "tree", static_cast<std::uint64_t>(pass_index), t));
    std::vector<std::uint32_t> order;
    if (cfg.bootstrap) {
      const auto m = std::max<std::size_t>(
          1, static_cast<std::size_t>(std::llround(cfg.bagging_fraction * static_cast<double>(samples.size()))));
      order.resize(m);
      for (auto& o : order) o = static_cast<std::uint32_t>(rng.below(samples.size()));
    } else {
      order.resize(samples.size());
      std::iota(order.begin(), order.end(), 0U);
    }
    trees[t] = TreeBuilder(samples, contexts, cfg, pass_index, num_classes, rng).build(std::move(order));
  });
  return RandomForest(std::move(trees), num_classes, pass_index, cfg);
}

namespace {

void check_context(const RandomForest& forest, const FeatureContext& ctx) {
  if (forest.pass_index() >= 2 && !ctx.has_probabilities()) {
    throw ValidationError("context/pass mismatch: pass " + std::to_string(forest.pass_index()) +
                          " forest needs probability maps");
  }
}

void accumulate(const RandomForest& forest, std::size_t linear, const FeatureContext& ctx, std::span<double> out) {
  std::fill(out.begin(), out.end(), 0.0);
  for (const Tree& t : forest.trees()) {
    const auto& post = t.leaf_for(linear, ctx).posterior;
    for (std::size_t c = 0; c < out.size(); ++c) out[c] += post[c];
  }
  const double inv = 1.0 / static_cast<double>(forest.trees().size());
  for (double& v : out) v *= inv;
}

}  // namespace

std::vector<double> predict_posterior(const RandomForest& forest, std::size_t linear, const FeatureContext& ctx) {
  check_context(forest, ctx);
  if (forest.trees().empty()) throw ValidationError("forest has no trees");
  std::vector<double> out(static_cast<std::size_t>(forest.num_classes()));
  accumulate(forest, linear, ctx, out);
  return out;
}

std::vector<double> predict_posterior(const RandomForest& forest, VoxelIndex i, const FeatureContext& ctx) {
  if (!ctx.geometry().contains(i)) throw ValidationError("voxel index outside the volume");
  return predict_posterior(forest, ctx.geometry().linear(i), ctx);
}

ProbMaps predict_volume(const RandomForest& forest, const FeatureContext& ctx, const Band& band) {
  check_context(forest, ctx);
  if (forest.num_classes() != kNumClasses) throw ValidationError("cartilage prediction needs a 4-class forest");
  if (band.empty()) throw ValidationError("band of interest is empty");
  require_same_geometry(band.geometry(), ctx.geometry(), "band vs feature context");
  const Geometry& g = ctx.geometry();
  std::array<std::vector<float>, 3> maps;
  for (auto& m : maps) m.assign(g.size(), 0.0F);

  const auto& voxels = band.voxels();
  constexpr std::size_t kChunk = 256;
  parallel_for((voxels.size() + kChunk - 1) / kChunk, [&](std::size_t chunk) {
    std::array<double, kNumClasses> post{};
    const std::size_t end = std::min(voxels.size(), (chunk + 1) * kChunk);
    for (std::size_t k = chunk * kChunk; k < end; ++k) {
      const std::size_t v = voxels[k];
      accumulate(forest, v, ctx, post);
      for (std::size_t c = 0; c < 3; ++c) maps[c][v] = static_cast<float>(std::clamp(post[c + 1], 0.0, 1.0));
    }
  });
  return {Volume(g, std::move(maps[0])), Volume(g, std::move(maps[1])), Volume(g, std::move(maps[2]))};
}

}  // namespace ctxforest
