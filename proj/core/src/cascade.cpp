#include "ctxforest/cascade.hpp"

#include <algorithm>

#include "binary_io.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/parallel.hpp"
#include "forest_io.hpp"

namespace ctxforest {

Band band_for(const FeatureContext& ctx, const FeatureConfig& cfg) {
  return extract_band(ctx.bone_distance(kFemur), ctx.bone_distance(kTibia), ctx.bone_distance(kPatella),
                      cfg.band_tau_in_mm, cfg.band_tau_out_mm);
}

std::vector<TrainingSample> draw_training_samples(std::span<const Band> bands, std::span<const LabelVolume> ground_truth,
                                                  std::size_t cap, std::uint64_t seed) {
  if (bands.size() != ground_truth.size()) throw ValidationError("one band per ground-truth volume required");
  if (cap == 0) throw ValidationError("samples_per_class_per_volume must be >= 1");
  std::vector<TrainingSample> samples;
  for (std::size_t v = 0; v < bands.size(); ++v) {
    require_same_geometry(bands[v].geometry(), ground_truth[v].geometry(), "band vs ground truth");
    std::array<std::vector<std::uint32_t>, kNumClasses> by_class;
    for (std::uint32_t voxel : bands[v].voxels()) {
      const std::uint8_t label = ground_truth[v][voxel];
      if (label >= kNumClasses) throw ValidationError("ground-truth label outside {bg, F, T, P}");
      by_class[label].push_back(voxel);
    }
    for (std::size_t c = 0; c < by_class.size(); ++c) {
      auto& pool = by_class[c];
      if (pool.size() > cap) {
        Rng rng(derive_seed(seed, "samples", v, c));
        for (std::size_t i = 0; i < cap; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
        pool.resize(cap);
        std::sort(pool.begin(), pool.end());
      }
      for (std::uint32_t voxel : pool) {
        samples.push_back({static_cast<std::uint32_t>(v), voxel, static_cast<std::uint8_t>(c)});
      }
    }
  }
  return samples;
}

namespace {

std::vector<ProbMaps> cross_predict(std::span<const TrainingSample> samples, std::span<const FeatureContext> contexts,
                                    std::span<const Band> bands, const CascadeConfig& cfg, int pass,
                                    std::uint64_t seed) {
  if (contexts.size() < 2) throw ValidationError("cross_context needs at least two training volumes");
  std::vector<ProbMaps> maps(contexts.size());
  for (std::size_t half = 0; half < 2; ++half) {
    // Train on the other half (volume index parity), predict this half.
    std::vector<TrainingSample> subset;
    for (const auto& s : samples) {
      if (s.volume % 2 != half) subset.push_back(s);
    }
    const RandomForest aux =
        train_forest(subset, contexts, cfg.forest, pass, kNumClasses, derive_seed(seed, "cross", pass, half));
    parallel_for(contexts.size(), [&](std::size_t v) {
      if (v % 2 == half) maps[v] = predict_volume(aux, contexts[v], bands[v]);
    });
  }
  return maps;
}

}  // namespace

CascadeModel train_cascade(std::span<const TrainingCase> cases, const CascadeConfig& cfg, std::uint64_t seed) {
  if (cases.empty()) throw ValidationError("cascade training needs at least one volume");
  if (cfg.num_passes < 1) throw ValidationError("num_passes must be >= 1");

  std::vector<FeatureContext> base(cases.size());
  std::vector<Band> bands(cases.size());
  parallel_for(cases.size(), [&](std::size_t v) {
    const TrainingCase& c = cases[v];
    require_same_geometry(c.intensity.geometry(), c.ground_truth.geometry(), "ground truth of '" + c.name + "'");
    base[v] = precompute_context(c.intensity, c.bone_mask, c.landmarks);
    bands[v] = band_for(base[v], cfg.forest.features);
  });
  for (std::size_t v = 0; v < cases.size(); ++v) {
    if (bands[v].empty()) throw ValidationError("empty band of interest in volume '" + cases[v].name + "'");
  }
  std::vector<LabelVolume> gt;
  gt.reserve(cases.size());
  for (const auto& c : cases) gt.push_back(c.ground_truth);
  const auto samples = draw_training_samples(bands, gt, cfg.samples_per_class_per_volume, seed);

  CascadeModel model;
  model.config = cfg;
  model.train_spacing = cases.front().intensity.geometry().spacing;

  std::vector<FeatureContext> contexts = base;
  const std::uint64_t forest_seed = derive_seed(seed, "forest");
  for (int pass = 1; pass <= cfg.num_passes; ++pass) {
    model.passes.push_back(train_forest(samples, contexts, cfg.forest, pass, kNumClasses, forest_seed));
    if (pass == cfg.num_passes) break;

    std::vector<ProbMaps> maps(cases.size());
    if (cfg.cross_context) {
      maps = cross_predict(samples, contexts, bands, cfg, pass, seed);
    } else {
      const RandomForest& forest = model.passes.back();
      parallel_for(cases.size(), [&](std::size_t v) { maps[v] = predict_volume(forest, contexts[v], bands[v]); });
    }
    for (std::size_t v = 0; v < cases.size(); ++v) contexts[v] = base[v].with_probabilities(std::move(maps[v]));
  }
  return model;
}

std::vector<ProbMaps> infer_cascade_passes(const CascadeModel& model, const FeatureContext& base, const Band& band) {
  if (model.passes.empty()) throw ValidationError("cascade model has no passes");
  std::vector<ProbMaps> out;
  FeatureContext ctx = base.without_probabilities();
  for (const RandomForest& forest : model.passes) {
    out.push_back(predict_volume(forest, ctx, band));
    ctx = base.with_probabilities(out.back());
  }
  return out;
}

ProbMaps infer_cascade(const CascadeModel& model, const Volume& intensity, const LabelVolume& bone_mask,
                       const std::vector<LandmarkSet>& landmarks) {
  const FeatureContext ctx = precompute_context(intensity, bone_mask, landmarks);
  const Band band = band_for(ctx, model.config.forest.features);
  return infer_cascade_passes(model, ctx, band).back();
}

CascadeModel truncate_cascade(const CascadeModel& model, int passes) {
  if (passes < 1 || passes > static_cast<int>(model.passes.size())) {
    throw ValidationError("cannot truncate cascade to " + std::to_string(passes) + " passes");
  }
  CascadeModel out = model;
  out.passes.resize(static_cast<std::size_t>(passes));
  out.config.num_passes = passes;
  return out;
}

std::vector<FeatureCounts> feature_frequency(const CascadeModel& model) {
  std::vector<FeatureCounts> out;
  for (const RandomForest& forest : model.passes) {
    FeatureCounts counts;
    for (std::size_t k = 0; k < kNumFeatureKinds; ++k) counts[static_cast<FeatureKind>(k)] = 0;
    for (const Tree& t : forest.trees()) {
      for (const TreeNode& n : t.nodes) {
        if (!n.is_leaf()) ++counts[n.feature.kind];
      }
    }
    out.push_back(std::move(counts));
  }
  return out;
}

namespace {
constexpr std::string_view kCascadeMagic = "SCFCASC";
constexpr std::uint32_t kCascadeVersion = 1;
}  // namespace

std::string serialize_cascade(const CascadeModel& model) {
  detail::ByteWriter w;
  w.put_bytes(kCascadeMagic);
  w.put<std::uint32_t>(kCascadeVersion);
  w.put<std::int32_t>(model.config.num_passes);
  w.put<std::uint64_t>(model.config.samples_per_class_per_volume);
  w.put<std::uint8_t>(model.config.cross_context ? 1 : 0);
  detail::write_forest_config(w, model.config.forest);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.palette.size()));
  for (const auto& [label, name] : model.palette) {
    w.put<std::uint8_t>(label);
    w.put_string(name);
  }
  w.put<double>(model.train_spacing.x);
  w.put<double>(model.train_spacing.y);
  w.put<double>(model.train_spacing.z);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(model.passes.size()));
  for (const RandomForest& forest : model.passes) {
    const std::string blob = serialize_forest(forest);
    w.put<std::uint64_t>(blob.size());
    w.put_bytes(blob);
  }
  return w.take();
}

CascadeModel deserialize_cascade(std::string_view bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < kCascadeMagic.size() || r.get_bytes(kCascadeMagic.size()) != kCascadeMagic) {
    throw IoError("not a cascade model (missing SCFCASC magic)");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCascadeVersion) throw IoError("unsupported model version " + std::to_string(version));
  CascadeModel model;
  model.config.num_passes = r.get<std::int32_t>();
  model.config.samples_per_class_per_volume = r.get<std::uint64_t>();
  model.config.cross_context = r.get<std::uint8_t>() != 0;
  model.config.forest = detail::read_forest_config(r);
  model.palette.clear();
  const auto palette_size = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < palette_size; ++i) {
    const auto label = r.get<std::uint8_t>();
    model.palette[label] = r.get_string();
  }
  model.train_spacing.x = r.get<double>();
  model.train_spacing.y = r.get<double>();
  model.train_spacing.z = r.get<double>();
  const auto passes = r.get<std::uint32_t>();
  for (std::uint32_t p = 0; p < passes; ++p) {
    const auto size = r.get<std::uint64_t>();
    model.passes.push_back(deserialize_forest(r.get_bytes(size)));
    if (model.passes.back().pass_index() != static_cast<int>(p) + 1) {
      throw IoError("cascade pass " + std::to_string(p + 1) + " carries the wrong pass index");
    }
  }
  if (!r.done()) throw IoError("trailing bytes after cascade model");
  if (model.passes.empty() || static_cast<int>(model.passes.size()) != model.config.num_passes) {
    throw IoError("cascade pass count does not match its config");
  }
  return model;
}

void save_cascade(const CascadeModel& model, const std::filesystem::path& path) {
  detail::write_file(path.string(), serialize_cascade(model));
}

CascadeModel load_cascade(const std::filesystem::path& path) {
  return deserialize_cascade(detail::read_file(path.string()));
}

}  // namespace ctxforest
