#include "ctxforest/features.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "ctxforest/error.hpp"

namespace ctxforest {

namespace {

constexpr std::array<std::string_view, kNumFeatureKinds> kKindNames = {
    "Intensity", "GradMag", "DistF", "DistT",        "DistP", "SumFT", "DiffFT", "SumFP", "DiffFP",
    "DistLandmark", "RSID", "ProbF", "ProbT", "ProbP", "RSPD_F", "RSPD_T", "RSPD_P"};

std::size_t shifted(std::size_t linear, const Vec3& offset_mm, const Geometry& g) {
  const VoxelIndex at = g.index(linear);
  auto axis = [](int pos, double offset, double spacing, int extent) {
    const long step = std::lround(offset / spacing);
    return static_cast<int>(std::clamp<long>(pos + step, 0, extent - 1));
  };
  return g.linear({axis(at.x, offset_mm.x, g.spacing.x, g.dims.nx), axis(at.y, offset_mm.y, g.spacing.y, g.dims.ny),
                   axis(at.z, offset_mm.z, g.spacing.z, g.dims.nz)});
}

}  // namespace

std::string_view feature_kind_name(FeatureKind kind) { return kKindNames[static_cast<std::size_t>(kind)]; }

bool needs_probabilities(FeatureKind kind) { return kind >= FeatureKind::ProbF; }

bool has_offset(FeatureKind kind) {
  return kind == FeatureKind::RSID || kind == FeatureKind::RSPD_F || kind == FeatureKind::RSPD_T ||
         kind == FeatureKind::RSPD_P;
}

FeatureContext::FeatureContext(Volume intensity, Volume gradmag, std::array<Volume, 3> bone_distance,
                               std::array<LandmarkSet, 3> landmarks, std::optional<ProbMaps> probabilities)
    : intensity_(std::move(intensity)),
      gradmag_(std::move(gradmag)),
      distance_(std::move(bone_distance)),
      landmarks_(std::move(landmarks)),
      probabilities_(std::move(probabilities)) {
  const Geometry& g = intensity_.geometry();
  require_same_geometry(g, gradmag_.geometry(), "gradient magnitude");
  for (const auto& d : distance_) require_same_geometry(g, d.geometry(), "bone distance map");
  if (probabilities_) {
    for (const auto& p : *probabilities_) {
      require_same_geometry(g, p.geometry(), "probability map");
      for (float v : p.data()) {
        if (v < 0.0F || v > 1.0F) throw ValidationError("probability map value outside [0, 1]");
      }
    }
  }
}

const ProbMaps& FeatureContext::probabilities() const {
  if (!probabilities_) throw ValidationError("feature needs probability maps but the context has none");
  return *probabilities_;
}

FeatureContext FeatureContext::with_probabilities(ProbMaps maps) const {
  return FeatureContext(intensity_, gradmag_, distance_, landmarks_, std::move(maps));
}

FeatureContext FeatureContext::without_probabilities() const {
  FeatureContext copy = *this;
  copy.probabilities_.reset();
  return copy;
}

FeatureContext precompute_context(const Volume& intensity, const LabelVolume& bone_mask,
                                  const std::vector<LandmarkSet>& landmarks, std::optional<ProbMaps> probabilities) {
  require_same_geometry(intensity.geometry(), bone_mask.geometry(), "intensity vs bone mask");
  std::array<LandmarkSet, 3> by_bone;
  for (std::uint8_t bone : {kFemur, kTibia, kPatella}) {
    auto it = std::find_if(landmarks.begin(), landmarks.end(), [bone](const LandmarkSet& s) { return s.bone == bone; });
    if (it == landmarks.end() || it->points.empty()) {
      throw ValidationError("missing landmarks for bone " + std::to_string(bone));
    }
    by_bone[bone - 1] = *it;
  }
  std::array<Volume, 3> distance = {signed_distance_transform(bone_mask, kFemur),
                                    signed_distance_transform(bone_mask, kTibia),
                                    signed_distance_transform(bone_mask, kPatella)};
  return FeatureContext(intensity, gradient_magnitude(intensity), std::move(distance), std::move(by_bone),
                        std::move(probabilities));
}

std::vector<FeatureKind> legal_kinds(const FeatureConfig& cfg, int pass) {
  if (pass < 1) throw ValidationError("pass index must be >= 1");
  std::vector<FeatureKind> kinds;
  if (cfg.kinds.empty()) {
    for (std::size_t k = 0; k < kNumFeatureKinds; ++k) kinds.push_back(static_cast<FeatureKind>(k));
    if (pass == 1) std::erase_if(kinds, needs_probabilities);
  } else {
    kinds = cfg.kinds;
    if (pass == 1 && std::any_of(kinds.begin(), kinds.end(), needs_probabilities)) {
      throw ValidationError("pass-1 feature pool cannot use probability features");
    }
  }
  if (!cfg.use_landmark_features) std::erase(kinds, FeatureKind::DistLandmark);
  if (kinds.empty()) throw ValidationError("feature pool has no legal kinds");
  return kinds;
}

FeatureDescriptor sample_feature(Rng& rng, const FeatureConfig& cfg, std::span<const FeatureKind> kinds,
                                 std::span<const std::size_t> landmark_counts) {
  FeatureDescriptor f;
  f.kind = kinds[rng.below(kinds.size())];
  if (has_offset(f.kind)) {
    f.offset_mm.x = rng.uniform(-cfg.r_max_mm, cfg.r_max_mm);
    f.offset_mm.y = rng.uniform(-cfg.r_max_mm, cfg.r_max_mm);
    f.offset_mm.z = rng.uniform(-cfg.r_max_mm, cfg.r_max_mm);
  } else if (f.kind == FeatureKind::DistLandmark) {
    std::array<std::uint8_t, 3> bones{};
    std::size_t n = 0;
    for (std::size_t b = 0; b < landmark_counts.size() && b < 3; ++b) {
      if (landmark_counts[b] > 0) bones[n++] = static_cast<std::uint8_t>(b + 1);
    }
    f.bone = bones[rng.below(n)];
    f.landmark = static_cast<std::uint32_t>(rng.below(landmark_counts[f.bone - 1]));
  }
  return f;
}

std::vector<FeatureDescriptor> sample_feature_pool(Rng& rng, const FeatureConfig& cfg, int pass,
                                                   std::span<const std::size_t> landmark_counts) {
  if (cfg.pool_size == 0) throw ValidationError("pool_size must be >= 1");
  auto kinds = legal_kinds(cfg, pass);
  if (std::none_of(landmark_counts.begin(), landmark_counts.end(), [](std::size_t c) { return c > 0; })) {
    std::erase(kinds, FeatureKind::DistLandmark);
    if (kinds.empty()) throw ValidationError("feature pool has no legal kinds");
  }
  std::vector<FeatureDescriptor> pool;
  pool.reserve(cfg.pool_size);
  for (std::size_t i = 0; i < cfg.pool_size; ++i) pool.push_back(sample_feature(rng, cfg, kinds, landmark_counts));
  return pool;
}

double evaluate_feature(const FeatureDescriptor& f, std::size_t linear, const FeatureContext& ctx) {
  const auto dist = [&](std::uint8_t bone) { return static_cast<double>(ctx.bone_distance(bone)[linear]); };
  const auto prob = [&](int c) { return static_cast<double>(ctx.probabilities()[static_cast<std::size_t>(c)][linear]); };
  const auto prob_shift = [&](int c) {
    const Volume& p = ctx.probabilities()[static_cast<std::size_t>(c)];
    return static_cast<double>(p[shifted(linear, f.offset_mm, p.geometry())]) - p[linear];
  };
  switch (f.kind) {
    case FeatureKind::Intensity:
      return ctx.intensity()[linear];
    case FeatureKind::GradMag:
      return ctx.gradmag()[linear];
    case FeatureKind::DistF:
      return dist(kFemur);
    case FeatureKind::DistT:
      return dist(kTibia);
    case FeatureKind::DistP:
      return dist(kPatella);
    case FeatureKind::SumFT:
      return dist(kFemur) + dist(kTibia);
    case FeatureKind::DiffFT:
      return dist(kFemur) - dist(kTibia);
    case FeatureKind::SumFP:
      return dist(kFemur) + dist(kPatella);
    case FeatureKind::DiffFP:
      return dist(kFemur) - dist(kPatella);
    case FeatureKind::DistLandmark: {
      if (f.bone < kFemur || f.bone > kPatella) throw ValidationError("landmark feature with invalid bone");
      return distance_to_landmark(voxel_to_world(ctx.geometry(), ctx.geometry().index(linear)),
                                  ctx.landmarks(f.bone), f.landmark);
    }
    case FeatureKind::RSID: {
      const Volume& v = ctx.intensity();
      return static_cast<double>(v[shifted(linear, f.offset_mm, v.geometry())]) - v[linear];
    }
    case FeatureKind::ProbF:
      return prob(0);
    case FeatureKind::ProbT:
      return prob(1);
    case FeatureKind::ProbP:
      return prob(2);
    case FeatureKind::RSPD_F:
      return prob_shift(0);
    case FeatureKind::RSPD_T:
      return prob_shift(1);
    case FeatureKind::RSPD_P:
      return prob_shift(2);
  }
  throw ValidationError("unknown feature kind");
}

double evaluate_feature(const FeatureDescriptor& f, VoxelIndex i, const FeatureContext& ctx) {
  if (!ctx.geometry().contains(i)) throw ValidationError("voxel index outside the volume");
  return evaluate_feature(f, ctx.geometry().linear(i), ctx);
}

}  // namespace ctxforest
