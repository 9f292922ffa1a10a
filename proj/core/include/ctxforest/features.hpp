#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "ctxforest/distance.hpp"
#include "ctxforest/rng.hpp"
#include "ctxforest/volume.hpp"

namespace ctxforest {

// One kind per base feature: intensity, gradient magnitude, the three bone
// distances and their sums/differences, distance to a landmark, random
// shift intensity difference, the three cartilage probabilities and their
// random shift differences.
enum class FeatureKind : std::uint8_t {
  Intensity,
  GradMag,
  DistF,
  DistT,
  DistP,
  SumFT,
  DiffFT,
  SumFP,
  DiffFP,
  DistLandmark,
  RSID,
  ProbF,
  ProbT,
  ProbP,
  RSPD_F,
  RSPD_T,
  RSPD_P,
};

inline constexpr std::size_t kNumFeatureKinds = 17;

std::string_view feature_kind_name(FeatureKind kind);
/// Prob* and RSPD_* read cascade probability maps.
bool needs_probabilities(FeatureKind kind);
bool has_offset(FeatureKind kind);

struct FeatureDescriptor {
  FeatureKind kind = FeatureKind::Intensity;
  Vec3 offset_mm{};          // RSID / RSPD_*
  std::uint8_t bone = 0;     // DistLandmark
  std::uint32_t landmark = 0;  // DistLandmark

  friend bool operator==(const FeatureDescriptor&, const FeatureDescriptor&) = default;
};

struct FeatureConfig {
  std::size_t pool_size = 100;
  double r_max_mm = 30.0;
  double band_tau_in_mm = 2.0;
  double band_tau_out_mm = 10.0;
  bool use_landmark_features = true;
  /// Restricts sampling to these kinds; empty means every kind legal for the pass.
  std::vector<FeatureKind> kinds;

  friend bool operator==(const FeatureConfig&, const FeatureConfig&) = default;
};

using ProbMaps = std::array<Volume, 3>;  // femoral, tibial, patellar

/// Everything a feature may read for one volume: intensity, its gradient
/// magnitude, the three signed bone distances, per-bone landmarks and (from
/// the second pass on) the previous pass's cartilage probabilities.
class FeatureContext {
 public:
  FeatureContext() = default;
  FeatureContext(Volume intensity, Volume gradmag, std::array<Volume, 3> bone_distance,
                 std::array<LandmarkSet, 3> landmarks, std::optional<ProbMaps> probabilities);

  const Geometry& geometry() const { return intensity_.geometry(); }
  const Volume& intensity() const { return intensity_; }
  const Volume& gradmag() const { return gradmag_; }
  /// bone in {kFemur, kTibia, kPatella}
  const Volume& bone_distance(std::uint8_t bone) const { return distance_[bone - 1]; }
  const LandmarkSet& landmarks(std::uint8_t bone) const { return landmarks_[bone - 1]; }
  bool has_probabilities() const { return probabilities_.has_value(); }
  const ProbMaps& probabilities() const;

  FeatureContext with_probabilities(ProbMaps maps) const;
  FeatureContext without_probabilities() const;

 private:
  Volume intensity_;
  Volume gradmag_;
  std::array<Volume, 3> distance_;
  std::array<LandmarkSet, 3> landmarks_;
  std::optional<ProbMaps> probabilities_;
};

/// Caches gradient magnitude and the femur/tibia/patella signed distance
/// maps so that per-voxel evaluation needs no volume-wide work.
FeatureContext precompute_context(const Volume& intensity, const LabelVolume& bone_mask,
                                  const std::vector<LandmarkSet>& landmarks,
                                  std::optional<ProbMaps> probabilities = std::nullopt);

/// Kinds legal for a pass under cfg (pass 1 excludes probability kinds).
std::vector<FeatureKind> legal_kinds(const FeatureConfig& cfg, int pass);

/// Kind-first sampling: a kind uniformly from legal_kinds, then its
/// parameters. landmark_counts[b] is the landmark count of bone b+1.
std::vector<FeatureDescriptor> sample_feature_pool(Rng& rng, const FeatureConfig& cfg, int pass,
                                                   std::span<const std::size_t> landmark_counts);
FeatureDescriptor sample_feature(Rng& rng, const FeatureConfig& cfg, std::span<const FeatureKind> kinds,
                                 std::span<const std::size_t> landmark_counts);

/// Offsets are converted from mm to voxels by nearest rounding and the
/// shifted position is clamped to the grid.
double evaluate_feature(const FeatureDescriptor& f, std::size_t linear, const FeatureContext& ctx);
double evaluate_feature(const FeatureDescriptor& f, VoxelIndex i, const FeatureContext& ctx);

}  // namespace ctxforest
