#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ctxforest/distance.hpp"
#include "ctxforest/volume.hpp"

namespace ctxforest {

/// One ellipsoidal bone plus the surface sector (around `facing`) where its
/// cartilage grows. `coverage` is the sector's fraction of the unit sphere.
struct BoneShape {
  Vec3 center;
  Vec3 radii;
  Vec3 facing;
  double coverage = 0.3;
};

struct PhantomSpec {
  std::uint64_t seed = 1;
  Dims dims{64, 64, 64};
  Vec3 spacing{1.0, 1.0, 1.0};
  /// femur, tibia, patella in mm relative to the grid origin
  std::array<BoneShape, 3> bones;
  double center_jitter_mm = 1.5;
  double radius_jitter_mm = 1.0;
  /// Extra jitter between the two visits of one subject.
  double visit_jitter_mm = 0.5;
  double thickness_min_mm = 1.5;
  double thickness_max_mm = 3.5;
  double background_mean = 100.0;
  double cartilage_mean = 120.0;
  double bone_mean = 40.0;
  double noise_std = 20.0;
  double bias_amplitude = 0.1;
  std::size_t landmarks_per_bone = 200;
};

/// Knee-like layout scaled to the field of view: femur above, tibia below,
/// patella anterior to the femur.
PhantomSpec default_phantom_spec(Dims dims = {64, 64, 64}, Vec3 spacing = {1.0, 1.0, 1.0},
                                 std::uint64_t seed = 1);

/// Throws ValidationError if shells are negative, coverage is outside (0, 1]
/// or the bones can intersect under maximum jitter.
void validate_phantom_spec(const PhantomSpec& spec);

struct Phantom {
  Volume intensity;
  LabelVolume bone_mask;
  std::vector<LandmarkSet> landmarks;  // femur, tibia, patella
  LabelVolume ground_truth;
};

/// Deterministic in (spec.seed, subject_id, visit).
Phantom generate_phantom(const PhantomSpec& spec, int subject_id, int visit = 0);

struct ManifestEntry {
  int subject_id = 0;
  std::string volume_path;
  std::string bone_mask_path;
  std::string landmarks_path;
  std::string gt_path;

  friend bool operator==(const ManifestEntry&, const ManifestEntry&) = default;
};

/// Paths in entries are relative to base_dir.
struct Manifest {
  std::filesystem::path base_dir;
  std::vector<ManifestEntry> entries;

  std::vector<int> subjects() const;
  std::filesystem::path resolve(const std::string& relative) const { return base_dir / relative; }
};

Manifest generate_dataset(const PhantomSpec& spec, int n_subjects, const std::filesystem::path& out_dir,
                          int volumes_per_subject = 2);

// Plain-text table: subject_id,volume_path,bone_mask_path,landmarks_path,gt_path
void save_manifest(const Manifest& manifest, const std::filesystem::path& path);
Manifest load_manifest(const std::filesystem::path& path);

}  // namespace ctxforest
