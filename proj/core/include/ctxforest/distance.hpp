#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctxforest/volume.hpp"

namespace ctxforest {

/// Registered surface landmarks of one bone. The position in `points` is the
/// anatomical index: index k names the same site on every subject.
struct LandmarkSet {
  std::uint8_t bone = 0;
  std::vector<WorldPoint> points;

  friend bool operator==(const LandmarkSet&, const LandmarkSet&) = default;
};

/// Exact signed Euclidean distance (mm) between voxel centers: for voxels
/// outside the target structure, distance to the nearest target voxel
/// center; inside, minus the distance to the nearest non-target voxel
/// center. Separable lower-envelope transform with spacing-scaled axes.
Volume signed_distance_transform(const LabelVolume& mask, std::uint8_t target_label);

double distance_to_landmark(WorldPoint p, const LandmarkSet& landmarks, std::size_t index);

/// Voxels within a signed-distance window of any bone surface, in storage
/// order.
class Band {
 public:
  Band() = default;
  Band(Geometry geometry, std::vector<std::uint32_t> voxels);

  const Geometry& geometry() const { return geometry_; }
  const std::vector<std::uint32_t>& voxels() const { return voxels_; }
  std::size_t size() const { return voxels_.size(); }
  bool empty() const { return voxels_.empty(); }
  bool contains(std::size_t linear) const { return member_[linear] != 0; }

  LabelVolume to_mask() const;
  static Band from_mask(const LabelVolume& mask);

 private:
  Geometry geometry_;
  std::vector<std::uint32_t> voxels_;
  std::vector<std::uint8_t> member_;
};

/// x is in the band iff -tau_in <= d_b(x) <= tau_out for at least one bone.
Band extract_band(const Volume& dist_femur, const Volume& dist_tibia, const Volume& dist_patella,
                  double tau_in_mm, double tau_out_mm);

// CSV with header `bone,index,x_mm,y_mm,z_mm`; indices contiguous from 0 per bone.
void save_landmarks(const std::vector<LandmarkSet>& sets, const std::filesystem::path& path);
std::vector<LandmarkSet> load_landmarks(const std::filesystem::path& path);

}  // namespace ctxforest
