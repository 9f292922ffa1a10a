#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ctxforest {

struct Vec3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
  friend Vec3 operator-(Vec3 a, Vec3 b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
  friend Vec3 operator*(Vec3 a, double s) { return {a.x * s, a.y * s, a.z * s}; }
  friend bool operator==(const Vec3&, const Vec3&) = default;
  double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

using WorldPoint = Vec3;

struct VoxelIndex {
  int x = 0;
  int y = 0;
  int z = 0;
  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
};

struct Dims {
  int nx = 0;
  int ny = 0;
  int nz = 0;
  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  friend bool operator==(const Dims&, const Dims&) = default;
};

/// Grid geometry shared by Volume and LabelVolume. Storage is row-major
/// with x fastest: linear = x + nx * (y + ny * z).
struct Geometry {
  Dims dims;
  Vec3 spacing{1.0, 1.0, 1.0};
  Vec3 origin{};

  std::size_t size() const { return dims.count(); }
  std::size_t linear(VoxelIndex i) const {
    return static_cast<std::size_t>(i.x) +
           static_cast<std::size_t>(dims.nx) *
               (static_cast<std::size_t>(i.y) + static_cast<std::size_t>(dims.ny) * static_cast<std::size_t>(i.z));
  }
  VoxelIndex index(std::size_t linear) const {
    const auto nx = static_cast<std::size_t>(dims.nx);
    const auto ny = static_cast<std::size_t>(dims.ny);
    return {static_cast<int>(linear % nx), static_cast<int>((linear / nx) % ny),
            static_cast<int>(linear / (nx * ny))};
  }
  bool contains(VoxelIndex i) const {
    return i.x >= 0 && i.y >= 0 && i.z >= 0 && i.x < dims.nx && i.y < dims.ny && i.z < dims.nz;
  }
  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Throws ValidationError unless dims are positive and spacing strictly positive.
void validate_geometry(const Geometry& g);
/// Throws ValidationError("geometry mismatch: <what>") when a != b.
void require_same_geometry(const Geometry& a, const Geometry& b, std::string_view what);

/// Dense float32 scalar grid. Immutable after construction; every stored
/// value is finite.
class Volume {
 public:
  Volume() = default;
  Volume(Geometry geometry, float fill);
  Volume(Geometry geometry, std::vector<float> data);

  const Geometry& geometry() const { return geometry_; }
  std::span<const float> data() const { return data_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  float operator[](std::size_t linear) const { return data_[linear]; }
  float at(VoxelIndex i) const { return data_[geometry_.linear(i)]; }

  friend bool operator==(const Volume&, const Volume&) = default;

 private:
  Geometry geometry_;
  std::vector<float> data_;
};

using Palette = std::map<std::uint8_t, std::string>;

enum CartilageLabel : std::uint8_t {
  kBackground = 0,
  kFemoralCartilage = 1,
  kTibialCartilage = 2,
  kPatellarCartilage = 3,
};

enum BoneLabel : std::uint8_t {
  kFemur = 1,
  kTibia = 2,
  kPatella = 3,
};

inline constexpr int kNumClasses = 4;

Palette cartilage_palette();
Palette bone_palette();

/// Dense categorical grid. Every stored label must have a palette entry.
class LabelVolume {
 public:
  LabelVolume() = default;
  LabelVolume(Geometry geometry, std::vector<std::uint8_t> labels, Palette palette);

  const Geometry& geometry() const { return geometry_; }
  std::span<const std::uint8_t> data() const { return labels_; }
  const Palette& palette() const { return palette_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  std::uint8_t operator[](std::size_t linear) const { return labels_[linear]; }
  std::uint8_t at(VoxelIndex i) const { return labels_[geometry_.linear(i)]; }

  friend bool operator==(const LabelVolume&, const LabelVolume&) = default;

 private:
  Geometry geometry_;
  std::vector<std::uint8_t> labels_;
  Palette palette_;
};

struct VoxelLookup {
  VoxelIndex index;
  bool clamped = false;
};

WorldPoint voxel_to_world(const Geometry& g, VoxelIndex i);
/// Nearest-voxel rounding; out-of-range results are clamped to the grid
/// and flagged.
VoxelLookup world_to_voxel(const Geometry& g, WorldPoint p);

/// ||grad I|| with central differences inside and one-sided differences at
/// the faces, scaled by voxel spacing. Every axis needs extent >= 2.
Volume gradient_magnitude(const Volume& v);

// MetaImage-style header (.mhd) plus raw little-endian payload.
void save_volume(const Volume& v, const std::filesystem::path& header_path);
Volume load_volume(const std::filesystem::path& header_path);
void save_label_volume(const LabelVolume& v, const std::filesystem::path& header_path);
LabelVolume load_label_volume(const std::filesystem::path& header_path);

}  // namespace ctxforest
