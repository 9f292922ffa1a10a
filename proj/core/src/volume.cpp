#include "ctxforest/volume.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "ctxforest/error.hpp"

namespace ctxforest {

void validate_geometry(const Geometry& g) {
  if (g.dims.nx <= 0 || g.dims.ny <= 0 || g.dims.nz <= 0) {
    throw ValidationError("volume dims must be positive");
  }
  if (!(g.spacing.x > 0.0 && g.spacing.y > 0.0 && g.spacing.z > 0.0) || !std::isfinite(g.spacing.x) ||
      !std::isfinite(g.spacing.y) || !std::isfinite(g.spacing.z)) {
    throw ValidationError("voxel spacing must be finite and strictly positive");
  }
  if (!std::isfinite(g.origin.x) || !std::isfinite(g.origin.y) || !std::isfinite(g.origin.z)) {
    throw ValidationError("volume origin must be finite");
  }
}

void require_same_geometry(const Geometry& a, const Geometry& b, std::string_view what) {
  if (!(a == b)) throw ValidationError("geometry mismatch: " + std::string(what));
}

Volume::Volume(Geometry geometry, float fill) : geometry_(geometry) {
  validate_geometry(geometry_);
  if (!std::isfinite(fill)) throw ValidationError("volume values must be finite");
  data_.assign(geometry_.size(), fill);
}

Volume::Volume(Geometry geometry, std::vector<float> data) : geometry_(geometry), data_(std::move(data)) {
  validate_geometry(geometry_);
  if (data_.size() != geometry_.size()) throw ValidationError("data length mismatch");
  if (!std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); })) {
    throw ValidationError("volume values must be finite");
  }
}

Palette cartilage_palette() {
  return {{kBackground, "background"},
          {kFemoralCartilage, "femoral_cartilage"},
          {kTibialCartilage, "tibial_cartilage"},
          {kPatellarCartilage, "patellar_cartilage"}};
}

Palette bone_palette() {
  return {{0, "background"}, {kFemur, "femur"}, {kTibia, "tibia"}, {kPatella, "patella"}};
}

LabelVolume::LabelVolume(Geometry geometry, std::vector<std::uint8_t> labels, Palette palette)
    : geometry_(geometry), labels_(std::move(labels)), palette_(std::move(palette)) {
  validate_geometry(geometry_);
  if (labels_.size() != geometry_.size()) throw ValidationError("data length mismatch");
  std::array<bool, 256> seen{};
  for (auto l : labels_) seen[l] = true;
  for (std::size_t l = 0; l < seen.size(); ++l) {
    if (seen[l] && !palette_.contains(static_cast<std::uint8_t>(l))) {
      throw ValidationError("label " + std::to_string(l) + " missing from palette");
    }
  }
}

WorldPoint voxel_to_world(const Geometry& g, VoxelIndex i) {
  return {g.origin.x + i.x * g.spacing.x, g.origin.y + i.y * g.spacing.y, g.origin.z + i.z * g.spacing.z};
}

VoxelLookup world_to_voxel(const Geometry& g, WorldPoint p) {
  VoxelLookup out;
  auto axis = [&out](double coord, double origin, double spacing, int extent) {
    const double r = std::nearbyint((coord - origin) / spacing);
    if (!(r >= 0.0)) {  // also catches NaN
      out.clamped = true;
      return 0;
    }
    if (r > extent - 1) {
      out.clamped = true;
      return extent - 1;
    }
    return static_cast<int>(r);
  };
  out.index = {axis(p.x, g.origin.x, g.spacing.x, g.dims.nx), axis(p.y, g.origin.y, g.spacing.y, g.dims.ny),
               axis(p.z, g.origin.z, g.spacing.z, g.dims.nz)};
  return out;
}

Volume gradient_magnitude(const Volume& v) {
  const Geometry& g = v.geometry();
  if (g.dims.nx < 2 || g.dims.ny < 2 || g.dims.nz < 2) {
    throw ValidationError("gradient undefined: every axis needs at least 2 voxels");
  }
  const std::size_t sx = 1;
  const std::size_t sy = static_cast<std::size_t>(g.dims.nx);
  const std::size_t sz = sy * static_cast<std::size_t>(g.dims.ny);

  auto derivative = [&v](std::size_t at, int pos, int extent, std::size_t stride, double spacing) {
    if (pos == 0) return (static_cast<double>(v[at + stride]) - v[at]) / spacing;
    if (pos == extent - 1) return (static_cast<double>(v[at]) - v[at - stride]) / spacing;
    return (static_cast<double>(v[at + stride]) - v[at - stride]) / (2.0 * spacing);
  };

  std::vector<float> out(v.size());
  for (int z = 0; z < g.dims.nz; ++z) {
    for (int y = 0; y < g.dims.ny; ++y) {
      for (int x = 0; x < g.dims.nx; ++x) {
        const std::size_t at = g.linear({x, y, z});
        const double gx = derivative(at, x, g.dims.nx, sx, g.spacing.x);
        const double gy = derivative(at, y, g.dims.ny, sy, g.spacing.y);
        const double gz = derivative(at, z, g.dims.nz, sz, g.spacing.z);
        out[at] = static_cast<float>(std::sqrt(gx * gx + gy * gy + gz * gz));
      }
    }
  }
  return Volume(g, std::move(out));
}

}  // namespace ctxforest
