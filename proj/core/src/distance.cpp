#include "ctxforest/distance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ctxforest/error.hpp"
#include "ctxforest/parallel.hpp"

namespace ctxforest {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Squared distance transform of one line: out[i] = min_q ((i - q) s)^2 + f[q].
// Lower envelope of parabolas rooted at the finite samples only, so that
// infinities never enter the intersection arithmetic.
class LineTransform {
 public:
  void run(const double* f, double* out, int n, double spacing) {
    sites_.resize(static_cast<std::size_t>(n));
    bounds_.resize(static_cast<std::size_t>(n) + 1);
    int k = -1;
    for (int q = 0; q < n; ++q) {
      if (f[q] == kInf) continue;
      const double pq = q * spacing;
      double cross = -kInf;
      while (k >= 0) {
        const int v = sites_[static_cast<std::size_t>(k)];
        const double pv = v * spacing;
        cross = ((f[q] + pq * pq) - (f[v] + pv * pv)) / (2.0 * (pq - pv));
        if (cross > bounds_[static_cast<std::size_t>(k)]) break;
        --k;
      }
      ++k;
      sites_[static_cast<std::size_t>(k)] = q;
      bounds_[static_cast<std::size_t>(k)] = k == 0 ? -kInf : cross;
      bounds_[static_cast<std::size_t>(k) + 1] = kInf;
    }
    if (k < 0) {
      std::fill(out, out + n, kInf);
      return;
    }
    int j = 0;
    for (int i = 0; i < n; ++i) {
      const double x = i * spacing;
      while (bounds_[static_cast<std::size_t>(j) + 1] < x) ++j;
      const int v = sites_[static_cast<std::size_t>(j)];
      const double dx = x - v * spacing;
      out[i] = dx * dx + f[v];
    }
  }

 private:
  std::vector<int> sites_;
  std::vector<double> bounds_;
};

// In-place squared EDT along one axis of a dense grid.
void transform_axis(std::vector<double>& grid, const Dims& d, int axis, double spacing) {
  const int n = axis == 0 ? d.nx : axis == 1 ? d.ny : d.nz;
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? static_cast<std::size_t>(d.nx)
                                                        : static_cast<std::size_t>(d.nx) * d.ny;
  const std::size_t lines = grid.size() / static_cast<std::size_t>(n);

  // A line is identified by its first element; enumerate those.
  auto line_start = [&](std::size_t line) -> std::size_t {
    const auto nx = static_cast<std::size_t>(d.nx);
    const auto ny = static_cast<std::size_t>(d.ny);
    if (axis == 0) return line * nx;
    if (axis == 1) return (line % nx) + (line / nx) * nx * ny;
    return line;
  };

  constexpr std::size_t kChunk = 64;
  const std::size_t chunks = (lines + kChunk - 1) / kChunk;
  parallel_for(chunks, [&](std::size_t c) {
    LineTransform lt;
    std::vector<double> in(static_cast<std::size_t>(n));
    std::vector<double> out(static_cast<std::size_t>(n));
    const std::size_t end = std::min(lines, (c + 1) * kChunk);
    for (std::size_t line = c * kChunk; line < end; ++line) {
      const std::size_t start = line_start(line);
      for (int i = 0; i < n; ++i) in[static_cast<std::size_t>(i)] = grid[start + static_cast<std::size_t>(i) * stride];
      lt.run(in.data(), out.data(), n, spacing);
      for (int i = 0; i < n; ++i) grid[start + static_cast<std::size_t>(i) * stride] = out[static_cast<std::size_t>(i)];
    }
  });
}

std::vector<double> squared_edt(const std::vector<std::uint8_t>& is_site, const Geometry& g) {
  std::vector<double> grid(is_site.size());
  for (std::size_t i = 0; i < grid.size(); ++i) grid[i] = is_site[i] ? 0.0 : kInf;
  transform_axis(grid, g.dims, 0, g.spacing.x);
  transform_axis(grid, g.dims, 1, g.spacing.y);
  transform_axis(grid, g.dims, 2, g.spacing.z);
  return grid;
}

}  // namespace

Volume signed_distance_transform(const LabelVolume& mask, std::uint8_t target_label) {
  const Geometry& g = mask.geometry();
  std::vector<std::uint8_t> inside(mask.size());
  std::size_t count = 0;
  for (std::size_t i = 0; i < inside.size(); ++i) {
    inside[i] = mask[i] == target_label;
    count += inside[i];
  }
  if (count == 0 || count == inside.size()) throw ValidationError("degenerate mask");

  std::vector<std::uint8_t> outside(inside.size());
  for (std::size_t i = 0; i < inside.size(); ++i) outside[i] = !inside[i];

  const auto to_target = squared_edt(inside, g);
  const auto to_background = squared_edt(outside, g);
  std::vector<float> out(inside.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inside[i] ? static_cast<float>(-std::sqrt(to_background[i])) : static_cast<float>(std::sqrt(to_target[i]));
  }
  return Volume(g, std::move(out));
}

Band::Band(Geometry geometry, std::vector<std::uint32_t> voxels)
    : geometry_(geometry), voxels_(std::move(voxels)), member_(geometry.size(), 0) {
  for (std::size_t k = 0; k < voxels_.size(); ++k) {
    if (voxels_[k] >= member_.size()) throw ValidationError("band voxel outside the grid");
    if (k > 0 && voxels_[k] <= voxels_[k - 1]) throw ValidationError("band voxels must be strictly increasing");
    member_[voxels_[k]] = 1;
  }
}

LabelVolume Band::to_mask() const {
  return LabelVolume(geometry_, member_, {{0, "outside"}, {1, "band"}});
}

Band Band::from_mask(const LabelVolume& mask) {
  std::vector<std::uint32_t> voxels;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask[i] != 0) voxels.push_back(static_cast<std::uint32_t>(i));
  }
  return Band(mask.geometry(), std::move(voxels));
}

Band extract_band(const Volume& dist_femur, const Volume& dist_tibia, const Volume& dist_patella, double tau_in_mm,
                  double tau_out_mm) {
  require_same_geometry(dist_femur.geometry(), dist_tibia.geometry(), "band distance maps");
  require_same_geometry(dist_femur.geometry(), dist_patella.geometry(), "band distance maps");
  if (!(tau_in_mm >= 0.0) || !(tau_out_mm >= 0.0)) throw ValidationError("band thresholds must be non-negative");
  auto within = [&](float d) { return d >= -tau_in_mm && d <= tau_out_mm; };
  std::vector<std::uint32_t> voxels;
  for (std::size_t i = 0; i < dist_femur.size(); ++i) {
    if (within(dist_femur[i]) || within(dist_tibia[i]) || within(dist_patella[i])) {
      voxels.push_back(static_cast<std::uint32_t>(i));
    }
  }
  return Band(dist_femur.geometry(), std::move(voxels));
}

}  // namespace ctxforest
