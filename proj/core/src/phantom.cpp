#include "ctxforest/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "binary_io.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/rng.hpp"

namespace ctxforest {

namespace {

Vec3 scale(Vec3 a, Vec3 b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

Vec3 normalized(Vec3 v) {
  const double n = v.norm();
  return n > 0.0 ? v * (1.0 / n) : Vec3{0.0, 0.0, 1.0};
}

Vec3 jitter(Rng& rng, double amount) {
  return {rng.uniform(-amount, amount), rng.uniform(-amount, amount), rng.uniform(-amount, amount)};
}

// Evenly spread unit directions; index k is the same direction for every
// subject, which makes the landmarks registered by construction.
std::vector<Vec3> fibonacci_sphere(std::size_t n) {
  std::vector<Vec3> dirs(n);
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t k = 0; k < n; ++k) {
    const double z = 1.0 - 2.0 * (static_cast<double>(k) + 0.5) / static_cast<double>(n);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(k);
    dirs[k] = {r * std::cos(phi), r * std::sin(phi), z};
  }
  return dirs;
}

// Any unit vector orthogonal to `axis`.
Vec3 orthogonal(Vec3 axis) {
  const Vec3 helper = std::abs(axis.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
  const Vec3 c{axis.y * helper.z - axis.z * helper.y, axis.z * helper.x - axis.x * helper.z,
               axis.x * helper.y - axis.y * helper.x};
  return normalized(c);
}

struct SubjectBone {
  Vec3 center;
  Vec3 radii;
  Vec3 facing;
  double coverage;
  double phase;
};

bool inside(const SubjectBone& b, Vec3 p) {
  const Vec3 q = p - b.center;
  const double u = q.x / b.radii.x;
  const double v = q.y / b.radii.y;
  const double w = q.z / b.radii.z;
  return u * u + v * v + w * w <= 1.0;
}

}  // namespace

PhantomSpec default_phantom_spec(Dims dims, Vec3 spacing, std::uint64_t seed) {
  PhantomSpec spec;
  spec.seed = seed;
  spec.dims = dims;
  spec.spacing = spacing;
  const Vec3 extent{dims.nx * spacing.x, dims.ny * spacing.y, dims.nz * spacing.z};
  // z points up, y points anterior.
  spec.bones[0] = {scale({0.50, 0.44, 0.82}, extent), scale({0.31, 0.22, 0.22}, extent), {0, 0, -1}, 0.30};
  spec.bones[1] = {scale({0.50, 0.44, 0.19}, extent), scale({0.31, 0.22, 0.21}, extent), {0, 0, 1}, 0.30};
  spec.bones[2] = {scale({0.50, 0.84, 0.76}, extent), scale({0.14, 0.06, 0.13}, extent), {0, -1, 0}, 0.35};
  return spec;
}

void validate_phantom_spec(const PhantomSpec& spec) {
  validate_geometry({spec.dims, spec.spacing, {}});
  if (spec.thickness_min_mm < 0.0 || spec.thickness_max_mm < spec.thickness_min_mm) {
    throw ValidationError("cartilage thickness range must be non-negative and ordered");
  }
  if (spec.noise_std < 0.0 || spec.bias_amplitude < 0.0 || spec.bias_amplitude >= 1.0) {
    throw ValidationError("noise std must be >= 0 and bias amplitude in [0, 1)");
  }
  if (spec.landmarks_per_bone == 0) throw ValidationError("landmarks_per_bone must be >= 1");
  if (spec.center_jitter_mm < 0.0 || spec.radius_jitter_mm < 0.0 || spec.visit_jitter_mm < 0.0) {
    throw ValidationError("jitter ranges must be non-negative");
  }
  for (const auto& b : spec.bones) {
    if (!(b.coverage > 0.0 && b.coverage <= 1.0)) throw ValidationError("cartilage coverage must lie in (0, 1]");
    if (b.radii.x - spec.radius_jitter_mm <= 0.0 || b.radii.y - spec.radius_jitter_mm <= 0.0 ||
        b.radii.z - spec.radius_jitter_mm <= 0.0) {
      throw ValidationError("bone radii must stay positive under jitter");
    }
  }
  // Worst-case bounding boxes must be separated along some axis.
  const double slack = spec.center_jitter_mm + spec.visit_jitter_mm + spec.radius_jitter_mm;
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = i + 1; j < 3; ++j) {
      const auto& a = spec.bones[i];
      const auto& b = spec.bones[j];
      auto separated = [&](double ca, double ra, double cb, double rb) {
        return std::abs(ca - cb) > ra + rb + 2.0 * slack;
      };
      if (!separated(a.center.x, a.radii.x, b.center.x, b.radii.x) &&
          !separated(a.center.y, a.radii.y, b.center.y, b.radii.y) &&
          !separated(a.center.z, a.radii.z, b.center.z, b.radii.z)) {
        throw ValidationError("phantom bones " + std::to_string(i + 1) + " and " + std::to_string(j + 1) +
                              " may intersect under maximum jitter");
      }
    }
  }
}

Phantom generate_phantom(const PhantomSpec& spec, int subject_id, int visit) {
  validate_phantom_spec(spec);
  const Geometry g{spec.dims, spec.spacing, {}};
  const auto sid = static_cast<std::uint64_t>(subject_id);
  const auto vid = static_cast<std::uint64_t>(visit);

  Rng subject_rng(derive_seed(spec.seed, "subject", sid));
  Rng visit_rng(derive_seed(spec.seed, "visit", sid, vid));
  std::array<SubjectBone, 3> bones;
  for (std::size_t b = 0; b < 3; ++b) {
    const BoneShape& shape = spec.bones[b];
    bones[b].center = shape.center + jitter(subject_rng, spec.center_jitter_mm);
    bones[b].radii = shape.radii + jitter(subject_rng, spec.radius_jitter_mm);
    bones[b].facing = normalized(shape.facing);
    bones[b].coverage = shape.coverage;
    bones[b].phase = subject_rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (auto& b : bones) b.center = b.center + jitter(visit_rng, spec.visit_jitter_mm);
  const std::array<double, 3> bias_phase = {subject_rng.uniform(0.0, 2.0 * std::numbers::pi),
                                            subject_rng.uniform(0.0, 2.0 * std::numbers::pi),
                                            subject_rng.uniform(0.0, 2.0 * std::numbers::pi)};

  std::vector<std::uint8_t> bone_labels(g.size(), 0);
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Vec3 p = voxel_to_world(g, g.index(v));
    for (std::size_t b = 0; b < 3; ++b) {
      if (!inside(bones[b], p)) continue;
      if (bone_labels[v] != 0) throw ValidationError("phantom bones intersect");
      bone_labels[v] = static_cast<std::uint8_t>(b + 1);
    }
  }
  LabelVolume bone_mask(g, bone_labels, bone_palette());

  // Cartilage: a shell on the facing sector of each bone, thickest at the
  // sector center and thinning towards its rim.
  std::vector<std::uint8_t> gt(g.size(), kBackground);
  for (std::size_t b = 0; b < 3; ++b) {
    const SubjectBone& bone = bones[b];
    const Volume dist = signed_distance_transform(bone_mask, static_cast<std::uint8_t>(b + 1));
    const double rim_angle = std::acos(1.0 - 2.0 * bone.coverage);
    const Vec3 e1 = orthogonal(bone.facing);
    const Vec3 e2{bone.facing.y * e1.z - bone.facing.z * e1.y, bone.facing.z * e1.x - bone.facing.x * e1.z,
                  bone.facing.x * e1.y - bone.facing.y * e1.x};
    for (std::size_t v = 0; v < g.size(); ++v) {
      const double d = dist[v];
      if (!(d > 0.0) || d > spec.thickness_max_mm || bone_labels[v] != 0 || gt[v] != kBackground) continue;
      const Vec3 q = voxel_to_world(g, g.index(v)) - bone.center;
      const Vec3 dir = normalized({q.x / bone.radii.x, q.y / bone.radii.y, q.z / bone.radii.z});
      const double angle = std::acos(std::clamp(dot(dir, bone.facing), -1.0, 1.0));
      if (angle > rim_angle) continue;
      const double rho = rim_angle > 0.0 ? angle / rim_angle : 0.0;
      const double azimuth = std::atan2(dot(dir, e2), dot(dir, e1));
      const double shape = (1.0 - rho * rho) * (0.85 + 0.15 * std::sin(2.0 * azimuth + bone.phase));
      const double thickness = spec.thickness_min_mm + (spec.thickness_max_mm - spec.thickness_min_mm) * shape;
      if (d <= thickness) gt[v] = static_cast<std::uint8_t>(b + 1);
    }
  }

  Rng noise_rng(derive_seed(spec.seed, "noise", sid, vid));
  const Vec3 extent{spec.dims.nx * spec.spacing.x, spec.dims.ny * spec.spacing.y, spec.dims.nz * spec.spacing.z};
  std::vector<float> intensity(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    const Vec3 p = voxel_to_world(g, g.index(v));
    const double field =
        0.5 * std::sin(std::numbers::pi * p.x / extent.x + bias_phase[0]) *
            std::cos(std::numbers::pi * p.y / extent.y + bias_phase[1]) +
        0.5 * std::sin(std::numbers::pi * p.z / extent.z + bias_phase[2]);
    double mean = spec.background_mean;
    double noise = spec.noise_std;
    if (bone_labels[v] != 0) {
      mean = spec.bone_mean;
      noise = 0.5 * spec.noise_std;
    } else if (gt[v] != kBackground) {
      mean = spec.cartilage_mean;
    }
    const double value = mean * (1.0 + spec.bias_amplitude * field) + (noise > 0.0 ? noise * noise_rng.normal() : 0.0);
    intensity[v] = static_cast<float>(value);
  }

  Phantom out;
  out.intensity = Volume(g, std::move(intensity));
  out.bone_mask = std::move(bone_mask);
  out.ground_truth = LabelVolume(g, std::move(gt), cartilage_palette());
  const auto dirs = fibonacci_sphere(spec.landmarks_per_bone);
  for (std::size_t b = 0; b < 3; ++b) {
    LandmarkSet set;
    set.bone = static_cast<std::uint8_t>(b + 1);
    for (const Vec3& d : dirs) set.points.push_back(bones[b].center + scale(d, bones[b].radii));
    out.landmarks.push_back(std::move(set));
  }
  return out;
}

std::vector<int> Manifest::subjects() const {
  std::set<int> ids;
  for (const auto& e : entries) ids.insert(e.subject_id);
  return {ids.begin(), ids.end()};
}

Manifest generate_dataset(const PhantomSpec& spec, int n_subjects, const std::filesystem::path& out_dir,
                          int volumes_per_subject) {
  if (n_subjects < 1) throw UsageError("need at least one subject");
  if (volumes_per_subject < 1) throw UsageError("need at least one volume per subject");
  validate_phantom_spec(spec);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());

  Manifest manifest;
  manifest.base_dir = out_dir;
  for (int s = 0; s < n_subjects; ++s) {
    for (int v = 0; v < volumes_per_subject; ++v) {
      char stem[64];
      std::snprintf(stem, sizeof stem, "s%03d_v%d", s, v);
      const Phantom p = generate_phantom(spec, s, v);
      ManifestEntry e{s, std::string(stem) + "_image.mhd", std::string(stem) + "_bones.mhd",
                      std::string(stem) + "_landmarks.csv", std::string(stem) + "_gt.mhd"};
      save_volume(p.intensity, out_dir / e.volume_path);
      save_label_volume(p.bone_mask, out_dir / e.bone_mask_path);
      save_landmarks(p.landmarks, out_dir / e.landmarks_path);
      save_label_volume(p.ground_truth, out_dir / e.gt_path);
      manifest.entries.push_back(std::move(e));
    }
  }
  save_manifest(manifest, out_dir / "manifest.csv");
  return manifest;
}

void save_manifest(const Manifest& manifest, const std::filesystem::path& path) {
  std::string out = "subject_id,volume_path,bone_mask_path,landmarks_path,gt_path\n";
  for (const auto& e : manifest.entries) {
    out += std::to_string(e.subject_id) + ',' + e.volume_path + ',' + e.bone_mask_path + ',' + e.landmarks_path + ',' +
           e.gt_path + '\n';
  }
  detail::write_file(path.string(), out);
}

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  std::string line;
  if (!std::getline(in, line) || line.rfind("subject_id,volume_path,bone_mask_path,landmarks_path,gt_path", 0) != 0) {
    throw IoError("manifest " + path.string() + " has an unexpected header");
  }
  Manifest manifest;
  manifest.base_dir = path.parent_path();
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::istringstream row(line);
    for (std::string cell; std::getline(row, cell, ',');) cells.push_back(cell);
    if (cells.size() != 5) throw IoError("manifest row needs 5 columns: " + line);
    ManifestEntry e;
    try {
      e.subject_id = std::stoi(cells[0]);
    } catch (const std::exception&) {
      throw IoError("manifest row has a non-numeric subject id: " + line);
    }
    e.volume_path = cells[1];
    e.bone_mask_path = cells[2];
    e.landmarks_path = cells[3];
    e.gt_path = cells[4];
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

}  // namespace ctxforest
