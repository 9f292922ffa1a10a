#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ctxforest/error.hpp"
#include "ctxforest/volume.hpp"
#include "oracles.hpp"

using namespace ctxforest;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ctxforest_unit" / "volume";
  fs::create_directories(dir);
  return dir / name;
}

Volume random_volume(Rng& rng, Dims dims, Vec3 spacing) {
  std::vector<float> data(dims.count());
  for (auto& v : data) v = static_cast<float>(rng.uniform(-50.0, 50.0));
  return Volume({dims, spacing, {}}, data);
}

}  // namespace

TEST(VolumeIo, ZerosRoundTrip) {
  const Volume v({{2, 2, 2}, {1, 1, 1}, {}}, 0.0f);
  save_volume(v, scratch("zeros.mhd"));
  EXPECT_EQ(load_volume(scratch("zeros.mhd")), v);
}

TEST(VolumeIo, AnisotropicSpacingSurvivesExactly) {
  Rng rng(3);
  const Geometry g{{5, 4, 3}, {0.365, 0.365, 0.7}, {-12.5, 3.25, 100.125}};
  std::vector<float> data(g.size());
  for (auto& x : data) x = static_cast<float>(rng.uniform(-1e3, 1e3));
  const Volume v(g, data);
  save_volume(v, scratch("aniso.mhd"));
  const Volume back = load_volume(scratch("aniso.mhd"));
  EXPECT_EQ(back.geometry(), g);
  EXPECT_EQ(back, v);
}

TEST(VolumeIo, LabelVolumeRoundTripKeepsPalette) {
  std::vector<std::uint8_t> labels = {0, 1, 2, 3, 3, 2, 1, 0};
  const LabelVolume l({{2, 2, 2}, {0.5, 1, 2}, {}}, labels, cartilage_palette());
  save_label_volume(l, scratch("labels.mhd"));
  const LabelVolume back = load_label_volume(scratch("labels.mhd"));
  EXPECT_EQ(back, l);
  EXPECT_EQ(back.palette().at(2), "tibial_cartilage");
}

TEST(VolumeIo, ShortPayloadIsRejected) {
  const Volume v({{3, 3, 3}, {1, 1, 1}, {}}, 1.0f);
  const fs::path header = scratch("short.mhd");
  save_volume(v, header);
  fs::resize_file(scratch("short.raw"), 26 * sizeof(float));
  try {
    load_volume(header);
    FAIL() << "expected an error";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("data length mismatch"), std::string::npos);
  }
}

TEST(VolumeIo, MalformedHeaderAndWrongTypeAreIoErrors) {
  {
    std::ofstream(scratch("bad.mhd")) << "NDims = 3\nDimSize = 2 2\n";
  }
  EXPECT_THROW(load_volume(scratch("bad.mhd")), IoError);
  const LabelVolume l({{2, 1, 1}, {1, 1, 1}, {}}, {0, 1}, bone_palette());
  save_label_volume(l, scratch("lab.mhd"));
  EXPECT_THROW(load_volume(scratch("lab.mhd")), IoError);
  EXPECT_THROW(load_volume(scratch("missing.mhd")), IoError);
}

TEST(Volume, RejectsNonFiniteAndWrongLength) {
  const Geometry g{{2, 1, 1}, {1, 1, 1}, {}};
  EXPECT_THROW(Volume(g, std::vector<float>{1.0f, NAN}), ValidationError);
  EXPECT_THROW(Volume(g, std::vector<float>{1.0f}), ValidationError);
  EXPECT_THROW(Volume({{0, 1, 1}, {1, 1, 1}, {}}, 0.0f), ValidationError);
  EXPECT_THROW(Volume({{1, 1, 1}, {0, 1, 1}, {}}, 0.0f), ValidationError);
}

TEST(LabelVolume, RejectsLabelsOutsidePalette) {
  EXPECT_THROW(LabelVolume({{2, 1, 1}, {1, 1, 1}, {}}, {0, 4}, cartilage_palette()), ValidationError);
}

TEST(Geometry, MismatchMessageNamesTheProblem) {
  try {
    require_same_geometry({{2, 2, 2}, {1, 1, 1}, {}}, {{2, 2, 3}, {1, 1, 1}, {}}, "mask");
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("geometry mismatch", 0), 0u);
  }
}

TEST(VoxelWorld, Examples) {
  const Geometry unit{{8, 8, 8}, {1, 1, 1}, {}};
  EXPECT_EQ(voxel_to_world(unit, {2, 3, 4}), (Vec3{2, 3, 4}));
  const Geometry aniso{{8, 8, 8}, {0.5, 1, 2}, {}};
  EXPECT_EQ(voxel_to_world(aniso, {2, 2, 2}), (Vec3{1, 2, 4}));
}

TEST(VoxelWorld, MutuallyInverseOnEveryIndex) {
  const Geometry g{{4, 4, 4}, {0.3, 0.7, 1.9}, {-2, 5, 0.25}};
  for (std::size_t i = 0; i < g.size(); ++i) {
    const VoxelIndex idx = g.index(i);
    const VoxelLookup back = world_to_voxel(g, voxel_to_world(g, idx));
    EXPECT_EQ(back.index, idx);
    EXPECT_FALSE(back.clamped);
  }
  const VoxelLookup out = world_to_voxel(g, {-100, 0, 1000});
  EXPECT_TRUE(out.clamped);
  EXPECT_TRUE(g.contains(out.index));
}

TEST(Gradient, ConstantIsZero) {
  const Volume v({{4, 5, 6}, {0.5, 1, 2}, {}}, 7.0f);
  const Volume gm = gradient_magnitude(v);
  for (float x : gm.data()) EXPECT_EQ(x, 0.0f);
}

TEST(Gradient, LinearRampIsExactEverywhere) {
  const Geometry g{{6, 4, 3}, {1, 1, 1}, {}};
  std::vector<float> data(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) data[i] = static_cast<float>(2.0 * g.index(i).x * g.spacing.x);
  const Volume grad = gradient_magnitude(Volume(g, data));
  for (float x : grad.data()) EXPECT_NEAR(x, 2.0, 1e-6);
}

TEST(Gradient, MatchesFiniteDifferenceOracle) {
  Rng rng(11);
  for (const Vec3 spacing : {Vec3{1, 1, 1}, Vec3{0.365, 0.365, 0.7}, Vec3{2, 0.5, 1.5}}) {
    const Volume v = random_volume(rng, {5, 5, 5}, spacing);
    const Volume grad = gradient_magnitude(v);
    const auto expected = oracle::finite_difference_gradient(v);
    for (std::size_t i = 0; i < v.size(); ++i) {
      EXPECT_NEAR(grad[i], expected[i], 1e-6 * std::max(1.0, expected[i]));
      EXPECT_GE(grad[i], 0.0f);
      EXPECT_TRUE(std::isfinite(grad[i]));
    }
  }
}

TEST(Gradient, NeedsTwoVoxelsPerAxis) {
  EXPECT_THROW(gradient_magnitude(Volume({{3, 1, 3}, {1, 1, 1}, {}}, 0.0f)), ValidationError);
}
