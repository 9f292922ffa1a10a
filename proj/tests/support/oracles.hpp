#pragma once

// Slow, obviously-correct reference implementations used by the tests.

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "ctxforest/distance.hpp"
#include "ctxforest/features.hpp"
#include "ctxforest/graphcut.hpp"
#include "ctxforest/maxflow.hpp"
#include "ctxforest/rng.hpp"
#include "ctxforest/volume.hpp"

namespace oracle {

using namespace ctxforest;

// Distance from every voxel center to the nearest voxel center of the other
// class, negative inside the target. O(n^2).
std::vector<double> brute_signed_distance(const LabelVolume& mask, std::uint8_t target);

LabelVolume random_mask(Rng& rng, Dims dims, Vec3 spacing, double fill);

std::vector<double> finite_difference_gradient(const Volume& v);

struct ArcSpec {
  std::size_t from;
  std::size_t to;
  double capacity;
  double reverse_capacity;
};

struct NetworkSpec {
  std::size_t nodes = 0;  // 0 = source, 1 = sink, rest interior
  std::vector<ArcSpec> arcs;
};

NetworkSpec random_network(Rng& rng, std::size_t interior, double density, int max_capacity);
FlowNetwork build(const NetworkSpec& spec);
// Enumerates every source-side subset of interior nodes.
double exhaustive_min_cut(const NetworkSpec& spec);

// Same energy as the library, assembled term by term with explicit loops
// over voxels and the three positive axis neighbors.
double energy(const std::vector<std::uint8_t>& labels, const ProbMaps& probs, const Volume& intensity,
              const Band& band, const EnergyParams& params);

struct Exhaustive {
  double energy;
  std::vector<std::uint8_t> labels;
};
// Minimum over all labelings of band voxels using labels {0..num_labels-1};
// non-band voxels stay background.
Exhaustive exhaustive_minimum(const ProbMaps& probs, const Volume& intensity, const Band& band,
                              const EnergyParams& params, int num_labels);

struct NaiveInputs {
  const Volume* intensity;
  const Volume* gradmag;
  std::array<const Volume*, 3> distance;
  std::array<const LandmarkSet*, 3> landmarks;
  std::optional<ProbMaps> probs;
};

double naive_feature(const FeatureDescriptor& f, VoxelIndex i, const NaiveInputs& in);

}  // namespace oracle
