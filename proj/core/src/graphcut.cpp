#include "ctxforest/graphcut.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "binary_io.hpp"
#include "ctxforest/error.hpp"
#include "ctxforest/maxflow.hpp"

namespace ctxforest {

void validate_energy_params(const EnergyParams& params) {
  if (!(params.lambda > 0.0) || !std::isfinite(params.lambda)) throw ValidationError("lambda must be positive");
  if (!(params.sigma > 0.0) || !std::isfinite(params.sigma)) throw ValidationError("sigma must be positive");
  if (!(params.p_floor > 0.0 && params.p_floor < 1.0)) throw ValidationError("p_floor must lie in (0, 1)");
}

double label_probability(const ProbMaps& probs, std::size_t linear, std::uint8_t label, double p_floor) {
  double p = 0.0;
  if (label == kBackground) {
    p = 1.0 - static_cast<double>(probs[0][linear]) - probs[1][linear] - probs[2][linear];
  } else if (label <= kPatellarCartilage) {
    p = probs[label - 1][linear];
  } else {
    throw ValidationError("label outside {bg, F, T, P}");
  }
  return std::clamp(p, p_floor, 1.0);
}

double data_term(const ProbMaps& probs, std::size_t linear, std::uint8_t label, const EnergyParams& params) {
  return -params.lambda * std::log(label_probability(probs, linear, label, params.p_floor));
}

double data_term(const ProbMaps& probs, VoxelIndex i, std::uint8_t label, const EnergyParams& params) {
  const Geometry& g = probs[0].geometry();
  if (!g.contains(i)) throw ValidationError("voxel index outside the volume");
  return data_term(probs, g.linear(i), label, params);
}

namespace {

double pair_weight(double intensity_i, double intensity_j, double distance_mm, const EnergyParams& params) {
  const double diff = intensity_i - intensity_j;
  const double exponent = diff * diff / (2.0 * params.sigma * params.sigma);
  return std::exp(params.paper_literal_smoothness ? exponent : -exponent) / distance_mm;
}

struct NeighborPair {
  std::uint32_t a;
  std::uint32_t b;
  double weight;
};

// All 6-neighbor pairs touching the band, with their contrast weights.
std::vector<NeighborPair> band_pairs(const Volume& intensity, const Band& band, const EnergyParams& params) {
  const Geometry& g = intensity.geometry();
  const std::array<double, 3> spacing = {g.spacing.x, g.spacing.y, g.spacing.z};
  const std::array<std::size_t, 3> stride = {1, static_cast<std::size_t>(g.dims.nx),
                                             static_cast<std::size_t>(g.dims.nx) * g.dims.ny};
  std::vector<NeighborPair> pairs;
  for (std::size_t v = 0; v < g.size(); ++v) {
    const VoxelIndex at = g.index(v);
    const std::array<bool, 3> has_next = {at.x + 1 < g.dims.nx, at.y + 1 < g.dims.ny, at.z + 1 < g.dims.nz};
    for (std::size_t axis = 0; axis < 3; ++axis) {
      if (!has_next[axis]) continue;
      const std::size_t w = v + stride[axis];
      if (!band.contains(v) && !band.contains(w)) continue;
      pairs.push_back({static_cast<std::uint32_t>(v), static_cast<std::uint32_t>(w),
                       pair_weight(intensity[v], intensity[w], spacing[axis], params)});
    }
  }
  return pairs;
}

double labeling_energy(std::span<const std::uint8_t> labels, const ProbMaps& probs, const Band& band,
                       std::span<const NeighborPair> pairs, const EnergyParams& params) {
  double e = 0.0;
  for (std::uint32_t v : band.voxels()) e += data_term(probs, v, labels[v], params);
  for (const auto& p : pairs) {
    if (labels[p.a] != labels[p.b]) e += p.weight;
  }
  return e;
}

void check_inputs(const ProbMaps& probs, const Volume& intensity, const Band& band, const EnergyParams& params) {
  validate_energy_params(params);
  for (const auto& p : probs) require_same_geometry(p.geometry(), intensity.geometry(), "probability map vs intensity");
  require_same_geometry(band.geometry(), intensity.geometry(), "band vs intensity");
}

}  // namespace

double smoothness_term(const Volume& intensity, VoxelIndex i, VoxelIndex j, std::uint8_t label_i, std::uint8_t label_j,
                       const EnergyParams& params) {
  const Geometry& g = intensity.geometry();
  if (!g.contains(i) || !g.contains(j)) throw ValidationError("voxel index outside the volume");
  const int dx = std::abs(i.x - j.x);
  const int dy = std::abs(i.y - j.y);
  const int dz = std::abs(i.z - j.z);
  if (dx + dy + dz != 1) throw ValidationError("smoothness term needs 6-neighbors");
  if (label_i == label_j) return 0.0;
  const double distance = dx ? g.spacing.x : dy ? g.spacing.y : g.spacing.z;
  return pair_weight(intensity.at(i), intensity.at(j), distance, params);
}

double energy_of_labeling(const LabelVolume& labels, const ProbMaps& probs, const Volume& intensity, const Band& band,
                          const EnergyParams& params) {
  check_inputs(probs, intensity, band, params);
  require_same_geometry(labels.geometry(), intensity.geometry(), "labeling vs intensity");
  return labeling_energy(labels.data(), probs, band, band_pairs(intensity, band, params), params);
}

LabelVolume argmax_labeling(const ProbMaps& probs, const Band& band) {
  const Geometry& g = probs[0].geometry();
  require_same_geometry(band.geometry(), g, "band vs probability maps");
  std::vector<std::uint8_t> labels(g.size(), kBackground);
  for (std::uint32_t v : band.voxels()) {
    std::array<double, kNumClasses> p = {
        1.0 - static_cast<double>(probs[0][v]) - probs[1][v] - probs[2][v], probs[0][v], probs[1][v], probs[2][v]};
    labels[v] = static_cast<std::uint8_t>(std::max_element(p.begin(), p.end()) - p.begin());
  }
  return LabelVolume(g, std::move(labels), cartilage_palette());
}

ExpansionResult alpha_expansion(const ProbMaps& probs, const Volume& intensity, const Band& band,
                                const LabelVolume& init, const EnergyParams& params) {
  check_inputs(probs, intensity, band, params);
  require_same_geometry(init.geometry(), intensity.geometry(), "initial labeling vs intensity");
  if (band.empty()) throw ValidationError("band of interest is empty");
  const Geometry& g = intensity.geometry();

  std::vector<std::uint8_t> labels(init.data().begin(), init.data().end());
  for (std::size_t v = 0; v < labels.size(); ++v) {
    if (labels[v] >= kNumClasses) throw ValidationError("initial labeling uses a label outside {bg, F, T, P}");
    if (!band.contains(v) && labels[v] != kBackground) {
      throw ValidationError("initial labeling must be background outside the band");
    }
  }

  const auto pairs = band_pairs(intensity, band, params);
  const auto& voxels = band.voxels();
  std::vector<std::int32_t> node_of(g.size(), -1);
  for (std::size_t k = 0; k < voxels.size(); ++k) node_of[voxels[k]] = static_cast<std::int32_t>(k);

  ExpansionResult result;
  double energy = labeling_energy(labels, probs, band, pairs, params);
  result.energy_trace.push_back(energy);

  const std::size_t m = voxels.size();
  std::vector<double> keep_cost(m);
  std::vector<double> switch_cost(m);
  std::vector<std::uint8_t> proposal(labels.size());

  constexpr int kMaxCycles = 100;
  for (int cycle = 0; cycle < kMaxCycles; ++cycle) {
    const double cycle_start = energy;
    for (std::uint8_t alpha = 0; alpha < kNumClasses; ++alpha) {
      // Binary variable per band voxel: source side keeps its label, sink
      // side switches to alpha.
      FlowNetwork net(m + 2, m, m + 1);
      double constant = 0.0;
      for (std::size_t k = 0; k < m; ++k) {
        keep_cost[k] = data_term(probs, voxels[k], labels[voxels[k]], params);
        switch_cost[k] = data_term(probs, voxels[k], alpha, params);
      }
      for (const auto& p : pairs) {
        const std::int32_t na = node_of[p.a];
        const std::int32_t nb = node_of[p.b];
        const std::uint8_t la = labels[p.a];
        const std::uint8_t lb = labels[p.b];
        auto cost = [&](std::uint8_t x, std::uint8_t y) { return x == y ? 0.0 : p.weight; };
        if (na >= 0 && nb >= 0) {
          // E(xa, xb) = A + (C - A) xa + (D - C) xb + (B + C - A - D)(1 - xa) xb
          const double A = cost(la, lb);
          const double B = cost(la, alpha);
          const double C = cost(alpha, lb);
          const double D = 0.0;
          constant += A;
          switch_cost[static_cast<std::size_t>(na)] += C - A;
          switch_cost[static_cast<std::size_t>(nb)] += D - C;
          const double coupling = B + C - A - D;
          if (coupling < -1e-12) throw std::logic_error("expansion move is not submodular");
          if (coupling > 0.0) net.add_arc(static_cast<std::size_t>(na), static_cast<std::size_t>(nb), coupling);
        } else {
          // One side is outside the band and fixed to background.
          const bool a_free = na >= 0;
          const std::size_t n = static_cast<std::size_t>(a_free ? na : nb);
          const std::uint8_t own = a_free ? la : lb;
          keep_cost[n] += cost(own, kBackground);
          switch_cost[n] += cost(alpha, kBackground);
        }
      }
      for (std::size_t k = 0; k < m; ++k) {
        if (switch_cost[k] > keep_cost[k]) {
          constant += keep_cost[k];
          net.add_arc(m, k, switch_cost[k] - keep_cost[k]);
        } else {
          constant += switch_cost[k];
          net.add_arc(k, m + 1, keep_cost[k] - switch_cost[k]);
        }
      }

      const MaxFlowResult cut = max_flow(net);
      std::copy(labels.begin(), labels.end(), proposal.begin());
      for (std::size_t k = 0; k < m; ++k) {
        if (!cut.source_side[k]) proposal[voxels[k]] = alpha;
      }
      const double proposed = labeling_energy(proposal, probs, band, pairs, params);
      const double tolerance = 1e-7 * (1.0 + std::abs(proposed));
      if (std::abs(constant + cut.flow - proposed) > tolerance) {
        throw std::logic_error("expansion cut value disagrees with the labeling energy");
      }
      if (proposed < energy - 1e-9 * (1.0 + std::abs(energy))) {
        labels.swap(proposal);
        energy = proposed;
      }
      if (energy > result.energy_trace.back()) throw std::logic_error("alpha-expansion increased the energy");
      result.energy_trace.push_back(energy);
      result.move_labels.push_back(alpha);
    }
    result.cycle_energies.push_back(energy);
    if (!(energy < cycle_start)) break;
  }
  result.labels = LabelVolume(g, std::move(labels), cartilage_palette());
  return result;
}

void write_energy_log(const ExpansionResult& result, const std::filesystem::path& path) {
  static constexpr const char* kNames[] = {"background", "femoral_cartilage", "tibial_cartilage", "patellar_cartilage"};
  std::string out = "# alpha-expansion energy trace\n";
  char line[128];
  std::snprintf(line, sizeof line, "initial energy=%.17g\n", result.energy_trace.front());
  out += line;
  const std::size_t per_cycle = kNumClasses;
  for (std::size_t k = 0; k < result.move_labels.size(); ++k) {
    std::snprintf(line, sizeof line, "cycle %zu move %zu alpha=%s energy=%.17g\n", k / per_cycle + 1, k + 1,
                  kNames[result.move_labels[k]], result.energy_trace[k + 1]);
    out += line;
  }
  for (std::size_t c = 0; c < result.cycle_energies.size(); ++c) {
    std::snprintf(line, sizeof line, "cycle %zu end energy=%.17g\n", c + 1, result.cycle_energies[c]);
    out += line;
  }
  detail::write_file(path.string(), out);
}

}  // namespace ctxforest
