#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ctxforest/distance.hpp"
#include "ctxforest/features.hpp"
#include "ctxforest/volume.hpp"

namespace ctxforest {

struct EnergyParams {
  double lambda = 1.5;
  double sigma = 30.0;
  double p_floor = 1e-6;
  /// Use exp(+dI^2 / 2 sigma^2) instead of the contrast-sensitive exp(-...).
  bool paper_literal_smoothness = false;

  friend bool operator==(const EnergyParams&, const EnergyParams&) = default;
};

void validate_energy_params(const EnergyParams& params);

/// P_label(x) with P_bg = 1 - P_F - P_T - P_P, floored at p_floor and capped at 1.
double label_probability(const ProbMaps& probs, std::size_t linear, std::uint8_t label, double p_floor);

/// -lambda * ln(max(P_label(x), p_floor))
double data_term(const ProbMaps& probs, std::size_t linear, std::uint8_t label, const EnergyParams& params);
double data_term(const ProbMaps& probs, VoxelIndex i, std::uint8_t label, const EnergyParams& params);

/// 0 for equal labels; otherwise exp(-(I(i)-I(j))^2 / 2 sigma^2) divided by
/// the center distance of the pair in mm. i and j must be 6-neighbors.
double smoothness_term(const Volume& intensity, VoxelIndex i, VoxelIndex j, std::uint8_t label_i,
                       std::uint8_t label_j, const EnergyParams& params);

/// Data terms over band voxels plus smoothness over 6-neighbor pairs with
/// at least one band voxel.
double energy_of_labeling(const LabelVolume& labels, const ProbMaps& probs, const Volume& intensity,
                          const Band& band, const EnergyParams& params);

/// Per-voxel argmax over {bg, F, T, P} inside the band, background outside.
LabelVolume argmax_labeling(const ProbMaps& probs, const Band& band);

struct ExpansionResult {
  LabelVolume labels;
  /// Energy of the initial labeling followed by the energy after every
  /// expansion move.
  std::vector<double> energy_trace;
  /// Expansion label of each move (energy_trace[k + 1] follows move k).
  std::vector<std::uint8_t> move_labels;
  /// Energy at the end of each full label cycle.
  std::vector<double> cycle_energies;
};

/// Alpha-expansion over labels (bg, F, T, P) until a full cycle gives no
/// decrease. Throws std::logic_error if a move ever increases the energy.
ExpansionResult alpha_expansion(const ProbMaps& probs, const Volume& intensity, const Band& band,
                                const LabelVolume& init, const EnergyParams& params);

void write_energy_log(const ExpansionResult& result, const std::filesystem::path& path);

}  // namespace ctxforest
