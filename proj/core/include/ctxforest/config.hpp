#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "ctxforest/cascade.hpp"
#include "ctxforest/graphcut.hpp"

namespace ctxforest {

/// Every tunable of a run. Serialized as a flat JSON object whose keys are
/// listed by config_keys(); unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 7;
  CascadeConfig cascade;
  EnergyParams energy;
  /// Apply graph-cut refinement after cascade inference.
  bool refine = true;
  std::size_t threads = 0;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

const std::vector<std::string>& config_keys();

/// Throws UsageError for an unknown key and ValidationError for a bad value.
void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value);
RunConfig config_from_json(std::string_view json_text);
RunConfig load_config(const std::string& path);
/// Pretty-printed, keys in stable order.
std::string config_to_json(const RunConfig& cfg);
void validate_config(const RunConfig& cfg);
/// Hash of the canonical JSON, excluding `threads` (results do not depend on it).
std::uint64_t config_hash(const RunConfig& cfg);

}  // namespace ctxforest
