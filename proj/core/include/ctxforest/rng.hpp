#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string_view>

namespace ctxforest {

/// Seeded generator with portable derived distributions.
///
/// The engine is std::mt19937_64 (its output sequence is fixed by the
/// standard); the uniform/normal mappings are implemented here rather than
/// with <random> distributions so that streams are reproducible across
/// standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). n must be positive.
  std::size_t below(std::size_t n);
  /// Standard normal (Box-Muller, one draw per call).
  double normal();

 private:
  std::mt19937_64 engine_;
};

/// Derives an independent seed for a named sub-stream, e.g.
/// derive_seed(master, "tree", pass, tree_index).
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream, std::uint64_t a = 0,
                          std::uint64_t b = 0);

/// FNV-1a over bytes; used for config and artifact hashes.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

}  // namespace ctxforest
