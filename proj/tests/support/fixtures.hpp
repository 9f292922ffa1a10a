#pragma once

#include "ctxforest/phantom.hpp"

namespace fixture {

// Jitter-free phantom layout that fits small grids.
inline ctxforest::PhantomSpec small_spec(int n, std::uint64_t seed = 1, std::size_t landmarks = 30) {
  auto spec = ctxforest::default_phantom_spec({n, n, n}, {1, 1, 1}, seed);
  spec.center_jitter_mm = 0.0;
  spec.radius_jitter_mm = 0.0;
  spec.visit_jitter_mm = 0.0;
  spec.landmarks_per_bone = landmarks;
  return spec;
}

}  // namespace fixture
