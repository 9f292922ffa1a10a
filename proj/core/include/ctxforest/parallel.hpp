#pragma once

#include <cstddef>
#include <functional>

namespace ctxforest {

/// Worker cap for parallel loops. 0 means "use hardware concurrency".
void set_num_threads(std::size_t n);
std::size_t num_threads();

/// Runs body(i) for i in [0, n) across worker threads. Each index is
/// processed exactly once; callers write to disjoint outputs so results do
/// not depend on the schedule.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace ctxforest
