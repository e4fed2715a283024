// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>

namespace afd {

/// Worker count: hardware concurrency, capped by AFD_THREADS when set.
std::size_t worker_count();

/// Runs fn(i) for i in [0, n) on up to worker_count() threads. Each index is
/// processed exactly once; callers write results into slot i so the outcome
/// does not depend on scheduling. If any call throws, one of the exceptions
/// is rethrown after all workers have stopped.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace afd
