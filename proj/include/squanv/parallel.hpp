#pragma once

#include <cstddef>
#include <functional>

namespace squanv {

/// Number of worker threads used by parallel_for. Reads SQUANV_THREADS on
/// every call (0 or unset = hardware concurrency).
int worker_count();

/// Runs body(i) for i in [0, n). Iterations must write disjoint outputs;
/// callers reduce afterwards in index order so results do not depend on the
/// worker count. The first exception thrown by any iteration is rethrown.
/// Nested calls from inside a worker run serially.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace squanv
