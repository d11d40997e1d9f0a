#pragma once

#include <cstddef>
#include <functional>

namespace fbgrpo {

// Worker count from FBGRPO_THREADS, else the hardware concurrency (at least 1).
std::size_t worker_count();

// Runs fn(i) for i in [0, n) across worker_count() threads. Work is handed out by
// index, so results written by index do not depend on scheduling. The exception
// thrown for the lowest index is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace fbgrpo
