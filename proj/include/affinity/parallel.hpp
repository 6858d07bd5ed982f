#pragma once

#include <cstdint>
#include <cstddef>
#include <functional>

namespace affinity {

/// Worker count: hardware concurrency, capped by the AFFINITY_THREADS
/// environment variable when it holds a positive integer.
unsigned worker_count();

/// Runs body(0..count-1) on up to worker_count() threads. Each index is
/// processed exactly once; callers write results into per-index slots so the
/// outcome does not depend on scheduling. The first exception is rethrown.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

/// Seed for replicate `index` derived from a master seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace affinity
