#pragma once

#include <cstddef>
#include <functional>

namespace lgdf {

/// Worker count used by parallel_chunks. Defaults to the hardware
/// concurrency; 0 restores the default.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Splits [0, n) into fixed chunks of `chunk` items and runs
/// body(begin, end) for each, spread over the configured workers.
///
/// Chunk boundaries depend only on n and chunk, never on the worker count,
/// so a body that writes only to its own index range yields identical
/// results for any thread count.
void parallel_chunks(std::size_t n, std::size_t chunk,
                     const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace lgdf
