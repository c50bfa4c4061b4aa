#pragma once

#include <cstddef>
#include <functional>

namespace iclab {

/// Worker count from ICLAB_WORKERS, or 1 when unset or invalid.
int default_workers();

/// Splits [0, count) into consecutive blocks of `block_size` and calls
/// fn(block, begin, end) for each, possibly from several threads.
///
/// Block boundaries depend only on count and block_size. Callers that keep
/// one partial result per block and merge them in block order get output
/// that does not depend on `workers`. The first exception (by block index)
/// is rethrown on the calling thread.
void parallel_blocks(std::size_t count, std::size_t block_size, int workers,
                     const std::function<void(std::size_t block, std::size_t begin,
                                              std::size_t end)>& fn);

inline std::size_t block_count(std::size_t count, std::size_t block_size) {
  return (count + block_size - 1) / block_size;
}

}  // namespace iclab
