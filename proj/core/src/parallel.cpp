#include "iclab/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <string>
#include <thread>
#include <vector>

namespace iclab {

int default_workers() {
  const char* env = std::getenv("ICLAB_WORKERS");
  if (env == nullptr) return 1;
  try {
    const int k = std::stoi(env);
    return k > 0 ? k : 1;
  } catch (const std::exception&) {
    return 1;
  }
}

void parallel_blocks(std::size_t count, std::size_t block_size, int workers,
                     const std::function<void(std::size_t, std::size_t, std::size_t)>& fn) {
  if (count == 0) return;
  if (block_size == 0) block_size = 1;
  const std::size_t blocks = block_count(count, block_size);
  const auto run_block = [&](std::size_t b) {
    const std::size_t begin = b * block_size;
    fn(b, begin, std::min(count, begin + block_size));
  };

  const std::size_t threads =
      std::min<std::size_t>(blocks, static_cast<std::size_t>(std::max(1, workers)));
  if (threads <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) run_block(b);
    return;
  }

  std::vector<std::exception_ptr> errors(blocks);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};
  const auto worker = [&] {
    for (;;) {
      if (stop.load(std::memory_order_relaxed)) return;
      const std::size_t b = next.fetch_add(1);
      if (b >= blocks) return;
      try {
        run_block(b);
      } catch (...) {
        errors[b] = std::current_exception();
        stop.store(true);
      }
    }
  };

  std::vector<std::thread> pool;
  pool.reserve(threads - 1);
  for (std::size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace iclab
