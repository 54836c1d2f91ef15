#include "prefiner/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <thread>
#include <vector>

namespace prefiner {

namespace {

std::atomic<std::size_t> g_threads{1};

// Below this many scalar operations a loop is not worth a thread launch.
constexpr std::size_t kMinParallelWork = std::size_t{1} << 20;

}  // namespace

void set_num_threads(std::size_t n) { g_threads.store(std::max<std::size_t>(n, 1)); }

std::size_t num_threads() { return g_threads.load(); }

void parallel_for(std::size_t count, std::size_t align, std::size_t work_per_item,
                  const std::function<void(std::size_t, std::size_t)>& body) {
  const std::size_t workers = num_threads();
  align = std::max<std::size_t>(align, 1);
  if (workers <= 1 || count <= align || count * work_per_item < kMinParallelWork) {
    if (count > 0) body(0, count);
    return;
  }
  std::size_t blocks = (count + align - 1) / align;
  std::size_t chunks = std::min(workers, blocks);
  std::size_t per = (blocks + chunks - 1) / chunks;

  std::vector<std::thread> pool;
  pool.reserve(chunks);
  for (std::size_t c = 0; c < chunks; ++c) {
    std::size_t lo = c * per * align;
    std::size_t hi = std::min(count, (c + 1) * per * align);
    if (lo >= hi) break;
    pool.emplace_back([&body, lo, hi] { body(lo, hi); });
  }
  for (auto& t : pool) t.join();
}

}  // namespace prefiner
