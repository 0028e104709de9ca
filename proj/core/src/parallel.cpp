#include "unlimitd/parallel.hpp"

#include <tbb/global_control.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <atomic>
#include <memory>
#include <mutex>

namespace unlimitd {
namespace {

std::atomic<std::size_t> g_threads{0};
std::mutex g_control_mutex;
std::unique_ptr<tbb::global_control> g_control;

}  // namespace

void set_thread_count(std::size_t n) {
  std::lock_guard lock(g_control_mutex);
  g_threads = n;
  g_control.reset();
  if (n > 0) {
    g_control = std::make_unique<tbb::global_control>(
        tbb::global_control::max_allowed_parallelism, n);
  }
}

std::size_t thread_count() {
  const std::size_t n = g_threads;
  return n > 0 ? n : static_cast<std::size_t>(tbb::this_task_arena::max_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
  if (n == 0) return;
  if (n == 1 || thread_count() == 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  tbb::parallel_for(std::size_t{0}, n, body);
}

}  // namespace unlimitd
