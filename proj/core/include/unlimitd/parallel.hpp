#pragma once

#include <cstddef>
#include <functional>

namespace unlimitd {

/// Worker count used by parallel_for. 0 means "machine parallelism".
void set_thread_count(std::size_t n);
std::size_t thread_count();

/// Runs body(i) for i in [0, n). Bodies must write only to slot i of their
/// outputs; callers reduce afterwards in index order so results do not depend
/// on scheduling.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace unlimitd
