#pragma once

#include <cstddef>
#include <functional>

namespace coxht {

/// Calls task(i) for i in [0, count) on up to `workers` threads. Tasks are
/// claimed from a shared counter; each must write only its own slot. The
/// first exception thrown by a task is rethrown after all threads join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& task);

/// Hardware concurrency, at least 1.
int default_workers();

}  // namespace coxht
