#pragma once

#include <cstddef>
#include <functional>

namespace pgflow {

/// Caps the worker count used by parallel_for. n <= 0 restores the default
/// (hardware concurrency).
void set_thread_cap(int n);
int thread_cap();

/// Splits [0, n) into contiguous chunks, one per worker, and runs body on
/// each. The split depends only on n and the cap. The first exception (by
/// chunk order) is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t begin, std::size_t end)>& body);

}  // namespace pgflow
