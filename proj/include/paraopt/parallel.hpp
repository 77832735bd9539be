#pragma once

#include <functional>

namespace paraopt {

/// Caps the number of worker threads used by parallel_for. 0 restores the
/// automatic choice (PARAOPT_THREADS environment variable, then hardware
/// concurrency). Thread count affects speed only; results are index-ordered
/// and bitwise independent of it.
void set_max_workers(int n);
int max_workers();

/// Runs fn(i) for i in [0, n). Tasks must be independent and write disjoint
/// state. Every index is attempted even when some fail; the lowest-index
/// exception is rethrown after all workers join, so failures are reported
/// deterministically regardless of the worker count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace paraopt
