#pragma once

#include <cstdint>
#include <functional>

namespace tvase {

// Worker count: min(hardware_concurrency, TVASE_THREADS) when the env var is
// set, at least 1.
int worker_count();

// Runs fn(i) for i in [0, n) on a small worker pool. Work items must be
// independent; results must not depend on scheduling order. Exceptions are
// collected and the first one rethrown after the pool drains.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

} // namespace tvase
