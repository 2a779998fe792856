#pragma once

#include <cstdint>
#include <functional>

namespace aesfa {

// Worker count used by parallel_for: min(hardware, AESFA_THREADS, explicit cap).
int worker_threads();

// Overrides the worker count for this process (0 restores the default).
void set_thread_cap(int cap);

// Runs body(begin, end) over a partition of [0, n). Bodies must write
// disjoint outputs; chunk boundaries are deterministic but execution
// order is not, so reductions belong outside.
void parallel_for(int64_t n, const std::function<void(int64_t, int64_t)>& body);

}  // namespace aesfa
