#pragma once

#include <functional>

namespace resplat {

// Global worker budget. 1 (the default) runs everything inline.
void set_thread_count(int n);
int thread_count();

// Runs fn(chunk) for chunk in [0, n_chunks), possibly concurrently.
// The chunk decomposition is fixed by the caller, so results stay identical
// for any thread count as long as callers write to per-chunk slots and
// reduce in chunk order.
void parallel_chunks(int n_chunks, const std::function<void(int)>& fn);

}  // namespace resplat
