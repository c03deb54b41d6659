#pragma once

namespace kpshift {

// KPSHIFT_THREADS in the environment overrides the requested count.
// Returns the count actually applied.
int apply_thread_count(int requested);

}  // namespace kpshift
