#pragma once

namespace mcen {

/// Caps the number of worker threads used by the library. Values < 1 restore
/// the default (available hardware parallelism).
void set_thread_budget(int threads);
int thread_budget();

}  // namespace mcen
