#pragma once

namespace cctsne {

/// Worker threads used by the data-parallel loops.
int thread_count();

/// Cap internal parallelism; values < 1 restore the runtime default.
void set_thread_cap(int threads);

/// Apply CCTSNE_THREADS from the environment, if set.
void apply_env_thread_cap();

}  // namespace cctsne
