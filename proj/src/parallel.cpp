#include "cctsne/parallel.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace cctsne {

namespace {
const int kDefaultThreads = omp_get_max_threads();
}

int thread_count() { return omp_get_max_threads(); }

void set_thread_cap(int threads) {
    omp_set_num_threads(threads < 1 ? kDefaultThreads : threads);
}

void apply_env_thread_cap() {
    const char* env = std::getenv("CCTSNE_THREADS");
    if (env == nullptr || *env == '\0') {
        return;
    }
    try {
        int cap = std::stoi(env);
        if (cap > 0) {
            set_thread_cap(cap < kDefaultThreads ? cap : kDefaultThreads);
        }
    } catch (const std::exception&) {
        // unparsable values are ignored
    }
}

}  // namespace cctsne
