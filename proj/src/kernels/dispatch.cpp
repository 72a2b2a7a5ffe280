#include <atomic>
#include <cstdlib>
#include <string_view>

#include "cctsne/kernels.hpp"

namespace cctsne::kernels {

#if defined(CCTSNE_HAVE_AVX2)
const KernelTable& avx2_table_unchecked();
#endif

const KernelTable* avx2_table() {
#if defined(CCTSNE_HAVE_AVX2)
    static const bool supported = [] {
        __builtin_cpu_init();
        return __builtin_cpu_supports("avx2") != 0;
    }();
    return supported ? &avx2_table_unchecked() : nullptr;
#else
    return nullptr;
#endif
}

namespace {

const KernelTable* pick_default() {
    const char* env = std::getenv("CCTSNE_SIMD");
    if (env != nullptr && std::string_view(env) == "scalar") {
        return &scalar_table();
    }
    if (const KernelTable* simd = avx2_table()) {
        return simd;
    }
    return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{pick_default()};
    return current;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(const KernelTable& table) { slot().store(&table, std::memory_order_release); }

}  // namespace cctsne::kernels
