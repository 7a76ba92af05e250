#include "glfield/simd/kernels.hpp"

#include <cstdlib>
#include <string_view>

namespace glf::simd {

#if defined(GLFIELD_HAVE_AVX2)
const KernelTable& avx2_table_impl() noexcept;
#endif

const KernelTable* avx2_table() noexcept {
#if defined(GLFIELD_HAVE_AVX2)
    static const bool supported = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return supported ? &avx2_table_impl() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable& active() noexcept {
    static const KernelTable* table = [] {
        const char* env = std::getenv("GLFIELD_SIMD");
        if (env != nullptr && std::string_view(env) == "scalar") return &scalar_table();
        const KernelTable* fast = avx2_table();
        return fast != nullptr ? fast : &scalar_table();
    }();
    return *table;
}

} // namespace glf::simd
