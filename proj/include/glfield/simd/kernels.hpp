#pragma once

// Data-parallel inner loops. Each kernel has a scalar reference version and an
// AVX2/FMA version; `active()` picks one at runtime from CPUID (overridable with
// GLFIELD_SIMD=scalar). The two must agree to rounding; see test_simd.cpp.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace glf::simd {

struct KernelTable {
    std::string_view name;

    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);

    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);

    /// y[i] = x[i] + beta * y[i]
    void (*xpby)(const double* x, double beta, double* y, std::size_t n);

    /// out[i] = mask[i] * (4 mid[i] - mid[i-1] - mid[i+1] - up[i] - down[i]).
    /// Reads mid[-1] and mid[n]; callers pad rows.
    void (*stencil_row)(const double* up, const double* mid, const double* down,
                        const double* mask, double* out, std::size_t n);

    /// sum_k weights[k] * base[offsets[k]]
    double (*gather_dot)(const double* base, const std::int64_t* offsets,
                         const double* weights, std::size_t n);

    /// max_i x[i]; -inf for n == 0
    double (*max_value)(const double* x, std::size_t n);

    /// #{i : x[i] >= threshold}
    std::size_t (*count_at_least)(const double* x, std::size_t n, double threshold);

    /// out[i] = sin(x[i]) / cos(x[i]); in-place allowed.
    void (*sin_array)(const double* x, double* out, std::size_t n);
    void (*cos_array)(const double* x, double* out, std::size_t n);
};

const KernelTable& scalar_table() noexcept;

/// nullptr when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table() noexcept;

/// Table selected for this process (resolved once).
const KernelTable& active() noexcept;

// Span conveniences over the active table.
inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double max_value(std::span<const double> x) { return active().max_value(x.data(), x.size()); }
inline std::size_t count_at_least(std::span<const double> x, double threshold) {
    return active().count_at_least(x.data(), x.size(), threshold);
}

} // namespace glf::simd
