#include "glfield/simd/kernels.hpp"

#include <cmath>
#include <limits>

namespace glf::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void xpby_scalar(const double* x, double beta, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + beta * y[i];
}

void stencil_row_scalar(const double* up, const double* mid, const double* down,
                        const double* mask, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        const double nb = (mid[i - 1] + mid[i + 1]) + (up[i] + down[i]);
        out[i] = mask[i] * (4.0 * mid[i] - nb);
    }
}

double gather_dot_scalar(const double* base, const std::int64_t* offsets, const double* weights,
                         std::size_t n) {
    double s = 0.0;
    for (std::size_t k = 0; k < n; ++k) s += weights[k] * base[offsets[k]];
    return s;
}

double max_value_scalar(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

std::size_t count_at_least_scalar(const double* x, std::size_t n, double threshold) {
    std::size_t c = 0;
    for (std::size_t i = 0; i < n; ++i) c += x[i] >= threshold ? 1 : 0;
    return c;
}

void sin_array_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(x[i]);
}

void cos_array_scalar(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::cos(x[i]);
}

} // namespace

const KernelTable& scalar_table() noexcept {
    static const KernelTable table{
        "scalar",         dot_scalar,         axpy_scalar,          xpby_scalar,
        stencil_row_scalar, gather_dot_scalar, max_value_scalar, count_at_least_scalar,
        sin_array_scalar, cos_array_scalar,
    };
    return table;
}

} // namespace glf::simd
