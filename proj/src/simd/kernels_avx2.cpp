// Compiled with -mavx2 -mfma; only reached after a CPUID check.
#include "glfield/simd/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <limits>

namespace glf::simd {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    if (i + 4 <= n) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        i += 4;
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(double alpha, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(alpha);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void xpby_avx2(const double* x, double beta, double* y, std::size_t n) {
    const __m256d vb = _mm256_set1_pd(beta);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(vb, _mm256_loadu_pd(y + i), _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) y[i] = x[i] + beta * y[i];
}

void stencil_row_avx2(const double* up, const double* mid, const double* down, const double* mask,
                      double* out, std::size_t n) {
    const __m256d four = _mm256_set1_pd(4.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d lr = _mm256_add_pd(_mm256_loadu_pd(mid + i - 1), _mm256_loadu_pd(mid + i + 1));
        const __m256d ud = _mm256_add_pd(_mm256_loadu_pd(up + i), _mm256_loadu_pd(down + i));
        const __m256d nb = _mm256_add_pd(lr, ud);
        const __m256d c = _mm256_mul_pd(four, _mm256_loadu_pd(mid + i));
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(mask + i), _mm256_sub_pd(c, nb)));
    }
    for (; i < n; ++i) {
        const double nb = (mid[i - 1] + mid[i + 1]) + (up[i] + down[i]);
        out[i] = mask[i] * (4.0 * mid[i] - nb);
    }
}

double gather_dot_avx2(const double* base, const std::int64_t* offsets, const double* weights,
                       std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        const __m256i idx = _mm256_loadu_si256(reinterpret_cast<const __m256i*>(offsets + k));
        const __m256d v = _mm256_i64gather_pd(base, idx, 8);
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(weights + k), v, acc);
    }
    double s = hsum(acc);
    for (; k < n; ++k) s += weights[k] * base[offsets[k]];
    return s;
}

double max_value_avx2(const double* x, std::size_t n) {
    double m = -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    if (n >= 4) {
        __m256d vm = _mm256_set1_pd(m);
        for (; i + 4 <= n; i += 4) vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        alignas(32) double lanes[4];
        _mm256_store_pd(lanes, vm);
        for (double l : lanes) m = l > m ? l : m;
    }
    for (; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

std::size_t count_at_least_avx2(const double* x, std::size_t n, double threshold) {
    const __m256d t = _mm256_set1_pd(threshold);
    std::size_t c = 0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d ge = _mm256_cmp_pd(_mm256_loadu_pd(x + i), t, _CMP_GE_OQ);
        c += static_cast<std::size_t>(__builtin_popcount(_mm256_movemask_pd(ge)));
    }
    for (; i < n; ++i) c += x[i] >= threshold ? 1 : 0;
    return c;
}

// sin/cos by reduction to r in [-pi/4, pi/4] with a three-part pi/2
// (exact products for |x| below ~1e6) and the classic minimax polynomials.
// Lanes with larger magnitude fall back to libm.
constexpr double kPio2Hi = 1.57079625129699707031e+00;
constexpr double kPio2Mid = 7.54978941586159635336e-08;
constexpr double kPio2Lo = 5.39030285815811905290e-15;
constexpr double kReduceLimit = 1e6;

inline __m256d poly_sin(__m256d r, __m256d z) {
    __m256d p = _mm256_set1_pd(1.58962301576546568060e-10);
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(-2.50507477628578072866e-8));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(2.75573136213857245213e-6));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(-1.98412698295895385996e-4));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(8.33333333332211858878e-3));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(-1.66666666666666307295e-1));
    return _mm256_fmadd_pd(_mm256_mul_pd(r, z), p, r);
}

inline __m256d poly_cos(__m256d z) {
    __m256d p = _mm256_set1_pd(-1.13585365213876817300e-11);
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(2.08757008419747316778e-9));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(-2.75573141792967388112e-7));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(2.48015872888517045348e-5));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(-1.38888888888730564116e-3));
    p = _mm256_fmadd_pd(p, z, _mm256_set1_pd(4.16666666666665929218e-2));
    const __m256d zz = _mm256_mul_pd(z, z);
    return _mm256_fmadd_pd(zz, p, _mm256_fnmadd_pd(_mm256_set1_pd(0.5), z, _mm256_set1_pd(1.0)));
}

// Quadrant shift: 0 for sin, 1 for cos (cos x = sin(x + pi/2)).
template <int Shift>
void sincos_array_avx2(const double* x, double* out, std::size_t n) {
    const __m256d limit = _mm256_set1_pd(kReduceLimit);
    const __m256d abs_mask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7FFFFFFFFFFFFFFFLL));
    const __m256d two_over_pi = _mm256_set1_pd(0.63661977236758134308);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d big = _mm256_cmp_pd(_mm256_and_pd(v, abs_mask), limit, _CMP_GT_OQ);
        const __m256d q = _mm256_round_pd(_mm256_mul_pd(v, two_over_pi), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
        __m256d r = _mm256_fnmadd_pd(q, _mm256_set1_pd(kPio2Hi), v);
        r = _mm256_fnmadd_pd(q, _mm256_set1_pd(kPio2Mid), r);
        r = _mm256_fnmadd_pd(q, _mm256_set1_pd(kPio2Lo), r);
        const __m256d z = _mm256_mul_pd(r, r);
        const __m256d s = poly_sin(r, z), c = poly_cos(z);

        // quadrant k = (q + Shift) mod 4: 0 -> s, 1 -> c, 2 -> -s, 3 -> -c
        const __m128i qi = _mm256_cvtpd_epi32(q);
        const __m256i k = _mm256_cvtepi32_epi64(_mm_add_epi32(qi, _mm_set1_epi32(Shift)));
        const __m256i one = _mm256_set1_epi64x(1), two = _mm256_set1_epi64x(2);
        const __m256d use_cos = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(k, one), one));
        const __m256d negate = _mm256_castsi256_pd(_mm256_cmpeq_epi64(_mm256_and_si256(k, two), two));
        __m256d res = _mm256_blendv_pd(s, c, use_cos);
        res = _mm256_xor_pd(res, _mm256_and_pd(negate, _mm256_set1_pd(-0.0)));
        _mm256_storeu_pd(out + i, res);
        if (_mm256_movemask_pd(big) != 0) {
            for (std::size_t j = i; j < i + 4; ++j)
                if (std::abs(x[j]) > kReduceLimit || !std::isfinite(x[j])) out[j] = Shift == 0 ? std::sin(x[j]) : std::cos(x[j]);
        }
    }
    for (; i < n; ++i) out[i] = Shift == 0 ? std::sin(x[i]) : std::cos(x[i]);
}

void sin_array_avx2(const double* x, double* out, std::size_t n) { sincos_array_avx2<0>(x, out, n); }
void cos_array_avx2(const double* x, double* out, std::size_t n) { sincos_array_avx2<1>(x, out, n); }

} // namespace

const KernelTable& avx2_table_impl() noexcept {
    static const KernelTable table{
        "avx2",         dot_avx2,         axpy_avx2,      xpby_avx2,
        stencil_row_avx2, gather_dot_avx2, max_value_avx2, count_at_least_avx2,
        sin_array_avx2,   cos_array_avx2,
    };
    return table;
}

} // namespace glf::simd
