#pragma once

// Test-only oracles and helpers. Nothing here calls into the solvers under
// test, so the frozen values they produce are independent checks.

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace glf::testing {

/// |z| threshold with family-wise two-sided level 0.0027 (the "3 sigma"
/// level) over m simultaneous comparisons (Sidak).
inline double familywise_z(std::size_t m) {
    const double alpha = 1.0 - std::pow(1.0 - 0.0026997960632601866, 1.0 / double(m));
    return boost::math::quantile(boost::math::complement(boost::math::normal(), alpha / 2.0));
}

/// Dense Gauss-Jordan inverse with partial pivoting (row-major n x n).
inline std::vector<double> dense_inverse(std::vector<double> a, std::size_t n) {
    std::vector<double> inv(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
        if (a[piv * n + col] == 0.0) throw std::runtime_error("singular");
        for (std::size_t c = 0; c < n; ++c) {
            std::swap(a[col * n + c], a[piv * n + c]);
            std::swap(inv[col * n + c], inv[piv * n + c]);
        }
        const double d = a[col * n + col];
        for (std::size_t c = 0; c < n; ++c) {
            a[col * n + c] /= d;
            inv[col * n + c] /= d;
        }
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a[r * n + col];
            if (f == 0.0) continue;
            for (std::size_t c = 0; c < n; ++c) {
                a[r * n + c] -= f * a[col * n + c];
                inv[r * n + c] -= f * inv[col * n + c];
            }
        }
    }
    return inv;
}

/// Dense Dirichlet Laplacian of the box [-N, N]^2 on its (2N-1)^2 interior,
/// row-major by (x1, x2).
inline std::vector<double> dense_box_laplacian(int n) {
    const int m = 2 * n - 1;
    const std::size_t sz = std::size_t(m) * std::size_t(m);
    std::vector<double> l(sz * sz, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            const std::size_t r = std::size_t(i * m + j);
            l[r * sz + r] = 4.0;
            const int di[4] = {1, -1, 0, 0}, dj[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; ++d) {
                const int a = i + di[d], b = j + dj[d];
                if (a < 0 || b < 0 || a >= m || b >= m) continue;
                l[r * sz + std::size_t(a * m + b)] = -1.0;
            }
        }
    return l;
}

struct Moments {
    double mean = 0.0;
    double var = 0.0;  // unbiased
    std::size_t n = 0;
};

inline Moments moments(const std::vector<double>& x) {
    Moments m;
    m.n = x.size();
    for (double v : x) m.mean += v;
    m.mean /= double(m.n);
    for (double v : x) m.var += (v - m.mean) * (v - m.mean);
    m.var /= double(m.n - 1);
    return m;
}

} // namespace glf::testing
