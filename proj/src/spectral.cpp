#include "glfield/spectral.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <numbers>

#include "glfield/errors.hpp"

namespace glf {

namespace {
// FFTW's planner is not thread-safe; execution is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}
} // namespace

void AlignedBuffer::Free::operator()(double* p) const noexcept { fftw_free(p); }

AlignedBuffer::AlignedBuffer(std::size_t n)
    : data_(static_cast<double*>(fftw_malloc(sizeof(double) * std::max<std::size_t>(n, 1)))), size_(n) {
    if (!data_) fail(ErrorKind::size, "aligned allocation failed");
    std::fill(data(), data() + n, 0.0);
}

AlignedBuffer::AlignedBuffer(const AlignedBuffer& other) : AlignedBuffer(other.size_) {
    std::copy(other.data(), other.data() + size_, data());
}

AlignedBuffer& AlignedBuffer::operator=(const AlignedBuffer& other) {
    if (this != &other) {
        AlignedBuffer tmp(other);
        *this = std::move(tmp);
    }
    return *this;
}

SpectralBox::SpectralBox(LatticeDomain domain)
    : domain_(domain), m_(std::size_t(2 * domain.half_width() - 1)) {
    const double mp1 = double(m_ + 1);
    std::vector<double> lam1(m_);
    for (std::size_t j = 0; j < m_; ++j) {
        const double s = std::sin(std::numbers::pi * double(j + 1) / (2.0 * mp1));
        lam1[j] = 4.0 * s * s;
    }
    eig_.resize(m_ * m_);
    inv_sqrt_eig_.resize(m_ * m_);
    for (std::size_t j = 0; j < m_; ++j)
        for (std::size_t k = 0; k < m_; ++k) {
            eig_[j * m_ + k] = lam1[j] + lam1[k];
            inv_sqrt_eig_[j * m_ + k] = 1.0 / std::sqrt(lam1[j] + lam1[k]);
        }
    // RODFT00 applied along both axes scales by 2(m+1) per axis round trip;
    // sqrt of that per application makes it orthonormal.
    norm_ = 1.0 / (2.0 * mp1);

    AlignedBuffer tmp(m_ * m_);
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_r2r_2d(int(m_), int(m_), tmp.data(), tmp.data(), FFTW_RODFT00, FFTW_RODFT00,
                             FFTW_ESTIMATE);
    if (plan_ == nullptr) fail(ErrorKind::solver, "FFTW could not plan the sine transform");
}

SpectralBox::~SpectralBox() {
    if (plan_ != nullptr) {
        std::lock_guard lock(planner_mutex());
        fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    }
}

void SpectralBox::transform(AlignedBuffer& data) const {
    if (data.size() != m_ * m_) fail(ErrorKind::input, "spectral buffer of the wrong size");
    fftw_execute_r2r(static_cast<fftw_plan>(plan_), data.data(), data.data());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] *= norm_;
}

void SpectralBox::apply_power(const AlignedBuffer& in, AlignedBuffer& out, double power) const {
    if (&in != &out) {
        if (out.size() != in.size()) out = AlignedBuffer(in.size());
        std::copy(in.data(), in.data() + in.size(), out.data());
    }
    transform(out);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= std::pow(eig_[i], power);
    transform(out);
}

void SpectralBox::draw(Xoshiro256& rng, AlignedBuffer& out) const {
    if (out.size() != m_ * m_) out = AlignedBuffer(m_ * m_);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = standard_normal(rng) * inv_sqrt_eig_[i];
    transform(out);
}

AlignedBuffer SpectralBox::harmonic_interior(const FieldState& field) const {
    if (!(field.domain() == domain_)) fail(ErrorKind::input, "field belongs to a different domain");
    // L h = b, where b collects the boundary neighbours of each interior site.
    AlignedBuffer b(m_ * m_), h(m_ * m_);
    const int n = domain_.half_width();
    bool zero = true;
    for (int a = -n + 1; a <= n - 1; ++a)
        for (int c = -n + 1; c <= n - 1; ++c) {
            double s = 0.0;
            for (Site nb : {Site{a + 1, c}, Site{a - 1, c}, Site{a, c + 1}, Site{a, c - 1}})
                if (domain_.on_boundary(nb)) s += field.at(nb);
            b[std::size_t(a + n - 1) * m_ + std::size_t(c + n - 1)] = s;
            zero = zero && s == 0.0;
        }
    if (!zero) apply_power(b, h, -1.0);
    return h;
}

void SpectralBox::sample_into(Xoshiro256& rng, FieldState& field, AlignedBuffer& scratch) const {
    draw(rng, scratch);
    scatter_interior(scratch, field.values());
}

FieldState SpectralBox::sample(Xoshiro256& rng) const {
    FieldState field(domain_);
    AlignedBuffer scratch(m_ * m_);
    sample_into(rng, field, scratch);
    return field;
}

double SpectralBox::greens(Site x, Site y) const {
    const int n = domain_.half_width();
    if (!domain_.contains(x) || !domain_.contains(y) || domain_.on_boundary(x) || domain_.on_boundary(y)) {
        return 0.0;
    }
    const double mp1 = double(m_ + 1);
    auto modes = [&](int coord) {
        std::vector<double> v(m_);
        const double pos = double(coord + n);  // 1..m
        for (std::size_t j = 0; j < m_; ++j)
            v[j] = std::sqrt(2.0 / mp1) * std::sin(std::numbers::pi * double(j + 1) * pos / mp1);
        return v;
    };
    const auto a1 = modes(x.x1), a2 = modes(x.x2), b1 = modes(y.x1), b2 = modes(y.x2);
    double g = 0.0;
    for (std::size_t j = 0; j < m_; ++j) {
        const double pj = a1[j] * b1[j];
        double row = 0.0;
        for (std::size_t k = 0; k < m_; ++k) row += a2[k] * b2[k] / eig_[j * m_ + k];
        g += pj * row;
    }
    return g;
}

void SpectralBox::gather_interior(std::span<const double> field, AlignedBuffer& out) const {
    if (out.size() != m_ * m_) out = AlignedBuffer(m_ * m_);
    const std::size_t side = std::size_t(domain_.side());
    for (std::size_t i = 0; i < m_; ++i)
        std::memcpy(out.data() + i * m_, field.data() + (i + 1) * side + 1, m_ * sizeof(double));
}

void SpectralBox::scatter_interior(const AlignedBuffer& in, std::span<double> field) const {
    const std::size_t side = std::size_t(domain_.side());
    for (std::size_t i = 0; i < m_; ++i)
        std::memcpy(field.data() + (i + 1) * side + 1, in.data() + i * m_, m_ * sizeof(double));
}

PointMarginal::PointMarginal(const LatticeDomain& domain, Site x) {
    if (!domain.contains(x)) fail(ErrorKind::geometry, "site outside the domain");
    if (domain.on_boundary(x)) return;
    const int n = domain.half_width();
    const std::size_t m = std::size_t(2 * n - 1);
    const double mp1 = double(m + 1);
    auto basis = [&](int coord) {
        std::vector<double> v(m);
        for (std::size_t j = 0; j < m; ++j)
            v[j] = std::sqrt(2.0 / mp1) * std::sin(std::numbers::pi * double(j + 1) * double(coord + n) / mp1);
        return v;
    };
    const auto a = basis(x.x1), b = basis(x.x2);
    for (std::size_t j = 0; j < m; ++j) {
        const double sj = std::sin(std::numbers::pi * double(j + 1) / (2.0 * mp1));
        for (std::size_t k = 0; k < m; ++k) {
            const double c = a[j] * b[k];
            if (std::abs(c) < 1e-12) continue;
            const double sk = std::sin(std::numbers::pi * double(k + 1) / (2.0 * mp1));
            coef_.push_back(c / std::sqrt(4.0 * sj * sj + 4.0 * sk * sk));
        }
    }
}

double PointMarginal::draw(Xoshiro256& rng) const {
    double s = 0.0;
    for (double c : coef_) s += c * standard_normal(rng);
    return s;
}

} // namespace glf
