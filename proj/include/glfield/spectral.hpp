#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <vector>

#include "glfield/field.hpp"
#include "glfield/rng.hpp"

namespace glf {

/// fftw_malloc-backed array; FFTW plans are only valid on aligned storage.
class AlignedBuffer {
public:
    AlignedBuffer() = default;
    explicit AlignedBuffer(std::size_t n);
    AlignedBuffer(const AlignedBuffer& other);
    AlignedBuffer& operator=(const AlignedBuffer& other);
    AlignedBuffer(AlignedBuffer&&) noexcept = default;
    AlignedBuffer& operator=(AlignedBuffer&&) noexcept = default;

    double* data() noexcept { return data_.get(); }
    const double* data() const noexcept { return data_.get(); }
    std::size_t size() const noexcept { return size_; }
    std::span<double> span() noexcept { return {data(), size_}; }
    std::span<const double> span() const noexcept { return {data(), size_}; }
    double& operator[](std::size_t i) noexcept { return data_.get()[i]; }
    double operator[](std::size_t i) const noexcept { return data_.get()[i]; }

private:
    struct Free {
        void operator()(double* p) const noexcept;
    };
    std::unique_ptr<double, Free> data_;
    std::size_t size_ = 0;
};

/// Exact diagonalization of the Dirichlet Laplacian of the full box D_N by
/// the orthonormal 2-D type-I sine transform. Interior arrays are
/// (2N-1) x (2N-1), row-major by (x1, x2) like the domain.
class SpectralBox {
public:
    explicit SpectralBox(LatticeDomain domain);
    ~SpectralBox();
    SpectralBox(const SpectralBox&) = delete;
    SpectralBox& operator=(const SpectralBox&) = delete;

    const LatticeDomain& domain() const noexcept { return domain_; }
    std::size_t interior_side() const noexcept { return m_; }
    std::size_t interior_size() const noexcept { return m_ * m_; }

    /// Eigenvalue of mode (j, k), stored at j * m + k (0-based modes).
    std::span<const double> eigenvalues() const noexcept { return eig_; }

    /// In-place orthonormal transform; it is its own inverse.
    void transform(AlignedBuffer& data) const;

    /// out = L^power in (interior arrays); power may be fractional.
    void apply_power(const AlignedBuffer& in, AlignedBuffer& out, double power) const;

    /// Exact zero-boundary GFF draw as an interior array.
    void draw(Xoshiro256& rng, AlignedBuffer& out) const;

    /// Interior values of the discrete harmonic function with the boundary
    /// values of `field`.
    AlignedBuffer harmonic_interior(const FieldState& field) const;

    /// Exact GFF draw written into field (interior; boundary untouched).
    void sample_into(Xoshiro256& rng, FieldState& field, AlignedBuffer& scratch) const;
    FieldState sample(Xoshiro256& rng) const;

    /// G(x, y) = sum over modes of psi(x) psi(y) / lambda. Zero off the interior.
    double greens(Site x, Site y) const;

    void gather_interior(std::span<const double> field, AlignedBuffer& out) const;
    void scatter_interior(const AlignedBuffer& in, std::span<double> field) const;

private:
    LatticeDomain domain_;
    std::size_t m_;
    std::vector<double> eig_;
    std::vector<double> inv_sqrt_eig_;
    double norm_;
    void* plan_ = nullptr;
};

/// Exact draws of phi(x) alone under the zero-boundary GFF of the box:
/// sum over sine modes k of e_k(x) z_k / sqrt(lambda_k), skipping modes that
/// vanish at x. Costs O(N^2) per draw instead of a full transform.
class PointMarginal {
public:
    PointMarginal(const LatticeDomain& domain, Site x);
    double draw(Xoshiro256& rng) const;
    std::size_t modes() const noexcept { return coef_.size(); }

private:
    std::vector<double> coef_;
};

} // namespace glf
