#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "glfield/field.hpp"
#include "glfield/lattice.hpp"
#include "glfield/rng.hpp"
#include "glfield/weights.hpp"

namespace glf {

/// Padded bounding-box layout of a SiteSet used by the matrix-free solver:
/// rows of the box plus a one-site halo, with mask 1 on interior members.
class MaskedGrid {
public:
    explicit MaskedGrid(const SiteSet& set);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return rows_ * cols_; }
    std::span<const double> mask() const noexcept { return mask_; }

    /// Padded position of a global domain index inside the bounding box.
    std::size_t padded(std::int64_t global) const noexcept;

    /// y = L x on interior positions, 0 elsewhere. x must vanish off the mask.
    void apply(const double* x, double* y) const;

private:
    LatticeDomain domain_;
    Site origin_{};  // site at padded (1, 1)
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> mask_;
};

struct CgStats {
    int iterations = 0;
    double residual_inf = 0.0;  // true residual after the final iterate
};

/// Discrete Dirichlet Laplacian L = 4 I - A on the interior of a site set
/// (members not on the set's inner boundary). Immutable after construction.
class DirichletOperator {
public:
    enum class Backend {
        cholesky,  // sparse LL^T with AMD ordering; needed for exact sampling
        cg,        // matrix-free conjugate gradient; no factorization memory
    };

    explicit DirichletOperator(SiteSet set, Backend backend = Backend::cholesky);
    ~DirichletOperator();
    DirichletOperator(DirichletOperator&&) noexcept;
    DirichletOperator& operator=(DirichletOperator&&) noexcept;

    const SiteSet& set() const noexcept { return set_; }
    const LatticeDomain& domain() const noexcept { return set_.domain(); }
    Backend backend() const noexcept { return backend_; }

    /// Interior members (global indices, sorted); local numbering follows this order.
    std::span<const std::int64_t> interior() const noexcept { return interior_; }
    std::size_t interior_size() const noexcept { return interior_.size(); }
    /// Local number of a global index, or -1 when it is not interior.
    std::int64_t local_index(std::int64_t global) const noexcept;

    /// y = L x in local numbering.
    void apply(std::span<const double> x, std::span<double> y) const;

    /// Solves L u = rhs (local numbering). Solver error when the residual
    /// cannot be brought to 1e-10 * max(1, |rhs|_inf).
    std::vector<double> solve(std::span<const double> rhs, CgStats* stats = nullptr) const;

    /// x = P^T U^{-1} z with L = P^T U^T U P; requires the cholesky backend.
    std::vector<double> correlate(std::span<const double> white) const;

private:
    struct Factor;

    SiteSet set_;
    Backend backend_;
    std::vector<std::int64_t> interior_;
    std::unique_ptr<MaskedGrid> grid_;
    std::unique_ptr<Factor> factor_;
};

/// G(source, .) on the interior of op's set.
struct GreensColumn {
    std::int64_t source = 0;
    std::vector<std::int64_t> sites;  // interior, sorted
    std::vector<double> values;

    /// G(source, site); 0 for non-interior sites.
    double at(std::int64_t site) const noexcept;
};

/// Solves L g = e_source. Geometry error unless source is interior.
GreensColumn greens_column(const DirichletOperator& op, Site source);

/// Discrete harmonic function on op's set matching the given boundary data.
/// Returns values aligned with op.set().indices(). Input error if any boundary
/// member of the set lacks a value.
std::vector<double> harmonic_extension(const DirichletOperator& op,
                                       const std::map<std::int64_t, double>& boundary_values);

/// Same, with boundary data read from a full-domain field.
std::vector<double> harmonic_extension(const DirichletOperator& op, std::span<const double> field);

/// a_B(center, y) on the boundary of `ball`, from one Green's solve:
/// a(v, y) = sum over interior z ~ y of G_B(v, z), where G_B = L_B^{-1}.
/// Geometry error when center is not interior to the ball.
HarmonicWeights harmonic_measure(const LatticeDomain& domain, const SiteSet& ball, Site center);

/// Exact zero-boundary GFF on op's set with covariance L^{-1}; deterministic given rng.
FieldState sample_exact_gff(const DirichletOperator& op, Xoshiro256& rng);

/// G(x, x).
double gff_variance(const DirichletOperator& op, Site x);

} // namespace glf
