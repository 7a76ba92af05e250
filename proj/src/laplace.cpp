#include "glfield/laplace.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <string>

#include "glfield/errors.hpp"
#include "glfield/simd/kernels.hpp"

namespace glf {

namespace {

constexpr int kDir1[4] = {1, -1, 0, 0};
constexpr int kDir2[4] = {0, 0, 1, -1};

double inf_norm(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

} // namespace

// ---------------------------------------------------------------- MaskedGrid

MaskedGrid::MaskedGrid(const SiteSet& set) : domain_(set.domain()), origin_(set.lower()) {
    rows_ = std::size_t(set.upper().x1 - set.lower().x1 + 1) + 2;
    cols_ = std::size_t(set.upper().x2 - set.lower().x2 + 1) + 2;
    mask_.assign(rows_ * cols_, 0.0);
    const auto idx = set.indices();
    const auto flags = set.boundary_flags();
    for (std::size_t k = 0; k < idx.size(); ++k)
        if (!flags[k]) mask_[padded(idx[k])] = 1.0;
}

std::size_t MaskedGrid::padded(std::int64_t global) const noexcept {
    const Site s = domain_.site(global);
    return std::size_t(s.x1 - origin_.x1 + 1) * cols_ + std::size_t(s.x2 - origin_.x2 + 1);
}

void MaskedGrid::apply(const double* x, double* y) const {
    const auto& k = simd::active();
    const std::size_t n = cols_ - 2;
    std::fill(y, y + cols_, 0.0);
    std::fill(y + (rows_ - 1) * cols_, y + rows_ * cols_, 0.0);
    for (std::size_t r = 1; r + 1 < rows_; ++r) {
        const std::size_t off = r * cols_ + 1;
        y[off - 1] = 0.0;
        y[off + n] = 0.0;
        k.stencil_row(x + off - cols_, x + off, x + off + cols_, mask_.data() + off, y + off, n);
    }
}

// --------------------------------------------------------- DirichletOperator

struct DirichletOperator::Factor {
    Eigen::SparseMatrix<double> matrix;
    Eigen::SimplicialLLT<Eigen::SparseMatrix<double>, Eigen::Lower, Eigen::AMDOrdering<int>> llt;
};

DirichletOperator::DirichletOperator(SiteSet set, Backend backend)
    : set_(std::move(set)), backend_(backend), interior_(set_.interior_indices()) {
    if (interior_.empty()) fail(ErrorKind::geometry, "site set has no interior");
    if (backend_ == Backend::cg) {
        grid_ = std::make_unique<MaskedGrid>(set_);
        return;
    }
    if (interior_.size() > std::size_t(std::numeric_limits<int>::max())) {
        fail(ErrorKind::size, "interior too large for the sparse factorization");
    }
    factor_ = std::make_unique<Factor>();
    const auto& dom = domain();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(interior_.size() * 5);
    for (std::size_t i = 0; i < interior_.size(); ++i) {
        trip.emplace_back(int(i), int(i), 4.0);
        const Site s = dom.site(interior_[i]);
        for (int d = 0; d < 4; ++d) {
            const Site nb{s.x1 + kDir1[d], s.x2 + kDir2[d]};
            const std::int64_t j = local_index(dom.index(nb));
            if (j >= 0) trip.emplace_back(int(i), int(j), -1.0);
        }
    }
    const int n = int(interior_.size());
    factor_->matrix.resize(n, n);
    factor_->matrix.setFromTriplets(trip.begin(), trip.end());
    factor_->llt.compute(factor_->matrix);
    if (factor_->llt.info() != Eigen::Success) {
        fail(ErrorKind::solver, "sparse Cholesky factorization failed");
    }
}

DirichletOperator::~DirichletOperator() = default;
DirichletOperator::DirichletOperator(DirichletOperator&&) noexcept = default;
DirichletOperator& DirichletOperator::operator=(DirichletOperator&&) noexcept = default;

std::int64_t DirichletOperator::local_index(std::int64_t global) const noexcept {
    auto it = std::lower_bound(interior_.begin(), interior_.end(), global);
    if (it == interior_.end() || *it != global) return -1;
    return std::int64_t(it - interior_.begin());
}

void DirichletOperator::apply(std::span<const double> x, std::span<double> y) const {
    if (x.size() != interior_.size() || y.size() != interior_.size()) {
        fail(ErrorKind::input, "operator applied to a vector of the wrong length");
    }
    if (factor_) {
        Eigen::Map<const Eigen::VectorXd> xv(x.data(), Eigen::Index(x.size()));
        Eigen::Map<Eigen::VectorXd> yv(y.data(), Eigen::Index(y.size()));
        yv = factor_->matrix * xv;
        return;
    }
    std::vector<double> xp(grid_->size(), 0.0), yp(grid_->size(), 0.0);
    for (std::size_t i = 0; i < interior_.size(); ++i) xp[grid_->padded(interior_[i])] = x[i];
    grid_->apply(xp.data(), yp.data());
    for (std::size_t i = 0; i < interior_.size(); ++i) y[i] = yp[grid_->padded(interior_[i])];
}

std::vector<double> DirichletOperator::solve(std::span<const double> rhs, CgStats* stats) const {
    const std::size_t n = interior_.size();
    if (rhs.size() != n) fail(ErrorKind::input, "right-hand side of the wrong length");
    const double scale = std::max(1.0, inf_norm(rhs));
    constexpr double kResidualBound = 1e-10;

    if (factor_) {
        Eigen::Map<const Eigen::VectorXd> b(rhs.data(), Eigen::Index(n));
        Eigen::VectorXd x = factor_->llt.solve(b);
        std::vector<double> out(x.data(), x.data() + n);
        Eigen::VectorXd r = factor_->matrix * x - b;
        const double res = r.cwiseAbs().maxCoeff();
        if (!(res <= kResidualBound * scale)) {
            fail(ErrorKind::solver, "Cholesky residual " + std::to_string(res) + " above bound");
        }
        if (stats) *stats = {0, res};
        return out;
    }

    // Conjugate gradient on the padded grid; every vector vanishes off the mask.
    const auto& k = simd::active();
    const std::size_t np = grid_->size();
    std::vector<double> b(np, 0.0), x(np, 0.0), r(np), p(np), ap(np);
    for (std::size_t i = 0; i < n; ++i) b[grid_->padded(interior_[i])] = rhs[i];

    const double target = 0.05 * kResidualBound * scale;
    const int max_iter = int(20 * (grid_->rows() + grid_->cols())) + 1000;
    int iterations = 0;
    double true_res = 0.0;
    for (int restart = 0; restart < 4; ++restart) {
        grid_->apply(x.data(), ap.data());
        for (std::size_t i = 0; i < np; ++i) r[i] = b[i] - ap[i];
        p = r;
        double rr = k.dot(r.data(), r.data(), np);
        while (std::sqrt(rr) > target && iterations < max_iter) {
            grid_->apply(p.data(), ap.data());
            const double pap = k.dot(p.data(), ap.data(), np);
            if (!(pap > 0.0)) fail(ErrorKind::solver, "conjugate gradient breakdown");
            const double alpha = rr / pap;
            k.axpy(alpha, p.data(), x.data(), np);
            k.axpy(-alpha, ap.data(), r.data(), np);
            const double rr_new = k.dot(r.data(), r.data(), np);
            k.xpby(r.data(), rr_new / rr, p.data(), np);
            rr = rr_new;
            ++iterations;
        }
        grid_->apply(x.data(), ap.data());
        true_res = 0.0;
        for (std::size_t i = 0; i < np; ++i) true_res = std::max(true_res, std::abs(ap[i] - b[i]));
        if (true_res <= kResidualBound * scale) break;
    }
    if (!(true_res <= kResidualBound * scale)) {
        fail(ErrorKind::solver, "conjugate gradient did not converge (residual " +
                                    std::to_string(true_res) + ")");
    }
    if (stats) *stats = {iterations, true_res};
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = x[grid_->padded(interior_[i])];
    return out;
}

std::vector<double> DirichletOperator::correlate(std::span<const double> white) const {
    if (!factor_) fail(ErrorKind::solver, "exact sampling needs the Cholesky backend");
    const std::size_t n = interior_.size();
    if (white.size() != n) fail(ErrorKind::input, "noise vector of the wrong length");
    Eigen::Map<const Eigen::VectorXd> z(white.data(), Eigen::Index(n));
    Eigen::VectorXd y = factor_->llt.matrixU().solve(z);
    Eigen::VectorXd x = factor_->llt.permutationPinv() * y;
    return {x.data(), x.data() + n};
}

// ------------------------------------------------------------ free functions

double GreensColumn::at(std::int64_t site) const noexcept {
    auto it = std::lower_bound(sites.begin(), sites.end(), site);
    if (it == sites.end() || *it != site) return 0.0;
    return values[std::size_t(it - sites.begin())];
}

GreensColumn greens_column(const DirichletOperator& op, Site source) {
    const auto& dom = op.domain();
    if (!dom.contains(source)) fail(ErrorKind::geometry, "Green's source outside the domain");
    const std::int64_t local = op.local_index(dom.index(source));
    if (local < 0) fail(ErrorKind::geometry, "Green's source is not an interior site");
    std::vector<double> rhs(op.interior_size(), 0.0);
    rhs[std::size_t(local)] = 1.0;
    GreensColumn col;
    col.source = dom.index(source);
    col.values = op.solve(rhs);
    col.sites.assign(op.interior().begin(), op.interior().end());
    return col;
}

namespace {

std::vector<double> extend(const DirichletOperator& op, auto&& boundary_value) {
    const auto& dom = op.domain();
    const auto interior = op.interior();
    std::vector<double> rhs(interior.size(), 0.0);
    for (std::size_t i = 0; i < interior.size(); ++i) {
        const Site s = dom.site(interior[i]);
        for (int d = 0; d < 4; ++d) {
            const std::int64_t nb = dom.index({s.x1 + kDir1[d], s.x2 + kDir2[d]});
            if (op.local_index(nb) < 0) rhs[i] += boundary_value(nb);
        }
    }
    const std::vector<double> u = op.solve(rhs);
    const auto members = op.set().indices();
    std::vector<double> out(members.size());
    for (std::size_t k = 0; k < members.size(); ++k) {
        const std::int64_t loc = op.local_index(members[k]);
        out[k] = loc >= 0 ? u[std::size_t(loc)] : boundary_value(members[k]);
    }
    return out;
}

} // namespace

std::vector<double> harmonic_extension(const DirichletOperator& op,
                                       const std::map<std::int64_t, double>& boundary_values) {
    for (auto b : op.set().boundary_indices()) {
        if (!boundary_values.contains(b)) {
            const Site s = op.domain().site(b);
            fail(ErrorKind::input, "missing boundary value at (" + std::to_string(s.x1) + "," +
                                       std::to_string(s.x2) + ")");
        }
    }
    return extend(op, [&](std::int64_t site) { return boundary_values.at(site); });
}

std::vector<double> harmonic_extension(const DirichletOperator& op, std::span<const double> field) {
    if (std::int64_t(field.size()) != op.domain().size()) {
        fail(ErrorKind::input, "boundary field on a different domain");
    }
    return extend(op, [&](std::int64_t site) { return field[std::size_t(site)]; });
}

HarmonicWeights harmonic_measure(const LatticeDomain& domain, const SiteSet& ball, Site center) {
    if (!(ball.domain() == domain)) fail(ErrorKind::input, "ball built on a different domain");
    const std::int64_t c = domain.index(center);
    if (!ball.contains(c) || ball.is_boundary(c)) {
        fail(ErrorKind::geometry, "harmonic measure needs a center interior to the ball");
    }
    const DirichletOperator op(ball, DirichletOperator::Backend::cholesky);
    const GreensColumn g = greens_column(op, center);
    std::vector<std::pair<std::int64_t, double>> terms;
    for (auto y : ball.boundary_indices()) {
        const Site s = domain.site(y);
        double a = 0.0;
        for (int d = 0; d < 4; ++d) {
            const Site z{s.x1 + kDir1[d], s.x2 + kDir2[d]};
            if (domain.contains(z)) a += g.at(domain.index(z));
        }
        if (a != 0.0) terms.emplace_back(y, a);
    }
    return make_weights(domain, std::move(terms), "harmonic_measure");
}

FieldState sample_exact_gff(const DirichletOperator& op, Xoshiro256& rng) {
    std::vector<double> z(op.interior_size());
    for (auto& v : z) v = standard_normal(rng);
    const std::vector<double> x = op.correlate(z);
    FieldState field(op.domain());
    const auto interior = op.interior();
    for (std::size_t i = 0; i < interior.size(); ++i) field[interior[i]] = x[i];
    return field;
}

double gff_variance(const DirichletOperator& op, Site x) {
    const GreensColumn g = greens_column(op, x);
    return g.at(op.domain().index(x));
}

} // namespace glf
