#include "glfield/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "glfield/errors.hpp"

namespace glf {

LatticeDomain::LatticeDomain(int half_width) : n_(half_width) {
    if (half_width < 1 || half_width > max_half_width) {
        fail(ErrorKind::size, "half width N=" + std::to_string(half_width) + " outside [1, " +
                                  std::to_string(max_half_width) + "]");
    }
}

LatticeDomain build_box(int half_width) { return LatticeDomain(half_width); }

int dist_to_boundary(const LatticeDomain& domain, Site x) {
    const int n = domain.half_width();
    return std::min(n - std::abs(x.x1), n - std::abs(x.x2));
}

SiteSet::SiteSet(LatticeDomain domain, std::vector<std::int64_t> indices)
    : domain_(domain), indices_(std::move(indices)) {
    std::sort(indices_.begin(), indices_.end());
    if (std::adjacent_find(indices_.begin(), indices_.end()) != indices_.end()) {
        fail(ErrorKind::input, "site set has duplicate indices");
    }
    if (!indices_.empty() && (indices_.front() < 0 || indices_.back() >= domain_.size())) {
        fail(ErrorKind::input, "site set index outside the domain");
    }
    if (indices_.empty()) fail(ErrorKind::geometry, "empty site set");

    lo_ = hi_ = domain_.site(indices_.front());
    for (auto idx : indices_) {
        const Site s = domain_.site(idx);
        lo_ = {std::min(lo_.x1, s.x1), std::min(lo_.x2, s.x2)};
        hi_ = {std::max(hi_.x1, s.x1), std::max(hi_.x2, s.x2)};
    }

    boundary_.resize(indices_.size(), 0);
    constexpr int d1[4] = {1, -1, 0, 0};
    constexpr int d2[4] = {0, 0, 1, -1};
    for (std::size_t k = 0; k < indices_.size(); ++k) {
        const Site s = domain_.site(indices_[k]);
        for (int dir = 0; dir < 4; ++dir) {
            const Site nb{s.x1 + d1[dir], s.x2 + d2[dir]};
            if (!domain_.contains(nb) || !contains(domain_.index(nb))) {
                boundary_[k] = 1;
                break;
            }
        }
    }
}

bool SiteSet::contains(std::int64_t index) const noexcept {
    return std::binary_search(indices_.begin(), indices_.end(), index);
}

bool SiteSet::is_boundary(std::int64_t index) const noexcept {
    auto it = std::lower_bound(indices_.begin(), indices_.end(), index);
    return it != indices_.end() && *it == index && boundary_[std::size_t(it - indices_.begin())] != 0;
}

std::vector<std::int64_t> SiteSet::boundary_indices() const {
    std::vector<std::int64_t> out;
    for (std::size_t k = 0; k < indices_.size(); ++k)
        if (boundary_[k]) out.push_back(indices_[k]);
    return out;
}

std::vector<std::int64_t> SiteSet::interior_indices() const {
    std::vector<std::int64_t> out;
    for (std::size_t k = 0; k < indices_.size(); ++k)
        if (!boundary_[k]) out.push_back(indices_[k]);
    return out;
}

SiteSet l1_ball(const LatticeDomain& domain, Site center, double radius) {
    if (!(radius > 0.0) || !std::isfinite(radius)) {
        fail(ErrorKind::parameter, "ball radius must be positive and finite");
    }
    if (!domain.contains(center)) fail(ErrorKind::geometry, "ball center outside the domain");
    const int room = domain.half_width() + 1 - std::max(std::abs(center.x1), std::abs(center.x2));
    if (std::ceil(radius) > room) {
        fail(ErrorKind::geometry, "l1 ball of radius " + std::to_string(radius) + " at (" +
                                      std::to_string(center.x1) + "," + std::to_string(center.x2) +
                                      ") leaves D_N");
    }
    // |x - v|_1 < R  <=>  |x - v|_1 <= ceil(R) - 1 for integer norms.
    const int reach = static_cast<int>(std::ceil(radius)) - 1;
    std::vector<std::int64_t> idx;
    idx.reserve(std::size_t(2 * reach * (reach + 1) + 1));
    for (int d1 = -reach; d1 <= reach; ++d1) {
        const int span2 = reach - std::abs(d1);
        for (int d2 = -span2; d2 <= span2; ++d2) {
            idx.push_back(domain.index({center.x1 + d1, center.x2 + d2}));
        }
    }
    return SiteSet(domain, std::move(idx));
}

SiteSet whole_domain(const LatticeDomain& domain) {
    std::vector<std::int64_t> idx(std::size_t(domain.size()));
    for (std::int64_t i = 0; i < domain.size(); ++i) idx[std::size_t(i)] = i;
    return SiteSet(domain, std::move(idx));
}

SiteSet sub_box(const LatticeDomain& domain, Site center, int half_width) {
    if (half_width < 0) fail(ErrorKind::parameter, "negative box half width");
    const Site lo{center.x1 - half_width, center.x2 - half_width};
    const Site hi{center.x1 + half_width, center.x2 + half_width};
    if (!domain.contains(lo) || !domain.contains(hi)) {
        fail(ErrorKind::geometry, "sub-box leaves the domain");
    }
    std::vector<std::int64_t> idx;
    idx.reserve(std::size_t(2 * half_width + 1) * std::size_t(2 * half_width + 1));
    for (int a = lo.x1; a <= hi.x1; ++a)
        for (int b = lo.x2; b <= hi.x2; ++b) idx.push_back(domain.index({a, b}));
    return SiteSet(domain, std::move(idx));
}

SiteSet inset_domain(const LatticeDomain& domain, int r) {
    const int h = domain.half_width() - r - 1;
    if (r < 0 || h < 0) fail(ErrorKind::geometry, "D(r) is empty for r=" + std::to_string(r));
    return sub_box(domain, {0, 0}, h);
}

} // namespace glf
