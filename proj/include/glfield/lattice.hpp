#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace glf {

struct Site {
    int x1 = 0;
    int x2 = 0;
    friend bool operator==(const Site&, const Site&) = default;
};

inline int l1_norm(Site a, Site b) noexcept {
    const int d1 = a.x1 - b.x1;
    const int d2 = a.x2 - b.x2;
    return (d1 < 0 ? -d1 : d1) + (d2 < 0 ? -d2 : d2);
}

/// The box D_N = [-N, N]^2 of Z^2. Sites are indexed row-major by (x1, x2):
/// index = (x1 + N) * (2N + 1) + (x2 + N). The boundary is the outer ring.
class LatticeDomain {
public:
    static constexpr int max_half_width = 4096;

    /// Throws a size error for N < 1 or N > max_half_width.
    explicit LatticeDomain(int half_width);

    int half_width() const noexcept { return n_; }
    int side() const noexcept { return 2 * n_ + 1; }
    std::int64_t size() const noexcept { return std::int64_t(side()) * side(); }
    std::int64_t interior_size() const noexcept { return std::int64_t(side() - 2) * (side() - 2); }

    bool contains(Site s) const noexcept {
        return s.x1 >= -n_ && s.x1 <= n_ && s.x2 >= -n_ && s.x2 <= n_;
    }
    bool on_boundary(Site s) const noexcept {
        return s.x1 == -n_ || s.x1 == n_ || s.x2 == -n_ || s.x2 == n_;
    }
    std::int64_t index(Site s) const noexcept {
        return std::int64_t(s.x1 + n_) * side() + (s.x2 + n_);
    }
    Site site(std::int64_t index) const noexcept {
        return {static_cast<int>(index / side()) - n_, static_cast<int>(index % side()) - n_};
    }
    /// Offset in the flat array of a unit step in x1 / x2.
    std::int64_t stride_x1() const noexcept { return side(); }

    friend bool operator==(const LatticeDomain&, const LatticeDomain&) = default;

private:
    int n_;
};

/// build_box(N).
LatticeDomain build_box(int half_width);

/// l-infinity distance of x to the boundary ring: min(N - |x1|, N - |x2|).
/// Precondition: domain.contains(x).
int dist_to_boundary(const LatticeDomain& domain, Site x);

/// Ordered set of sites of a domain with its inner vertex boundary (members
/// adjacent to a non-member, or to the outside of the domain).
class SiteSet {
public:
    SiteSet(LatticeDomain domain, std::vector<std::int64_t> indices);

    const LatticeDomain& domain() const noexcept { return domain_; }
    std::span<const std::int64_t> indices() const noexcept { return indices_; }
    std::size_t size() const noexcept { return indices_.size(); }

    /// Members flagged as boundary, parallel to indices().
    std::span<const std::uint8_t> boundary_flags() const noexcept { return boundary_; }
    std::vector<std::int64_t> boundary_indices() const;
    std::vector<std::int64_t> interior_indices() const;

    bool contains(std::int64_t index) const noexcept;
    bool is_boundary(std::int64_t index) const noexcept;

    /// Bounding box (inclusive) of the members.
    Site lower() const noexcept { return lo_; }
    Site upper() const noexcept { return hi_; }

private:
    LatticeDomain domain_;
    std::vector<std::int64_t> indices_;
    std::vector<std::uint8_t> boundary_;
    Site lo_{};
    Site hi_{};
};

/// B_R(v) = {x : |x1 - v1| + |x2 - v2| < R}. Geometry error unless
/// ceil(R) <= N + 1 - |v|_inf, i.e. the ball fits in D_N.
SiteSet l1_ball(const LatticeDomain& domain, Site center, double radius);

/// The whole box; its boundary is the outer ring of D_N.
SiteSet whole_domain(const LatticeDomain& domain);

/// Square [c1-h, c1+h] x [c2-h, c2+h]; geometry error if it leaves the domain.
SiteSet sub_box(const LatticeDomain& domain, Site center, int half_width);

/// D(r) = {x : dist(x, boundary) > r}; empty sets are a geometry error.
SiteSet inset_domain(const LatticeDomain& domain, int r);

} // namespace glf
