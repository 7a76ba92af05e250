#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "glfield/lattice.hpp"

namespace glf {

/// Real configuration on D_N. Boundary-ring values are pinned (0 unless a
/// boundary condition was supplied) and no sampler ever writes them.
class FieldState {
public:
    explicit FieldState(LatticeDomain domain);
    /// Pinned boundary values taken from `values` at the boundary ring.
    FieldState(LatticeDomain domain, std::vector<double> values);

    const LatticeDomain& domain() const noexcept { return domain_; }
    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }
    double at(Site s) const noexcept { return values_[std::size_t(domain_.index(s))]; }
    double& at(Site s) noexcept { return values_[std::size_t(domain_.index(s))]; }
    double operator[](std::int64_t i) const noexcept { return values_[std::size_t(i)]; }
    double& operator[](std::int64_t i) noexcept { return values_[std::size_t(i)]; }

    /// Sets every boundary-ring value (and the pin) from f(site).
    template <class F>
    void pin_boundary(F&& f) {
        const int n = domain_.half_width();
        for (int a = -n; a <= n; ++a)
            for (int b = -n; b <= n; ++b)
                if (domain_.on_boundary({a, b})) at({a, b}) = f(Site{a, b});
        refresh_pins();
    }

    /// True iff every boundary value equals its pin exactly and all values are finite.
    bool valid() const noexcept;

    std::uint64_t seed = 0;          // seed of the stream that produced this state
    std::uint64_t stream = 0;        // chain / draw index under that seed
    std::uint64_t sweeps = 0;        // sweeps (or trajectories) applied

private:
    void refresh_pins();

    LatticeDomain domain_;
    std::vector<double> values_;
    std::vector<double> pins_;  // boundary ring in index order
};

} // namespace glf
