#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "glfield/field.hpp"

namespace glf {

/// Sparse signed measure rho on sites: harmonic measures, smoothed
/// circle-average kernels, increment kernels. Sites are sorted and unique.
struct HarmonicWeights {
    LatticeDomain domain{1};
    std::vector<std::int64_t> sites;
    std::vector<double> weights;
    std::string construction;

    std::size_t size() const noexcept { return sites.size(); }
    double total() const noexcept;
    double l1_norm() const noexcept;

    /// <rho, phi> = sum_y rho(y) phi(y)
    double apply(std::span<const double> field) const;
    double apply(const FieldState& field) const { return apply(field.values()); }

    /// Writes "x1,x2,weight" rows with a header line.
    void write_csv(std::ostream& os) const;
};

/// alpha * a + beta * b on the union of supports (exact zeros dropped).
HarmonicWeights combine(const HarmonicWeights& a, double alpha, const HarmonicWeights& b, double beta);

/// Builds sorted sparse weights from unsorted (site, weight) contributions,
/// summing duplicates.
HarmonicWeights make_weights(LatticeDomain domain, std::vector<std::pair<std::int64_t, double>> terms,
                             std::string construction);

} // namespace glf
