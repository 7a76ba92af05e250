#include "glfield/weights.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "glfield/errors.hpp"
#include "glfield/simd/kernels.hpp"

namespace glf {

double HarmonicWeights::total() const noexcept {
    double s = 0.0;
    for (double w : weights) s += w;
    return s;
}

double HarmonicWeights::l1_norm() const noexcept {
    double s = 0.0;
    for (double w : weights) s += std::abs(w);
    return s;
}

double HarmonicWeights::apply(std::span<const double> field) const {
    if (std::int64_t(field.size()) != domain.size()) {
        fail(ErrorKind::input, "weights applied to a field on a different domain");
    }
    return simd::active().gather_dot(field.data(), sites.data(), weights.data(), sites.size());
}

void HarmonicWeights::write_csv(std::ostream& os) const {
    os << "x1,x2,weight\n";
    os.precision(17);
    for (std::size_t k = 0; k < sites.size(); ++k) {
        const Site s = domain.site(sites[k]);
        os << s.x1 << ',' << s.x2 << ',' << weights[k] << '\n';
    }
}

HarmonicWeights make_weights(LatticeDomain domain, std::vector<std::pair<std::int64_t, double>> terms,
                             std::string construction) {
    std::stable_sort(terms.begin(), terms.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    HarmonicWeights out;
    out.domain = domain;
    out.construction = std::move(construction);
    for (std::size_t k = 0; k < terms.size();) {
        const std::int64_t site = terms[k].first;
        double w = 0.0;
        for (; k < terms.size() && terms[k].first == site; ++k) w += terms[k].second;
        if (w != 0.0) {
            out.sites.push_back(site);
            out.weights.push_back(w);
        }
    }
    return out;
}

HarmonicWeights combine(const HarmonicWeights& a, double alpha, const HarmonicWeights& b, double beta) {
    if (!(a.domain == b.domain)) fail(ErrorKind::input, "combining weights on different domains");
    std::vector<std::pair<std::int64_t, double>> terms;
    terms.reserve(a.size() + b.size());
    for (std::size_t k = 0; k < a.size(); ++k) terms.emplace_back(a.sites[k], alpha * a.weights[k]);
    for (std::size_t k = 0; k < b.size(); ++k) terms.emplace_back(b.sites[k], beta * b.weights[k]);
    return make_weights(a.domain, std::move(terms), "combination");
}

} // namespace glf
