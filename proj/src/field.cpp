#include "glfield/field.hpp"

#include <cmath>

#include "glfield/errors.hpp"

namespace glf {

FieldState::FieldState(LatticeDomain domain)
    : domain_(domain), values_(std::size_t(domain.size()), 0.0) {
    refresh_pins();
}

FieldState::FieldState(LatticeDomain domain, std::vector<double> values)
    : domain_(domain), values_(std::move(values)) {
    if (std::int64_t(values_.size()) != domain_.size()) {
        fail(ErrorKind::input, "field size does not match the domain");
    }
    refresh_pins();
}

void FieldState::refresh_pins() {
    pins_.clear();
    const int n = domain_.half_width();
    for (int a = -n; a <= n; ++a)
        for (int b = -n; b <= n; ++b)
            if (domain_.on_boundary({a, b})) pins_.push_back(at({a, b}));
}

bool FieldState::valid() const noexcept {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    std::size_t k = 0;
    const int n = domain_.half_width();
    for (int a = -n; a <= n; ++a)
        for (int b = -n; b <= n; ++b)
            if (domain_.on_boundary({a, b}) && at({a, b}) != pins_[k++]) return false;
    return true;
}

} // namespace glf
