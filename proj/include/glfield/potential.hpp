#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "glfield/errors.hpp"
#include "glfield/simd/kernels.hpp"

namespace glf {

/// Nearest-neighbour interaction V with its first two derivatives and the
/// uniform convexity constants c_minus <= V'' <= c_plus.
class Potential {
public:
    enum class Kind { quadratic, dipole_gas, custom };
    using Fn = std::function<double(double)>;
    using Params = std::vector<std::pair<std::string, double>>;

    /// Custom potential; c_minus/c_plus are claims that validate() checks.
    Potential(std::string name, Params params, Fn v, Fn dv, Fn d2v, double c_minus, double c_plus);

    static Potential quadratic();
    /// V(x) = x^2/2 + a cos x; convexity error unless |a| < 1.
    static Potential dipole_gas(double a);
    /// Reconstruct from the serialized {name, params} form.
    static Potential from_spec(const std::string& name, const Params& params);

    Kind kind() const noexcept { return kind_; }
    const std::string& name() const noexcept { return name_; }
    const Params& params() const noexcept { return params_; }
    double param(const std::string& key) const;

    double c_minus() const noexcept { return c_minus_; }
    double c_plus() const noexcept { return c_plus_; }

    double v(double x) const { return v_(x); }
    double dv(double x) const { return dv_(x); }
    double d2v(double x) const { return d2v_(x); }

    /// Calls f with an inlineable evaluator (`value`, `deriv`, `second`
    /// members) for the built-in kinds; custom potentials go through
    /// std::function.
    template <class F>
    decltype(auto) visit(F&& f) const;

private:
    Potential() = default;

    Kind kind_ = Kind::custom;
    std::string name_;
    Params params_;
    Fn v_, dv_, d2v_;
    double c_minus_ = 1.0;
    double c_plus_ = 1.0;
    double a_ = 0.0;
};

// Evaluators also offer array forms (out may alias x) for whole-field loops.
struct QuadraticEval {
    double value(double x) const noexcept { return 0.5 * x * x; }
    double deriv(double x) const noexcept { return x; }
    double second(double) const noexcept { return 1.0; }
    void value_array(const double* x, double* out, std::size_t n) const noexcept {
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * x[i] * x[i];
    }
    void deriv_array(const double* x, double* out, std::size_t n) const noexcept {
        for (std::size_t i = 0; i < n; ++i) out[i] = x[i];
    }
};

struct DipoleEval {
    double a;
    double value(double x) const noexcept { return 0.5 * x * x + a * std::cos(x); }
    double deriv(double x) const noexcept { return x - a * std::sin(x); }
    double second(double x) const noexcept { return 1.0 - a * std::cos(x); }
    void value_array(const double* x, double* out, std::size_t n) const noexcept {
        thread_local std::vector<double> c;
        c.resize(n);
        simd::active().cos_array(x, c.data(), n);
        for (std::size_t i = 0; i < n; ++i) out[i] = 0.5 * x[i] * x[i] + a * c[i];
    }
    void deriv_array(const double* x, double* out, std::size_t n) const noexcept {
        thread_local std::vector<double> s;
        s.resize(n);
        simd::active().sin_array(x, s.data(), n);
        for (std::size_t i = 0; i < n; ++i) out[i] = x[i] - a * s[i];
    }
};

struct CustomEval {
    const Potential* p;
    double value(double x) const { return p->v(x); }
    double deriv(double x) const { return p->dv(x); }
    double second(double x) const { return p->d2v(x); }
    void value_array(const double* x, double* out, std::size_t n) const {
        for (std::size_t i = 0; i < n; ++i) out[i] = p->v(x[i]);
    }
    void deriv_array(const double* x, double* out, std::size_t n) const {
        for (std::size_t i = 0; i < n; ++i) out[i] = p->dv(x[i]);
    }
};

template <class F>
decltype(auto) Potential::visit(F&& f) const {
    switch (kind_) {
    case Kind::quadratic: return std::forward<F>(f)(QuadraticEval{});
    case Kind::dipole_gas: return std::forward<F>(f)(DipoleEval{a_});
    case Kind::custom: break;
    }
    return std::forward<F>(f)(CustomEval{this});
}

struct ValidationReport {
    double max_symmetry_defect = 0.0;  // max |V(x) - V(-x)|
    double max_odd_defect = 0.0;       // max |V'(x) + V'(-x)|, includes |V'(0)|
    double min_second = 0.0;           // min V'' on the grid
    double max_second = 0.0;           // max V'' on the grid
    double max_fd_error_first = 0.0;   // scaled central-difference error of V'
    double max_fd_error_second = 0.0;  // scaled central-difference error of V''
    std::size_t grid_points = 0;
    bool passed = false;
};

/// Certifies symmetry, oddness of V', c_minus <= V'' <= c_plus and the
/// closed-form derivatives (central differences at step 1e-4, error bound
/// 1e-6 * max(1, |exact|)) on the grid [-halfwidth, halfwidth] with the given
/// step. Throws a validation error naming the first offending x.
ValidationReport validate(const Potential& p, double grid_halfwidth, double grid_step);

} // namespace glf
