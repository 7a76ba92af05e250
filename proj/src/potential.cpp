#include "glfield/potential.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace glf {

Potential::Potential(std::string name, Params params, Fn v, Fn dv, Fn d2v, double c_minus,
                     double c_plus)
    : kind_(Kind::custom), name_(std::move(name)), params_(std::move(params)), v_(std::move(v)),
      dv_(std::move(dv)), d2v_(std::move(d2v)), c_minus_(c_minus), c_plus_(c_plus) {
    if (!(c_minus > 0.0) || !(c_plus >= c_minus) || !std::isfinite(c_plus)) {
        fail(ErrorKind::convexity, "need 0 < c_minus <= c_plus < inf");
    }
}

Potential Potential::quadratic() {
    Potential p;
    p.kind_ = Kind::quadratic;
    p.name_ = "quadratic";
    p.v_ = [](double x) { return 0.5 * x * x; };
    p.dv_ = [](double x) { return x; };
    p.d2v_ = [](double) { return 1.0; };
    p.c_minus_ = p.c_plus_ = 1.0;
    return p;
}

Potential Potential::dipole_gas(double a) {
    if (!std::isfinite(a) || std::abs(a) >= 1.0) {
        std::ostringstream os;
        os << "dipole_gas activity a=" << a << " gives c_minus = 1-|a| <= 0";
        fail(ErrorKind::convexity, os.str());
    }
    Potential p;
    p.kind_ = Kind::dipole_gas;
    p.name_ = "dipole_gas";
    p.params_ = {{"a", a}};
    p.a_ = a;
    p.v_ = [a](double x) { return 0.5 * x * x + a * std::cos(x); };
    p.dv_ = [a](double x) { return x - a * std::sin(x); };
    p.d2v_ = [a](double x) { return 1.0 - a * std::cos(x); };
    p.c_minus_ = 1.0 - std::abs(a);
    p.c_plus_ = 1.0 + std::abs(a);
    return p;
}

Potential Potential::from_spec(const std::string& name, const Params& params) {
    if (name == "quadratic") {
        if (!params.empty()) fail(ErrorKind::config, "quadratic potential takes no parameters");
        return quadratic();
    }
    if (name == "dipole_gas") {
        if (params.size() != 1 || params[0].first != "a") {
            fail(ErrorKind::config, "dipole_gas needs exactly the parameter 'a'");
        }
        return dipole_gas(params[0].second);
    }
    fail(ErrorKind::config, "unknown potential '" + name + "'");
}

double Potential::param(const std::string& key) const {
    for (const auto& [k, v] : params_)
        if (k == key) return v;
    fail(ErrorKind::input, "potential " + name_ + " has no parameter " + key);
}

ValidationReport validate(const Potential& p, double grid_halfwidth, double grid_step) {
    if (!(grid_halfwidth > 0.0) || !(grid_step > 0.0)) {
        fail(ErrorKind::parameter, "validation grid needs positive half width and step");
    }
    constexpr double h = 1e-4;
    constexpr double bound = 1e-6;
    constexpr double sym_tol = 1e-12;

    ValidationReport rep;
    rep.min_second = std::numeric_limits<double>::infinity();
    rep.max_second = -std::numeric_limits<double>::infinity();
    rep.max_odd_defect = std::abs(p.dv(0.0));

    auto offending = [&](const char* what, double x) {
        std::ostringstream os;
        os.precision(17);
        os << p.name() << ": " << what << " at x=" << x;
        fail(ErrorKind::validation, os.str());
    };
    if (rep.max_odd_defect > sym_tol) offending("V'(0) != 0", 0.0);

    const auto steps = static_cast<std::int64_t>(std::floor(grid_halfwidth / grid_step + 1e-9));
    for (std::int64_t k = -steps; k <= steps; ++k) {
        const double x = double(k) * grid_step;
        ++rep.grid_points;

        const double vx = p.v(x);
        const double sym = std::abs(vx - p.v(-x));
        rep.max_symmetry_defect = std::max(rep.max_symmetry_defect, sym);
        if (sym > sym_tol * std::max(1.0, std::abs(vx))) offending("V(x) != V(-x)", x);

        const double d1 = p.dv(x);
        const double odd = std::abs(d1 + p.dv(-x));
        rep.max_odd_defect = std::max(rep.max_odd_defect, odd);
        if (odd > sym_tol * std::max(1.0, std::abs(d1))) offending("V' not odd", x);

        const double d2 = p.d2v(x);
        rep.min_second = std::min(rep.min_second, d2);
        rep.max_second = std::max(rep.max_second, d2);
        if (!(d2 >= p.c_minus() - 1e-12) || !(d2 <= p.c_plus() + 1e-12)) {
            offending("V'' outside [c_minus, c_plus]", x);
        }

        const double fd1 = (p.v(x + h) - p.v(x - h)) / (2.0 * h);
        const double e1 = std::abs(fd1 - d1) / std::max(1.0, std::abs(d1));
        rep.max_fd_error_first = std::max(rep.max_fd_error_first, e1);
        if (e1 > bound) offending("V' disagrees with central difference of V", x);

        const double fd2 = (p.dv(x + h) - p.dv(x - h)) / (2.0 * h);
        const double e2 = std::abs(fd2 - d2) / std::max(1.0, std::abs(d2));
        rep.max_fd_error_second = std::max(rep.max_fd_error_second, e2);
        if (e2 > bound) offending("V'' disagrees with central difference of V'", x);
    }
    rep.passed = true;
    return rep;
}

} // namespace glf
