#include "glfield/harmonic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <numbers>
#include <shared_mutex>
#include <sstream>

#include "glfield/errors.hpp"
#include "glfield/laplace.hpp"
#include "glfield/rng.hpp"
#include "glfield/simd/kernels.hpp"

namespace glf {

namespace {

// Harmonic measure of the l1 ball {|x|_1 <= k} seen from its centre, as flat
// offsets for one domain side length.
struct Stencil {
    std::vector<std::int64_t> offsets;
    std::vector<Site> shifts;
    std::vector<double> weights;
};

class StencilCache {
public:
    std::shared_ptr<const Stencil> get(int side, int k) {
        const std::pair<int, int> key{side, k};
        {
            std::shared_lock lock(mutex_);
            if (auto it = by_side_.find(key); it != by_side_.end()) return it->second;
        }
        auto base = measure(k);
        auto st = std::make_shared<Stencil>();
        st->shifts = base->shifts;
        st->weights = base->weights;
        st->offsets.reserve(st->shifts.size());
        for (Site s : st->shifts) st->offsets.push_back(std::int64_t(s.x1) * side + s.x2);
        std::unique_lock lock(mutex_);
        // First writer wins; a concurrent duplicate is identical anyway.
        return by_side_.try_emplace(key, std::move(st)).first->second;
    }

    std::size_t size() {
        std::shared_lock lock(mutex_);
        return measures_.size();
    }

private:
    std::shared_ptr<const Stencil> measure(int k) {
        {
            std::shared_lock lock(mutex_);
            if (auto it = measures_.find(k); it != measures_.end()) return it->second;
        }
        auto st = std::make_shared<Stencil>();
        if (k == 0) {
            st->shifts = {Site{0, 0}};
            st->weights = {1.0};
        } else {
            // Smallest box holding the ball; translation invariance does the rest.
            const LatticeDomain box(k);
            const auto w = harmonic_measure(box, l1_ball(box, {0, 0}, double(k + 1)), {0, 0});
            for (std::size_t i = 0; i < w.size(); ++i) {
                st->shifts.push_back(box.site(w.sites[i]));
                st->weights.push_back(w.weights[i]);
            }
        }
        std::unique_lock lock(mutex_);
        return measures_.try_emplace(k, std::move(st)).first->second;
    }

    std::shared_mutex mutex_;
    std::map<int, std::shared_ptr<const Stencil>> measures_;
    std::map<std::pair<int, int>, std::shared_ptr<const Stencil>> by_side_;
};

StencilCache& cache() {
    static StencilCache c;
    return c;
}

// B_r(v) = {|x - v|_1 < r} = {|x - v|_1 <= k}.
int ball_order(double r) {
    if (!(r > 0.0) || !std::isfinite(r)) fail(ErrorKind::parameter, "circle radius must be positive and finite");
    return std::max(0, int(std::ceil(r)) - 1);
}

std::string site_text(Site v) {
    std::ostringstream os;
    os << "(" << v.x1 << ", " << v.x2 << ")";
    return os.str();
}

void require_inside(const LatticeDomain& d, Site v, int k, double r) {
    if (!d.contains(v) || std::abs(v.x1) + k > d.half_width() || std::abs(v.x2) + k > d.half_width()) {
        std::ostringstream os;
        os << "ball of radius " << r << " at " << site_text(v) << " leaves D_" << d.half_width();
        fail(ErrorKind::geometry, os.str());
    }
}

void require_field(const LatticeDomain& d, std::span<const double> field) {
    if (std::int64_t(field.size()) != d.size()) fail(ErrorKind::input, "field size does not match the domain");
}

double apply_stencil(const Stencil& st, std::span<const double> field, std::int64_t centre) {
    return simd::active().gather_dot(field.data() + centre, st.offsets.data(), st.weights.data(), st.offsets.size());
}

std::string fmt(double x) {
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

} // namespace

SmoothingWindow::SmoothingWindow(double radius_, double width_) : radius(radius_), width(width_) {
    if (!(radius > 0.0) || !std::isfinite(radius)) fail(ErrorKind::parameter, "window radius must be positive");
    if (!(width > 0.0 && width < 1.0)) fail(ErrorKind::parameter, "window width must lie in (0, 1)");
    const double half = width * radius;
    const int lo = std::max(1, int(std::ceil((1.0 - width) * radius)));
    const int hi = int(std::floor((1.0 + width) * radius));
    if (lo > hi) {
        fail(ErrorKind::parameter, "window [" + fmt((1.0 - width) * radius) + ", " + fmt((1.0 + width) * radius) +
                                       "] holds no integer radius");
    }
    double total = 0.0;
    for (int r = lo; r <= hi; ++r) {
        const double f = 1.0 + std::cos(std::numbers::pi * (double(r) - radius) / (half + 1.0));
        radii.push_back(r);
        weights.push_back(f);
        total += f;
    }
    for (auto& f : weights) f /= total;
}

double circle_average(const LatticeDomain& domain, std::span<const double> field, Site v, double r) {
    require_field(domain, field);
    const int k = ball_order(r);
    require_inside(domain, v, k, r);
    const auto st = cache().get(domain.side(), k);
    return apply_stencil(*st, field, domain.index(v));
}

double circle_average(const FieldState& field, Site v, double r) {
    return circle_average(field.domain(), field.values(), v, r);
}

HarmonicWeights circle_kernel(const LatticeDomain& domain, Site v, double r) {
    const int k = ball_order(r);
    require_inside(domain, v, k, r);
    const auto st = cache().get(domain.side(), k);
    std::vector<std::pair<std::int64_t, double>> terms;
    for (std::size_t i = 0; i < st->shifts.size(); ++i)
        terms.emplace_back(domain.index({v.x1 + st->shifts[i].x1, v.x2 + st->shifts[i].x2}), st->weights[i]);
    return make_weights(domain, std::move(terms), "harmonic_measure");
}

double smoothed_average(const LatticeDomain& domain, std::span<const double> field, Site v,
                        const SmoothingWindow& window) {
    require_field(domain, field);
    require_inside(domain, v, window.outer() - 1, double(window.outer()));
    const std::int64_t centre = domain.index(v);
    double x = 0.0;
    for (std::size_t i = 0; i < window.radii.size(); ++i) {
        const auto st = cache().get(domain.side(), ball_order(double(window.radii[i])));
        x += window.weights[i] * apply_stencil(*st, field, centre);
    }
    return x;
}

double smoothed_average(const FieldState& field, Site v, const SmoothingWindow& window) {
    return smoothed_average(field.domain(), field.values(), v, window);
}

HarmonicWeights smoothed_kernel(const LatticeDomain& domain, Site v, const SmoothingWindow& window) {
    require_inside(domain, v, window.outer() - 1, double(window.outer()));
    std::vector<std::pair<std::int64_t, double>> terms;
    for (std::size_t i = 0; i < window.radii.size(); ++i) {
        const auto st = cache().get(domain.side(), ball_order(double(window.radii[i])));
        for (std::size_t j = 0; j < st->shifts.size(); ++j)
            terms.emplace_back(domain.index({v.x1 + st->shifts[j].x1, v.x2 + st->shifts[j].x2}),
                               window.weights[i] * st->weights[j]);
    }
    return make_weights(domain, std::move(terms), "x_kernel");
}

SmoothingWindow ScaleSchedule::window(int k, int sign) const {
    if (k < 0 || k > M) fail(ErrorKind::parameter, "schedule index out of range");
    const double rad = sign > 0 ? r_plus[std::size_t(k)] : r_minus[std::size_t(k)];
    return SmoothingWindow(rad, std::min(0.999, std::max(width, 1.0 / rad)));
}

ScaleSchedule build_schedule(double delta, double eps, double c, double width) {
    if (!(eps > 0.0 && eps <= 0.2)) fail(ErrorKind::parameter, "eps must lie in (0, 0.2]");
    if (!(c > 0.0 && c < 1.0)) fail(ErrorKind::parameter, "c must lie in (0, 1)");
    if (!(delta >= (1.0 + eps) * (1.0 + eps)) || !std::isfinite(delta)) {
        fail(ErrorKind::parameter, "Delta must be at least (1 + eps)^2");
    }
    if (width == 0.0) width = std::pow(eps, 4);
    if (!(width > 0.0 && width < 1.0)) fail(ErrorKind::parameter, "window width must lie in (0, 1)");

    ScaleSchedule s;
    s.delta = delta;
    s.eps = eps;
    s.c = c;
    s.width = width;
    s.M = int(std::floor((1.0 - c) * std::log(delta) / std::log1p(eps)));
    if (s.M < 1) fail(ErrorKind::parameter, "schedule has no scales (M < 1)");
    const double e3 = eps * eps * eps;
    for (int k = 0; k <= s.M; ++k) {
        const double rk = delta * std::pow(1.0 + eps, -double(k));
        s.r.push_back(rk);
        s.r_plus.push_back((1.0 + e3) * rk);
        s.r_minus.push_back((1.0 - e3) * rk);
    }
    for (int k = 0; k < s.M; ++k) {
        if (!((1.0 + 2.0 * width) * s.r[std::size_t(k) + 1] < (1.0 - 2.0 * width) * s.r[std::size_t(k)])) {
            fail(ErrorKind::parameter, "windows of consecutive scales overlap at k = " + std::to_string(k));
        }
    }
    return s;
}

int block_index(int m, int K, int M) { return int((std::int64_t(m) * M) / K); }

ScaleAverages scale_averages(const FieldState& field, Site v, const ScaleSchedule& s) {
    ScaleAverages a;
    for (int k = 0; k <= s.M; ++k) {
        a.plus.push_back(smoothed_average(field, v, s.window(k, +1)));
        a.minus.push_back(smoothed_average(field, v, s.window(k, -1)));
    }
    return a;
}

std::vector<double> increments(const FieldState& field, Site v, const ScaleSchedule& s, int K) {
    if (K < 2) fail(ErrorKind::parameter, "K must be at least 2");
    if (K > s.M) fail(ErrorKind::parameter, "K = " + std::to_string(K) + " exceeds M = " + std::to_string(s.M));
    std::vector<double> u(static_cast<std::size_t>(K));
    double prev = smoothed_average(field, v, s.window(0, -1));
    for (int m = 1; m <= K; ++m) {
        const int i = block_index(m, K, s.M);
        u[std::size_t(m - 1)] = smoothed_average(field, v, s.window(i, +1)) - prev;
        if (m < K) prev = smoothed_average(field, v, s.window(i, -1));
    }
    return u;
}

double Telescoping::identity_residual() const {
    const std::size_t M = log_z.size() - 1;
    double sum = log_base;
    for (std::size_t j = 1; j <= M; ++j) sum += log_w[j];
    for (std::size_t j = 1; j < M; ++j) sum += log_y[j];
    return std::abs(log_z[M] - sum) / std::max(1.0, std::abs(log_z[M]));
}

Telescoping telescoping_values(const FieldState& field, Site v, const ScaleSchedule& s, double t) {
    if (!(std::abs(t) <= 100.0)) fail(ErrorKind::parameter, "|t| must be at most 100");
    const auto a = scale_averages(field, v, s);
    Telescoping out;
    out.t = t;
    const std::size_t n = std::size_t(s.M) + 1;
    out.log_w.assign(n, 0.0);
    out.log_y.assign(n, 0.0);
    out.log_z.assign(n, 0.0);
    out.log_base = t * a.minus[0];
    for (std::size_t j = 1; j < n; ++j) {
        out.log_w[j] = t * (a.plus[j] - a.minus[j - 1]);
        out.log_y[j] = t * (a.minus[j] - a.plus[j]);
        out.log_z[j] = t * a.plus[j];
    }
    auto expo = [&](const std::vector<double>& l) {
        std::vector<double> e(l.size());
        for (std::size_t j = 0; j < l.size(); ++j) {
            e[j] = std::exp(l[j]);
            if (!std::isfinite(e[j])) out.overflow = true;
        }
        e[0] = 1.0;
        return e;
    };
    out.w = expo(out.log_w);
    out.y = expo(out.log_y);
    out.z = expo(out.log_z);
    return out;
}

HarmonicWeights increment_kernel(const LatticeDomain& domain, Site v, const SmoothingWindow& outer,
                                 const SmoothingWindow& inner) {
    const double w = std::max(outer.width, inner.width);
    const double r1 = outer.radius, r2 = inner.radius;
    if (!domain.contains(v) || !((1.0 + 2.0 * w) * r1 < double(dist_to_boundary(domain, v)))) {
        fail(ErrorKind::parameter, "outer window at R1 = " + fmt(r1) + " reaches the boundary from " + site_text(v));
    }
    if (!((1.0 + 2.0 * w) * r2 < (1.0 - 2.0 * w) * r1)) {
        fail(ErrorKind::parameter, "windows not nested: R2 = " + fmt(r2) + ", R1 = " + fmt(r1));
    }
    auto rho = combine(smoothed_kernel(domain, v, inner), 1.0, smoothed_kernel(domain, v, outer), -1.0);
    rho.construction = "increment_kernel";
    return rho;
}

std::vector<FieldState> harmonic_test_family(const LatticeDomain& domain, std::uint64_t seed) {
    using Poly = double (*)(double, double);
    const Poly polys[] = {
        [](double, double) { return 1.0; },
        [](double a, double) { return a; },
        [](double, double b) { return b; },
        [](double a, double b) { return a * b; },
        [](double a, double b) { return a * a - b * b; },
        [](double a, double b) { return a * a * a - 3.0 * a * b * b; },
        [](double a, double b) { return 3.0 * a * a * b - b * b * b; },
    };
    std::vector<FieldState> out;
    for (Poly p : polys) {
        FieldState f(domain);
        for (std::int64_t i = 0; i < domain.size(); ++i) {
            const Site s = domain.site(i);
            f[i] = p(double(s.x1), double(s.x2));
        }
        out.push_back(std::move(f));
    }
    const DirichletOperator op(whole_domain(domain));
    const auto idx = op.set().indices();
    Xoshiro256 rng(seed);
    for (int k = 0; k < 5; ++k) {
        FieldState f(domain);
        f.pin_boundary([&](Site) { return standard_normal(rng); });
        const auto h = harmonic_extension(op, f.values());
        for (std::size_t j = 0; j < idx.size(); ++j) f[idx[j]] = h[j];
        out.push_back(std::move(f));
    }
    return out;
}

double annihilation_error(const HarmonicWeights& rho, const std::vector<FieldState>& family) {
    const double l1 = rho.l1_norm();
    if (l1 == 0.0) return 0.0;
    double worst = 0.0;
    for (const auto& h : family) {
        double sup = 0.0;
        for (double x : h.values()) sup = std::max(sup, std::abs(x));
        if (sup > 0.0) worst = std::max(worst, std::abs(rho.apply(h)) / (sup * l1));
    }
    return worst;
}

std::size_t harmonic_cache_size() { return cache().size(); }

} // namespace glf
