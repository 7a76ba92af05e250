#include "glfield/stats.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "glfield/errors.hpp"
#include "glfield/rng.hpp"
#include "glfield/sampler.hpp"

namespace glf {

namespace {

const boost::math::normal& std_normal() {
    static const boost::math::normal n;
    return n;
}

std::size_t below(Xoshiro256& rng, std::size_t n) {
    return std::size_t((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

} // namespace

double familywise_z(std::size_t m) {
    if (m == 0) m = 1;
    const double alpha = -std::expm1(std::log1p(-0.0026997960632601866) / double(m));
    return boost::math::quantile(boost::math::complement(std_normal(), alpha / 2.0));
}

double mean(std::span<const double> x) {
    if (x.empty()) fail(ErrorKind::input, "mean of an empty sample");
    double s = 0.0;
    for (double v : x) s += v;
    return s / double(x.size());
}

double variance(std::span<const double> x) {
    if (x.size() < 2) fail(ErrorKind::input, "variance needs at least two values");
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return s / double(x.size() - 1);
}

double quantile(std::vector<double> x, double q) {
    if (x.empty()) fail(ErrorKind::input, "quantile of an empty sample");
    std::sort(x.begin(), x.end());
    const double pos = std::clamp(q, 0.0, 1.0) * double(x.size() - 1);
    const auto lo = std::size_t(std::floor(pos));
    const auto hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (pos - double(lo)) * (x[hi] - x[lo]);
}

double median(std::vector<double> x) { return quantile(std::move(x), 0.5); }

ShapeMoments shape_moments(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 8) fail(ErrorKind::input, "shape moments need at least 8 values");
    ShapeMoments s;
    s.n = n;
    s.mean = mean(x);
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - s.mean, d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= double(n);
    m3 /= double(n);
    m4 /= double(n);
    if (!(m2 > 0.0)) fail(ErrorKind::degenerate, "shape moments of a constant sample");
    s.variance = m2 * double(n) / double(n - 1);
    s.skewness = m3 / std::pow(m2, 1.5);
    s.excess_kurtosis = m4 / (m2 * m2) - 3.0;
    const double nn = double(n);
    s.skewness_se = std::sqrt(6.0 * nn * (nn - 1.0) / ((nn - 2.0) * (nn + 1.0) * (nn + 3.0)));
    s.kurtosis_se = 2.0 * s.skewness_se * std::sqrt((nn * nn - 1.0) / ((nn - 3.0) * (nn + 5.0)));
    return s;
}

BootstrapResult bootstrap(std::size_t n, const IndexStatistic& stat, std::uint64_t seed, int resamples,
                          double level) {
    if (n < 2) fail(ErrorKind::input, "bootstrap needs at least two rows");
    if (resamples < 10) fail(ErrorKind::parameter, "bootstrap needs at least 10 resamples");
    BootstrapResult r;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    r.value = stat(idx);
    Xoshiro256 rng(seed);
    r.replicates.reserve(std::size_t(resamples));
    for (int b = 0; b < resamples; ++b) {
        for (auto& i : idx) i = below(rng, n);
        r.replicates.push_back(stat(idx));
    }
    const double B = double(resamples);
    const double m = std::accumulate(r.replicates.begin(), r.replicates.end(), 0.0) / B;
    double ss = 0.0, below_count = 0.0;
    for (double v : r.replicates) {
        ss += (v - m) * (v - m);
        below_count += v < r.value ? 1.0 : (v == r.value ? 0.5 : 0.0);
    }
    r.se = std::sqrt(ss / (B - 1.0));
    const double p0 = std::clamp(below_count / B, 0.5 / B, 1.0 - 0.5 / B);
    const double z0 = boost::math::quantile(std_normal(), p0);
    const double za = boost::math::quantile(std_normal(), 0.5 * (1.0 - level));
    const double plo = boost::math::cdf(std_normal(), 2.0 * z0 + za);
    const double phi = boost::math::cdf(std_normal(), 2.0 * z0 - za);
    r.lo = quantile(r.replicates, plo);
    r.hi = quantile(r.replicates, phi);
    return r;
}

BootstrapResult bootstrap(std::span<const double> x, const std::function<double(std::span<const double>)>& stat,
                          std::uint64_t seed, int resamples, double level) {
    std::vector<double> buf(x.size());
    return bootstrap(
        x.size(),
        [&](std::span<const std::size_t> idx) {
            for (std::size_t i = 0; i < idx.size(); ++i) buf[i] = x[idx[i]];
            return stat(buf);
        },
        seed, resamples, level);
}

LinearFit weighted_fit(std::span<const double> x, std::span<const double> y, std::span<const double> var) {
    const std::size_t n = x.size();
    if (n < 2 || y.size() != n || var.size() != n) fail(ErrorKind::input, "fit needs matching x, y, var (n >= 2)");
    double sw = 0.0, sx = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(var[i] > 0.0)) fail(ErrorKind::input, "fit variances must be positive");
        const double w = 1.0 / var[i];
        sw += w;
        sx += w * x[i];
        sy += w * y[i];
    }
    const double xb = sx / sw, yb = sy / sw;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 1.0 / var[i];
        sxx += w * (x[i] - xb) * (x[i] - xb);
        sxy += w * (x[i] - xb) * (y[i] - yb);
    }
    if (!(sxx > 0.0)) fail(ErrorKind::degenerate, "fit needs at least two distinct x values");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = yb - f.slope * xb;
    f.slope_se = std::sqrt(1.0 / sxx);
    f.intercept_se = std::sqrt(1.0 / sw + xb * xb / sxx);
    for (std::size_t i = 0; i < n; ++i) {
        const double r = y[i] - f.intercept - f.slope * x[i];
        f.chi2 += r * r / var[i];
    }
    f.dof = int(n) - 2;
    return f;
}

LinearFit ordinary_fit(std::span<const double> x, std::span<const double> y) {
    std::vector<double> ones(x.size(), 1.0);
    auto f = weighted_fit(x, y, ones);
    // Unit weights: scale the SEs by the residual variance.
    if (f.dof > 0) {
        const double s = std::sqrt(f.chi2 / f.dof);
        f.slope_se *= s;
        f.intercept_se *= s;
    }
    return f;
}

LogMeanExp log_mean_exp(std::span<const double> x, double t) {
    if (x.empty()) fail(ErrorKind::input, "log-mean-exp of an empty sample");
    std::vector<double> a(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) a[i] = t * x[i];
    const double mx = *std::max_element(a.begin(), a.end());
    std::vector<double> e(a.size());
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) total += e[i] = std::exp(a[i] - mx);
    LogMeanExp r;
    r.value = mx + std::log(total / double(x.size()));
    const std::size_t top = std::max<std::size_t>(1, x.size() / 100);
    std::nth_element(e.begin(), e.begin() + std::ptrdiff_t(top - 1), e.end(), std::greater<>());
    double head = 0.0;
    for (std::size_t i = 0; i < top; ++i) head += e[i];
    r.tail_weight = head / total;
    return r;
}

double ks_statistic(std::vector<double> x, const std::function<double(double)>& cdf) {
    if (x.empty()) fail(ErrorKind::input, "KS statistic of an empty sample");
    std::sort(x.begin(), x.end());
    const double n = double(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, f - double(i) / n, double(i + 1) / n - f});
    }
    return d;
}

double integrated_time(std::span<const double> x, int chains) {
    if (chains < 1) chains = 1;
    const std::size_t c = std::size_t(chains);
    double ess = 0.0;
    std::size_t total = 0;
    for (std::size_t k = 0; k < c; ++k) {
        std::vector<double> t;
        for (std::size_t i = k; i < x.size(); i += c) t.push_back(x[i]);
        total += t.size();
        try {
            const auto d = analyze_trace(t);
            ess += double(d.n) / std::max(1.0, d.tau_int);
        } catch (const Error&) {
            ess += double(t.size());
        }
    }
    return ess > 0.0 ? std::max(1.0, double(total) / ess) : 1.0;
}

double correlation(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 3) fail(ErrorKind::input, "correlation needs matching samples (n >= 3)");
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (!(sxx > 0.0 && syy > 0.0)) fail(ErrorKind::degenerate, "correlation of a constant sample");
    return sxy / std::sqrt(sxx * syy);
}

} // namespace glf
