#include <doctest.h>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "glfield/ensemble.hpp"
#include "glfield/errors.hpp"
#include "glfield/laplace.hpp"
#include "glfield/sampler.hpp"
#include "glfield/spectral.hpp"
#include "support.hpp"

using namespace glf;
using glf::testing::familywise_z;

namespace {

// Oracle: moments of the single interior site of the 3x3 box, density
// proportional to exp(-4 V(t)) since all four neighbours are pinned at 0.
double single_site_moment(const Potential& p, int k) {
    using boost::math::quadrature::gauss_kronrod;
    auto w = [&](double t) { return std::exp(-4.0 * p.v(t)); };
    const double z = gauss_kronrod<double, 61>::integrate(w, -15.0, 15.0, 12, 1e-14);
    const double m = gauss_kronrod<double, 61>::integrate([&](double t) { return std::pow(t, k) * w(t); }, -15.0,
                                                          15.0, 12, 1e-14);
    return m / z;
}

// Mean of f over a chain trace with a standard error from its own ESS.
struct ChainMean {
    double mean;
    double se;
};

ChainMean chain_mean(const std::vector<double>& x) {
    const auto d = analyze_trace(x);
    return {d.mean, std::sqrt(d.variance / d.ess)};
}

std::vector<double> powers(const std::vector<double>& x, int k) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::pow(x[i], k);
    return out;
}

std::vector<double> run_centre(const LatticeDomain& d, const Potential& p, SamplerConfig cfg, std::size_t sweeps,
                               Site site = {0, 0}) {
    FieldState s(d);
    Xoshiro256 rng(cfg.seed);
    for (int t = 0; t < 200; ++t) sweep(s, p, cfg, rng);
    std::vector<double> trace(sweeps);
    for (auto& v : trace) {
        sweep(s, p, cfg, rng);
        v = s.at(site);
    }
    return trace;
}

} // namespace

TEST_CASE("quadratic V on the 3x3 box: Metropolis variance of the center is 1/4") {
    SamplerConfig cfg;
    cfg.seed = 3;
    cfg.proposal_std = 0.9;
    const auto trace = run_centre(build_box(1), Potential::quadratic(), cfg, 1'000'000);
    const auto m = chain_mean(powers(trace, 2));
    CHECK(std::abs(m.mean - 0.25) <= 3.0 * m.se);
}

TEST_CASE("dipole gas on the 5x5 box: single-site means vanish") {
    const auto d = build_box(2);
    const auto p = Potential::dipole_gas(0.5);
    SamplerConfig cfg;
    cfg.seed = 17;
    cfg.proposal_std = 0.8;
    FieldState s(d);
    Xoshiro256 rng(cfg.seed);
    std::vector<std::vector<double>> traces(9);
    for (int t = 0; t < 400'000; ++t) {
        sweep(s, p, cfg, rng);
        for (int k = 0; k < 9; ++k) traces[std::size_t(k)].push_back(s.at({k / 3 - 1, k % 3 - 1}));
    }
    for (const auto& tr : traces) {
        const auto m = chain_mean(tr);
        CHECK(std::abs(m.mean) <= 4.0 * m.se);
    }
    CHECK(s.valid());
}

TEST_CASE("dipole gas on the 3x3 box: moments match the quadrature oracle") {
    const auto p = Potential::dipole_gas(0.5);
    const double m2 = single_site_moment(p, 2), m4 = single_site_moment(p, 4);
    for (Kernel k : {Kernel::metropolis, Kernel::heat_bath}) {
        CAPTURE(to_string(k));
        SamplerConfig cfg;
        cfg.kernel = k;
        cfg.seed = 101;
        cfg.proposal_std = 0.8;
        const auto trace = run_centre(build_box(1), p, cfg, 400'000);
        const auto a = chain_mean(powers(trace, 2)), b = chain_mean(powers(trace, 4));
        const double z = familywise_z(2);
        CHECK(std::abs(a.mean - m2) <= z * a.se);
        CHECK(std::abs(b.mean - m4) <= z * b.se);
    }
}

TEST_CASE("heat-bath draws on the 3x3 box pass a KS test against the quadrature CDF") {
    using boost::math::quadrature::gauss_kronrod;
    const auto p = Potential::dipole_gas(0.5);
    auto w = [&](double t) { return std::exp(-4.0 * p.v(t)); };
    const double z = gauss_kronrod<double, 61>::integrate(w, -15.0, 15.0, 12, 1e-14);
    // Tabulated CDF on a fine grid, linear in between.
    std::vector<double> grid, cdf;
    double acc = 0.0;
    for (double t = -8.0; t <= 8.0 + 1e-12; t += 0.01) {
        if (!grid.empty()) acc += gauss_kronrod<double, 15>::integrate(w, t - 0.01, t) / z;
        grid.push_back(t);
        cdf.push_back(acc);
    }
    auto F = [&](double t) {
        if (t <= grid.front()) return 0.0;
        if (t >= grid.back()) return 1.0;
        const auto k = std::size_t((t - grid.front()) / 0.01);
        const double f = (t - grid[k]) / 0.01;
        return cdf[k] + f * (cdf[k + 1] - cdf[k]);
    };

    SamplerConfig cfg;
    cfg.kernel = Kernel::heat_bath;
    cfg.seed = 5;
    auto x = run_centre(build_box(1), p, cfg, 200'000);
    std::sort(x.begin(), x.end());
    double dmax = 0.0;
    const double n = double(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = F(x[i]);
        dmax = std::max({dmax, std::abs(f - double(i) / n), std::abs(double(i + 1) / n - f)});
    }
    // Asymptotic KS critical value at significance 1e-3: sqrt(-log(5e-4)/2).
    CHECK(dmax * std::sqrt(n) <= std::sqrt(-0.5 * std::log(0.5e-3)));
}

TEST_CASE("checkerboard and sequential sweeps agree on 5x5 moments") {
    const auto d = build_box(2);
    const auto p = Potential::dipole_gas(0.5);
    std::vector<ChainMean> a, b;
    for (bool cb : {true, false}) {
        SamplerConfig cfg;
        cfg.checkerboard = cb;
        cfg.seed = cb ? 8 : 9;
        cfg.proposal_std = 0.8;
        FieldState s(d);
        Xoshiro256 rng(cfg.seed);
        std::vector<std::vector<double>> sq(9);
        for (int t = 0; t < 300'000; ++t) {
            sweep(s, p, cfg, rng);
            for (int k = 0; k < 9; ++k) {
                const double v = s.at({k / 3 - 1, k % 3 - 1});
                sq[std::size_t(k)].push_back(v * v);
            }
        }
        for (const auto& tr : sq) (cb ? a : b).push_back(chain_mean(tr));
    }
    const double z = familywise_z(9);
    for (std::size_t k = 0; k < 9; ++k) CHECK(std::abs(a[k].mean - b[k].mean) <= z * std::hypot(a[k].se, b[k].se));
}

TEST_CASE("quadratic chains reproduce the exact covariance on the 9x9 box") {
    const auto d = build_box(4);
    const auto p = Potential::quadratic();
    const DirichletOperator op(whole_domain(d));
    const auto interior = op.interior();
    const std::size_t n = interior.size();

    for (Kernel k : {Kernel::heat_bath, Kernel::hmc}) {
        CAPTURE(to_string(k));
        SamplerConfig cfg;
        cfg.kernel = k;
        cfg.seed = 77;
        cfg.n_samples = k == Kernel::hmc ? 60'000 : 40'000;
        cfg.sweeps_between_samples = k == Kernel::hmc ? 1 : 10;
        std::vector<std::vector<double>> fields(cfg.n_samples);
        run_chains(FieldState(d), p, cfg, [&](std::size_t i, const FieldState& f) {
            fields[i].resize(n);
            for (std::size_t j = 0; j < n; ++j) fields[i][j] = f[interior[j]];
        });
        // Per-pair products as traces; their chain ESS sets the error bars.
        double worst = 0.0;
        std::vector<double> prod(cfg.n_samples);
        for (std::size_t i = 0; i < n; i += 3) {
            const auto g = greens_column(op, d.site(interior[i]));
            for (std::size_t j = i; j < n; j += 2) {
                for (std::size_t s = 0; s < prod.size(); ++s) prod[s] = fields[s][i] * fields[s][j];
                const auto m = chain_mean(prod);
                worst = std::max(worst, std::abs(m.mean - g.values[j]) / m.se);
            }
        }
        std::size_t pairs = 0;
        for (std::size_t i = 0; i < n; i += 3)
            for (std::size_t j = i; j < n; j += 2) ++pairs;
        CHECK(worst <= familywise_z(pairs));
    }
}

TEST_CASE("HMC with quadratic V and kappa = 1 conserves energy to rounding") {
    const auto d = build_box(8);
    FieldState s(d);
    HmcKernel hmc(s, Potential::quadratic(), 8, std::numbers::pi / 2, 1.0);
    Xoshiro256 rng(4);
    for (int t = 0; t < 20; ++t) {
        CHECK(hmc.trajectory(s, rng));
        CHECK(std::abs(hmc.last_energy_error()) < 1e-8);
    }
    CHECK(s.valid());
}

TEST_CASE("HMC and heat-bath agree for the dipole gas on a 7x7 box") {
    const auto d = build_box(3);
    const auto p = Potential::dipole_gas(0.5);
    SamplerConfig h;
    h.kernel = Kernel::hmc;
    h.seed = 12;
    h.n_samples = 40'000;
    std::vector<double> hm(h.n_samples);
    const auto diag = run_chains(FieldState(d), p, h, [&](std::size_t i, const FieldState& f) {
        hm[i] = f.at({0, 0}) * f.at({0, 0});
    });
    CHECK(diag.acceptance > 0.8);

    SamplerConfig b;
    b.kernel = Kernel::heat_bath;
    b.seed = 13;
    const auto tr = run_centre(d, p, b, 200'000);
    const auto x = chain_mean(hm), y = chain_mean(powers(tr, 2));
    CHECK(std::abs(x.mean - y.mean) <= 3.0 * std::hypot(x.se, y.se));
}

TEST_CASE("sample_ensemble: quadratic V at N=16 matches gff_variance for every kernel") {
    const auto d = build_box(16);
    const double g00 = gff_variance(DirichletOperator(whole_domain(d)), {0, 0});
    for (Kernel k : {Kernel::exact, Kernel::hmc, Kernel::heat_bath, Kernel::metropolis}) {
        CAPTURE(to_string(k));
        SamplerConfig cfg;
        cfg.kernel = k;
        cfg.seed = 2024;
        const bool local = k == Kernel::heat_bath || k == Kernel::metropolis;
        cfg.n_samples = local ? 3000 : 4000;
        cfg.sweeps_between_samples = local ? 20 : 1;
        const auto store = sample_ensemble(d, Potential::quadratic(), cfg);
        std::vector<double> c2(store.count()), c1(store.count());
        for (std::size_t i = 0; i < store.count(); ++i) {
            c1[i] = store.field(i)[std::size_t(d.index({0, 0}))];
            c2[i] = c1[i] * c1[i];
        }
        const auto m1 = chain_mean(c1), m2 = chain_mean(c2);
        CHECK(std::abs(m1.mean) <= 4.0 * m1.se);
        CHECK(std::abs(m2.mean - g00) <= 3.0 * m2.se);
        const auto diag = diagnostics(store);
        CHECK(diag.center.ess <= double(store.count()) + 1e-9);
        CHECK(diag.center.ess > 100.0);
        for (std::size_t i = 0; i < store.count(); i += 97) CHECK(store.state(i).valid());
    }
}

TEST_CASE("sample_ensemble is deterministic and independent of the thread count") {
    const auto d = build_box(6);
    const auto p = Potential::dipole_gas(0.3);
    for (Kernel k : {Kernel::metropolis, Kernel::hmc, Kernel::exact}) {
        CAPTURE(to_string(k));
        SamplerConfig cfg;
        cfg.kernel = k;
        cfg.n_samples = 12;
        cfg.chains = 3;
        cfg.sweeps_burnin = 30;
        cfg.seed = 99;
        const Potential pot = k == Kernel::exact ? Potential::quadratic() : p;
        const auto a = sample_ensemble(d, pot, cfg);
        cfg.threads = 4;
        const auto b = sample_ensemble(d, pot, cfg);
        for (std::size_t i = 0; i < a.count(); ++i) {
            const auto fa = a.field(i), fb = b.field(i);
            CHECK(std::equal(fa.begin(), fa.end(), fb.begin()));
        }
    }
    // Threads inside one checkerboard sweep.
    SamplerConfig cfg;
    cfg.seed = 5;
    FieldState s1(d), s2(d);
    Xoshiro256 r1(1), r2(1);
    for (int t = 0; t < 20; ++t) {
        cfg.threads = 1;
        sweep(s1, p, cfg, r1);
        cfg.threads = 3;
        sweep(s2, p, cfg, r2);
    }
    CHECK(std::equal(s1.values().begin(), s1.values().end(), s2.values().begin()));
}

TEST_CASE("EnsembleStore round-trips bit-exactly and detects corruption") {
    const auto d = build_box(5);
    SamplerConfig cfg;
    cfg.kernel = Kernel::exact;
    cfg.n_samples = 7;
    cfg.seed = 31;
    const auto store = sample_ensemble(d, Potential::quadratic(), cfg);
    const auto path = std::filesystem::temp_directory_path() / "glfield_store_test.ens";
    store.write(path);
    const auto back = EnsembleStore::read(path);
    REQUIRE(back.count() == store.count());
    CHECK(back.header() == store.header());
    for (std::size_t i = 0; i < store.count(); ++i) {
        const auto a = store.field(i), b = back.field(i);
        CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
    }
    FileSource file(path, 2);
    std::vector<double> centre(file.count());
    file.visit([&](std::size_t i, const FieldState& f) { centre[i] = f.at({0, 0}); });
    for (std::size_t i = 0; i < store.count(); ++i) CHECK(centre[i] == store.field(i)[std::size_t(d.index({0, 0}))]);

    std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
    try {
        EnsembleStore::read(path);
        FAIL("expected an integrity error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::integrity);
        CHECK(std::string(e.what()).find(path.string()) != std::string::npos);
    }
    {
        std::ofstream junk(path, std::ios::binary | std::ios::trunc);
        junk << "not an ensemble";
    }
    CHECK_THROWS_AS(EnsembleStore::read(path), Error);
    std::filesystem::remove(path);
}

TEST_CASE("resample_subdomain: locality, Gaussian conditional mean, whole-interior consistency") {
    const auto d = build_box(6);
    const auto q = Potential::quadratic();
    FieldState base(d);
    Xoshiro256 rng(8);
    for (auto i : whole_domain(d).interior_indices()) base[i] = standard_normal(rng);

    const auto sub = sub_box(d, {1, 1}, 3);
    SamplerConfig local;
    local.seed = 4;
    local.sweeps_burnin = 50;
    const auto moved = resample_subdomain(base, sub, Potential::dipole_gas(0.4), local, rng);
    for (std::int64_t i = 0; i < d.size(); ++i) {
        const bool inside = sub.contains(i) && !sub.is_boundary(i);
        if (!inside) CHECK(moved[i] == base[i]);
    }
    CHECK(moved.valid());

    // Gaussian case: the conditional mean is the harmonic extension.
    const DirichletOperator op(sub);
    const auto h = harmonic_extension(op, base.values());
    const auto idx = sub.indices();
    for (Kernel k : {Kernel::exact, Kernel::heat_bath}) {
        CAPTURE(to_string(k));
        SamplerConfig cfg;
        cfg.kernel = k;
        cfg.sweeps_burnin = 60;
        const int reps = k == Kernel::exact ? 20000 : 3000;
        std::vector<std::vector<double>> vals(idx.size());
        Xoshiro256 g(11);
        for (int r = 0; r < reps; ++r) {
            const auto out = resample_subdomain(base, sub, q, cfg, g);
            for (std::size_t j = 0; j < idx.size(); ++j) vals[j].push_back(out[idx[j]]);
        }
        std::size_t inner = 0;
        double worst = 0.0;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            if (sub.boundary_flags()[j]) continue;
            ++inner;
            const auto m = testing::moments(vals[j]);
            worst = std::max(worst, std::abs(m.mean - h[j]) / std::sqrt(m.var / m.n));
        }
        CHECK(worst <= familywise_z(inner));
    }

    // Whole interior: same second moment at the center as direct draws.
    const auto all = whole_domain(d);
    SamplerConfig ex;
    ex.kernel = Kernel::exact;
    std::vector<double> a, b;
    Xoshiro256 g(12);
    const SpectralBox spec(d);
    for (int r = 0; r < 20000; ++r) {
        const auto f = resample_subdomain(FieldState(d), all, q, ex, g);
        a.push_back(f.at({0, 0}) * f.at({0, 0}));
        const auto e = spec.sample(g);
        b.push_back(e.at({0, 0}) * e.at({0, 0}));
    }
    const auto ma = testing::moments(a), mb = testing::moments(b);
    CHECK(std::abs(ma.mean - mb.mean) <= 3.0 * std::sqrt(ma.var / ma.n + mb.var / mb.n));
}

TEST_CASE("HMC with non-zero boundary data: the quadratic mean is harmonic") {
    const auto d = build_box(6);
    FieldState init(d);
    init.pin_boundary([](Site s) { return 0.3 * s.x1 - 0.1 * s.x2 + (s.x1 > 0 ? 1.0 : 0.0); });
    SamplerConfig cfg;
    cfg.kernel = Kernel::hmc;
    cfg.n_samples = 20000;
    cfg.seed = 6;
    const auto store = sample_ensemble(init, Potential::quadratic(), cfg);
    const DirichletOperator op(whole_domain(d));
    const auto h = harmonic_extension(op, init.values());
    const auto idx = op.set().indices();
    double worst = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < idx.size(); ++j) {
        if (d.on_boundary(d.site(idx[j]))) continue;
        std::vector<double> v(store.count());
        for (std::size_t i = 0; i < store.count(); ++i) v[i] = store.field(i)[std::size_t(idx[j])];
        const auto m = chain_mean(v);
        worst = std::max(worst, std::abs(m.mean - h[j]) / m.se);
        ++count;
    }
    CHECK(worst <= familywise_z(count));
    for (std::size_t i = 0; i < store.count(); i += 501) CHECK(store.state(i).valid());
}

TEST_CASE("sweep reports non-finite energies with the site") {
    const auto d = build_box(2);
    FieldState s(d);
    s.at({1, 0}) = std::numeric_limits<double>::infinity();
    SamplerConfig cfg;
    Xoshiro256 rng(1);
    try {
        sweep(s, Potential::quadratic(), cfg, rng);
        FAIL("expected a numerical error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::numerical);
        CHECK(std::string(e.what()).find("at site") != std::string::npos);
    }
}

TEST_CASE("trace diagnostics") {
    Xoshiro256 rng(2);
    std::vector<double> iid(20000);
    for (auto& x : iid) x = standard_normal(rng);
    const auto a = analyze_trace(iid);
    CHECK(std::abs(a.sum_autocorr) < 0.05);
    CHECK(a.ess == doctest::Approx(20000.0).epsilon(0.10));

    // Oracle: AR(1) with coefficient rho has tau_int = (1 + rho) / (1 - rho).
    std::vector<double> ar(400000);
    double x = 0.0;
    for (auto& v : ar) v = x = 0.9 * x + std::sqrt(1 - 0.81) * standard_normal(rng);
    const auto b = analyze_trace(ar);
    CHECK(b.tau_int == doctest::Approx(19.0).epsilon(0.15));
    CHECK(b.ess <= double(ar.size()));

    std::vector<double> flat(500, 2.0);
    try {
        analyze_trace(flat);
        FAIL("expected a degenerate-trace error");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::degenerate);
    }
    CHECK_THROWS_AS(analyze_trace(std::vector<double>(50, 1.0)), Error);
}

TEST_CASE("sampler config validation and json round trip") {
    SamplerConfig cfg;
    cfg.proposal_std = 0.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg.proposal_std = 101.0;
    CHECK_THROWS_AS(cfg.validate(), Error);
    cfg = SamplerConfig{};
    cfg.n_samples = 0;
    CHECK_THROWS_AS(cfg.validate(), Error);

    SamplerConfig c2;
    c2.kernel = Kernel::hmc;
    c2.seed = 12345678901234ULL;
    c2.hmc_kappa = 0.7;
    const auto back = sampler_config_from_json(to_json(c2));
    CHECK(to_json(back) == to_json(c2));
    CHECK_THROWS_AS(sampler_config_from_json(json{{"sweeps", 3}}), Error);
    CHECK(default_burnin(build_box(10), Potential::dipole_gas(0.5), Kernel::metropolis) >
          default_burnin(build_box(10), Potential::quadratic(), Kernel::metropolis));
}
