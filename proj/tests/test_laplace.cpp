#include <doctest.h>

#include <cmath>
#include <map>
#include <numbers>

#include "glfield/errors.hpp"
#include "glfield/laplace.hpp"
#include "glfield/spectral.hpp"
#include "support.hpp"

using namespace glf;
using glf::testing::familywise_z;

namespace {

double box_green_dense(int n, Site x, Site y) {
    const int m = 2 * n - 1;
    const auto inv = testing::dense_box_laplacian(n);
    const auto g = testing::dense_inverse(inv, std::size_t(m * m));
    const auto at = [&](Site s) { return std::size_t((s.x1 + n - 1) * m + (s.x2 + n - 1)); };
    return g[at(x) * std::size_t(m * m) + at(y)];
}

} // namespace

TEST_CASE("greens_column on the 3x3 box is 1/4") {
    const DirichletOperator op(whole_domain(build_box(1)));
    const auto g = greens_column(op, {0, 0});
    REQUIRE(g.values.size() == 1);
    CHECK(g.values[0] == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(gff_variance(op, {0, 0}) == doctest::Approx(0.25).epsilon(1e-14));
}

TEST_CASE("greens_column on the 5x5 box matches a dense inverse") {
    const double oracle = box_green_dense(2, {0, 0}, {0, 0});
    for (auto backend : {DirichletOperator::Backend::cholesky, DirichletOperator::Backend::cg}) {
        const DirichletOperator op(whole_domain(build_box(2)), backend);
        CHECK(gff_variance(op, {0, 0}) == doctest::Approx(oracle).epsilon(1e-12));
    }
    const SpectralBox spec(build_box(2));
    CHECK(spec.greens({0, 0}, {0, 0}) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(spec.greens({1, -1}, {0, 1}) == doctest::Approx(box_green_dense(2, {1, -1}, {0, 1})).epsilon(1e-12));
}

TEST_CASE("greens columns are symmetric, positive, and solve L g = e") {
    const auto d = build_box(6);
    for (auto backend : {DirichletOperator::Backend::cholesky, DirichletOperator::Backend::cg}) {
        const DirichletOperator op(whole_domain(d), backend);
        const auto gu = greens_column(op, {0, 1});
        const auto gv = greens_column(op, {1, 0});
        CHECK(std::abs(gu.at(d.index({1, 0})) - gv.at(d.index({0, 1}))) <= 1e-10);
        for (double v : gu.values) CHECK(v >= 0.0);
        CHECK(gu.at(d.index({0, 1})) > 0.0);

        std::vector<double> lg(op.interior_size());
        op.apply(gu.values, lg);
        double res = 0.0;
        for (std::size_t i = 0; i < lg.size(); ++i) {
            const double e = op.interior()[i] == d.index({0, 1}) ? 1.0 : 0.0;
            res = std::max(res, std::abs(lg[i] - e));
        }
        CHECK(res <= 1e-10);
    }
}

TEST_CASE("greens_column rejects non-interior sources") {
    const DirichletOperator op(whole_domain(build_box(3)));
    CHECK_THROWS_AS(greens_column(op, {3, 0}), Error);
    CHECK_THROWS_AS(greens_column(op, {9, 0}), Error);
}

TEST_CASE("spectral Green's function agrees with the sparse solvers") {
    const auto d = build_box(9);
    const SpectralBox spec(d);
    const DirichletOperator op(whole_domain(d), DirichletOperator::Backend::cg);
    for (Site s : {Site{0, 0}, Site{4, -7}, Site{-8, 8}}) {
        const auto g = greens_column(op, s);
        for (Site t : {Site{0, 0}, Site{1, 2}, Site{-8, 8}, Site{5, -6}})
            CHECK(spec.greens(s, t) == doctest::Approx(g.at(d.index(t))).epsilon(1e-9));
    }
}

TEST_CASE("harmonic_extension: constants and coordinates are reproduced") {
    const auto d = build_box(7);
    const auto set = sub_box(d, {1, -1}, 4);
    const DirichletOperator op(set);
    std::map<std::int64_t, double> bc, coord;
    for (auto b : set.boundary_indices()) {
        bc[b] = 2.5;
        coord[b] = d.site(b).x1;
    }
    const auto h = harmonic_extension(op, bc);
    for (double v : h) CHECK(v == doctest::Approx(2.5).epsilon(1e-12));
    const auto hx = harmonic_extension(op, coord);
    const auto idx = set.indices();
    for (std::size_t k = 0; k < idx.size(); ++k) CHECK(hx[k] == doctest::Approx(d.site(idx[k]).x1).epsilon(1e-12));

    bc.erase(bc.begin());
    CHECK_THROWS_AS(harmonic_extension(op, bc), Error);
}

TEST_CASE("harmonic_extension of random +-1 data matches a dense solve") {
    const auto d = build_box(2);
    const auto set = whole_domain(d);
    const DirichletOperator op(set);
    Xoshiro256 rng(7);
    std::map<std::int64_t, double> bc;
    std::vector<double> full(std::size_t(d.size()), 0.0);
    for (auto b : set.boundary_indices()) full[std::size_t(b)] = bc[b] = rng.uniform() < 0.5 ? -1.0 : 1.0;

    // Oracle: dense inverse of the 9x9 interior Laplacian times boundary coupling.
    const auto g = testing::dense_inverse(testing::dense_box_laplacian(2), 9);
    std::vector<double> rhs(9, 0.0);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            const Site s{i - 1, j - 1};
            for (Site nb : {Site{s.x1 + 1, s.x2}, Site{s.x1 - 1, s.x2}, Site{s.x1, s.x2 + 1}, Site{s.x1, s.x2 - 1}})
                if (d.on_boundary(nb)) rhs[std::size_t(i * 3 + j)] += full[std::size_t(d.index(nb))];
        }
    const auto h = harmonic_extension(op, bc);
    for (int r = 0; r < 9; ++r) {
        double expect = 0.0;
        for (int c = 0; c < 9; ++c) expect += g[std::size_t(r * 9 + c)] * rhs[std::size_t(c)];
        const Site s{r / 3 - 1, r % 3 - 1};
        const auto k = std::size_t(std::lower_bound(set.indices().begin(), set.indices().end(), d.index(s)) -
                                   set.indices().begin());
        CHECK(h[k] == doctest::Approx(expect).epsilon(1e-12));
    }
}

TEST_CASE("harmonic_extension is the identity on discrete harmonic fields") {
    const auto d = build_box(10);
    const auto set = l1_ball(d, {2, 1}, 7.5);
    const DirichletOperator op(set, DirichletOperator::Backend::cg);
    std::vector<double> field(std::size_t(d.size()));
    for (std::int64_t i = 0; i < d.size(); ++i) {
        const Site s = d.site(i);
        field[std::size_t(i)] = double(s.x1 * s.x1 - s.x2 * s.x2) + 3.0 * s.x1 * s.x2 - s.x2;
    }
    const auto h = harmonic_extension(op, std::span<const double>(field));
    const auto idx = set.indices();
    for (std::size_t k = 0; k < idx.size(); ++k)
        CHECK(std::abs(h[k] - field[std::size_t(idx[k])]) <= 1e-10 * 100.0);
}

TEST_CASE("harmonic_measure of the plus-shaped ball is uniform") {
    const auto d = build_box(3);
    const auto ball = l1_ball(d, {0, 0}, 1.5);
    const auto a = harmonic_measure(d, ball, {0, 0});
    REQUIRE(a.size() == 4);
    for (double w : a.weights) CHECK(w == doctest::Approx(0.25).epsilon(1e-12));
    CHECK_THROWS_AS(harmonic_measure(d, ball, {1, 0}), Error);
}

TEST_CASE("harmonic_measure sums to one and reproduces harmonic functions") {
    const auto d = build_box(40);
    for (double r : {2.5, 6.0, 13.7, 31.0}) {
        CAPTURE(r);
        const Site v{3, -4};
        const auto a = harmonic_measure(d, l1_ball(d, v, r), v);
        CHECK(std::abs(a.total() - 1.0) <= 1e-9);
        for (double w : a.weights) CHECK(w >= 0.0);
        std::vector<double> h(std::size_t(d.size()));
        for (std::int64_t i = 0; i < d.size(); ++i) {
            const Site s = d.site(i);
            h[std::size_t(i)] = double(s.x1) * s.x2 + double(s.x1 * s.x1 - s.x2 * s.x2) + 2.0;
        }
        CHECK(std::abs(a.apply(h) - h[std::size_t(d.index(v))]) <= 1e-9 * 50.0);
    }
}

TEST_CASE("harmonic_measure matches simple random walk exit frequencies") {
    const auto d = build_box(5);
    const auto ball = l1_ball(d, {0, 0}, 2.5);
    const auto a = harmonic_measure(d, ball, {0, 0});

    // Oracle: 10^6 simple random walks from the center until they hit the
    // ball's boundary ring |x|_1 = 2.
    constexpr int walks = 1'000'000;
    std::map<std::int64_t, int> hits;
    Xoshiro256 rng(2024);
    for (int w = 0; w < walks; ++w) {
        Site s{0, 0};
        do {
            switch (rng() & 3u) {
            case 0: ++s.x1; break;
            case 1: --s.x1; break;
            case 2: ++s.x2; break;
            default: --s.x2; break;
            }
        } while (!ball.is_boundary(d.index(s)));
        ++hits[d.index(s)];
    }
    const double z = familywise_z(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double p = a.weights[k];
        const double phat = double(hits[a.sites[k]]) / walks;
        CHECK(std::abs(phat - p) <= z * std::sqrt(p * (1 - p) / walks));
    }
}

TEST_CASE("sample_exact_gff: 3x3 variance and means") {
    const DirichletOperator op(whole_domain(build_box(1)));
    Xoshiro256 rng(11);
    std::vector<double> xs(100'000);
    for (auto& x : xs) x = sample_exact_gff(op, rng).at({0, 0});
    const auto m = testing::moments(xs);
    CHECK(std::abs(m.var - 0.25) <= 3.0 * 0.25 * std::sqrt(2.0 / (m.n - 1)));
    CHECK(std::abs(m.mean) <= 4.0 * std::sqrt(0.25 / m.n));
}

TEST_CASE("exact samplers reproduce the Green's covariance on the 9x9 box") {
    const auto d = build_box(4);
    const DirichletOperator op(whole_domain(d));
    const SpectralBox spec(d);
    const auto interior = op.interior();
    const std::size_t n = interior.size();
    constexpr int draws = 100'000;

    for (int route = 0; route < 2; ++route) {
        CAPTURE(route);
        Xoshiro256 rng(99 + route);
        std::vector<double> sum(n * n, 0.0), mean(n, 0.0);
        AlignedBuffer scratch;
        FieldState f(d);
        for (int s = 0; s < draws; ++s) {
            if (route == 0) f = sample_exact_gff(op, rng);
            else spec.sample_into(rng, f, scratch);
            CHECK_FALSE(!f.valid());
            for (std::size_t i = 0; i < n; ++i) {
                const double xi = f[interior[i]];
                mean[i] += xi;
                for (std::size_t j = i; j < n; ++j) sum[i * n + j] += xi * f[interior[j]];
            }
        }
        const double zc = familywise_z(n * (n + 1) / 2);
        const double zm = familywise_z(n);
        double worst = 0.0, worst_mean = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto gi = greens_column(op, d.site(interior[i]));
            worst_mean = std::max(worst_mean, std::abs(mean[i] / draws) / std::sqrt(gi.values[i] / draws));
            for (std::size_t j = i; j < n; ++j) {
                const double c = gi.values[j];
                const double gjj = spec.greens(d.site(interior[j]), d.site(interior[j]));
                const double se = std::sqrt((gi.values[i] * gjj + c * c) / draws);
                worst = std::max(worst, std::abs(sum[i * n + j] / draws - c) / se);
            }
        }
        CHECK(worst <= zc);
        CHECK(worst_mean <= zm);
    }
}

TEST_CASE("exact sampling is deterministic given the seed") {
    const auto d = build_box(6);
    const DirichletOperator op(whole_domain(d));
    Xoshiro256 a(5), b(5);
    const auto fa = sample_exact_gff(op, a);
    const auto fb = sample_exact_gff(op, b);
    CHECK(std::equal(fa.values().begin(), fa.values().end(), fb.values().begin()));
    const SpectralBox spec(d);
    Xoshiro256 c(5), e(5);
    const auto sa = spec.sample(c), sb = spec.sample(e);
    CHECK(std::equal(sa.values().begin(), sa.values().end(), sb.values().begin()));
    CHECK_THROWS_AS(sample_exact_gff(DirichletOperator(whole_domain(d), DirichletOperator::Backend::cg), a), Error);
}

TEST_CASE("gff_variance grows like log N with the exact-regression slope") {
    // Oracle route: spectral sums (independent of the sparse solvers).
    const int sizes[] = {16, 32, 64, 128};
    std::vector<double> lx, gs, gspec;
    for (int n : sizes) {
        const auto d = build_box(n);
        const DirichletOperator op(whole_domain(d), DirichletOperator::Backend::cg);
        gs.push_back(gff_variance(op, {0, 0}));
        gspec.push_back(SpectralBox(d).greens({0, 0}, {0, 0}));
        lx.push_back(std::log(double(n)));
    }
    for (std::size_t i = 0; i < gs.size(); ++i) CHECK(gs[i] == doctest::Approx(gspec[i]).epsilon(1e-9));
    for (std::size_t i = 1; i < gs.size(); ++i) CHECK(gs[i] > gs[i - 1]);

    double mx = 0, my = 0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        mx += lx[i] / 4;
        my += gs[i] / 4;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        sxy += (lx[i] - mx) * (gs[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
    }
    const double slope = sxy / sxx;
    MESSAGE("exact slope of G(0,0) against log N: " << slope);
    CHECK(slope == doctest::Approx(1.0 / (2.0 * std::numbers::pi)).epsilon(0.05));
}
