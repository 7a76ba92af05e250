#include <doctest.h>

#include <algorithm>
#include <set>

#include "glfield/errors.hpp"
#include "glfield/lattice.hpp"

using namespace glf;

TEST_CASE("build_box counts sites, boundary and interior") {
    const auto d1 = build_box(1);
    CHECK(d1.size() == 9);
    CHECK(whole_domain(d1).boundary_indices().size() == 8);
    CHECK(d1.interior_size() == 1);

    const auto d2 = build_box(2);
    CHECK(d2.size() == 25);
    CHECK(whole_domain(d2).boundary_indices().size() == 16);
    CHECK(whole_domain(d2).interior_indices().size() == 9);

    CHECK(build_box(64).size() == 129 * 129);
    CHECK(build_box(2048).size() == 4097LL * 4097LL);
}

TEST_CASE("build_box rejects sizes outside the documented range") {
    CHECK_THROWS_AS(build_box(0), Error);
    CHECK_THROWS_AS(build_box(LatticeDomain::max_half_width + 1), Error);
    try {
        build_box(-3);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::size);
    }
}

TEST_CASE("site indexing is a row-major bijection") {
    const auto d = build_box(5);
    std::set<std::int64_t> seen;
    std::int64_t expected = 0;
    for (int a = -5; a <= 5; ++a)
        for (int b = -5; b <= 5; ++b) {
            const auto i = d.index({a, b});
            CHECK(i == expected++);
            CHECK(d.site(i) == Site{a, b});
            seen.insert(i);
        }
    CHECK(std::int64_t(seen.size()) == d.size());
}

TEST_CASE("boundary ring and interior neighbours") {
    const auto d = build_box(6);
    const auto all = whole_domain(d);
    for (int a = -6; a <= 6; ++a)
        for (int b = -6; b <= 6; ++b) {
            const Site s{a, b};
            CHECK(all.is_boundary(d.index(s)) == d.on_boundary(s));
            CHECK((dist_to_boundary(d, s) == 0) == d.on_boundary(s));
            if (!d.on_boundary(s)) {
                int inside = 0;
                for (Site nb : {Site{a + 1, b}, Site{a - 1, b}, Site{a, b + 1}, Site{a, b - 1}})
                    inside += d.contains(nb) ? 1 : 0;
                CHECK(inside == 4);
            }
        }
}

TEST_CASE("dist_to_boundary examples") {
    const auto d = build_box(10);
    CHECK(dist_to_boundary(d, {0, 0}) == 10);
    CHECK(dist_to_boundary(d, {10, 3}) == 0);
    CHECK(dist_to_boundary(d, {7, -9}) == 1);
}

TEST_CASE("l1_ball examples") {
    const auto d = build_box(4);
    const auto plus = l1_ball(d, {0, 0}, 1.5);
    CHECK(plus.size() == 5);
    const auto arms = plus.boundary_indices();
    CHECK(arms.size() == 4);
    CHECK(!plus.is_boundary(d.index({0, 0})));
    for (Site s : {Site{1, 0}, Site{-1, 0}, Site{0, 1}, Site{0, -1}}) CHECK(plus.is_boundary(d.index(s)));

    const auto single = l1_ball(d, {0, 0}, 1.0);
    CHECK(single.size() == 1);
    CHECK(single.indices()[0] == d.index({0, 0}));

    // Oracle: brute-force enumeration of |x|_1 <= 2 over the whole box.
    std::size_t brute = 0;
    for (int a = -4; a <= 4; ++a)
        for (int b = -4; b <= 4; ++b) brute += (std::abs(a) + std::abs(b) < 2.5) ? 1 : 0;
    CHECK(brute == 13);
    CHECK(l1_ball(d, {0, 0}, 2.5).size() == brute);
}

TEST_CASE("l1_ball geometry errors") {
    const auto d = build_box(4);
    CHECK_THROWS_AS(l1_ball(d, {3, 0}, 2.5), Error);
    CHECK_NOTHROW(l1_ball(d, {3, 0}, 2.0));  // reaches (4,0), still inside
    CHECK_NOTHROW(l1_ball(d, {0, 0}, 5.0));  // |x|_1 <= 4 fits exactly
    CHECK_THROWS_AS(l1_ball(d, {0, 0}, 5.5), Error);
}

TEST_CASE("l1_ball is monotone in the radius") {
    const auto d = build_box(20);
    const Site c{3, -2};
    for (double r = 0.5; r < 17.0; r += 0.75) {
        const auto small = l1_ball(d, c, r);
        const auto big = l1_ball(d, c, r + 0.6);
        for (auto i : small.indices()) CHECK(big.contains(i));
        // Every member satisfies the strict inequality, and vice versa.
        for (auto i : small.indices()) CHECK(l1_norm(d.site(i), c) < r);
    }
}

TEST_CASE("sub-boxes and inset domains") {
    const auto d = build_box(8);
    const auto box = sub_box(d, {2, 2}, 3);
    CHECK(box.size() == 49);
    CHECK(box.boundary_indices().size() == 24);
    CHECK_THROWS_AS(sub_box(d, {6, 0}, 3), Error);

    const auto inner = inset_domain(d, 2);  // dist > 2  <=>  |x|_inf <= 5
    CHECK(inner.size() == 11 * 11);
    for (auto i : inner.indices()) CHECK(dist_to_boundary(d, d.site(i)) > 2);
    CHECK_THROWS_AS(inset_domain(d, 8), Error);
}
