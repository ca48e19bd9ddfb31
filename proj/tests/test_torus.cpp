#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "catlab/rng.hpp"
#include "catlab/torus.hpp"

using namespace catlab;

TEST_CASE("wrap and circle distances") {
    CHECK(wrap(0.25) == 0.25);
    CHECK(wrap(-0.25) == 0.75);
    CHECK(wrap(1.0) == 0.0);
    CHECK(wrap(-3.0) == 0.0);
    CHECK(wrap(2.5) == 0.5);
    CHECK(wrap(-1e-18) == 0.0);  // floor edge collapses to the same circle point
    CHECK_THROWS_AS(wrap(std::nan("")), std::invalid_argument);
    CHECK_THROWS_AS(wrap(INFINITY), std::invalid_argument);
    CHECK(circ_dist(0.1, 0.9) == doctest::Approx(0.2).epsilon(1e-15));
    CHECK(circ_dist(0.0, 0.5) == doctest::Approx(0.5));
    CHECK(circ_delta(0.1, 0.9) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(circ_delta(0.9, 0.1) == doctest::Approx(-0.2).epsilon(1e-12));
    CHECK(torus_dist({0.9, 0.1}, {0.1, 0.9}) == doctest::Approx(std::sqrt(0.08)).epsilon(1e-12));
}

TEST_CASE("scalar multiplication mod one is exact on dyadics") {
    Rng rng(7);
    for (int t = 0; t < 5000; ++t) {
        const std::uint64_t j = rng.next_below(std::uint64_t{1} << 20);
        const double x = std::ldexp(static_cast<double>(j), -20);
        const auto m = static_cast<std::int64_t>(rng.next_u64()) >> 3;
        __int128 prod = static_cast<__int128>(m) * static_cast<std::int64_t>(j);
        const __int128 mod = static_cast<__int128>(1) << 20;
        __int128 r = prod % mod;
        if (r < 0) r += mod;
        const double expect = std::ldexp(static_cast<double>(static_cast<long long>(r)), -20);
        REQUIRE(mul_mod1(m, x) == expect);
    }
}

TEST_CASE("scalar multiplication mod one, small cases and bounds") {
    CHECK(mul_mod1(3, 0.75) == 0.25);
    CHECK(mul_mod1(-1, 0.25) == 0.75);
    CHECK(mul_mod1(0, 0.9) == 0.0);
    Rng rng(13);
    for (int t = 0; t < 2000; ++t) {
        const double x = rng.next_unit();
        CHECK(mul_mod1(1, x) == x);
        const double got = mul_mod1(5, x);
        CHECK(got >= 0.0);
        CHECK(got < 1.0);
        CHECK(circ_dist(got, wrap(5.0 * x)) < 1e-14);
        const double big = mul_mod1(1000000000000000000LL, x);
        CHECK(big >= 0.0);
        CHECK(big < 1.0);
    }
    CHECK_THROWS_AS(mul_mod1(2, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(mul_mod1(2, -0.1), std::invalid_argument);
}

TEST_CASE("hyperbolic matrix spectra") {
    const double s5 = std::sqrt(5.0);
    auto A = make_automorphism({2, 1, 1, 1});
    CHECK(A.lambda_u == doctest::Approx((3.0 + s5) / 2.0).epsilon(1e-14));
    CHECK(A.lambda_s == doctest::Approx((3.0 - s5) / 2.0).epsilon(1e-13));
    CHECK(A.lambda_u * A.lambda_s == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(A.eu[0] * A.es[0] + A.eu[1] * A.es[1]) < 1e-14);  // symmetric matrix
    CHECK(A.eu[0] / A.eu[1] == doctest::Approx((1.0 + s5) / 2.0).epsilon(1e-13));
    CHECK(A.eu[0] * A.eu[0] + A.eu[1] * A.eu[1] == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(A.es[0] * A.es[0] + A.es[1] * A.es[1] == doctest::Approx(1.0).epsilon(1e-14));

    auto F = make_automorphism({1, 1, 1, 0});
    CHECK(F.lambda_u == doctest::Approx((1.0 + s5) / 2.0).epsilon(1e-14));
    CHECK(F.lambda_s == doctest::Approx((1.0 - s5) / 2.0).epsilon(1e-13));
    CHECK(F.det == -1);
}

TEST_CASE("degenerate matrices are rejected") {
    CHECK_THROWS_WITH_AS(make_automorphism({1, 1, 0, 1}),
                         "not Anosov: eigenvalues are not real and distinct",
                         std::domain_error);
    CHECK_THROWS_AS(make_automorphism({1, 0, 0, 1}), std::domain_error);
    CHECK_THROWS_AS(make_automorphism({0, 1, -1, 0}), std::domain_error);  // rotation
    CHECK_THROWS_AS(make_automorphism({0, 1, 1, 0}), std::domain_error);   // swap, |eigenvalues| = 1
    CHECK_THROWS_AS(make_automorphism({2, 0, 0, 1}), std::invalid_argument);
}

TEST_CASE("eigencoordinate round trip") {
    auto A = make_automorphism({2, 1, 1, 1});
    Rng rng(21);
    for (int t = 0; t < 1000; ++t) {
        const double px = rng.next_range(-3, 3), py = rng.next_range(-3, 3);
        auto c = A.to_eigen(px, py);
        auto back = A.from_eigen(c);
        CHECK(std::abs(back[0] - px) < 1e-12);
        CHECK(std::abs(back[1] - py) < 1e-12);
    }
    // the expanding direction scales by lambda_u under the matrix
    auto c = A.to_eigen(A.eu[0], A.eu[1]);
    CHECK(c.u == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(c.s == doctest::Approx(0.0));
}

TEST_CASE("integer matrix powers") {
    const Mat2i A{2, 1, 1, 1};
    auto A2 = mat_pow(A, 2);
    CHECK(A2.a == 5);
    CHECK(A2.b == 3);
    CHECK(A2.c == 3);
    CHECK(A2.d == 2);
    auto Ainv = mat_pow(A, -1);
    CHECK(Ainv.a == 1);
    CHECK(Ainv.b == -1);
    CHECK(Ainv.c == -1);
    CHECK(Ainv.d == 2);
    auto I = mat_mul(A, Ainv);
    CHECK(I.a == 1);
    CHECK(I.b == 0);
    CHECK(I.c == 0);
    CHECK(I.d == 1);
    CHECK_THROWS_AS(mat_pow(A, 200), std::overflow_error);
    CHECK_THROWS_AS(mat_pow(Mat2i{2, 0, 0, 3}, -1), std::domain_error);
}

TEST_CASE("torus automorphism orbits") {
    auto A = make_automorphism({2, 1, 1, 1});
    const TorusPoint p{0.3, 0.7};
    auto q1 = apply_auto(A, p, 1);
    CHECK(circ_dist(q1.x1, wrap(2 * 0.3 + 0.7)) < 1e-15);
    CHECK(circ_dist(q1.x2, wrap(0.3 + 0.7)) < 1e-15);

    // inverse round trip stays tight because each chunk is exact to a few ulp
    Rng rng(31);
    for (int t = 0; t < 200; ++t) {
        const TorusPoint z{rng.next_unit(), rng.next_unit()};
        auto fwd = apply_auto(A, z, 7);
        auto back = apply_auto(A, fwd, -7);
        CHECK(circ_dist(back.x1, z.x1) < 1e-12);
        CHECK(circ_dist(back.x2, z.x2) < 1e-12);
    }

    // long horizons split into chunks instead of overflowing
    auto far = apply_auto(A, p, 200);
    CHECK(far.x1 >= 0.0);
    CHECK(far.x1 < 1.0);
    auto far2 = apply_auto(A, p, 200);
    CHECK(far.x1 == far2.x1);  // bit-identical recomputation
    CHECK(far.x2 == far2.x2);

    // chunk composition follows the same code path as one long call
    auto once = apply_auto(A, p, 37);
    auto twice = apply_auto(A, apply_auto(A, p, 32), 5);
    CHECK(once.x1 == twice.x1);
    CHECK(once.x2 == twice.x2);

    // fixed points of the map: the origin
    auto o = apply_auto(A, {0.0, 0.0}, 5);
    CHECK(o.x1 == 0.0);
    CHECK(o.x2 == 0.0);
}
