#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "catlab/gibbs.hpp"
#include "catlab/markov.hpp"
#include "catlab/refmeas.hpp"
#include "catlab/rng.hpp"
#include "catlab/skew.hpp"
#include "catlab/statutil.hpp"

using namespace catlab;

namespace {

const double kTau = 2.0 * std::numbers::pi;

SkewSystem coupled_sys() {
    return SkewSystem(make_automorphism({2, 1, 1, 1}), {0.5, 0.05, 0.0});
}
SkewSystem product_sys() {
    return SkewSystem(make_automorphism({2, 1, 1, 1}), {0.5, 0.0, 0.0});
}

MPoint band_anchor(const SkewSystem& sys, const MarkovPartition& P, int i, Rng& rng) {
    for (int t = 0; t < 1000; ++t) {
        const MPoint seed{{rng.next_unit(), rng.next_unit()}, rng.next_unit()};
        const MPoint z = sys.apply(seed, 60);
        if (P.locate(z.x) == i) return z;
    }
    throw std::runtime_error("no anchor found");
}

double cos_theta(const MPoint& p) { return std::cos(kTau * p.theta); }
double sin_x1(const MPoint& p) { return std::sin(kTau * p.x.x1); }

}  // namespace

TEST_CASE("orbit clouds reproduce the structural marginals") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(201);
    auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    auto m = estimate_mu(sys, P, src, 30000, 350, 50, rng);

    double wsum = 0.0;
    for (double w : m.weights) {
        CHECK(w >= 0.0);
        wsum += w;
    }
    CHECK(std::abs(wsum - 1.0) < 1e-12);
    CHECK(m.size() >= 30000);

    // base marginal is Haar on the torus
    std::vector<Pt2> base;
    base.reserve(m.size());
    for (const auto& p : m.points) base.push_back({p.x.x1, p.x.x2});
    CHECK(ks2d_uniform(base) < 0.02);

    // rectangle masses match the areas
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const std::vector<double> areas{1 / (phi + 2), 1 / (phi + 2),
                                    (1 / phi) / (phi + 2), (1 / phi) / (phi + 2),
                                    (2 - phi) / (phi + 2)};
    for (int i = 0; i < P.size(); ++i)
        CHECK(std::abs(rectangle_mass(m, P, i) - areas[static_cast<std::size_t>(i)]) <
              0.01);

    // independent seed, independent source plaque, same integrals
    Rng rng2(503);
    auto src2 = make_reference_measure(sys, P, 3, band_anchor(sys, P, 3, rng2));
    auto m2 = estimate_mu(sys, P, src2, 30000, 350, 50, rng2);
    auto e1 = integrate(m, cos_theta, rng);
    auto e2 = integrate(m2, cos_theta, rng2);
    const double sigma = std::sqrt(e1.se * e1.se + e2.se * e2.se);
    CHECK(std::abs(e1.value - e2.value) < 3 * sigma);
    // the coupled attractor keeps the fiber tightly around 0
    CHECK(e1.value > 0.9);
}

TEST_CASE("uncoupled clouds collapse onto the invariant circle") {
    auto P = builtin_cat_partition();
    auto sys = product_sys();
    Rng rng(203);
    auto src = make_reference_measure(sys, P, 1, {P.chart_point(1, 0.2, 0.4), 0.23});
    auto m = estimate_mu(sys, P, src, 10000, 150, 50, rng);
    double mabs = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k)
        mabs += m.weights[k] * std::abs(circ_delta(m.points[k].theta, 0.0));
    CHECK(mabs < 0.01);
    auto e = integrate(m, cos_theta, rng);
    CHECK(std::abs(e.value - 1.0) < 0.01);
}

TEST_CASE("integration plumbing") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(205);
    auto src = make_reference_measure(sys, P, 2, band_anchor(sys, P, 2, rng));
    auto m = estimate_mu(sys, P, src, 20000, 250, 50, rng);

    auto ones = integrate(m, [](const MPoint&) { return 1.0; }, rng);
    CHECK(ones.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(ones.se < 1e-12);

    auto sx = integrate(m, sin_x1, rng);
    CHECK(std::abs(sx.value) < std::max(3 * sx.se, 0.02));

    // invariance under composition with the map
    auto e = integrate(m, cos_theta, rng);
    auto ef = integrate(
        m, [&](const MPoint& p) { return cos_theta(sys.step(p)); }, rng);
    const double sigma = std::sqrt(e.se * e.se + ef.se * ef.se) + 1e-4;
    CHECK(std::abs(e.value - ef.value) < 3 * sigma);

    CHECK_THROWS_AS(estimate_mu(sys, P, src, 0, 100, 50, rng), std::invalid_argument);
    CHECK_THROWS_AS(estimate_mu(sys, P, src, 10, 50, 50, rng), std::invalid_argument);
}

TEST_CASE("averaged pushforwards agree with orbit sections") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(207);
    auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    auto quick = estimate_mu(sys, P, src, 20000, 250, 50, rng);
    auto cesaro = estimate_mu_cesaro(sys, P, src, 4000, 120, 50, rng);
    CHECK(cesaro.size() == 4000);
    auto e1 = integrate(quick, cos_theta, rng);
    auto e2 = integrate(cesaro, cos_theta, rng);
    const double sigma = std::sqrt(e1.se * e1.se + e2.se * e2.se);
    CHECK(std::abs(e1.value - e2.value) < 3 * sigma + 0.005);
}

TEST_CASE("reference densities are a fixed point of the push") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    auto s = make_density_state(P, 0, 5, [](double) { return 0.0; }, 0.0);
    CHECK(density_mass(P, s) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(measured_holder_constant(s) < 1e-12);

    auto branches = push_density(sys, P, s);
    REQUIRE(branches.size() == 3);  // rectangle 0 reaches 0, 1, 2
    double total = 0.0;
    for (const auto& [w, t] : branches) {
        total += w;
        CHECK(t.holder_bound == 0.0);
        CHECK(t.depth == 4);
        CHECK(density_mass(P, t) == doctest::Approx(1.0).epsilon(1e-12));
        for (double v : t.log_density) CHECK(std::abs(v) < 1e-12);
        CHECK(std::abs(w - P.subcylinder_weight(0, t.rect)) < 1e-12);
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("pushing contracts the measured regularity constant") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(211);
    const double lam = P.automorphism().lambda_u;
    for (int trial = 0; trial < 20; ++trial) {
        const double a = (rng.next_unit() - 0.5) * 4.0;
        const int rect = static_cast<int>(rng.next_below(5));
        auto s = make_density_state(
            P, rect, 6, [&](double u) { return a * u; }, std::abs(a));
        const double measured_in = measured_holder_constant(s);
        CHECK(measured_in <= std::abs(a) * (1 + 1e-9));
        CHECK(density_mass(P, s) == doctest::Approx(1.0).epsilon(1e-10));

        for (const auto& [w, t] : push_density(sys, P, s)) {
            CHECK(w > 0.0);
            // base arc lengths stretch by lambda_u, so midpoint increments of
            // the reindexed density shrink by exactly that factor
            CHECK(measured_holder_constant(t) <= measured_in / lam * (1 + 1e-9));
            CHECK(t.holder_bound ==
                  doctest::Approx(std::abs(a) * sys.omega()).epsilon(1e-12));
            CHECK(density_mass(P, t) == doctest::Approx(1.0).epsilon(1e-10));
        }
    }

    auto shallow = make_density_state(P, 0, 1, [](double) { return 0.3; }, 0.0);
    CHECK_THROWS_AS(push_density(sys, P, shallow), std::length_error);
}

TEST_CASE("support is saturated along unstable plaques") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(213);
    auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    auto m = estimate_mu(sys, P, src, 20000, 250, 50, rng);

    int hits = 0, probes = 0;
    for (int t = 0; t < 200 && probes < 20; ++t) {
        const std::size_t k = rng.next_below(m.size());
        const MPoint& p = m.points[k];
        const int i = P.locate(p.x);
        if (i < 0) continue;
        const EigenCoords c = P.chart_coords(i, p.x);
        const double Lu = P.rect(i).Lu;
        double u2 = c.u + 0.3 * Lu;
        if (u2 > 0.99 * Lu) u2 = c.u - 0.3 * Lu;
        if (u2 < 0.01 * Lu) continue;
        ++probes;
        auto leaf = make_leaf_frame(sys, p);
        const TorusPoint b2 = P.chart_point(i, u2, c.s);
        const MPoint q{b2, leaf_fiber_at(sys, leaf, b2)};
        double dmin = 1e9;
        for (const auto& r : m.points)
            dmin = std::min(dmin, torus_dist(q.x, r.x) + circ_dist(q.theta, r.theta));
        if (dmin < 0.04) ++hits;
    }
    REQUIRE(probes == 20);
    CHECK(hits >= 17);
}
