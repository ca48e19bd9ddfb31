#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "catlab/gibbs.hpp"
#include "catlab/hitting.hpp"
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
SkewSystem isometric_sys() {
    return SkewSystem(make_automorphism({2, 1, 1, 1}), {0.0, 0.05, 0.3819660113});
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

// number of admissible words of length n+1 from i to j, by integer matrix power
std::int64_t path_count(const MarkovPartition& P, int i, int j, int n) {
    const int sz = P.size();
    std::vector<std::int64_t> row(static_cast<std::size_t>(sz), 0);
    row[static_cast<std::size_t>(i)] = 1;
    for (int t = 0; t < n; ++t) {
        std::vector<std::int64_t> next(static_cast<std::size_t>(sz), 0);
        for (int a = 0; a < sz; ++a) {
            if (row[static_cast<std::size_t>(a)] == 0) continue;
            for (int b = 0; b < sz; ++b)
                if (P.trans(a, b)) next[static_cast<std::size_t>(b)] += row[static_cast<std::size_t>(a)];
        }
        row = std::move(next);
    }
    return row[static_cast<std::size_t>(j)];
}

double ks1d_uniform(std::vector<double> v, double lo, double hi) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double ks = 0.0;
    for (std::size_t k = 0; k < v.size(); ++k) {
        const double f = (v[k] - lo) / (hi - lo);
        ks = std::max(ks, std::fabs(f - static_cast<double>(k) / n));
        ks = std::max(ks, std::fabs(f - static_cast<double>(k + 1) / n));
    }
    return ks;
}

}  // namespace

TEST_CASE("section hits stay on the point's own plaque") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(31);
    const CrossSection S{0, 0.4 * P.rect(0).Lu};
    for (int trial = 0; trial < 40; ++trial) {
        const MPoint z = band_anchor(sys, P, 0, rng);
        const MPoint q = section_hit(sys, P, S, z);
        const EigenCoords cz = P.chart_coords(0, z.x);
        const EigenCoords cq = P.chart_coords(0, q.x);
        CHECK(std::fabs(cq.u - S.u) < 1e-12);
        CHECK(std::fabs(cq.s - cz.s) < 1e-12);
        // fiber moves at most Lipschitz-slope times the slide distance
        const double lip = sys.leaf_lipschitz();
        CHECK(circ_dist(q.theta, z.theta) <= lip * std::fabs(cz.u - S.u) + 1e-5);
    }

    // a point already on the section projects to itself
    const MPoint z0 = band_anchor(sys, P, 0, rng);
    const EigenCoords c0 = P.chart_coords(0, z0.x);
    const MPoint on{P.chart_point(0, S.u, c0.s), z0.theta};
    const MPoint q0 = section_hit(sys, P, S, on);
    CHECK(torus_dist(q0.x, on.x) < 1e-12);
    CHECK(circ_dist(q0.theta, on.theta) < 1e-5);

    CHECK_THROWS_AS(section_hit(sys, P, CrossSection{0, -0.1}, z0), std::invalid_argument);
    CHECK_THROWS_AS(section_hit(sys, P, CrossSection{9, 0.1}, z0), std::invalid_argument);
    const MPoint outside = band_anchor(sys, P, 3, rng);
    CHECK_THROWS_AS(section_hit(sys, P, S, outside), std::invalid_argument);
}

TEST_CASE("exact hits enumerate the admissible words") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(32);
    const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    const CrossSection S{2, 0.55 * P.rect(2).Lu};

    for (int n = 1; n <= 9; ++n) {
        const auto pts = hit_points_exact(sys, P, src, S, n);
        CHECK(static_cast<std::int64_t>(pts.size()) == path_count(P, 0, 2, n));
        for (const MPoint& q : pts) {
            const EigenCoords cq = P.chart_coords(2, q.x);
            CHECK(std::fabs(cq.u - S.u) < 1e-8);  // affine bookkeeping survives the push
            CHECK(cq.s >= -1e-9);
            CHECK(cq.s <= P.rect(2).Ls + 1e-9);
        }
    }

    // inadmissible one-step pair: rectangle 0 never maps across rectangle 3
    CHECK(hit_points_exact(sys, P, src, CrossSection{3, 0.1}, 1).empty());
    CHECK(P.first_connection(0, 3, 8) > 1);

    // intersection counts grow at the topological-entropy rate
    const double lam = P.automorphism().lambda_u;
    const auto c11 = static_cast<double>(path_count(P, 0, 2, 11));
    const auto c12 = static_cast<double>(path_count(P, 0, 2, 12));
    CHECK(std::fabs(c12 / c11 - lam) / lam < 0.05);

    const auto series = hit_exact(sys, P, src, CrossSection{3, 0.1}, cos_theta, 1, 3);
    CHECK(series.counts[0] == 0.0);
    CHECK(!std::isfinite(series.averages[0]));
    CHECK(series.counts[1] > 0.0);
    CHECK(std::isfinite(series.averages[1]));

    CHECK_THROWS_AS(hit_points_exact(sys, P, src, S, 17), std::invalid_argument);
    CHECK_THROWS_AS(hit_points_exact(sys, P, src, S, 0), std::invalid_argument);
    CHECK_THROWS_AS(hit_exact(sys, P, src, S, cos_theta, 3, 2), std::invalid_argument);
}

TEST_CASE("hitting averages converge for the uncoupled fiber") {
    auto P = builtin_cat_partition();
    auto sys = product_sys();
    Rng rng(33);
    MPoint anchor = band_anchor(sys, P, 0, rng);
    anchor.theta = 0.1;  // start the fiber off its attractor so the gap is visible
    const auto src = make_reference_measure(sys, P, 0, anchor);
    const CrossSection S{1, 0.5 * P.rect(1).Lu};

    const auto series = hit_exact(sys, P, src, S, cos_theta, 2, 14);
    const double last = series.averages.back();
    CHECK(std::fabs(last - 1.0) < 0.01);

    const RateFit fit = rate_fit(series.n_values, series.averages, 1.0, 1e-12);
    CHECK(fit.slope < -0.4);
    CHECK(fit.slope > -0.75);
    CHECK(fit.r2 > 0.95);
    CHECK(fit.n_used >= 10);
}

TEST_CASE("monte carlo hits agree with the enumeration") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(34);
    const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    const CrossSection S{2, 0.55 * P.rect(2).Lu};
    const int n = 10;

    const auto pts = hit_points_exact(sys, P, src, S, n);
    double exact = 0.0;
    for (const MPoint& q : pts) exact += cos_theta(q);
    exact /= static_cast<double>(pts.size());

    const McEstimate mc = hit_mc(sys, P, src, S, cos_theta, n, 200000, rng);
    CHECK(mc.hits > 10000);
    CHECK(mc.se > 0.0);
    CHECK(std::fabs(mc.average - exact) < 3.0 * mc.se + 1e-3);

    // landing frequency approximates the rectangle mass of the target
    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const double area2 = (1.0 / phi) / (phi + 2.0);
    const double p_hat = static_cast<double>(mc.hits) / static_cast<double>(mc.samples);
    CHECK(std::fabs(p_hat - area2) < 0.01);

    const McEstimate unit = hit_mc(sys, P, src, S, [](const MPoint&) { return 1.0; }, n, 5000, rng);
    CHECK(unit.average == 1.0);

    CHECK_THROWS_AS(hit_mc(sys, P, src, CrossSection{3, 0.1}, cos_theta, 1, 2000, rng),
                    std::domain_error);
    CHECK_THROWS_AS(hit_mc(sys, P, src, S, cos_theta, 0, 10, rng), std::invalid_argument);
}

TEST_CASE("rate fits recover synthetic decay and flag converged series") {
    std::vector<int> ns;
    std::vector<double> avgs;
    for (int n = 1; n <= 12; ++n) {
        ns.push_back(n);
        avgs.push_back(0.4 + 3.0 * std::pow(0.7, n));
    }
    const RateFit fit = rate_fit(ns, avgs, 0.4, 1e-9);
    CHECK(std::fabs(fit.slope - std::log10(0.7)) < 1e-9);
    CHECK(std::fabs(std::pow(10.0, fit.intercept) - 3.0) < 1e-6);
    CHECK(fit.r2 > 1.0 - 1e-12);
    CHECK(fit.n_used == 12);

    // leading NaN entries (below the first-connection depth) are skipped
    std::vector<int> ns2 = {1, 2};
    std::vector<double> avgs2 = {std::nan(""), std::nan("")};
    for (int n = 3; n <= 9; ++n) {
        ns2.push_back(n);
        avgs2.push_back(0.4 + 3.0 * std::pow(0.7, n));
    }
    const RateFit fit2 = rate_fit(ns2, avgs2, 0.4, 1e-9);
    CHECK(std::fabs(fit2.slope - std::log10(0.7)) < 1e-9);
    CHECK(fit2.n_used == 7);

    std::vector<double> flat(12, 0.4 + 1e-13);
    const RateFit conv = rate_fit(ns, flat, 0.4, 1e-6);
    CHECK(conv.already_converged);

    std::vector<double> mixed = avgs;
    for (std::size_t k = 4; k < mixed.size(); ++k) mixed[k] = 0.4;  // only four usable points
    CHECK_THROWS_AS(rate_fit(ns, mixed, 0.4, 1e-9), std::invalid_argument);
    CHECK_THROWS_AS(rate_fit(ns, avgs, 0.4, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(rate_fit({1, 2}, avgs, 0.4, 1e-9), std::invalid_argument);
}

TEST_CASE("transverse estimates carry the rectangle mass with uniform cross profile") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(36);
    const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    const auto m = estimate_mu(sys, P, src, 60000, 350, 50, rng);
    const CrossSection S{0, 0.3 * P.rect(0).Lu};
    const auto est = estimate_transverse(sys, P, m, S);

    const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
    const double area0 = 1.0 / (phi + 2.0);
    CHECK(std::fabs(est.total_mass - area0) < 0.01);
    CHECK(est.c == 1.0 / P.rect(0).Lu);
    CHECK(est.points.size() > 10000);

    for (std::size_t k = 0; k < est.points.size(); k += 97) {
        const EigenCoords c = P.chart_coords(0, est.points[k].x);
        CHECK(std::fabs(c.u - S.u) < 1e-9);
        CHECK(std::fabs(c.s - est.s_coords[k]) < 1e-12);
    }

    CHECK(ks1d_uniform(est.s_coords, 0.0, P.rect(0).Ls) < 0.02);

    // weighted fiber mean through the functional interface
    const double mcos = transverse_mean(est, cos_theta);
    CHECK(mcos > 0.9);
    CHECK(mcos <= 1.0);

    // a cloud that never visits the section rectangle cannot be projected
    EmpiricalMeasure off;
    for (int t = 0; t < 5; ++t) {
        off.points.push_back(band_anchor(sys, P, 3, rng));
        off.weights.push_back(0.2);
    }
    CHECK_THROWS_AS(estimate_transverse(sys, P, off, S), std::domain_error);
}

TEST_CASE("exact hitting averages approach the transverse mean") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(37);
    const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    const auto m = estimate_mu(sys, P, src, 60000, 350, 50, rng);
    const CrossSection S{2, 0.55 * P.rect(2).Lu};
    const auto est = estimate_transverse(sys, P, m, S);
    const double limit = transverse_mean(est, cos_theta);

    // the exact averages stabilize to far better than the Monte Carlo error of
    // the transverse mean (about 5e-4 at this cloud size), so the cross-check
    // is at the cloud's resolution and the rate fit runs against the exact
    // series' own settled value
    const auto series = hit_exact(sys, P, src, S, cos_theta, 1, 12);
    CHECK(std::fabs(series.averages.back() - limit) < 3e-3);

    const double settled = series.averages.back();
    std::vector<int> head_n(series.n_values.begin(), series.n_values.end() - 3);
    std::vector<double> head_avg(series.averages.begin(), series.averages.end() - 3);
    const RateFit fit = rate_fit(head_n, head_avg, settled, 1e-6);
    CHECK(fit.slope < -0.05);
    CHECK(fit.r2 > 0.9);
    CHECK(fit.n_used >= 5);
}

TEST_CASE("leaf crossings pick up every translate of a section") {
    auto P = builtin_cat_partition();
    Rng rng(38);
    const CrossSection S{1, 0.5 * P.rect(1).Lu};

    // crossing times of nearby base points interleave consistently: the leaf
    // through a point on the section itself reports t = 0 when the window
    // allows it, and shifting the window drops exactly that crossing
    const TorusPoint on = P.chart_point(1, S.u, 0.3 * P.rect(1).Ls);
    const auto with_zero = crossings_along_leaf(P, on, S, -1e-6, 8.0);
    REQUIRE(!with_zero.empty());
    CHECK(std::fabs(with_zero.front().t) < 1e-9);
    CHECK(std::fabs(with_zero.front().s - 0.3 * P.rect(1).Ls) < 1e-9);
    const auto without_zero = crossings_along_leaf(P, on, S, 1e-6, 8.0);
    CHECK(without_zero.size() == with_zero.size() - 1);

    // average crossing spacing along a long window is 1/Ls (unit-area torus)
    const TorusPoint b{rng.next_unit(), rng.next_unit()};
    const double span = 200.0;
    const auto many = crossings_along_leaf(P, b, S, 0.0, span);
    REQUIRE(many.size() > 50);
    for (std::size_t k = 0; k + 1 < many.size(); ++k) CHECK(many[k].t < many[k + 1].t);
    const double expected = span * P.rect(1).Ls;
    CHECK(std::fabs(static_cast<double>(many.size()) - expected) / expected < 0.05);

    // s-values fill the segment evenly
    std::vector<double> svals;
    for (const auto& c : many) svals.push_back(c.s);
    CHECK(ks1d_uniform(svals, 0.0, P.rect(1).Ls) < 0.1);

    CHECK_THROWS_AS(crossings_along_leaf(P, b, S, 2.0, 1.0), std::invalid_argument);
}

TEST_CASE("transverse family is holonomy invariant in absolute normalization") {
    auto P = builtin_cat_partition();
    auto sys = coupled_sys();
    Rng rng(39);
    const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
    const auto m = estimate_mu(sys, P, src, 100000, 350, 50, rng);

    const CrossSection S1{0, 0.35 * P.rect(0).Lu};
    const CrossSection S2{2, 0.6 * P.rect(2).Lu};
    const auto e1 = estimate_transverse(sys, P, m, S1);
    const auto e2 = estimate_transverse(sys, P, m, S2);

    // cross-rectangle holonomy: rectangles 0 and 2 have different plaque
    // lengths, so the c constants matter here
    const auto hc = check_holonomy_invariance(sys, P, e1, e2, 12.0, 10);
    CHECK(hc.pairs_pushed > 3000);
    CHECK(hc.pairs_kept > 3000);
    CHECK(hc.ks < 0.04);
    CHECK(hc.ratio_spread < 0.12);

    // same-rectangle slide
    const CrossSection S1b{0, 0.7 * P.rect(0).Lu};
    const auto e1b = estimate_transverse(sys, P, m, S1b);
    const auto hc2 = check_holonomy_invariance(sys, P, e1, e1b, 12.0, 10);
    CHECK(hc2.ks < 0.04);
    CHECK(hc2.ratio_spread < 0.12);

    // an injected factor-two fault in one normalizing constant must be caught
    const auto bad = check_holonomy_invariance(sys, P, e1, e2, 12.0, 10, 2.0 * e1.c, 0.0);
    CHECK(bad.ratio_spread > 0.5);

    CHECK_THROWS_AS(check_holonomy_invariance(sys, P, e1, e2, 0.05, 10), std::domain_error);
    CHECK_THROWS_AS(check_holonomy_invariance(sys, P, e1, e2, 12.0, 1), std::invalid_argument);
}

TEST_CASE("fiber slabs expose atoms and their absence") {
    auto P = builtin_cat_partition();
    Rng rng(40);

    {
        auto sys = product_sys();
        const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
        const auto m = estimate_mu(sys, P, src, 30000, 350, 50, rng);
        const auto rep = center_atom_probe(sys, P, m, 0, 0.5 * P.rect(0).Lu,
                                           0.05 * P.rect(0).Lu, 1e-2);
        CHECK(rep.in_slab >= 50);
        CHECK(rep.clusters == 1);
        CHECK(rep.atomic);
        CHECK(rep.covered < 0.05);
        CHECK(rep.sizes[0] == 1.0);
        CHECK_THROWS_AS(center_atom_probe(sys, P, m, 0, 0.5 * P.rect(0).Lu, 1e-7, 1e-2),
                        std::domain_error);
    }
    {
        auto sys = coupled_sys();
        const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
        const auto m = estimate_mu(sys, P, src, 30000, 350, 50, rng);
        const auto rep = center_atom_probe(sys, P, m, 0, 0.5 * P.rect(0).Lu,
                                           0.05 * P.rect(0).Lu, 1e-2);
        CHECK(rep.atomic);
        CHECK(rep.covered < 0.5);
        double total = 0.0;
        for (double s : rep.sizes) total += s;
        CHECK(std::fabs(total - 1.0) < 1e-12);
    }
    {
        auto sys = isometric_sys();
        const auto src = make_reference_measure(sys, P, 0, band_anchor(sys, P, 0, rng));
        const auto m = estimate_mu(sys, P, src, 30000, 350, 50, rng);
        const auto rep = center_atom_probe(sys, P, m, 0, 0.5 * P.rect(0).Lu,
                                           0.05 * P.rect(0).Lu, 1e-2);
        CHECK(!rep.atomic);
        CHECK(rep.covered > 0.8);
        CHECK(rep.clusters <= 4);
    }
}
