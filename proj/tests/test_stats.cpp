#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "catlab/coupling.hpp"
#include "catlab/markov.hpp"
#include "catlab/refmeas.hpp"
#include "catlab/rng.hpp"
#include "catlab/skew.hpp"
#include "catlab/stats.hpp"
#include "catlab/statutil.hpp"

using namespace catlab;

namespace {

constexpr double kPi = 3.14159265358979323846;

struct StatsSetup {
    MarkovPartition P;
    SkewSystem sys;      // coupled fixture
    SkewSystem prod;     // delta = 0, fiber decoupled from the base
    ContractionProfile prof;
    HolderObservable phi_c;  // cos 2 pi theta centered to the attractor mean
    ReferenceMeasure anchor;
    ReferenceMeasure settled;

    StatsSetup()
        : P(builtin_cat_partition()),
          sys(make_automorphism({2, 1, 1, 1}), {0.5, 0.05, 0.0}),
          prod(make_automorphism({2, 1, 1, 1}), {0.5, 0.0, 0.0}),
          prof([this] {
              Rng rng(12345);
              return estimate_profile(sys, P, 10, 8, rng);
          }()),
          phi_c(make_observable(sys, "centered_costheta",
                                {{1.0, Harmonic::CosTheta}, {-0.966838, Harmonic::One}})),
          anchor([this] {
              MPoint w{{0.62, 0.13}, 0.52};
              return make_reference_measure(sys, P, P.locate(w.x), w);
          }()),
          settled([this] {
              const MPoint w = sys.apply(MPoint{{0.31, 0.41}, 0.59}, 60);
              return make_reference_measure(sys, P, P.locate(w.x), w);
          }()) {}
};

const StatsSetup& setup() {
    static StatsSetup s;
    return s;
}

ReferenceMeasure plaque_at(const SkewSystem& sys, const MarkovPartition& P, double x1, double x2,
                           double th) {
    MPoint w{{x1, x2}, th};
    return make_reference_measure(sys, P, P.locate(w.x), w);
}

double fitted_rate(const std::vector<int>& ns, const std::vector<double>& ps) {
    std::vector<double> xs, ys;
    for (std::size_t k = 0; k < ns.size(); ++k)
        if (ps[k] > 0.0) {
            xs.push_back(double(ns[k]));
            ys.push_back(std::log(ps[k]));
        }
    return -linear_fit(xs, ys).slope;
}

}  // namespace

TEST_CASE("catalog norms are exact for pure harmonics") {
    const auto& S = setup();
    const auto cat = observable_catalog(S.sys);
    CHECK(cat.size() >= 7);
    for (const auto& o : cat) {
        CHECK(o.gamma == doctest::Approx(1.0));
        CHECK(std::isfinite(o.holder_norm));
        CHECK(o.holder_norm == doctest::Approx(o.sup_abs + o.seminorm).epsilon(1e-12));
        CHECK(o.holder_norm >= o.sup_abs);
    }

    for (const char* nm : {"cos2pix1", "sin2pix1", "cos2pix2", "cos2pitheta", "sin2pitheta"}) {
        const auto o = catalog_observable(S.sys, nm);
        CHECK(o.sup_abs == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(o.seminorm == doctest::Approx(2.0 * kPi).epsilon(1e-12));
    }

    const auto mixed = catalog_observable(S.sys, "mixed_x1_theta");
    CHECK(mixed.sup_abs == doctest::Approx(1.5).epsilon(1e-12));
    CHECK(mixed.seminorm == doctest::Approx(kPi * std::sqrt(5.0)).epsilon(1e-12));

    // fiber log-derivative slope maximum: 2 pi k / sqrt(1 - k^2) when the
    // clamped region is empty, which holds at k = 0.5
    const auto lcs = catalog_observable(S.sys, "log_cs_norm");
    const double kap = S.sys.params().kappa;
    // the norm floor 1/lambda_u never binds at k = 0.5, so the extreme value
    // of |log cs| is at the contraction minimum 1 - k
    CHECK(lcs.sup_abs == doctest::Approx(-std::log(1.0 - kap)).epsilon(1e-3));
    CHECK(lcs.seminorm ==
          doctest::Approx(2.0 * kPi * kap / std::sqrt(1.0 - kap * kap)).epsilon(0.01));

    CHECK(catalog_observable(S.sys, "cos2pix1").eval(S.sys, MPoint{{0.5, 0.1}, 0.2}) ==
          doctest::Approx(-1.0));
    CHECK(mixed.eval(S.sys, MPoint{{0.0, 0.4}, 0.5}) == doctest::Approx(1.0 - 0.5));
    CHECK_THROWS_AS((void)catalog_observable(S.sys, "no_such_member"), std::domain_error);
}

TEST_CASE("sampled difference quotients respect the stored seminorm") {
    const auto& S = setup();
    Rng rng(501);
    for (const auto& o : observable_catalog(S.sys)) {
        for (int k = 0; k < 2000; ++k) {
            MPoint p{{rng.next_unit(), rng.next_unit()}, rng.next_unit()};
            MPoint q;
            if (k % 2 == 0) {
                q = MPoint{{rng.next_unit(), rng.next_unit()}, rng.next_unit()};
            } else {
                const double h = 1e-4;
                q = MPoint{{p.x.x1 + h * rng.next_range(-1.0, 1.0),
                            p.x.x2 + h * rng.next_range(-1.0, 1.0)},
                           p.theta + h * rng.next_range(-1.0, 1.0)};
            }
            const double d = metric_dist(p, q);
            if (d < 1e-12) continue;
            const double dv = std::fabs(o.eval(S.sys, p) - o.eval(S.sys, q));
            CHECK(std::fabs(o.eval(S.sys, p)) <= o.sup_abs + 1e-12);
            CHECK(dv <= o.seminorm * d + 1e-9);
        }
    }

    // sharpness at aligned displacements: stored constants are attained
    const auto cx1 = catalog_observable(S.sys, "cos2pix1");
    {
        const double h = 1e-5;
        MPoint p{{0.25 - h, 0.3}, 0.6}, q{{0.25 + h, 0.3}, 0.6};
        const double quot = std::fabs(cx1.eval(S.sys, p) - cx1.eval(S.sys, q)) / metric_dist(p, q);
        CHECK(quot == doctest::Approx(cx1.seminorm).epsilon(0.01));
    }
    const auto mixed = catalog_observable(S.sys, "mixed_x1_theta");
    {
        const double h = 1e-5, c1 = 2.0 / std::sqrt(5.0), c2 = 1.0 / std::sqrt(5.0);
        MPoint p{{0.25 - h * c1, 0.3}, 0.25 - h * c2}, q{{0.25 + h * c1, 0.3}, 0.25 + h * c2};
        const double quot =
            std::fabs(mixed.eval(S.sys, p) - mixed.eval(S.sys, q)) / metric_dist(p, q);
        CHECK(quot == doctest::Approx(mixed.seminorm).epsilon(0.01));
    }
}

TEST_CASE("impossible deviation level reports empty tails") {
    const auto& S = setup();
    Rng rng(601);
    const auto rep =
        birkhoff_tail(S.sys, S.P, S.anchor, 0, S.phi_c, 3.0, {5, 10, 20}, 20000, rng);
    CHECK(rep.alpha_too_large);
    CHECK_FALSE(rep.fit_ok);
    CHECK(rep.trials == 20000);
    for (std::size_t k = 0; k < rep.n_values.size(); ++k) {
        CHECK(rep.tail[k] == 0.0);
        CHECK(rep.hits[k] == 0);
        CHECK_FALSE(bool(rep.used[k]));
        CHECK(rep.wilson[k].lo == 0.0);
        CHECK(rep.wilson[k].hi < 1e-3);
    }
}

TEST_CASE("transversal tails decay with a positive fitted rate") {
    const auto& S = setup();
    Rng rng(21);
    const auto rep =
        birkhoff_tail(S.sys, S.P, S.anchor, 0, S.phi_c, 0.2, {10, 20, 40, 80}, 200000, rng);
    REQUIRE(rep.n_values.size() == 4);
    CHECK_FALSE(rep.alpha_too_large);
    CHECK(rep.trials == 200000);
    // the transient dominates: saturated until the Birkhoff window outgrows it
    CHECK(rep.tail[0] >= 0.9999);
    CHECK(rep.tail[1] >= 0.9999);
    CHECK(rep.tail[2] >= 0.9999);
    CHECK(rep.tail[3] > 0.05);
    CHECK(rep.tail[3] < 0.11);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(bool(rep.used[k]));
        CHECK(rep.wilson[k].lo <= rep.tail[k]);
        // the score interval pulls strictly inside (0, 1) at saturation
        if (rep.hits[k] < rep.trials)
            CHECK(rep.tail[k] <= rep.wilson[k].hi);
        else
            CHECK(rep.wilson[k].hi > 0.999);
    }
    REQUIRE(rep.fit_ok);
    CHECK(rep.c_alpha > 0.02);
    CHECK(rep.c_alpha < 0.06);
    CHECK(monotone_trend_95(rep));
}

TEST_CASE("attractor tails are enveloped by an independent shuffle control") {
    const auto& S = setup();
    const std::vector<int> ns{8, 16, 32};
    const std::size_t N = 200000;
    Rng rng(72);
    const auto dyn = birkhoff_tail(S.sys, S.P, S.anchor, 50, S.phi_c, 0.03, ns, N, rng);
    REQUIRE(dyn.fit_ok);
    CHECK(dyn.c_alpha > 0.10);
    CHECK(dyn.c_alpha < 0.25);
    CHECK(monotone_trend_95(dyn));

    // pool of settled orbit values, then memoryless sums of matched lengths
    Rng rng2(71);
    std::vector<double> pool;
    pool.reserve(N * 4);
    for (auto& s0 : sample(S.sys, S.P, S.anchor, rng2, N)) {
        MPoint p = S.sys.apply(s0, 50);
        for (int t = 0; t < 32; ++t) {
            if (t % 8 == 0) pool.push_back(S.phi_c.eval(S.sys, p));
            p = S.sys.step(p);
        }
    }
    Rng rng3(73);
    std::vector<double> piid(ns.size(), 0.0);
    for (std::size_t i = 0; i < N; ++i) {
        double sum = 0.0;
        int t = 0;
        for (std::size_t k = 0; k < ns.size(); ++k) {
            for (; t < ns[k]; ++t) sum += pool[rng3.next_below(pool.size())];
            if (std::fabs(sum / ns[k]) > 0.03) piid[k] += 1.0;
        }
    }
    for (auto& v : piid) v /= double(N);

    // memoryless sums concentrate at least as fast: smaller tails, steeper fit
    CHECK(piid[0] < dyn.tail[0]);
    CHECK(piid[1] < dyn.tail[1]);
    const double c_iid = fitted_rate(ns, piid);
    CHECK(c_iid > 0.0);
    CHECK(c_iid >= dyn.c_alpha);
}

TEST_CASE("flat fiber tails step at the predicted cutoff") {
    const auto& S = setup();
    // with the skew term off the fiber value is constant along the plaque and
    // independent of the base, so the Birkhoff sum is one deterministic number
    const double th0 = 0.37, alpha = 0.2;
    const auto phi1 = make_observable(S.prod, "costheta_minus_one",
                                      {{1.0, Harmonic::CosTheta}, {-1.0, Harmonic::One}});
    double Sinf = 0.0, th = th0;
    for (int k = 0; k < 500; ++k) {
        Sinf += std::cos(2.0 * kPi * th) - 1.0;
        th = th - (0.5 / (2.0 * kPi)) * std::sin(2.0 * kPi * th);
        th -= std::floor(th);
    }
    CHECK(Sinf == doctest::Approx(-4.675189).epsilon(1e-4));
    const double cutoff = std::fabs(Sinf) / alpha;
    CHECK(cutoff == doctest::Approx(23.38).epsilon(1e-3));

    const auto src = plaque_at(S.prod, S.P, 0.31, 0.41, th0);
    Rng rng(611);
    const auto rep =
        birkhoff_tail(S.prod, S.P, src, 0, phi1, alpha, {12, 16, 20, 24, 28}, 2000, rng);
    CHECK_FALSE(rep.alpha_too_large);
    for (std::size_t k = 0; k < rep.n_values.size(); ++k) {
        const double want = rep.n_values[k] < cutoff ? 1.0 : 0.0;
        CHECK(rep.tail[k] == want);
    }
    CHECK(monotone_trend_95(rep));
    // saturated plateau carries no slope; the positive rate lives on fixtures
    // whose transient varies along the plaque
    REQUIRE(rep.fit_ok);
    CHECK(std::fabs(rep.c_alpha) < 1e-12);
}

TEST_CASE("time-two subsampling preserves the tail rate per unit time") {
    const auto& S = setup();
    const std::size_t N = 100000;
    Rng rng(74);
    const auto dyn =
        birkhoff_tail(S.sys, S.P, S.anchor, 0, S.phi_c, 0.2, {10, 20, 40, 80}, N, rng);
    REQUIRE(dyn.fit_ok);

    Rng rng2(75);
    const std::vector<int> n2{5, 10, 20, 40};
    std::vector<double> p2(n2.size(), 0.0);
    for (auto& s0 : sample(S.sys, S.P, S.anchor, rng2, N)) {
        MPoint p = s0;
        double sum = 0.0;
        int t = 0;
        for (std::size_t k = 0; k < n2.size(); ++k) {
            for (; t < n2[k]; ++t) {
                sum += S.phi_c.eval(S.sys, p);
                p = S.sys.apply(p, 2);
            }
            if (std::fabs(sum / n2[k]) > 0.2) p2[k] += 1.0;
        }
    }
    for (auto& v : p2) v /= double(N);
    const double c2 = fitted_rate(n2, p2);
    CHECK(c2 > 0.0);
    const double per_unit_ratio = (c2 / 2.0) / dyn.c_alpha;
    CHECK(per_unit_ratio > 0.5);
    CHECK(per_unit_ratio < 2.0);
}

TEST_CASE("cumulant rows of a constant observable match the closed form") {
    const auto& S = setup();
    for (double a : {0.8, 0.3}) {
        const auto cm = make_observable(S.sys, "const_neg", {{-a, Harmonic::One}});
        const auto rows = cumulant_bound(S.sys, S.P, S.prof, cm, S.anchor, 3);
        REQUIRE(rows.size() == 3);
        const bool should_hold = std::exp(-a) <= S.prof.theta1;
        for (const auto& r : rows) {
            CHECK(r.lhs == doctest::Approx(std::exp(-S.prof.s1 * a * r.n)).epsilon(1e-9));
            CHECK(r.bound == doctest::Approx(std::pow(S.prof.theta1, S.prof.s1 * r.n))
                                 .epsilon(1e-12));
            CHECK((r.lhs <= r.bound) == should_hold);
        }
    }
}

TEST_CASE("one-step cumulant row is the one-step bound") {
    const auto& S = setup();
    const auto lcs = catalog_observable(S.sys, "log_cs_norm");
    const auto rows = cumulant_bound(S.sys, S.P, S.prof, lcs, S.settled, 1);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].n == 1);
    CHECK(rows[0].lhs <= rows[0].bound);

    // cylinder maxima dominate the pointwise integral of exp(s1 phi)
    Rng rng(621);
    double acc = 0.0, acc2 = 0.0;
    const std::size_t M = 40000;
    for (auto& p : sample(S.sys, S.P, S.settled, rng, M)) {
        const double v = std::exp(S.prof.s1 * lcs.eval(S.sys, p));
        acc += v;
        acc2 += v * v;
    }
    const double lower = acc / double(M);
    const double se = std::sqrt((acc2 / double(M) - lower * lower) / double(M));
    CHECK(rows[0].lhs >= lower - 3.0 * se);
    CHECK(rows[0].lhs <= std::exp(S.prof.s1 * lcs.sup_abs));
}

TEST_CASE("fiber log-derivative cumulant bound holds through depth six") {
    const auto& S = setup();
    // a plaque on the attractor band: the certified window the tail base
    // theta1 speaks for; an unsettled plaque spends its first steps in the
    // expanding fiber region and the inequality has no reason to hold there
    const auto lcs = catalog_observable(S.sys, "log_cs_norm");
    const auto rows = cumulant_bound(S.sys, S.P, S.prof, lcs, S.settled, 6);
    REQUIRE(rows.size() == 6);
    for (const auto& r : rows) {
        CHECK(r.lhs > 0.0);
        CHECK(r.lhs <= r.bound);
    }
}

TEST_CASE("uncorrelated factor gives a vanishing series") {
    const auto& S = setup();
    const auto one = make_observable(S.sys, "unit", {{1.0, Harmonic::One}});
    const auto cth = catalog_observable(S.sys, "cos2pitheta");
    Rng rng(631);
    const auto rep = correlation_decay(S.sys, S.P, S.anchor, 0, cth, one, {1, 2, 3}, 30000, rng);
    CHECK(rep.below_noise);
    CHECK_FALSE(rep.fit_ok);
    for (double c : rep.corr) CHECK(std::fabs(c) <= 1e-12);
}

TEST_CASE("base harmonic autocorrelation fits a clean exponential from plaque starts") {
    const auto& S = setup();
    const auto cx1 = catalog_observable(S.sys, "cos2pix1");
    const auto src = plaque_at(S.sys, S.P, 0.31, 0.41, 0.45);
    Rng rng(31);
    const auto rep =
        correlation_decay(S.sys, S.P, src, 0, cx1, cx1, {2, 3, 4, 5, 6, 8}, 200000, rng);
    CHECK_FALSE(rep.below_noise);
    CHECK(bool(rep.used[0]));
    CHECK(bool(rep.used[1]));
    CHECK(bool(rep.used[2]));
    CHECK(rep.corr[0] > rep.corr[1]);
    CHECK(rep.corr[1] > rep.corr[2]);
    CHECK(rep.corr[2] > 0.0);
    REQUIRE(rep.fit_ok);
    CHECK(rep.tau < 1.0);
    CHECK(rep.tau > 0.05);
    CHECK(rep.r2 > 0.95);
    CHECK(rep.K > 0.0);
}

TEST_CASE("fiber harmonic autocorrelation fits after settling") {
    const auto& S = setup();
    const auto cth = catalog_observable(S.sys, "cos2pitheta");
    const auto src = plaque_at(S.sys, S.P, 0.31, 0.41, 0.45);
    Rng rng(33);
    const auto rep =
        correlation_decay(S.sys, S.P, src, 30, cth, cth, {1, 2, 3, 4, 6, 8}, 200000, rng);
    CHECK_FALSE(rep.below_noise);
    REQUIRE(rep.fit_ok);
    CHECK(rep.tau < 1.0);
    CHECK(rep.tau > 0.1);
    CHECK(rep.r2 > 0.9);
}

TEST_CASE("flat fiber correlations vanish inside the contraction envelope") {
    const auto& S = setup();
    const auto cth = catalog_observable(S.prod, "cos2pitheta");
    const auto src = plaque_at(S.prod, S.P, 0.31, 0.41, 0.37);
    Rng rng(34);
    const std::vector<int> lags{1, 2, 3, 4};
    const auto rep = correlation_decay(S.prod, S.P, src, 0, cth, cth, lags, 50000, rng);
    CHECK(rep.below_noise);
    CHECK_FALSE(rep.fit_ok);
    const double kap = S.prod.params().kappa;
    for (std::size_t k = 0; k < lags.size(); ++k) {
        CHECK(std::fabs(rep.corr[k]) <= 1e-10);
        CHECK(std::fabs(rep.corr[k]) <= 2.0 * std::pow(1.0 - kap, lags[k]));
    }

    // uniform fiber starts relax at the circle map's own rate, which sits
    // strictly between the endpoint contraction 1 - k and 1
    auto quad_corr = [&](int n) {
        const int G = 20001;
        double sa = 0.0, sb = 0.0, sab = 0.0;
        for (int i = 0; i < G; ++i) {
            const double t0 = (i + 0.5) / G;
            double t = t0;
            for (int k = 0; k < n; ++k) {
                t = t - (kap / (2.0 * kPi)) * std::sin(2.0 * kPi * t);
                t -= std::floor(t);
            }
            const double a = std::cos(2.0 * kPi * t), b = std::cos(2.0 * kPi * t0);
            sa += a;
            sb += b;
            sab += a * b;
        }
        return sab / G - (sa / G) * (sb / G);
    };
    const double r1 = quad_corr(4) / quad_corr(2);
    const double r2 = quad_corr(6) / quad_corr(4);
    for (double r : {r1, r2}) {
        const double per_step = std::sqrt(r);
        CHECK(per_step < 1.0);
        CHECK(per_step > 1.0 - kap);
    }
}

TEST_CASE("deviation and correlation sweeps are deterministic in the seed") {
    const auto& S = setup();
    const auto cx1 = catalog_observable(S.sys, "cos2pix1");
    DeviationReport d1, d2;
    {
        Rng rng(77);
        d1 = birkhoff_tail(S.sys, S.P, S.anchor, 0, S.phi_c, 0.2, {10, 20, 40}, 5000, rng);
    }
    {
        Rng rng(77);
        d2 = birkhoff_tail(S.sys, S.P, S.anchor, 0, S.phi_c, 0.2, {10, 20, 40}, 5000, rng);
    }
    CHECK(d1.hits == d2.hits);
    CHECK(d1.tail == d2.tail);
    CHECK(d1.c_alpha == d2.c_alpha);

    CorrelationReport c1, c2;
    {
        Rng rng(78);
        c1 = correlation_decay(S.sys, S.P, S.anchor, 0, cx1, cx1, {1, 2, 3}, 5000, rng);
    }
    {
        Rng rng(78);
        c2 = correlation_decay(S.sys, S.P, S.anchor, 0, cx1, cx1, {1, 2, 3}, 5000, rng);
    }
    CHECK(c1.corr == c2.corr);
    CHECK(c1.se == c2.se);
    CHECK(((std::isnan(c1.tau) && std::isnan(c2.tau)) || c1.tau == c2.tau));
}
