#include "catlab/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

#include "catlab/statutil.hpp"

namespace catlab {

namespace {

constexpr double kPi = 3.14159265358979323846;
// steps certified when testing stopping-set membership
constexpr int kUScanCap = 120;
// forward distances recorded per matched pair; past ~16 steps the partner
// orbit's u-offset (1e-12 from chart roundoff) has grown by lambda_u^k into
// the distances, so longer windows measure rounding, not shadowing
constexpr int kShadowSteps = 16;

double sup_cs_norm(const SkewSystem& sys) {
    return std::max(1.0 + sys.params().kappa, 1.0 / sys.base().lambda_u);
}

// sup over theta of |d/dtheta log cs_norm|, computed on a fine grid; the
// clamped region contributes zero slope.
double log_norm_modulus(const SkewSystem& sys) {
    const double kappa = sys.params().kappa;
    const double clamp = 1.0 / sys.base().lambda_u;
    const int n = 8192;
    double best = 0.0;
    for (int i = 0; i < n; ++i) {
        const double theta = (i + 0.5) / n;
        const double gp = sys.gprime(theta);
        if (std::fabs(gp) <= clamp) continue;
        const double slope = 2.0 * kPi * kappa * std::fabs(std::sin(2.0 * kPi * theta)) / std::fabs(gp);
        best = std::max(best, slope);
    }
    return best;
}

MPoint band_point(const SkewSystem& sys, Rng& rng) {
    MPoint seed{{rng.next_unit(), rng.next_unit()}, rng.next_unit()};
    return sys.apply(seed, 60);
}

ReferenceMeasure random_band_plaque(const SkewSystem& sys, const MarkovPartition& P, Rng& rng) {
    for (int tries = 0; tries < 64; ++tries) {
        MPoint w = band_point(sys, rng);
        const int i = P.locate(w.x);
        if (i >= 0) return make_reference_measure(sys, P, i, w);
    }
    throw std::runtime_error("random_band_plaque: no locatable point after 64 draws");
}

// sorted-by-u cylinder lists are reused heavily by the particle recursion
struct CylinderCache {
    std::map<std::pair<int, int>, std::vector<SymbolicCylinder>> lists;

    const std::vector<SymbolicCylinder>& get(const MarkovPartition& P, int rect, int depth) {
        const auto key = std::make_pair(rect, depth);
        auto it = lists.find(key);
        if (it != lists.end()) return it->second;
        auto cyls = enumerate_cylinders(P, rect, depth, 4'000'000);
        std::sort(cyls.begin(), cyls.end(),
                  [](const SymbolicCylinder& a, const SymbolicCylinder& b) { return a.u_lo < b.u_lo; });
        return lists.emplace(key, std::move(cyls)).first->second;
    }
};

double plaque_mid_fiber(const SkewSystem& sys, const MarkovPartition& P,
                        const ReferenceMeasure& m) {
    const TorusPoint mid = P.chart_point(m.rect, 0.5 * P.rect(m.rect).Lu, m.s);
    return leaf_fiber_at(sys, m.leaf, mid);
}

}  // namespace

std::vector<double> cylinder_cs_step_maxima(const SkewSystem& sys, const MarkovPartition& P,
                                            const ReferenceMeasure& m,
                                            const SymbolicCylinder& c) {
    if (c.word.empty() || c.word.front() != m.rect)
        throw std::invalid_argument("cylinder_cs_step_maxima: cylinder does not start on the plaque");
    const int depth = static_cast<int>(c.word.size()) - 1;
    if (depth < 1) throw std::invalid_argument("cylinder_cs_step_maxima: depth must be >= 1");

    const int ns = 33;
    std::vector<MPoint> pts(ns);
    for (int k = 0; k < ns; ++k) {
        const double u = c.u_lo + c.u_len * (static_cast<double>(k) / (ns - 1));
        pts[k] = reference_point_at(sys, P, m, u);
    }
    const double hard = sup_cs_norm(sys);
    const double lam_u = sys.base().lambda_u;
    const double kappa = sys.params().kappa;
    const double lip = sys.leaf_lipschitz();
    std::vector<double> maxima(depth, 0.0);
    for (int t = 0; t < depth; ++t) {
        double best = 0.0;
        for (int k = 0; k < ns; ++k) best = std::max(best, sys.cs_norm(pts[k].theta));
        // sample gap at step t in image arclength, times the norm's u-slope bound
        const double gap = c.u_len * std::pow(lam_u, t) / (ns - 1);
        const double inflation = 2.0 * kPi * kappa * lip * 0.5 * gap;
        maxima[t] = std::min(best + inflation, hard);
        if (t + 1 < depth)
            for (auto& p : pts) p = sys.step(p);
    }
    return maxima;
}

double u_set_mass(const SkewSystem& sys, const MarkovPartition& P, const ReferenceMeasure& m,
                  const ContractionProfile& prof, int n_grid, int scan_cap) {
    if (n_grid < 1 || scan_cap < 1) throw std::invalid_argument("u_set_mass: empty grid");
    const double Lu = P.rect(m.rect).Lu;
    const double logK = std::log(prof.K);
    int bad = 0;
    for (int j = 0; j < n_grid; ++j) {
        MPoint z = reference_point_at(sys, P, m, Lu * (j + 0.5) / n_grid);
        double s = 0.0;
        for (int t = 1; t <= scan_cap; ++t) {
            s += std::log(sys.cs_norm(z.theta));
            if (s > logK + prof.lambda * t) {
                ++bad;
                break;
            }
            z = sys.step(z);
        }
    }
    return static_cast<double>(bad) / n_grid;
}

ContractionProfile estimate_profile(const SkewSystem& sys, const MarkovPartition& P,
                                    int depth_cap, int n_samples, Rng& rng) {
    if (depth_cap < 1 || n_samples < 1)
        throw std::invalid_argument("estimate_profile: depth_cap and n_samples must be positive");

    std::vector<ReferenceMeasure> plaques;
    plaques.reserve(n_samples);
    for (int k = 0; k < n_samples; ++k) plaques.push_back(random_band_plaque(sys, P, rng));

    // n0, lambda0: first horizon where every sampled plaque has a negative
    // averaged log norm along its forward images
    const int grid = 129;
    ContractionProfile prof;
    {
        std::vector<std::vector<MPoint>> pts(plaques.size(), std::vector<MPoint>(grid));
        std::vector<std::vector<double>> sums(plaques.size(), std::vector<double>(grid, 0.0));
        for (std::size_t p = 0; p < plaques.size(); ++p) {
            const double Lu = P.rect(plaques[p].rect).Lu;
            for (int j = 0; j < grid; ++j)
                pts[p][j] = reference_point_at(sys, P, plaques[p], Lu * (j + 0.5) / grid);
        }
        bool found = false;
        for (int n = 1; n <= depth_cap && !found; ++n) {
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t p = 0; p < plaques.size(); ++p) {
                double acc = 0.0;
                for (int j = 0; j < grid; ++j) {
                    sums[p][j] += std::log(sys.cs_norm(pts[p][j].theta));
                    pts[p][j] = sys.step(pts[p][j]);
                    acc += sums[p][j];
                }
                worst = std::max(worst, acc / (grid * n));
            }
            if (worst < -1e-12) {
                prof.n0 = n;
                prof.lambda0 = worst;
                found = true;
            }
        }
        if (!found)
            throw std::domain_error(
                "not contracting enough: no negative plaque-averaged log norm within the depth budget");
    }

    // s1, theta1 from exact cylinder sums at small depth
    {
        const int sum_depth = std::min(depth_cap, 7);
        const std::size_t n_sum_plaques = std::min<std::size_t>(plaques.size(), 3);
        const std::vector<double> s1_grid{4.0, 2.0, 1.0, 0.5, 0.25};
        std::vector<double> theta_of(s1_grid.size(), 0.0);
        for (std::size_t p = 0; p < n_sum_plaques; ++p) {
            for (int n = 1; n <= sum_depth; ++n) {
                std::vector<double> sums(s1_grid.size(), 0.0);
                enumerate_cylinders(P, plaques[p].rect, n, 4'000'000,
                                    [&](const SymbolicCylinder& c) {
                                        const auto maxima =
                                            cylinder_cs_step_maxima(sys, P, plaques[p], c);
                                        double logprod = 0.0;
                                        for (double v : maxima) logprod += std::log(v);
                                        for (std::size_t si = 0; si < s1_grid.size(); ++si)
                                            sums[si] += c.mass * std::exp(s1_grid[si] * logprod);
                                    });
                for (std::size_t si = 0; si < s1_grid.size(); ++si) {
                    const double theta = std::pow(sums[si], 1.0 / (s1_grid[si] * n));
                    theta_of[si] = std::max(theta_of[si], theta);
                }
            }
        }
        double best_score = -1.0;
        for (std::size_t si = 0; si < s1_grid.size(); ++si) {
            if (theta_of[si] >= 1.0 - 1e-9) continue;
            // decay rate of the tail bound once lambda is capped by both terms
            const double lam = std::max(prof.lambda0 / 2.0, std::log(theta_of[si]) / 2.0);
            const double score = s1_grid[si] * (-lam);
            if (score > best_score) {
                best_score = score;
                prof.s1 = s1_grid[si];
                prof.theta1 = theta_of[si];
            }
        }
        if (best_score <= 0.0)
            throw std::domain_error("not contracting enough: no feasible cylinder-sum exponent");
    }

    prof.lambda = std::max(prof.lambda0 / 2.0, std::log(prof.theta1) / 2.0);

    // epsilon from the modulus of log g': cs-close points have one-step norms
    // within a factor e^{-lambda/2}
    {
        const double mod = log_norm_modulus(sys);
        prof.epsilon = mod > 0.0 ? std::min(0.05, (-prof.lambda / 2.0) / mod) : 0.05;
    }

    // K: smallest power of two whose stopping sets have small measured mass
    {
        double chosen_mass = 1.0;
        for (int j = 1; j <= 16; ++j) {
            prof.K = std::pow(2.0, j);
            double worst = 0.0;
            for (const auto& m : plaques)
                worst = std::max(worst, u_set_mass(sys, P, m, prof, 512, kUScanCap));
            if (worst <= 0.55) {
                chosen_mass = worst;
                break;
            }
            chosen_mass = worst;
        }
        if (chosen_mass > 0.85)
            throw std::domain_error(
                "not contracting enough: stopping sets keep most of the plaque mass");
        prof.q1 = std::min(0.95, chosen_mass + 0.1);
    }
    return prof;
}

namespace {

// image heights of a cylinder under its own word: s' = s_scale * s + s_shift
double image_height(const SymbolicCylinder& c, double s) { return c.s_scale * s + c.s_shift; }

struct DisplacementProbe {
    const SkewSystem& sys;
    const MarkovPartition& P;
    const ReferenceMeasure& m1;
    const ReferenceMeasure& m2;
    int depth;

    // certified sup over the shared chart of |Delta s| + fiber mismatch
    double operator()(const SymbolicCylinder& c1, const SymbolicCylinder& c2, double s1,
                      double s2, double cutoff) const {
        const int rect = c1.word.back();
        const double Lu = P.rect(rect).Lu;
        const double ds = std::fabs(s1 - s2);
        if (ds > cutoff) return ds;
        const int ns = 129;
        double worst = 0.0;
        for (int k = 0; k < ns; ++k) {
            const double frac = static_cast<double>(k) / (ns - 1);
            const MPoint w1 = sys.apply(
                reference_point_at(sys, P, m1, c1.u_lo + frac * c1.u_len), depth);
            const MPoint w2 = sys.apply(
                reference_point_at(sys, P, m2, c2.u_lo + frac * c2.u_len), depth);
            worst = std::max(worst, circ_dist(w1.theta, w2.theta));
            if (ds + worst > cutoff) return ds + worst;
        }
        const double inflation = 2.0 * sys.leaf_lipschitz() * 0.5 * Lu / (ns - 1);
        return ds + worst + inflation;
    }
};

}  // namespace

AnchorSelection select_anchor_plaques(const SkewSystem& sys, const MarkovPartition& P,
                                      const ReferenceMeasure& m1, const ReferenceMeasure& m2,
                                      const ContractionProfile& prof, int budget) {
    if (budget < 1) throw std::invalid_argument("select_anchor_plaques: budget must be >= 1");
    if (!(prof.epsilon > 0.0))
        throw std::invalid_argument("select_anchor_plaques: profile epsilon must be positive");

    struct Cand {
        const SymbolicCylinder* c;
        double s;
        bool used = false;
    };
    for (int n = 1; n <= budget; ++n) {
        const auto cyls1 = enumerate_cylinders(P, m1.rect, n, 4'000'000);
        const auto cyls2 = enumerate_cylinders(P, m2.rect, n, 4'000'000);
        std::vector<std::vector<Cand>> side1(P.size()), side2(P.size());
        for (const auto& c : cyls1) side1[c.word.back()].push_back({&c, image_height(c, m1.s)});
        for (const auto& c : cyls2) side2[c.word.back()].push_back({&c, image_height(c, m2.s)});
        DisplacementProbe probe{sys, P, m1, m2, n};
        AnchorSelection sel;
        sel.n0p = n;
        for (int j = 0; j < P.size(); ++j) {
            auto& a = side1[j];
            auto& b = side2[j];
            if (a.empty() || b.empty()) continue;
            std::sort(a.begin(), a.end(), [](const Cand& x, const Cand& y) { return x.s < y.s; });
            std::sort(b.begin(), b.end(), [](const Cand& x, const Cand& y) { return x.s < y.s; });
            std::size_t lo = 0;
            for (auto& ca : a) {
                while (lo < b.size() && b[lo].s < ca.s - prof.epsilon) ++lo;
                for (std::size_t k = lo; k < b.size() && b[k].s <= ca.s + prof.epsilon; ++k) {
                    if (b[k].used) continue;
                    const double disp = probe(*ca.c, *b[k].c, ca.s, b[k].s, prof.epsilon);
                    if (disp <= prof.epsilon) {
                        b[k].used = true;
                        sel.pairs.push_back({j, ca.s, b[k].s, *ca.c, *b[k].c, disp});
                        break;
                    }
                }
            }
        }
        if (!sel.pairs.empty()) return sel;
    }
    throw std::domain_error("u-minimality budget exhausted: no epsilon-close image plaques up to depth " +
                            std::to_string(budget));
}

namespace {

// one side-1 or side-2 piece of the unmatched mass at a stage: a cylinder
// times a height window, mass normalized by the side's own height
struct ZipPiece {
    const SymbolicCylinder* cyl;
    double t_lo, t_hi;
    double nmass;  // cyl->mass * (t_hi - t_lo) / a_side
};

std::vector<ZipPiece> zip_pieces(const std::vector<SymbolicCylinder>& cyls_sorted,
                                 const std::map<std::vector<int>, std::size_t>& paired,
                                 const std::vector<double>& tbar_of_pair, double a) {
    std::vector<ZipPiece> out;
    out.reserve(cyls_sorted.size());
    for (const auto& c : cyls_sorted) {
        auto it = paired.find(c.word);
        double lo = 0.0;
        if (it != paired.end()) lo = tbar_of_pair[it->second];
        if (lo >= a) continue;  // fully matched block, nothing left
        out.push_back({&c, lo, a, c.mass * (a - lo) / a});
    }
    return out;
}

struct ZipWindow {
    const SymbolicCylinder* cyl1 = nullptr;
    const SymbolicCylinder* cyl2 = nullptr;
    double lo1 = 0.0, hi1 = 0.0;  // side-1 height window
    double lo2 = 0.0, hi2 = 0.0;  // side-2 height window
};

// order-preserving mass zipper: finds the slice of the side-2 piece list that
// is paired with the (piece, t) position of the particle on side 1
ZipWindow zip_lookup(const std::vector<ZipPiece>& p1, const std::vector<ZipPiece>& p2,
                     const std::vector<int>& word, double t, double a1, double a2) {
    double cum1 = 0.0;
    std::size_t i1 = 0;
    for (; i1 < p1.size(); ++i1) {
        if (p1[i1].cyl->word == word) break;
        cum1 += p1[i1].nmass;
    }
    if (i1 == p1.size()) throw std::logic_error("zip_lookup: particle piece missing");
    const ZipPiece& q1 = p1[i1];
    const double density1 = q1.nmass / (q1.t_hi - q1.t_lo);
    const double pos = cum1 + density1 * (t - q1.t_lo);

    double cum2 = 0.0;
    std::size_t i2 = 0;
    while (i2 + 1 < p2.size() && cum2 + p2[i2].nmass <= pos) cum2 += p2[i2].nmass, ++i2;
    const ZipPiece& q2 = p2[i2];
    const double density2 = q2.nmass / (q2.t_hi - q2.t_lo);

    // common slice in cumulative mass, clipped to both pieces
    const double slice_lo = std::max(cum1, cum2);
    const double slice_hi = std::min(cum1 + q1.nmass, cum2 + q2.nmass);
    ZipWindow w;
    w.cyl1 = q1.cyl;
    w.cyl2 = q2.cyl;
    w.lo1 = q1.t_lo + (slice_lo - cum1) / density1;
    w.hi1 = q1.t_lo + (slice_hi - cum1) / density1;
    w.lo2 = q2.t_lo + (slice_lo - cum2) / density2;
    w.hi2 = q2.t_lo + (slice_hi - cum2) / density2;
    w.hi1 = std::min(w.hi1, a1);
    w.hi2 = std::min(w.hi2, a2);
    return w;
}

struct SelectionKey {
    int r1;
    std::int64_t s1, f1;
    int r2;
    std::int64_t s2, f2;
    bool operator<(const SelectionKey& o) const {
        return std::tie(r1, s1, f1, r2, s2, f2) < std::tie(o.r1, o.s1, o.f1, o.r2, o.s2, o.f2);
    }
};

SelectionKey selection_key(const SkewSystem& sys, const MarkovPartition& P,
                           const ReferenceMeasure& m1, const ReferenceMeasure& m2) {
    const auto q = [](double v, double scale) {
        return static_cast<std::int64_t>(std::llround(v * scale));
    };
    return SelectionKey{m1.rect, q(m1.s, 1e10), q(plaque_mid_fiber(sys, P, m1), 1e7),
                        m2.rect, q(m2.s, 1e10), q(plaque_mid_fiber(sys, P, m2), 1e7)};
}

// first m in [1, cap] whose partial product exceeds K e^{lambda m}; 0 = never
int u_scan(const SkewSystem& sys, const ContractionProfile& prof, const MPoint& w, int cap) {
    const double logK = std::log(prof.K);
    MPoint z = w;
    double s = 0.0;
    for (int m = 1; m <= cap; ++m) {
        s += std::log(sys.cs_norm(z.theta));
        if (s > logK + prof.lambda * m) return m;
        z = sys.step(z);
    }
    return 0;
}

// matched orbits separate only by a stable vector plus u-roundoff, so locate
// disagreements are legitimate exactly when a chart edge passes between the
// two points; anything within the current distance of an edge is flagged
bool near_chart_boundary(const MarkovPartition& P, int rect, const TorusPoint& p, double tol) {
    const EigenCoords c = P.chart_coords(rect, p);
    const Rectangle& r = P.rect(rect);
    return c.s <= tol || c.s >= r.Ls - tol || c.u <= tol || c.u >= r.Lu - tol;
}

}  // namespace

CouplingRun run_coupling(const SkewSystem& sys, const MarkovPartition& P,
                         const ReferenceMeasure& y1, const ReferenceMeasure& y2,
                         const ContractionProfile& prof, std::size_t n_pairs, int horizon,
                         Rng& rng) {
    if (n_pairs == 0) throw std::invalid_argument("run_coupling: n_pairs must be positive");
    if (horizon < 1) throw std::invalid_argument("run_coupling: horizon must be positive");

    CouplingRun run;
    run.records.reserve(n_pairs);

    CylinderCache cache;
    std::map<SelectionKey, AnchorSelection> selections;
    AnchorSelection overflow;                 // reused when the memo is full
    std::map<int, std::size_t> stage1_stops;  // stopping depth -> count at stage one

    const auto select_for = [&](const ReferenceMeasure& a, const ReferenceMeasure& b)
        -> const AnchorSelection& {
        const SelectionKey key = selection_key(sys, P, a, b);
        auto it = selections.find(key);
        if (it != selections.end()) return it->second;
        AnchorSelection fresh = select_anchor_plaques(sys, P, a, b, prof);
        if (selections.size() < 2000)
            return selections.emplace(key, std::move(fresh)).first->second;
        overflow = std::move(fresh);
        return overflow;
    };

    bool stage1_seen = false;
    for (std::size_t id = 0; id < n_pairs; ++id) {
        CouplingRecord rec;
        rec.pair_id = id;

        // particle state: side 1 carries the point, side 2 the partner window
        ReferenceMeasure m1 = y1;
        ReferenceMeasure m2 = y2;
        MPoint z = reference_point_at(sys, P, m1, rng.next_unit() * P.rect(m1.rect).Lu);
        double t = rng.next_unit();
        rec.t_in = t;
        double a1 = 1.0, a2 = 1.0;
        double Toff = 0.0;         // side-2 window offset in the original [0,1]
        double Ulo = 0.0, Uscale = 1.0;  // side-2 pullback, fractions of the original plaque
        int n = 0;

        bool done = false;
        while (!done) {
            const AnchorSelection* selp = nullptr;
            try {
                selp = &select_for(m1, m2);
            } catch (const std::domain_error&) {
                if (rec.stages == 0) throw;  // the run cannot even start
                ++run.budget_failures;
                break;
            }
            const AnchorSelection& sel = *selp;
            if (n + sel.n0p > horizon) break;
            ++rec.stages;
            const bool first_stage = rec.stages == 1;

            // per-pair heights: cbar ratios are cylinder masses
            std::map<std::vector<int>, std::size_t> paired;
            std::vector<double> tbar1(sel.pairs.size()), tbar2(sel.pairs.size());
            double block_mass = 0.0;
            for (std::size_t k = 0; k < sel.pairs.size(); ++k) {
                const double c1 = sel.pairs[k].cyl1.mass, c2 = sel.pairs[k].cyl2.mass;
                tbar1[k] = a1 * std::min(1.0, c2 / c1);
                tbar2[k] = a2 * std::min(1.0, c1 / c2);
                paired.emplace(sel.pairs[k].cyl1.word, k);
                block_mass += c1 * tbar1[k] / a1;
            }
            if (!stage1_seen && rec.stages == 1) {
                run.stage1_n0p = sel.n0p;
                run.stage1_b = block_mass;
                stage1_seen = true;
            }

            std::vector<int> word;
            try {
                word = word_of(P, z.x, sel.n0p);
            } catch (const std::domain_error&) {
                ++run.budget_failures;
                break;
            }
            const auto hit = paired.find(word);
            const bool in_block = hit != paired.end() && t <= tbar1[hit->second];
            if (first_stage && in_block) ++run.stage1_entered;

            if (in_block) {
                const AnchorPair& pr = sel.pairs[hit->second];
                const MPoint w = sys.apply(z, sel.n0p);
                const int m_stop = u_scan(sys, prof, w, kUScanCap);

                // partner point on the matched image plaque, same chart u
                const double ustar = P.chart_coords(pr.rect, w.x).u;
                const double Luj = P.rect(pr.rect).Lu;
                const MPoint w2 = sys.apply(
                    reference_point_at(sys, P, m2, pr.cyl2.u_lo + (ustar / Luj) * pr.cyl2.u_len),
                    sel.n0p);

                if (m_stop == 0) {
                    // coupled: record tau coordinates and forward shadows
                    if (first_stage) ++run.stage1_matched;
                    rec.matched = true;
                    rec.R = n + sel.n0p;
                    rec.t_out = Toff + t * (tbar2[hit->second] / tbar1[hit->second]);
                    const double ufrac =
                        Ulo + Uscale * (pr.cyl2.u_lo + (ustar / Luj) * pr.cyl2.u_len) /
                                  P.rect(m2.rect).Lu;
                    rec.u_out = ufrac * P.rect(y2.rect).Lu;
                    MPoint p1 = w, p2 = w2;
                    rec.shadow.reserve(kShadowSteps);
                    for (int k = 0; k < kShadowSteps; ++k) {
                        const double d = std::hypot(torus_dist(p1.x, p2.x),
                                                    circ_dist(p1.theta, p2.theta));
                        rec.shadow.push_back(d);
                        const int i1 = P.locate(p1.x);
                        const int i2 = P.locate(p2.x);
                        ++run.component_checks;
                        if (i1 != i2) {
                            const double tol = d + 1e-9;
                            const bool flagged =
                                i1 < 0 || i2 < 0 || near_chart_boundary(P, i1, p1.x, tol) ||
                                near_chart_boundary(P, i2, p2.x, tol);
                            if (!flagged) ++run.component_violations;
                        }
                        p1 = sys.step(p1);
                        p2 = sys.step(p2);
                    }
                    rec.final_distance = rec.shadow.back();
                    done = true;
                } else {
                    // stopping-set branch: both sides follow the same u-interval
                    // for m_stop more steps, heights shrink to the matched block
                    if (first_stage) {
                        ++stage1_stops[sel.n0p + m_stop];
                    }
                    std::vector<int> vword;
                    try {
                        vword = word_of(P, w.x, m_stop);
                    } catch (const std::domain_error&) {
                        ++run.budget_failures;
                        break;
                    }
                    if (vword.front() != pr.rect) {
                        ++run.budget_failures;
                        break;
                    }
                    const SymbolicCylinder vc = cylinder_from_word(P, vword);
                    z = sys.apply(w, m_stop);
                    const MPoint z2 = sys.apply(w2, m_stop);
                    const int r1 = P.locate(z.x);
                    const int r2n = P.locate(z2.x);
                    if (r1 < 0 || r2n < 0) {
                        ++run.budget_failures;
                        break;
                    }
                    n += sel.n0p + m_stop;
                    // side-2 affine: through the pair cylinder, then the stop word
                    Ulo += Uscale * pr.cyl2.u_lo / P.rect(m2.rect).Lu;
                    Uscale *= pr.cyl2.u_len / P.rect(m2.rect).Lu;
                    Ulo += Uscale * vc.u_lo / Luj;
                    Uscale *= vc.u_len / Luj;
                    a1 = tbar1[hit->second];
                    a2 = tbar2[hit->second];
                    m1 = make_reference_measure(sys, P, r1, z);
                    m2 = make_reference_measure(sys, P, r2n, z2);
                }
            } else {
                // unmatched at this stage: zipper to the partner piece
                const auto& cyls1 = cache.get(P, m1.rect, sel.n0p);
                const auto& cyls2 = cache.get(P, m2.rect, sel.n0p);
                std::map<std::vector<int>, std::size_t> paired2;
                std::vector<double> tb2(sel.pairs.size());
                for (std::size_t k = 0; k < sel.pairs.size(); ++k) {
                    paired2.emplace(sel.pairs[k].cyl2.word, k);
                    tb2[k] = tbar2[k];
                }
                const auto p1 = zip_pieces(cyls1, paired, tbar1, a1);
                const auto p2 = zip_pieces(cyls2, paired2, tb2, a2);
                if (p2.empty()) {
                    ++run.budget_failures;
                    break;
                }
                ZipWindow zw;
                try {
                    zw = zip_lookup(p1, p2, word, t, a1, a2);
                } catch (const std::logic_error&) {
                    ++run.budget_failures;
                    break;
                }
                // side-2 plaque: the image of the partner cylinder
                const MPoint z2a = sys.apply(
                    reference_point_at(sys, P, m2, zw.cyl2->u_lo + 0.5 * zw.cyl2->u_len),
                    sel.n0p);
                z = sys.apply(z, sel.n0p);
                const int r1 = P.locate(z.x);
                const int r2n = P.locate(z2a.x);
                if (r1 < 0 || r2n < 0) {
                    ++run.budget_failures;
                    break;
                }
                n += sel.n0p;
                Ulo += Uscale * zw.cyl2->u_lo / P.rect(m2.rect).Lu;
                Uscale *= zw.cyl2->u_len / P.rect(m2.rect).Lu;
                Toff += zw.lo2;  // window offsets accumulate, t is never rescaled here
                t -= zw.lo1;
                a1 = zw.hi1 - zw.lo1;
                a2 = zw.hi2 - zw.lo2;
                m1 = make_reference_measure(sys, P, r1, z);
                m2 = make_reference_measure(sys, P, r2n, z2a);
            }
        }
        if (!rec.matched) rec.final_distance = std::numeric_limits<double>::quiet_NaN();
        if (rec.matched) ++run.matched_total;
        run.records.push_back(std::move(rec));
    }

    for (const auto& kv : stage1_stops) {
        run.stage1_stop_ns.push_back(kv.first);
        run.stage1_stop_mass.push_back(static_cast<double>(kv.second) / n_pairs);
    }
    return run;
}

TailFit tail_fit(const std::vector<CouplingRecord>& records) {
    TailFit out;
    out.total = records.size();
    if (out.total < 1000) throw std::domain_error("tail fit needs at least 1000 records");
    std::vector<int> rs;
    rs.reserve(records.size());
    int rmax = 0;
    std::size_t unmatched = 0;
    for (const auto& r : records) {
        if (r.matched) {
            rs.push_back(r.R);
            rmax = std::max(rmax, r.R);
        } else {
            ++unmatched;
        }
    }
    out.matched = rs.size();
    if (out.matched < 1000) throw std::domain_error("insufficient matched records for a tail fit");
    std::sort(rs.begin(), rs.end());

    // the empirical survival is a step function dropping at stage boundaries;
    // the log-linear fit reads it at the drop points, where it carries
    // information, instead of weighting the flat stretches in between
    std::vector<double> xs, ys;
    const double n_total = static_cast<double>(out.total);
    double prev = 1.0;
    for (int n = 0; n <= rmax; ++n) {
        const auto it = std::upper_bound(rs.begin(), rs.end(), n);
        const double surv = (static_cast<double>(rs.end() - it) + unmatched) / n_total;
        if (surv < prev && surv >= 3.0 / n_total) {
            xs.push_back(n);
            ys.push_back(std::log(surv));
        }
        prev = surv;
    }
    if (xs.size() < 5) throw std::domain_error("tail fit: survival window too narrow");
    const LinearFit fit = linear_fit(xs, ys);
    out.rho2 = std::exp(fit.slope);
    out.c2 = std::exp(fit.intercept);
    out.r2 = fit.r2;
    return out;
}

ShadowFit shadow_fit(const std::vector<CouplingRecord>& records, const ContractionProfile& prof) {
    std::size_t matched = 0;
    std::size_t max_len = 0;
    for (const auto& r : records)
        if (r.matched) {
            ++matched;
            max_len = std::max(max_len, r.shadow.size());
        }
    if (matched < 1000) throw std::domain_error("insufficient matched records for a shadow fit");

    ShadowFit out;
    std::vector<double> xs, ys;
    std::size_t inside = 0, samples = 0;
    std::vector<double> column;
    for (std::size_t k = 0; k < max_len; ++k) {
        column.clear();
        for (const auto& r : records) {
            if (!r.matched || k >= r.shadow.size()) continue;
            column.push_back(r.shadow[k]);
            ++samples;
            if (r.shadow[k] <= prof.K * prof.epsilon * std::exp(prof.lambda * k / 2.0)) ++inside;
        }
        if (column.size() < 100) continue;
        std::nth_element(column.begin(), column.begin() + column.size() / 2, column.end());
        const double med = column[column.size() / 2];
        if (med <= 1e-14) continue;
        xs.push_back(static_cast<double>(k));
        ys.push_back(std::log(med));
    }
    if (xs.size() < 5) throw std::domain_error("shadow fit: too few usable distance columns");
    const LinearFit fit = linear_fit(xs, ys);
    out.rho1 = std::exp(fit.slope);
    out.c1 = std::exp(fit.intercept);
    out.r2 = fit.r2;
    out.envelope_fraction = samples ? static_cast<double>(inside) / samples : 0.0;
    return out;
}

}
