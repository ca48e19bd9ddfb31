#include "catlab/hitting.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>

#include "catlab/statutil.hpp"

namespace catlab {

namespace {

void validate_section(const MarkovPartition& P, const CrossSection& S) {
    if (S.rect < 0 || S.rect >= P.size())
        throw std::invalid_argument("section rectangle index out of range");
    const double Lu = P.rect(S.rect).Lu;
    if (!(S.u >= 0.0 && S.u <= Lu))
        throw std::invalid_argument("section u-coordinate outside the rectangle chart");
}

double wrap01(double t) {
    const double w = t - std::floor(t);
    return w < 1.0 ? w : 0.0;
}

}  // namespace

MPoint section_hit(const SkewSystem& sys, const MarkovPartition& P,
                   const CrossSection& S, const MPoint& z) {
    validate_section(P, S);
    if (!P.contains(S.rect, z.x, 1e-9))
        throw std::invalid_argument("point is not in the section rectangle");
    const EigenCoords cz = P.chart_coords(S.rect, z.x);
    const TorusPoint b = P.chart_point(S.rect, S.u, cz.s);
    const LeafFrame f = make_leaf_frame(sys, z);
    return {b, leaf_fiber_at(sys, f, b)};
}

std::vector<MPoint> hit_points_exact(const SkewSystem& sys, const MarkovPartition& P,
                                     const ReferenceMeasure& src, const CrossSection& S,
                                     int n) {
    validate_section(P, S);
    if (n < 1) throw std::invalid_argument("hitting time must be positive");
    if (n > 16) throw std::invalid_argument("exact hit enumeration is capped at depth 16");
    const double Lu_j = P.rect(S.rect).Lu;
    const double frac = S.u / Lu_j;
    std::vector<MPoint> out;
    enumerate_cylinders(P, src.rect, n, 50'000'000,
                        [&](const SymbolicCylinder& c) {
                            if (c.word.back() != S.rect) return;
                            const double u_pre = c.u_lo + frac * c.u_len;
                            const MPoint z = reference_point_at(sys, P, src, u_pre);
                            out.push_back(sys.apply(z, n));
                        });
    return out;
}

HittingSeries hit_exact(const SkewSystem& sys, const MarkovPartition& P,
                        const ReferenceMeasure& src, const CrossSection& S,
                        const Observable& phi, int n_lo, int n_hi) {
    if (n_lo < 1 || n_hi < n_lo) throw std::invalid_argument("bad hitting-time range");
    HittingSeries series;
    series.exact = true;
    for (int n = n_lo; n <= n_hi; ++n) {
        const std::vector<MPoint> pts = hit_points_exact(sys, P, src, S, n);
        series.n_values.push_back(n);
        series.counts.push_back(static_cast<double>(pts.size()));
        series.stderrs.push_back(0.0);
        if (pts.empty()) {
            series.averages.push_back(std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        double acc = 0.0;
        for (const MPoint& q : pts) acc += phi(q);
        series.averages.push_back(acc / static_cast<double>(pts.size()));
    }
    return series;
}

McEstimate hit_mc(const SkewSystem& sys, const MarkovPartition& P,
                  const ReferenceMeasure& src, const CrossSection& S,
                  const Observable& phi, int n, std::size_t n_samples, Rng& rng) {
    validate_section(P, S);
    if (n < 1) throw std::invalid_argument("hitting time must be positive");
    if (n_samples == 0) throw std::invalid_argument("need at least one sample");
    const double Lu_i = P.rect(src.rect).Lu;
    std::vector<double> vals;
    for (std::size_t k = 0; k < n_samples; ++k) {
        const double u = rng.next_unit() * Lu_i;
        const MPoint z = reference_point_at(sys, P, src, u);
        const MPoint w = sys.apply(z, n);
        if (P.locate(w.x) != S.rect) continue;
        vals.push_back(phi(section_hit(sys, P, S, w)));
    }
    if (vals.empty())
        throw std::domain_error(
            "no section landings: the hitting time is below the first-connection depth");
    McEstimate est;
    est.hits = vals.size();
    est.samples = n_samples;
    est.average = mean(vals);
    est.se = vals.size() > 1
                 ? sample_stddev(vals) / std::sqrt(static_cast<double>(vals.size()))
                 : 0.0;
    return est;
}

RateFit rate_fit(const std::vector<int>& n_values, const std::vector<double>& averages,
                 double limit, double noise_floor) {
    if (n_values.size() != averages.size())
        throw std::invalid_argument("rate fit: mismatched series lengths");
    if (!(noise_floor > 0.0)) throw std::invalid_argument("rate fit: noise floor must be positive");
    std::vector<double> xs, ys;
    std::size_t finite = 0;
    for (std::size_t k = 0; k < n_values.size(); ++k) {
        if (!std::isfinite(averages[k])) continue;  // below the first-connection depth
        ++finite;
        const double gap = std::fabs(averages[k] - limit);
        if (gap <= noise_floor) continue;
        xs.push_back(static_cast<double>(n_values[k]));
        ys.push_back(std::log10(gap));
    }
    RateFit out;
    if (finite > 0 && xs.empty()) {
        out.already_converged = true;
        return out;
    }
    if (xs.size() < 5)
        throw std::invalid_argument("rate fit: fewer than five points above the noise floor");
    const LinearFit fit = linear_fit(xs, ys);
    out.slope = fit.slope;
    out.intercept = fit.intercept;
    out.r2 = fit.r2;
    out.n_used = static_cast<int>(fit.n);
    return out;
}

TransverseEstimate estimate_transverse(const SkewSystem& sys, const MarkovPartition& P,
                                       const EmpiricalMeasure& m, const CrossSection& S) {
    validate_section(P, S);
    TransverseEstimate est;
    est.section = S;
    est.c = 1.0 / P.rect(S.rect).Lu;
    for (std::size_t k = 0; k < m.points.size(); ++k) {
        if (P.locate(m.points[k].x) != S.rect) continue;
        const MPoint q = section_hit(sys, P, S, m.points[k]);
        est.points.push_back(q);
        est.s_coords.push_back(P.chart_coords(S.rect, q.x).s);
        est.weights.push_back(m.weights[k]);
        est.total_mass += m.weights[k];
    }
    if (est.points.empty())
        throw std::domain_error("no cloud particles in the section rectangle");
    return est;
}

double transverse_mean(const TransverseEstimate& est, const Observable& phi) {
    double acc = 0.0;
    double wsum = 0.0;
    for (std::size_t k = 0; k < est.points.size(); ++k) {
        acc += est.weights[k] * phi(est.points[k]);
        wsum += est.weights[k];
    }
    if (!(wsum > 0.0)) throw std::domain_error("transverse estimate carries no mass");
    return acc / wsum;
}

std::vector<LeafCrossing> crossings_along_leaf(const MarkovPartition& P,
                                               const TorusPoint& b, const CrossSection& S,
                                               double t_lo, double t_hi) {
    validate_section(P, S);
    if (!(t_lo <= t_hi)) throw std::invalid_argument("empty leaf-time window");
    const ToralAutomorphism& A = P.automorphism();
    const double Ls = P.rect(S.rect).Ls;
    const TorusPoint p0 = P.chart_point(S.rect, S.u, 0.0);
    const double dx = wrap01(p0.x1) - wrap01(b.x1);
    const double dy = wrap01(p0.x2) - wrap01(b.x2);

    // Solve b + t*eu + k = p0 + s*es over integer translates k: in eigen
    // coordinates of d0 + k the components are (t, -s).
    const double T = std::max(std::fabs(t_lo), std::fabs(t_hi));
    const int K1 = static_cast<int>(std::ceil(T * std::fabs(A.eu[0]) + Ls * std::fabs(A.es[0]) + 1.0)) + 1;
    const int K2 = static_cast<int>(std::ceil(T * std::fabs(A.eu[1]) + Ls * std::fabs(A.es[1]) + 1.0)) + 1;
    std::vector<LeafCrossing> out;
    for (int k1 = -K1; k1 <= K1; ++k1) {
        for (int k2 = -K2; k2 <= K2; ++k2) {
            const EigenCoords e = A.to_eigen(dx + k1, dy + k2);
            const double t = e.u;
            const double s = -e.s;
            if (t < t_lo || t > t_hi) continue;
            if (s < 0.0 || s > Ls) continue;
            out.push_back({t, s});
        }
    }
    std::sort(out.begin(), out.end(),
              [](const LeafCrossing& a, const LeafCrossing& c) { return a.t < c.t; });
    return out;
}

HolonomyCheck check_holonomy_invariance(const SkewSystem& sys, const MarkovPartition& P,
                                        const TransverseEstimate& est1,
                                        const TransverseEstimate& est2,
                                        double t_max, int n_bins,
                                        double scale1, double scale2) {
    if (!(t_max > 0.0)) throw std::invalid_argument("leaf-time horizon must be positive");
    if (n_bins < 2) throw std::invalid_argument("need at least two density bins");
    const double c1 = scale1 > 0.0 ? scale1 : est1.c;
    const double c2 = scale2 > 0.0 ? scale2 : est2.c;
    const double t_eps = 1e-9;  // skip the t = 0 self-crossing of a point on its own section
    const double inf = std::numeric_limits<double>::infinity();

    // Forward pass: slide est1 particles whose first crossing ahead is the
    // second section (no recrossing of the first section in between).
    std::vector<Pt2> pushed;
    std::vector<double> pushed_w, pushed_s;
    for (std::size_t k = 0; k < est1.points.size(); ++k) {
        const TorusPoint b = est1.points[k].x;
        const auto ahead2 = crossings_along_leaf(P, b, est2.section, t_eps, t_max);
        if (ahead2.empty()) continue;
        const auto ahead1 = crossings_along_leaf(P, b, est1.section, t_eps, t_max);
        const double t1 = ahead1.empty() ? inf : ahead1.front().t;
        if (!(ahead2.front().t < t1)) continue;
        const double s2 = ahead2.front().s;
        const LeafFrame f = make_leaf_frame(sys, est1.points[k]);
        const TorusPoint y = P.chart_point(est2.section.rect, est2.section.u, s2);
        pushed.push_back({s2, leaf_fiber_at(sys, f, y)});
        pushed_s.push_back(s2);
        pushed_w.push_back(est1.weights[k]);
    }

    // Backward pass: an est2 particle lies in the holonomy image exactly when
    // the nearest crossing behind it is of the first section's type.
    std::vector<Pt2> kept;
    std::vector<double> kept_w, kept_s;
    for (std::size_t k = 0; k < est2.points.size(); ++k) {
        const TorusPoint b = est2.points[k].x;
        const auto behind1 = crossings_along_leaf(P, b, est1.section, -t_max, -t_eps);
        if (behind1.empty()) continue;
        const auto behind2 = crossings_along_leaf(P, b, est2.section, -t_max, -t_eps);
        const double t2 = behind2.empty() ? -inf : behind2.back().t;
        if (!(behind1.back().t > t2)) continue;
        kept.push_back({est2.s_coords[k], est2.points[k].theta});
        kept_s.push_back(est2.s_coords[k]);
        kept_w.push_back(est2.weights[k]);
    }

    if (pushed.size() < 100 || kept.size() < 100)
        throw std::domain_error("holonomy domain is essentially empty within the leaf horizon");

    HolonomyCheck out;
    out.pairs_pushed = pushed.size();
    out.pairs_kept = kept.size();
    out.ks = ks2d_two_sample(pushed, kept);

    // Equal-count s-bins from the target sample; absolute masses, so a wrong
    // normalizing constant shifts every ratio away from one.
    std::vector<double> sorted_s = kept_s;
    std::sort(sorted_s.begin(), sorted_s.end());
    std::vector<double> edges(static_cast<std::size_t>(n_bins) + 1);
    edges.front() = -inf;
    edges.back() = inf;
    for (int e = 1; e < n_bins; ++e) {
        const std::size_t idx =
            std::min(sorted_s.size() - 1,
                     static_cast<std::size_t>(static_cast<double>(e) * static_cast<double>(sorted_s.size()) /
                                              static_cast<double>(n_bins)));
        edges[static_cast<std::size_t>(e)] = sorted_s[idx];
    }
    std::vector<double> m1(static_cast<std::size_t>(n_bins), 0.0);
    std::vector<double> m2(static_cast<std::size_t>(n_bins), 0.0);
    const auto bin_of = [&](double s) {
        const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, s);
        return static_cast<std::size_t>(it - (edges.begin() + 1));
    };
    for (std::size_t k = 0; k < pushed_s.size(); ++k) m1[bin_of(pushed_s[k])] += pushed_w[k];
    for (std::size_t k = 0; k < kept_s.size(); ++k) m2[bin_of(kept_s[k])] += kept_w[k];
    out.ratio_spread = 0.0;
    for (int bidx = 0; bidx < n_bins; ++bidx) {
        const std::size_t bi = static_cast<std::size_t>(bidx);
        if (!(m2[bi] > 0.0)) {
            out.ratios.push_back(std::numeric_limits<double>::quiet_NaN());
            out.ratio_spread = inf;
            continue;
        }
        const double r = (c1 * m1[bi]) / (c2 * m2[bi]);
        out.ratios.push_back(r);
        out.ratio_spread = std::max(out.ratio_spread, std::fabs(r - 1.0));
    }
    return out;
}

ClusterReport center_atom_probe(const SkewSystem& sys, const MarkovPartition& P,
                                const EmpiricalMeasure& m, int rect, double u0,
                                double slab_halfwidth, double eps) {
    (void)sys;
    if (rect < 0 || rect >= P.size())
        throw std::invalid_argument("slab rectangle index out of range");
    if (!(slab_halfwidth > 0.0) || !(eps > 0.0) || eps >= 0.5)
        throw std::invalid_argument("bad slab or gap parameters");
    std::vector<double> thetas;
    for (std::size_t k = 0; k < m.points.size(); ++k) {
        if (P.locate(m.points[k].x) != rect) continue;
        const EigenCoords ec = P.chart_coords(rect, m.points[k].x);
        if (std::fabs(ec.u - u0) > slab_halfwidth) continue;
        thetas.push_back(wrap01(m.points[k].theta));
    }
    ClusterReport rep;
    rep.in_slab = thetas.size();
    if (thetas.size() < 50)
        throw std::domain_error("too few cloud particles in the slab for a fiber profile");
    std::sort(thetas.begin(), thetas.end());
    const std::size_t n = thetas.size();

    // circular gaps; cluster boundaries are gaps wider than eps
    std::vector<std::size_t> boundary_after;  // gap between index k and k+1 (mod n)
    double open_gap = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double next = k + 1 < n ? thetas[k + 1] : thetas[0] + 1.0;
        const double gap = next - thetas[k];
        if (gap > eps) {
            boundary_after.push_back(k);
            open_gap += gap;
        }
    }
    if (boundary_after.empty()) {
        rep.clusters = 1;
        rep.sizes = {1.0};
        rep.covered = 1.0;
        rep.atomic = false;
        return rep;
    }
    rep.clusters = static_cast<int>(boundary_after.size());
    rep.covered = 1.0 - open_gap;
    // walk clusters between consecutive boundaries
    for (std::size_t bidx = 0; bidx < boundary_after.size(); ++bidx) {
        const std::size_t start = (boundary_after[bidx] + 1) % n;
        const std::size_t stop = boundary_after[(bidx + 1) % boundary_after.size()];
        const std::size_t count = stop >= start ? stop - start + 1 : n - start + stop + 1;
        rep.sizes.push_back(static_cast<double>(count) / static_cast<double>(n));
    }
    rep.atomic = rep.covered <= 0.5;
    return rep;
}

}
