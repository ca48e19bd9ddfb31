#include "catlab/refmeas.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#include "catlab/statutil.hpp"

namespace catlab {

ReferenceMeasure make_reference_measure(const SkewSystem& sys, const MarkovPartition& P,
                                        int i, const MPoint& anchor) {
    const MPoint a{wrap_point(anchor.x), wrap(anchor.theta)};
    if (!P.contains(i, a.x, 1e-9))
        throw std::invalid_argument("reference measure anchor is not in the rectangle");
    ReferenceMeasure m;
    m.rect = i;
    m.s = P.chart_coords(i, a.x).s;
    m.leaf = make_leaf_frame(sys, a);
    return m;
}

MPoint reference_point_at(const SkewSystem& sys, const MarkovPartition& P,
                          const ReferenceMeasure& m, double u) {
    const double Lu = P.rect(m.rect).Lu;
    if (u < -1e-9 || u > Lu + 1e-9)
        throw std::invalid_argument("plaque coordinate outside [0, L_u]");
    const TorusPoint b = P.chart_point(m.rect, std::clamp(u, 0.0, Lu), m.s);
    return {b, leaf_fiber_at(sys, m.leaf, b)};
}

std::vector<MPoint> sample(const SkewSystem& sys, const MarkovPartition& P,
                           const ReferenceMeasure& m, Rng& rng, std::size_t count) {
    const double Lu = P.rect(m.rect).Lu;
    std::vector<MPoint> out;
    out.reserve(count);
    for (std::size_t k = 0; k < count; ++k)
        out.push_back(reference_point_at(sys, P, m, rng.next_unit() * Lu));
    return out;
}

double cylinder_mass(const MarkovPartition& P, const ReferenceMeasure& m,
                     const std::vector<int>& word) {
    if (word.empty()) return 1.0;
    if (word.front() != m.rect)
        throw std::invalid_argument("cylinder word does not start at the measure's rectangle");
    double mass = 1.0;
    for (std::size_t k = 0; k + 1 < word.size(); ++k)
        mass *= P.subcylinder_weight(word[k], word[k + 1]);
    return mass;
}

double check_cs_invariance(const SkewSystem& sys, const MarkovPartition& P, int i,
                           const MPoint& x, const MPoint& y, std::size_t n_samples,
                           Rng& rng) {
    const ReferenceMeasure mx = make_reference_measure(sys, P, i, x);
    const ReferenceMeasure my = make_reference_measure(sys, P, i, y);
    std::vector<Pt2> pushed, direct;
    pushed.reserve(n_samples);
    direct.reserve(n_samples);
    for (std::size_t k = 0; k < n_samples; ++k) {
        const double u = rng.next_unit() * P.rect(i).Lu;
        const MPoint z = reference_point_at(sys, P, mx, u);
        const MPoint w = cs_partner(sys, P, i, z, my.leaf);
        const EigenCoords cw = P.chart_coords(i, w.x);
        pushed.push_back({cw.u, w.theta});
    }
    for (std::size_t k = 0; k < n_samples; ++k) {
        const double u = rng.next_unit() * P.rect(i).Lu;
        const MPoint w = reference_point_at(sys, P, my, u);
        direct.push_back({u, w.theta});
    }
    return ks2d_two_sample(pushed, direct);
}

namespace {

// largest u in [lo, hi] below the predicate flip, assuming pred(lo) != pred(hi)
double bisect_edge(const std::function<bool(double)>& pred, double lo, double hi) {
    bool plo = pred(lo);
    for (int it = 0; it < 64; ++it) {
        const double mid = (lo + hi) / 2.0;
        if (pred(mid) == plo)
            lo = mid;
        else
            hi = mid;
    }
    return (lo + hi) / 2.0;
}

}  // namespace

ConstantJacobianReport check_constant_jacobian(const SkewSystem& sys,
                                               const MarkovPartition& P, int i, int j,
                                               int n_plaques, Rng& rng) {
    if (n_plaques < 1) throw std::invalid_argument("need at least one plaque");
    const Crossing cr = P.crossing(i, j);  // throws for disallowed transitions
    const double Lu_i = P.rect(i).Lu;
    const double strip = cr.weight * Lu_i;

    ConstantJacobianReport rep;
    rep.expected = cr.weight;
    rep.mass_lo = 2.0;
    rep.mass_hi = -1.0;
    for (int k = 0; k < n_plaques; ++k) {
        const double s0 = rng.next_unit() * P.rect(i).Ls;
        auto in_j = [&](double u) {
            const TorusPoint img = apply_auto(sys.base(), P.chart_point(i, u, s0), 1);
            return P.contains(j, img, 0.0);
        };
        double a = cr.u_off;
        double b = cr.u_off + strip;
        const double h = std::min(1e-3, strip / 4.0);
        if (a > 1e-12) a = bisect_edge(in_j, a - h, a + h);
        if (b < Lu_i - 1e-12) b = bisect_edge(in_j, b - h, b + h);
        else b = Lu_i;
        if (a <= 1e-12) a = 0.0;
        const double mass = (b - a) / Lu_i;
        rep.mass_lo = std::min(rep.mass_lo, mass);
        rep.mass_hi = std::max(rep.mass_hi, mass);
    }
    return rep;
}

}
