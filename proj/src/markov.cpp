#include "catlab/markov.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "catlab/statutil.hpp"

namespace catlab {

namespace {

constexpr double kGeomTol = 1e-9;       // positive-measure overlap threshold
constexpr double kContainTol = 1e-7;    // strip containment slack
constexpr double kSizeLimit = 0.48;     // chart half-extent bound for sound membership

}  // namespace

MarkovPartition::MarkovPartition(const ToralAutomorphism& A, std::vector<Rectangle> rects)
    : A_(A), rects_(std::move(rects)) {
    if (rects_.empty()) throw std::invalid_argument("partition needs at least one rectangle");
    if (!(A_.lambda_u > 1.0) || !(A_.lambda_s > 0.0))
        throw std::domain_error(
            "partition construction needs lambda_u > 1 and lambda_s in (0,1)");
    for (const auto& r : rects_)
        if (!(r.Lu > 0.0) || !(r.Ls > 0.0))
            throw std::invalid_argument("rectangle with nonpositive side");

    const int n = size();
    cross_idx_.assign(static_cast<std::size_t>(n) * n, -1);
    cross_count_.assign(static_cast<std::size_t>(n) * n, 0);

    // Lattice scan: compare the image box of each rectangle against every
    // integer translate of every target box, all in eigen coordinates.
    for (int i = 0; i < n; ++i) {
        const Rectangle& ri = rects_[static_cast<std::size_t>(i)];
        // image of the anchor under the matrix, on the plane
        const double ax = ri.anchor.x1, ay = ri.anchor.x2;
        const double ix = static_cast<double>(A_.m.a) * ax + static_cast<double>(A_.m.b) * ay;
        const double iy = static_cast<double>(A_.m.c) * ax + static_cast<double>(A_.m.d) * ay;
        const EigenCoords q = A_.to_eigen(ix, iy);
        const double img_u0 = q.u, img_u1 = q.u + A_.lambda_u * ri.Lu;
        const double img_s0 = q.s, img_s1 = q.s + A_.lambda_s * ri.Ls;

        for (int j = 0; j < n; ++j) {
            const Rectangle& rj = rects_[static_cast<std::size_t>(j)];
            const EigenCoords t = A_.to_eigen(rj.anchor.x1, rj.anchor.x2);
            // admissible translate window in eigen coordinates
            const double wu0 = img_u0 - t.u - rj.Lu - kGeomTol;
            const double wu1 = img_u1 - t.u + kGeomTol;
            const double ws0 = img_s0 - t.s - rj.Ls - kGeomTol;
            const double ws1 = img_s1 - t.s + kGeomTol;
            // pull the window corners back to integer coordinates
            double mlo = std::numeric_limits<double>::infinity(), mhi = -mlo;
            double nlo = mlo, nhi = -mlo;
            for (double wu : {wu0, wu1})
                for (double ws : {ws0, ws1}) {
                    const auto pt = A_.from_eigen({wu, ws});
                    mlo = std::min(mlo, pt[0]);
                    mhi = std::max(mhi, pt[0]);
                    nlo = std::min(nlo, pt[1]);
                    nhi = std::max(nhi, pt[1]);
                }
            for (long mm = static_cast<long>(std::floor(mlo)) - 1;
                 mm <= static_cast<long>(std::ceil(mhi)) + 1; ++mm) {
                for (long nn = static_cast<long>(std::floor(nlo)) - 1;
                     nn <= static_cast<long>(std::ceil(nhi)) + 1; ++nn) {
                    const EigenCoords w =
                        A_.to_eigen(static_cast<double>(mm), static_cast<double>(nn));
                    const double tu0 = t.u + w.u, tu1 = tu0 + rj.Lu;
                    const double ts0 = t.s + w.s, ts1 = ts0 + rj.Ls;
                    const double ou = std::min(img_u1, tu1) - std::max(img_u0, tu0);
                    const double os = std::min(img_s1, ts1) - std::max(img_s0, ts0);
                    if (ou <= kGeomTol || os <= kGeomTol) continue;
                    const bool u_spans = tu0 >= img_u0 - kContainTol && tu1 <= img_u1 + kContainTol;
                    const bool s_fits = img_s0 >= ts0 - kContainTol && img_s1 <= ts1 + kContainTol;
                    if (!u_spans || !s_fits) {
                        ++geom_markov_violations_;
                        continue;
                    }
                    Crossing cr;
                    cr.from = i;
                    cr.to = j;
                    cr.u_off = (tu0 - img_u0) / A_.lambda_u;
                    cr.s_off = img_s0 - ts0;
                    cr.weight = rj.Lu / (A_.lambda_u * ri.Lu);
                    const std::size_t key = static_cast<std::size_t>(i) * n + j;
                    if (cross_idx_[key] < 0)
                        cross_idx_[key] = static_cast<int>(crossings_.size());
                    else
                        ambiguous_ = true;
                    ++cross_count_[key];
                    crossings_.push_back(cr);
                }
            }
        }
    }
}

bool MarkovPartition::trans(int i, int j) const {
    return cross_idx_.at(static_cast<std::size_t>(i) * size() + j) >= 0;
}

const Crossing& MarkovPartition::crossing(int i, int j) const {
    const std::size_t key = static_cast<std::size_t>(i) * size() + j;
    const int idx = cross_idx_.at(key);
    if (idx < 0)
        throw std::domain_error("no transition between rectangles " + std::to_string(i) +
                                " and " + std::to_string(j));
    if (cross_count_[key] > 1)
        throw std::domain_error("ambiguous transition between rectangles " + std::to_string(i) +
                                " and " + std::to_string(j));
    return crossings_[static_cast<std::size_t>(idx)];
}

EigenCoords MarkovPartition::chart_coords(int i, const TorusPoint& p) const {
    const Rectangle& r = rect(i);
    const double cu = r.Lu / 2.0, cs = r.Ls / 2.0;
    const double cx = r.anchor.x1 + cu * A_.eu[0] + cs * A_.es[0];
    const double cy = r.anchor.x2 + cu * A_.eu[1] + cs * A_.es[1];
    const double dx = circ_delta(p.x1, wrap(cx));
    const double dy = circ_delta(p.x2, wrap(cy));
    const EigenCoords d = A_.to_eigen(dx, dy);
    return {cu + d.u, cs + d.s};
}

TorusPoint MarkovPartition::chart_point(int i, double u, double s) const {
    const Rectangle& r = rect(i);
    return wrap_point({r.anchor.x1 + u * A_.eu[0] + s * A_.es[0],
                       r.anchor.x2 + u * A_.eu[1] + s * A_.es[1]});
}

bool MarkovPartition::contains(int i, const TorusPoint& p, double tol) const {
    const EigenCoords c = chart_coords(i, p);
    const Rectangle& r = rect(i);
    return c.u >= -tol && c.u <= r.Lu + tol && c.s >= -tol && c.s <= r.Ls + tol;
}

int MarkovPartition::locate(const TorusPoint& p) const {
    for (int i = 0; i < size(); ++i)
        if (contains(i, p)) return i;
    return -1;
}

TorusPoint MarkovPartition::bracket(int i, const TorusPoint& a, const TorusPoint& b) const {
    if (!contains(i, a, 1e-9) || !contains(i, b, 1e-9))
        throw std::domain_error("no local bracket: points not in rectangle " + std::to_string(i));
    const EigenCoords ca = chart_coords(i, a);
    const EigenCoords cb = chart_coords(i, b);
    return chart_point(i, ca.u, cb.s);
}

int MarkovPartition::first_connection(int i, int j, int n_max) const {
    const int n = size();
    std::vector<char> v(static_cast<std::size_t>(n), 0);
    v[static_cast<std::size_t>(i)] = 1;
    for (int step = 1; step <= n_max; ++step) {
        std::vector<char> w(static_cast<std::size_t>(n), 0);
        for (int a = 0; a < n; ++a) {
            if (!v[static_cast<std::size_t>(a)]) continue;
            for (int b = 0; b < n; ++b)
                if (trans(a, b)) w[static_cast<std::size_t>(b)] = 1;
        }
        if (w[static_cast<std::size_t>(j)]) return step;
        v = std::move(w);
    }
    throw std::domain_error("no admissible connection within " + std::to_string(n_max) +
                            " steps");
}

MarkovPartition build_partition(const ToralAutomorphism& A, std::vector<Rectangle> rects) {
    return MarkovPartition(A, std::move(rects));
}

MarkovPartition builtin_cat_partition() {
    const double s5 = std::sqrt(5.0);
    const double phi = (1.0 + s5) / 2.0;
    const double ip = 1.0 / phi;
    auto A = make_automorphism({2, 1, 1, 1});
    // Cells in the coordinates U = p.(phi,1), S = p.(-1,phi): one refinement
    // of the golden two-box domain [0,phi]x[0,phi] + [0,1]x[phi,phi+1],
    // which kills the double crossing the two-box form still has.
    const double cells[5][4] = {
        {0.0, ip, 0.0, phi},
        {ip, 2.0 * ip, 0.0, phi},
        {2.0 * ip, phi, 0.0, phi},
        {0.0, ip, phi, phi + 1.0},
        {ip, 1.0, phi, phi + 1.0},
    };
    auto cart = [&](double U, double S) {
        const double den = phi + 2.0;
        return std::array<double, 2>{(phi * U - S) / den, (U + phi * S) / den};
    };
    std::vector<Rectangle> rects;
    for (const auto& c : cells) {
        double ulo = std::numeric_limits<double>::infinity(), uhi = -ulo;
        double slo = ulo, shi = -ulo;
        for (double U : {c[0], c[1]})
            for (double S : {c[2], c[3]}) {
                const auto p = cart(U, S);
                const EigenCoords e = A.to_eigen(p[0], p[1]);
                ulo = std::min(ulo, e.u);
                uhi = std::max(uhi, e.u);
                slo = std::min(slo, e.s);
                shi = std::max(shi, e.s);
            }
        Rectangle r;
        const auto a = A.from_eigen({ulo, slo});
        r.anchor = wrap_point({a[0], a[1]});
        r.Lu = uhi - ulo;
        r.Ls = shi - slo;
        rects.push_back(r);
    }
    return MarkovPartition(A, std::move(rects));
}

MarkovReport verify_markov(const MarkovPartition& P, std::size_t n_samples, Rng& rng) {
    MarkovReport rep;
    const int n = P.size();
    rep.n_rects = static_cast<std::size_t>(n);
    const auto& A = P.automorphism();

    for (int i = 0; i < n; ++i) {
        const Rectangle& r = P.rect(i);
        const double hx = (r.Lu * std::abs(A.eu[0]) + r.Ls * std::abs(A.es[0])) / 2.0;
        const double hy = (r.Lu * std::abs(A.eu[1]) + r.Ls * std::abs(A.es[1])) / 2.0;
        if (hx >= kSizeLimit || hy >= kSizeLimit) ++rep.size_violations;
    }
    rep.markov_violations = P.geom_markov_violations_;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (P.cross_count_[static_cast<std::size_t>(i) * n + j] > 1)
                ++rep.multiplicity_violations;

    double area = 0.0;
    for (int i = 0; i < n; ++i) area += P.rect(i).Lu * P.rect(i).Ls;
    rep.area_defect = std::abs(area - 1.0);

    std::vector<double> row_sum(static_cast<std::size_t>(n), 0.0);
    std::vector<double> strip_sum(static_cast<std::size_t>(n), 0.0);
    for (const auto& cr : P.crossings()) {
        row_sum[static_cast<std::size_t>(cr.from)] += cr.weight;
        strip_sum[static_cast<std::size_t>(cr.to)] += A.lambda_s * P.rect(cr.from).Ls;
    }
    for (int i = 0; i < n; ++i) {
        rep.weight_row_defect = std::max(rep.weight_row_defect, std::abs(row_sum[i] - 1.0));
        rep.strip_tiling_defect =
            std::max(rep.strip_tiling_defect, std::abs(strip_sum[i] - P.rect(i).Ls));
    }

    std::vector<std::vector<double>> t01(static_cast<std::size_t>(n),
                                         std::vector<double>(static_cast<std::size_t>(n), 0.0));
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) t01[i][j] = P.trans(i, j) ? 1.0 : 0.0;
    rep.perron = power_iteration(t01, 1e-13, 20000).eigenvalue;

    if (rep.size_violations > 0) {
        // chart membership would be unsound, so the sampled phase proves nothing
        rep.sampling_skipped = true;
        return rep;
    }

    for (std::size_t k = 0; k < n_samples; ++k) {
        const TorusPoint p{rng.next_unit(), rng.next_unit()};
        int inside = 0;
        int interior = 0;
        int first = -1;
        for (int i = 0; i < n; ++i) {
            if (P.contains(i, p)) {
                ++inside;
                if (first < 0) first = i;
            }
            if (P.contains(i, p, -1e-9)) ++interior;
        }
        if (inside == 0) {
            ++rep.covering_violations;
            continue;
        }
        if (interior >= 2) ++rep.disjointness_violations;

        const EigenCoords c = P.chart_coords(first, p);
        const Rectangle& r = P.rect(first);
        if (c.u < 1e-7 || c.u > r.Lu - 1e-7 || c.s < 1e-7 || c.s > r.Ls - 1e-7)
            continue;  // too close to a boundary for a meaningful one-step check
        const TorusPoint q = apply_auto(A, p, 1);
        const int j = P.locate(q);
        if (j < 0 || !P.trans(first, j)) {
            ++rep.affine_violations;
            continue;
        }
        if (P.cross_count_[static_cast<std::size_t>(first) * n + j] > 1)
            continue;  // already reported as a multiplicity problem
        const Crossing& cr = P.crossing(first, j);
        const EigenCoords ci = P.chart_coords(j, q);
        const double u_pred = A.lambda_u * (c.u - cr.u_off);
        const double s_pred = A.lambda_s * c.s + cr.s_off;
        if (std::abs(ci.u - u_pred) > 1e-9 || std::abs(ci.s - s_pred) > 1e-9)
            ++rep.affine_violations;
    }
    return rep;
}

namespace {

void dfs_cylinders(const MarkovPartition& P, SymbolicCylinder& cur, int remaining,
                   std::size_t cap, std::size_t& produced,
                   const std::function<void(const SymbolicCylinder&)>& sink) {
    if (remaining == 0) {
        if (++produced > cap)
            throw std::length_error("cylinder explosion: more leaves than the cap allows");
        sink(cur);
        return;
    }
    const int j = cur.word.back();
    const double lam_s = P.automorphism().lambda_s;
    const double lu_j = P.rect(j).Lu;
    for (int k = 0; k < P.size(); ++k) {
        if (!P.trans(j, k)) continue;
        const Crossing& cr = P.crossing(j, k);
        const SymbolicCylinder saved = cur;  // scalars; word handled by push/pop
        cur.u_lo = cur.u_lo + (cr.u_off / lu_j) * cur.u_len;
        cur.u_len = cr.weight * cur.u_len;
        cur.mass = cur.mass * cr.weight;
        cur.s_scale = lam_s * cur.s_scale;
        cur.s_shift = lam_s * cur.s_shift + cr.s_off;
        cur.word.push_back(k);
        dfs_cylinders(P, cur, remaining - 1, cap, produced, sink);
        cur.word.pop_back();
        cur.u_lo = saved.u_lo;
        cur.u_len = saved.u_len;
        cur.mass = saved.mass;
        cur.s_scale = saved.s_scale;
        cur.s_shift = saved.s_shift;
    }
}

}  // namespace

void enumerate_cylinders(const MarkovPartition& P, int start, int depth, std::size_t cap,
                         const std::function<void(const SymbolicCylinder&)>& sink) {
    if (start < 0 || start >= P.size()) throw std::invalid_argument("bad start rectangle");
    if (depth < 0) throw std::invalid_argument("negative depth");
    if (P.ambiguous())
        throw std::domain_error("cylinder enumeration needs unambiguous transitions");
    SymbolicCylinder cur;
    cur.word = {start};
    cur.u_lo = 0.0;
    cur.u_len = P.rect(start).Lu;
    cur.mass = 1.0;
    std::size_t produced = 0;
    dfs_cylinders(P, cur, depth, cap, produced, sink);
}

std::vector<SymbolicCylinder> enumerate_cylinders(const MarkovPartition& P, int start,
                                                  int depth, std::size_t cap) {
    std::vector<SymbolicCylinder> out;
    enumerate_cylinders(P, start, depth, cap,
                        [&](const SymbolicCylinder& c) { out.push_back(c); });
    return out;
}

std::vector<int> word_of(const MarkovPartition& P, const TorusPoint& p, int n) {
    std::vector<int> w;
    w.reserve(static_cast<std::size_t>(n) + 1);
    TorusPoint q = wrap_point(p);
    for (int t = 0; t <= n; ++t) {
        const int i = P.locate(q);
        if (i < 0)
            throw std::domain_error("itinerary left the partition (boundary point?)");
        w.push_back(i);
        q = apply_auto(P.automorphism(), q, 1);
    }
    return w;
}

SymbolicCylinder cylinder_from_word(const MarkovPartition& P, const std::vector<int>& word) {
    if (word.empty()) throw std::invalid_argument("empty word");
    SymbolicCylinder cur;
    cur.word = {word[0]};
    cur.u_lo = 0.0;
    cur.u_len = P.rect(word[0]).Lu;
    cur.mass = 1.0;
    const double lam_s = P.automorphism().lambda_s;
    for (std::size_t t = 1; t < word.size(); ++t) {
        const int j = word[t - 1], k = word[t];
        if (!P.trans(j, k))
            throw std::domain_error("word not admissible at position " + std::to_string(t));
        const Crossing& cr = P.crossing(j, k);
        const double lu_j = P.rect(j).Lu;
        cur.u_lo += (cr.u_off / lu_j) * cur.u_len;
        cur.u_len *= cr.weight;
        cur.mass *= cr.weight;
        cur.s_scale *= lam_s;
        cur.s_shift = lam_s * cur.s_shift + cr.s_off;
        cur.word.push_back(k);
    }
    return cur;
}

}
